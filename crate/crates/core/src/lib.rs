//! Shift-invariant spaces generated by totally positive functions of
//! Gaussian type.
//!
//! The crate covers the numerical side of sign retrieval in these spaces:
//!
//! - [`generator`]: the generator `g` through its Fourier factorization,
//!   time-domain evaluation and the one-factor reduction.
//! - [`sispace`]: functions `f = Σ c_k g(· - k)`, their derivatives, the
//!   operator `f + δ f'`, real zero sets, interlacing and segment checks.
//! - [`density`]: lower Beurling density and the average circular density
//!   (direct and lattice-counting forms) at finite radii.
//! - [`jensen`]: the entire extension in the Gaussian case, zero counting in
//!   disks and the Jensen-formula chain.
//! - [`sigret`]: recovering `f` up to a global sign from `|f|` on a point set.

pub mod density;
pub mod error;
pub mod generator;
pub mod jensen;
pub mod quadrature;
pub mod rng;
pub mod sigret;
pub mod sispace;

pub use error::{Error, ErrorKind, Result};
pub use generator::{GeneratorParams, TimeDomainTable};
pub use sispace::{CoeffSeq, PointSet, SisFunction};

/// Library version embedded in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by front ends to pick exit statuses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad input: parameters, preconditions, configs.
    Validation,
    /// The numerics gave up: quadrature, phase tracking, search budgets.
    Numerical,
    /// A verified relation failed beyond its slack.
    Violation,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("generator has no product factor left to remove (m = 0)")]
    EmptyDeltas,

    #[error("rolle step uses delta = {given}, but the last generator delta is {expected}")]
    DeltaMismatch { given: f64, expected: f64 },

    #[error("adaptive quadrature on [{lo}, {hi}] stopped at estimated error {error:e} after {intervals} subintervals")]
    QuadratureNonConvergence {
        lo: f64,
        hi: f64,
        error: f64,
        intervals: usize,
    },

    #[error("inverse transform at x = {x} left an imaginary residue {residue:e}")]
    ImaginaryResidue { x: f64, residue: f64 },

    #[error("degenerate interval [{lo}, {hi}]")]
    DegenerateInterval { lo: f64, hi: f64 },

    #[error("function vanishes identically on [{lo}, {hi}] ({fraction:.3} of scan samples below floor)")]
    IdenticallyZero { lo: f64, hi: f64, fraction: f64 },

    #[error("radius {radius} admits no window position inside a window of length {length}")]
    WindowTooSmall { radius: f64, length: f64 },

    #[error("entire extension is only available for the Gaussian case, got m = {0}")]
    NotGaussian(usize),

    #[error("order of vanishing at 0 is ambiguous: derivative magnitudes {magnitudes:?}")]
    OrderAmbiguous { magnitudes: Vec<f64> },

    #[error("phase tracking on |z| = {radius} did not resolve (winding estimate {winding})")]
    PhaseTracking { radius: f64, winding: f64 },

    #[error("contour average on |z| = {radius} did not converge (last change {change:e} at {samples} samples)")]
    ContourNonConvergence {
        radius: f64,
        change: f64,
        samples: usize,
    },

    #[error("argument principle found {winding} zeros in |z| <= {radius}, fewer than the {lattice} lattice zeros")]
    MissingZeros {
        radius: f64,
        winding: i64,
        lattice: usize,
    },

    #[error("base-case chain violated at r = {radius}: {detail}")]
    ChainViolation { radius: f64, detail: String },

    #[error("design matrix is rank deficient (condition number {condition:e})")]
    RankDeficient { condition: f64 },

    #[error("{samples} samples cannot determine {unknowns} coefficients")]
    Underdetermined { samples: usize, unknowns: usize },

    #[error("sign search explored {explored} patterns without an acceptable fit (best rms {best_residual:e})")]
    BudgetExhausted { explored: usize, best_residual: f64 },

    #[error("no sign pattern fits within tolerance {tolerance:e} (best rms {best_residual:e})")]
    NoAcceptablePattern { best_residual: f64, tolerance: f64 },

    #[error("exhaustive enumeration would visit {patterns} patterns, above the cap")]
    CombinatorialBlowup { patterns: u128 },

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        use Error::*;
        match self {
            InvalidParameter(_)
            | EmptyDeltas
            | DeltaMismatch { .. }
            | DegenerateInterval { .. }
            | IdenticallyZero { .. }
            | WindowTooSmall { .. }
            | NotGaussian(_)
            | Underdetermined { .. }
            | CombinatorialBlowup { .. }
            | Config(_) => ErrorKind::Validation,
            QuadratureNonConvergence { .. }
            | ImaginaryResidue { .. }
            | OrderAmbiguous { .. }
            | PhaseTracking { .. }
            | ContourNonConvergence { .. }
            | RankDeficient { .. }
            | BudgetExhausted { .. }
            | NoAcceptablePattern { .. } => ErrorKind::Numerical,
            MissingZeros { .. } | ChainViolation { .. } => ErrorKind::Violation,
        }
    }
}

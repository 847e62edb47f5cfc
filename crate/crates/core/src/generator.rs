//! Totally positive generators of Gaussian type.
//!
//! A generator is described through its Fourier transform
//!
//! ```text
//! ĝ(ξ) = C₀ · exp(-γ ξ²) · ∏_ν (1 + 2πi δ_ν ξ)⁻¹
//! ```
//!
//! For an empty product `g` is a Gaussian with closed form. Otherwise `g` is
//! obtained by inverting the transform numerically; each factor contributes a
//! one-sided exponential tail of length `|δ_ν|` on the side of `sign(δ_ν)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate_vec, DEFAULT_MAX_INTERVALS};

/// Absolute tolerance for the frequency-window truncation and the adaptive
/// inverse transform of `g`.
pub const INVERSE_FT_TOL: f64 = 1e-12;
/// Largest admissible imaginary part of the reconstructed `g(x)`.
pub const IMAG_RESIDUE_TOL: f64 = 1e-9;
/// Target interpolation error for tables built by [`GeneratorParams::auto_table`].
pub const TABLE_INTERP_TOL: f64 = 1e-10;

// ln(1e16): tails below this many e-folds are dropped from tables.
const TAIL_EFOLDS: f64 = 36.841_361_487_904_734;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct GeneratorParams {
    c0: f64,
    gamma: f64,
    deltas: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    #[serde(default = "default_c0")]
    c0: f64,
    gamma: f64,
    #[serde(default)]
    deltas: Vec<f64>,
}

fn default_c0() -> f64 {
    1.0
}

impl TryFrom<RawParams> for GeneratorParams {
    type Error = Error;
    fn try_from(raw: RawParams) -> Result<Self> {
        GeneratorParams::new(raw.c0, raw.gamma, raw.deltas)
    }
}

impl From<GeneratorParams> for RawParams {
    fn from(p: GeneratorParams) -> Self {
        RawParams {
            c0: p.c0,
            gamma: p.gamma,
            deltas: p.deltas,
        }
    }
}

impl GeneratorParams {
    pub fn new(c0: f64, gamma: f64, deltas: Vec<f64>) -> Result<Self> {
        if !(c0.is_finite() && c0 > 0.0) {
            return Err(Error::InvalidParameter(format!("c0 must be positive, got {c0}")));
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma must be positive, got {gamma}"
            )));
        }
        if let Some(d) = deltas.iter().find(|d| !d.is_finite() || **d == 0.0) {
            return Err(Error::InvalidParameter(format!(
                "deltas must be finite and non-zero, got {d}"
            )));
        }
        Ok(Self { c0, gamma, deltas })
    }

    /// Pure Gaussian generator (`m = 0`).
    pub fn gaussian(c0: f64, gamma: f64) -> Result<Self> {
        Self::new(c0, gamma, Vec::new())
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    /// Number of reciprocal linear factors.
    pub fn m(&self) -> usize {
        self.deltas.len()
    }

    /// Rate `a = π²/γ` of the time-domain Gaussian `exp(-a x²)`.
    pub fn gaussian_rate(&self) -> f64 {
        PI * PI / self.gamma
    }

    /// Amplitude `C₀ √(π/γ)` of the time-domain Gaussian.
    pub fn gaussian_amplitude(&self) -> f64 {
        self.c0 * (PI / self.gamma).sqrt()
    }

    pub fn ft_eval(&self, xi: f64) -> Complex64 {
        let mut v = Complex64::new(self.c0 * (-self.gamma * xi * xi).exp(), 0.0);
        for &d in &self.deltas {
            v /= Complex64::new(1.0, 2.0 * PI * d * xi);
        }
        v
    }

    /// Drop the last product factor.
    pub fn reduce(&self) -> Result<Self> {
        if self.deltas.is_empty() {
            return Err(Error::EmptyDeltas);
        }
        let mut out = self.clone();
        out.deltas.pop();
        Ok(out)
    }

    /// Half-width `W` of the frequency window outside which `|ĝ| <= tol`.
    pub fn frequency_window(&self, tol: f64) -> f64 {
        let ratio = self.c0 / tol;
        if ratio <= 1.0 {
            1.0
        } else {
            (ratio.ln() / self.gamma).sqrt() + 1.0
        }
    }

    pub fn time_eval(&self, x: f64) -> Result<f64> {
        Ok(self.time_eval_derivs(x)?[0])
    }

    /// `g'(x)`.
    pub fn time_eval_deriv(&self, x: f64) -> Result<f64> {
        Ok(self.time_eval_derivs(x)?[1])
    }

    /// `[g(x), g'(x), g''(x)]`.
    ///
    /// Closed form for `m = 0`. Otherwise the inverse transform and its
    /// derivatives (ĝ multiplied by `2πiξ` and `(2πiξ)²`) are integrated over
    /// `[-W, W]` by adaptive Gauss–Kronrod.
    pub fn time_eval_derivs(&self, x: f64) -> Result<[f64; 3]> {
        if self.deltas.is_empty() {
            return Ok(gaussian_derivs(self.gaussian_amplitude(), self.gaussian_rate(), x));
        }
        let w = self.frequency_window(INVERSE_FT_TOL);
        let r = integrate_vec(
            |xi| {
                let base = self.ft_eval(xi) * Complex64::from_polar(1.0, 2.0 * PI * x * xi);
                let s = Complex64::new(0.0, 2.0 * PI * xi);
                [base, base * s, base * s * s]
            },
            -w,
            w,
            [INVERSE_FT_TOL, 1e2 * INVERSE_FT_TOL, 1e4 * INVERSE_FT_TOL],
            DEFAULT_MAX_INTERVALS,
        )?;
        let residue = r.value[0].im.abs();
        if residue > IMAG_RESIDUE_TOL {
            return Err(Error::ImaginaryResidue { x, residue });
        }
        Ok([r.value[0].re, r.value[1].re, r.value[2].re])
    }

    /// Upper bound on `sup |g^(k)|`, from `|ĝ(ξ)| <= C₀ exp(-γξ²)`:
    /// `C₀ (2π)^k Γ((k+1)/2) γ^{-(k+1)/2}`.
    pub fn derivative_bound(&self, k: u32) -> f64 {
        let s = 0.5 * (k as f64 + 1.0);
        self.c0 * (2.0 * PI).powi(k as i32) * gamma_half_integer(k + 1) * self.gamma.powf(-s)
    }

    /// Distance beyond which `|g|` has dropped below ~1e-16 of its scale.
    pub fn decay_radius(&self) -> f64 {
        let gauss = (TAIL_EFOLDS / self.gaussian_rate()).sqrt();
        if self.deltas.is_empty() {
            return gauss;
        }
        let max_d = self.deltas.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        let sum_d: f64 = self.deltas.iter().map(|d| d.abs()).sum();
        gauss + TAIL_EFOLDS * max_d + 2.0 * sum_d
    }

    /// Grid step for which cubic Hermite interpolation of `g` stays below
    /// [`TABLE_INTERP_TOL`], capped at 0.01.
    pub fn auto_grid_step(&self) -> f64 {
        let m4 = self.derivative_bound(4);
        (384.0 * TABLE_INTERP_TOL / m4).powf(0.25).min(0.01)
    }

    /// Table over the decay radius at [`Self::auto_grid_step`].
    pub fn auto_table(&self) -> Result<TimeDomainTable> {
        TimeDomainTable::build(self, self.decay_radius().max(1.0), self.auto_grid_step())
    }
}

// Γ(n/2) for small positive integers n.
fn gamma_half_integer(n: u32) -> f64 {
    match n {
        1 => PI.sqrt(),
        2 => 1.0,
        _ => {
            let s = 0.5 * (n as f64) - 1.0;
            s * gamma_half_integer(n - 2)
        }
    }
}

/// `[g, g', g'']` for `g(x) = amp · exp(-a x²)`.
pub fn gaussian_derivs(amp: f64, a: f64, x: f64) -> [f64; 3] {
    let g = amp * (-a * x * x).exp();
    [g, -2.0 * a * x * g, (4.0 * a * a * x * x - 2.0 * a) * g]
}

/// Bound on `|g(x)|` outside a table.
#[derive(Clone, Debug, PartialEq)]
pub enum TailEnvelope {
    /// `amplitude · exp(-rate x²)`; exact for the Gaussian case.
    Gaussian { amplitude: f64, rate: f64 },
    /// `edge · exp(-(|x - origin| - half_width) / scale)`, where `edge` is the
    /// largest tabulated magnitude within one unit of the table ends and
    /// `scale` the longest exponential tail `max |δ|`.
    Exponential { edge: f64, scale: f64 },
}

/// Samples of `g`, `g'` and `g''` on a uniform grid centred at `origin`, with
/// cubic Hermite interpolation between nodes.
#[derive(Clone, Debug)]
pub struct TimeDomainTable {
    grid_step: f64,
    origin: f64,
    half_width: f64,
    values: Vec<f64>,
    derivs: Vec<f64>,
    second: Vec<f64>,
    tail: TailEnvelope,
}

impl TimeDomainTable {
    /// Tabulate `g` on `[-half_width, half_width]`.
    ///
    /// For `m >= 1` the inverse transform is evaluated at all nodes at once by
    /// a trapezoidal rule on a shared frequency grid. Its period is chosen so
    /// that aliased copies of `g` start beyond the decay radius, and the
    /// frequency window matches the truncation used by `time_eval`.
    pub fn build(params: &GeneratorParams, half_width: f64, grid_step: f64) -> Result<Self> {
        if !(grid_step.is_finite() && grid_step > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "grid_step must be positive, got {grid_step}"
            )));
        }
        if !(half_width.is_finite() && half_width >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "half_width must be at least 1, got {half_width}"
            )));
        }
        let n_half = (half_width / grid_step).ceil() as usize;
        let half_width = n_half as f64 * grid_step;
        let xs: Vec<f64> = (0..=2 * n_half)
            .map(|i| (i as f64 - n_half as f64) * grid_step)
            .collect();

        let (values, derivs, second, tail) = if params.m() == 0 {
            let amp = params.gaussian_amplitude();
            let a = params.gaussian_rate();
            let mut v = Vec::with_capacity(xs.len());
            let mut d = Vec::with_capacity(xs.len());
            let mut s = Vec::with_capacity(xs.len());
            for &x in &xs {
                let [g0, g1, g2] = gaussian_derivs(amp, a, x);
                v.push(g0);
                d.push(g1);
                s.push(g2);
            }
            (v, d, s, TailEnvelope::Gaussian { amplitude: amp, rate: a })
        } else {
            let (v, d, s) = trapezoid_inverse_ft(params, &xs, half_width);
            let edge_nodes = (1.0 / grid_step).ceil() as usize;
            let edge = v[..edge_nodes.min(v.len())]
                .iter()
                .chain(v[v.len().saturating_sub(edge_nodes)..].iter())
                .fold(0.0f64, |m, x| m.max(x.abs()));
            let scale = params.deltas().iter().fold(0.0f64, |m, d| m.max(d.abs()));
            (v, d, s, TailEnvelope::Exponential { edge, scale })
        };
        if values.iter().chain(&derivs).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "generator table contains non-finite values".into(),
            ));
        }
        Ok(Self {
            grid_step,
            origin: 0.0,
            half_width,
            values,
            derivs,
            second,
            tail,
        })
    }

    pub fn grid_step(&self) -> f64 {
        self.grid_step
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn tail(&self) -> &TailEnvelope {
        &self.tail
    }

    /// Bound on `|g(x)|` for `x` outside the table.
    pub fn tail_bound(&self, x: f64) -> f64 {
        let d = (x - self.origin).abs();
        match self.tail {
            TailEnvelope::Gaussian { amplitude, rate } => amplitude * (-rate * d * d).exp(),
            TailEnvelope::Exponential { edge, scale } => {
                edge * (-(d - self.half_width).max(0.0) / scale).exp()
            }
        }
    }

    fn locate(&self, x: f64) -> Option<(usize, f64)> {
        let u = (x - self.origin + self.half_width) / self.grid_step;
        if !(u >= 0.0) {
            return None;
        }
        let last = self.values.len() - 1;
        let i = u.floor() as usize;
        if i > last {
            return None;
        }
        if i == last {
            return Some((last - 1, 1.0));
        }
        Some((i, u - i as f64))
    }

    fn hermite(&self, y: &[f64], dy: &[f64], i: usize, t: f64) -> f64 {
        let h = self.grid_step;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * y[i] + h10 * h * dy[i] + h01 * y[i + 1] + h11 * h * dy[i + 1]
    }

    /// Interpolated `g(x)`; zero outside the table (see [`Self::tail_bound`]).
    pub fn eval(&self, x: f64) -> f64 {
        match self.locate(x) {
            Some((i, t)) => self.hermite(&self.values, &self.derivs, i, t),
            None => 0.0,
        }
    }

    /// Interpolated `g'(x)`; zero outside the table.
    pub fn eval_deriv(&self, x: f64) -> f64 {
        match self.locate(x) {
            Some((i, t)) => self.hermite(&self.derivs, &self.second, i, t),
            None => 0.0,
        }
    }
}

// Shared-node trapezoidal inverse transform for g, g', g'' at every x.
fn trapezoid_inverse_ft(
    params: &GeneratorParams,
    xs: &[f64],
    half_width: f64,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let period = 2.0 * (half_width + params.decay_radius());
    let dxi = 1.0 / period;
    let w = params.frequency_window(1e-3 * INVERSE_FT_TOL);
    let n = (w / dxi).ceil() as usize;
    let ghat: Vec<Complex64> = (0..=n).map(|j| params.ft_eval(j as f64 * dxi)).collect();
    let freq: Vec<f64> = (0..=n).map(|j| 2.0 * PI * j as f64 * dxi).collect();

    let mut v = Vec::with_capacity(xs.len());
    let mut d = Vec::with_capacity(xs.len());
    let mut s = Vec::with_capacity(xs.len());
    const REANCHOR: usize = 64;
    for &x in xs {
        let step = Complex64::from_polar(1.0, 2.0 * PI * x * dxi);
        let mut rot = Complex64::new(1.0, 0.0);
        let (mut a0, mut a1, mut a2) = (0.0, 0.0, 0.0);
        for j in 1..=n {
            if j % REANCHOR == 0 {
                rot = Complex64::from_polar(1.0, 2.0 * PI * x * j as f64 * dxi);
            } else {
                rot *= step;
            }
            let term = ghat[j] * rot;
            let k = freq[j];
            // Re(term), Re(i k term), Re(-k² term)
            a0 += term.re;
            a1 -= k * term.im;
            a2 -= k * k * term.re;
        }
        v.push(dxi * (ghat[0].re + 2.0 * a0));
        d.push(dxi * 2.0 * a1);
        s.push(dxi * 2.0 * a2);
    }
    (v, d, s)
}

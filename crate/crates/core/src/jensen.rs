//! Entire extension of Gaussian-case functions and the Jensen-formula chain.
//!
//! For `g(x) = C e^{-a x²}` every `f = Σ c_k g(· - k)` extends to an entire
//! function. With `n` the order of `f` at the origin,
//!
//! ```text
//! F(z) = C₁ z^{-n} f(z) e^{(a/2) z²},   F(0) = 1,
//! ```
//!
//! has the real zeros `λ ≠ 0` of `f` together with their translates
//! `λ + i(π/a)k`. All magnitudes are handled in log space: `e^{(a/2) r²}`
//! overflows long before the radii used here.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::Serialize;

use crate::density::circ_density_direct;
use crate::error::{Error, Result};
use crate::sispace::{PointSet, SisFunction};

/// Radius of the circle used for Taylor coefficients at the origin.
const TAYLOR_RADIUS: f64 = 0.5;
const TAYLOR_NODES: usize = 128;
/// Highest order of vanishing at 0 that is resolved.
pub const MAX_ORDER: usize = 6;
const ORDER_NONZERO: f64 = 1e-8;
const ORDER_ZERO: f64 = 1e-12;
/// Terms more than this many e-folds below the largest one are skipped.
const TERM_EFOLDS: f64 = 40.0;
/// Contour averages stop once successive doublings agree to this.
pub const CONTOUR_TOL: f64 = 1e-6;
const MAX_CONTOUR_SAMPLES: usize = 1 << 22;
const MAX_PHASE_SAMPLES: usize = 1 << 23;
/// Lattice zeros closer than this to a contour make the count unreliable.
pub const BOUNDARY_CLEARANCE: f64 = 1e-6;
/// Step of the deterministic radius perturbation.
pub const RADIUS_NUDGE: f64 = 1e-4;
/// Distance to the nearest known zero that [`nudge_radius`] aims for.
pub const PREFERRED_CLEARANCE: f64 = 2e-3;

/// `f(z) = e^{scale} · sum` with the largest term of `sum` of modulus 1.
#[derive(Clone, Copy, Debug)]
pub struct ScaledValue {
    pub log_scale: f64,
    pub sum: Complex64,
}

impl ScaledValue {
    pub fn log_abs(&self) -> f64 {
        let m = self.sum.norm();
        if m < 1e-300 {
            f64::NEG_INFINITY
        } else {
            self.log_scale + m.ln()
        }
    }
}

fn require_gaussian(f: &SisFunction) -> Result<()> {
    match f.params().m() {
        0 => Ok(()),
        m => Err(Error::NotGaussian(m)),
    }
}

/// `f(z)` factored as `e^{scale} · sum`; `f` must be in the Gaussian case.
pub fn scaled_eval(f: &SisFunction, z: Complex64) -> Result<ScaledValue> {
    require_gaussian(f)?;
    Ok(scaled_eval_unchecked(f, z))
}

fn scaled_eval_unchecked(f: &SisFunction, z: Complex64) -> ScaledValue {
    let p = f.params();
    let a = p.gaussian_rate();
    let log_amp = p.gaussian_amplitude().ln();
    let c = f.coeffs();
    let (x, y) = (z.re, z.im);

    // |c_k e^{-a(z-k)²}| = |c_k| e^{-a(x-k)² + a y²}; arg adds -2a(x-k)y.
    let reach = (800.0 / a).sqrt();
    let k_lo = ((x - reach).ceil() as i64).max(c.offset());
    let k_hi = ((x + reach).floor() as i64).min(c.last_index());
    let mut lead = f64::NEG_INFINITY;
    for k in k_lo..=k_hi {
        let ck = c.get(k);
        if ck != 0.0 {
            let d = x - k as f64;
            lead = lead.max(ck.abs().ln() - a * d * d);
        }
    }
    if lead == f64::NEG_INFINITY {
        return ScaledValue {
            log_scale: f64::NEG_INFINITY,
            sum: Complex64::new(0.0, 0.0),
        };
    }
    let mut sum = Complex64::new(0.0, 0.0);
    for k in k_lo..=k_hi {
        let ck = c.get(k);
        if ck == 0.0 {
            continue;
        }
        let d = x - k as f64;
        let e = ck.abs().ln() - a * d * d - lead;
        if e < -TERM_EFOLDS {
            continue;
        }
        let phase = -2.0 * a * d * y + if ck < 0.0 { PI } else { 0.0 };
        sum += Complex64::from_polar(e.exp(), phase);
    }
    ScaledValue {
        log_scale: lead + log_amp + a * y * y,
        sum,
    }
}

/// `log |f(z)|`; negative infinity when the sum cancels below the underflow
/// floor.
pub fn log_abs_f_complex(f: &SisFunction, z: Complex64) -> Result<f64> {
    Ok(scaled_eval(f, z)?.log_abs())
}

#[derive(Clone, Debug)]
pub struct JensenContext {
    f: SisFunction,
    a: f64,
    order: usize,
    log_c1: f64,
    /// Real zeros of `f` without the origin.
    real_zeros: PointSet,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiskCount {
    pub t: f64,
    /// Zeros of `F` of the form `λ + i(π/a)k` with modulus at most `t`.
    pub lattice: usize,
    /// Winding number of `F` around `|z| = t`.
    pub winding: i64,
    /// `winding - lattice`; zeros off the translated real zero set.
    pub extra: i64,
}

impl DiskCount {
    pub fn total(&self) -> i64 {
        self.winding
    }
}

impl JensenContext {
    /// Detects the order `n` of `f` at 0, normalizes `F(0) = 1` and collects
    /// the real zeros on `[k_lo - 1, k_hi + 1]`.
    pub fn build(f: &SisFunction) -> Result<Self> {
        require_gaussian(f)?;
        if f.coeffs().is_zero() {
            return Err(Error::InvalidParameter("F needs a non-zero f".into()));
        }
        let a = f.params().gaussian_rate();
        let taylor = taylor_coefficients(f);
        let mut factorial = 1.0;
        let mut magnitudes = Vec::with_capacity(MAX_ORDER + 1);
        let mut order = None;
        for (j, coef) in taylor.iter().enumerate().take(MAX_ORDER + 1) {
            if j > 0 {
                factorial *= j as f64;
            }
            let d = coef.norm() * factorial;
            magnitudes.push(d);
            if d > ORDER_NONZERO {
                order = Some(j);
                break;
            }
        }
        let ambiguous = magnitudes
            .iter()
            .rev()
            .skip(1)
            .any(|d| *d > ORDER_ZERO && *d <= ORDER_NONZERO);
        let order = match order {
            Some(n) if !ambiguous => n,
            _ => return Err(Error::OrderAmbiguous { magnitudes }),
        };
        let log_c1 = -taylor[order].norm().ln();

        let (s0, s1) = f.support_span();
        let scan = f.find_zeros(s0 - 1.0, s1 + 1.0)?;
        let points: Vec<f64> = scan
            .zeros
            .points()
            .iter()
            .copied()
            .filter(|x| order == 0 || x.abs() > 1e-6)
            .collect();
        let real_zeros = PointSet::new(points, scan.zeros.window())?;
        Ok(Self {
            f: f.clone(),
            a,
            order,
            log_c1,
            real_zeros,
        })
    }

    pub fn function(&self) -> &SisFunction {
        &self.f
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    /// Order of vanishing of `f` at 0.
    pub fn order(&self) -> usize {
        self.order
    }

    /// `log |C₁|`.
    pub fn log_c1(&self) -> f64 {
        self.log_c1
    }

    /// Real zeros of `f` with the origin removed.
    pub fn real_zeros(&self) -> &PointSet {
        &self.real_zeros
    }

    /// Vertical spacing `π/a` of the zero lattice.
    pub fn lattice_step(&self) -> f64 {
        PI / self.a
    }

    /// Sorted moduli of the known zeros of `F` in `|z| <= t`: `λ + i(π/a)k`
    /// for every real zero `λ ≠ 0`, and `i(π/a)k`, `k ≠ 0`, repeated `n`
    /// times when `f` vanishes to order `n` at the origin.
    pub fn lattice_moduli(&self, t: f64) -> Vec<f64> {
        let step = self.lattice_step();
        let mut out = Vec::new();
        for &l in self.real_zeros.points() {
            if l.abs() > t {
                continue;
            }
            let kmax = ((t * t - l * l).max(0.0).sqrt() / step).floor() as i64 + 1;
            for k in -kmax..=kmax {
                let m = l.hypot(step * k as f64);
                if m <= t {
                    out.push(m);
                }
            }
        }
        if self.order > 0 {
            let kmax = (t / step).floor() as i64;
            for k in 1..=kmax {
                let m = step * k as f64;
                for _ in 0..2 * self.order {
                    out.push(m);
                }
            }
        }
        out.sort_by(f64::total_cmp);
        out
    }

    /// `log |F(z)| = log|C₁| - n log|z| + log|f(z)| + (a/2) Re(z²)`.
    pub fn log_abs_big_f(&self, z: Complex64) -> f64 {
        if z.norm() == 0.0 {
            return 0.0;
        }
        let v = scaled_eval_unchecked(&self.f, z);
        self.log_c1 - self.order as f64 * z.norm().ln()
            + v.log_abs()
            + 0.5 * self.a * (z.re * z.re - z.im * z.im)
    }

    // arg F up to a constant: arg(sum) + a x y - n θ.
    fn phase_parts(&self, theta: f64, t: f64) -> (f64, f64) {
        let z = Complex64::from_polar(t, theta);
        let v = scaled_eval_unchecked(&self.f, z);
        (v.sum.arg(), self.a * z.re * z.im - self.order as f64 * theta)
    }

    fn nearest_lattice_distance(&self, t: f64) -> f64 {
        self.lattice_moduli(t + 1.0)
            .iter()
            .fold(f64::INFINITY, |m, r| m.min((r - t).abs()))
    }

    /// Zeros of `F` in the closed disk of radius `t`: the lattice count plus
    /// whatever else the argument principle finds.
    pub fn count_zeros_disk(&self, t: f64) -> Result<DiskCount> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidParameter(format!("radius must be positive, got {t}")));
        }
        if self.nearest_lattice_distance(t) < BOUNDARY_CLEARANCE {
            return Err(Error::PhaseTracking {
                radius: t,
                winding: f64::NAN,
            });
        }
        let lattice = self.lattice_moduli(t).len();
        let n0 = (8.0 * self.a * t * t + 256.0) as usize;
        let mut evaluations = n0;
        let samples: Vec<(f64, f64, f64)> = (0..=n0)
            .map(|j| {
                let th = TAU * j as f64 / n0 as f64;
                let (p, c) = self.phase_parts(th, t);
                (th, p, c)
            })
            .collect();
        let mut total = 0.0;
        for w in samples.windows(2) {
            total += self.track(w[0], w[1], t, 0, &mut evaluations)?;
        }
        let winding = total / TAU;
        let rounded = winding.round();
        if (winding - rounded).abs() > 0.1 {
            return Err(Error::PhaseTracking { radius: t, winding });
        }
        let winding = rounded as i64;
        let extra = winding - lattice as i64;
        if extra < 0 {
            return Err(Error::MissingZeros {
                radius: t,
                winding,
                lattice,
            });
        }
        Ok(DiskCount {
            t,
            lattice,
            winding,
            extra,
        })
    }

    // Phase increment between two samples, refined until every piece moves
    // by less than π/2.
    fn track(
        &self,
        left: (f64, f64, f64),
        right: (f64, f64, f64),
        t: f64,
        depth: usize,
        evaluations: &mut usize,
    ) -> Result<f64> {
        let raw = right.1 - left.1 + (right.2 - left.2);
        let step = wrap(raw);
        if step.abs() < 0.5 * PI {
            return Ok(step);
        }
        if depth > 40 || *evaluations > MAX_PHASE_SAMPLES {
            return Err(Error::PhaseTracking {
                radius: t,
                winding: f64::NAN,
            });
        }
        let mid_th = 0.5 * (left.0 + right.0);
        let (p, c) = self.phase_parts(mid_th, t);
        *evaluations += 1;
        let mid = (mid_th, p, c);
        Ok(self.track(left, mid, t, depth + 1, evaluations)?
            + self.track(mid, right, t, depth + 1, evaluations)?)
    }

    /// `(1/r²) ∫_0^r n(t)/t dt` over the known (lattice) zeros, integrated
    /// exactly: each zero of modulus `ρ <= r` contributes `ln(r/ρ)`.
    pub fn jensen_lhs(&self, r: f64) -> Result<f64> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidParameter(format!("radius must be positive, got {r}")));
        }
        let s: f64 = self.lattice_moduli(r).iter().map(|m| (r / m).ln()).sum();
        Ok(s / (r * r))
    }

    /// `(1/2πr²) ∫_0^{2π} log |F(r e^{iθ})| dθ` by the trapezoidal rule,
    /// doubling from `n_theta` samples until two successive doublings each
    /// change the value by less than [`CONTOUR_TOL`].
    pub fn jensen_rhs(&self, r: f64, n_theta: usize) -> Result<f64> {
        if n_theta < 64 {
            return Err(Error::InvalidParameter(format!(
                "n_theta must be at least 64, got {n_theta}"
            )));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidParameter(format!("radius must be positive, got {r}")));
        }
        // The increments of arg F need about 4 samples per radian·(a r²).
        let floor = (8.0 * self.a * r * r + 256.0) as usize;
        let mut n = n_theta;
        while n < floor {
            n *= 2;
        }
        let sample = |j: usize, n: usize| self.log_abs_big_f(Complex64::from_polar(r, TAU * j as f64 / n as f64));
        let mut sum: f64 = (0..n).map(|j| sample(j, n)).sum();
        let mut value = sum / n as f64 / (r * r);
        let mut settled = false;
        loop {
            let next_n = 2 * n;
            if next_n > MAX_CONTOUR_SAMPLES {
                return Err(Error::ContourNonConvergence {
                    radius: r,
                    change: f64::NAN,
                    samples: n,
                });
            }
            let odd: f64 = (0..n).map(|j| sample(2 * j + 1, next_n)).sum();
            sum += odd;
            n = next_n;
            let next = sum / n as f64 / (r * r);
            let change = (next - value).abs();
            value = next;
            if !value.is_finite() {
                return Err(Error::ContourNonConvergence {
                    radius: r,
                    change,
                    samples: n,
                });
            }
            if change < CONTOUR_TOL {
                if settled {
                    return Ok(value);
                }
                settled = true;
            } else {
                settled = false;
            }
        }
    }

    /// `max (log |F(z)| - (a/2)|z|²)` over a polar grid of the disk of
    /// radius `radius` (ring spacing 0.25, arc spacing 0.05), plus full
    /// rings at `extra_rings`. Grids for different radii are nested.
    pub fn growth_constant(&self, radius: f64, extra_rings: &[f64]) -> f64 {
        let half_a = 0.5 * self.a;
        let ring_max = |rho: f64, count: usize| -> f64 {
            (0..count)
                .map(|j| {
                    let z = Complex64::from_polar(rho, TAU * j as f64 / count as f64);
                    self.log_abs_big_f(z) - half_a * rho * rho
                })
                .fold(f64::NEG_INFINITY, f64::max)
        };
        // F(0) = 1.
        let mut best: f64 = 0.0;
        let n_rings = (radius / 0.25).floor() as usize;
        for i in 1..=n_rings {
            let rho = 0.25 * i as f64;
            let count = ((TAU * rho / 0.05).ceil() as usize).max(64);
            best = best.max(ring_max(rho, count));
        }
        for &rho in extra_rings {
            let count = ((TAU * rho / 0.005).ceil() as usize).max(1024);
            best = best.max(ring_max(rho, count));
        }
        best
    }

    /// Largest relative magnitude `log10(|f(λ + iπk/a)| / scale)` over the
    /// real zeros `λ` and `|k| <= kmax`, where `scale` is the largest term of
    /// the defining sum at that point.
    pub fn lattice_invariance(&self, kmax: i64) -> f64 {
        let step = self.lattice_step();
        let mut worst = f64::NEG_INFINITY;
        for &l in self.real_zeros.points() {
            for k in -kmax..=kmax {
                let v = scaled_eval_unchecked(&self.f, Complex64::new(l, step * k as f64));
                let rel = v.sum.norm().max(1e-300).log10();
                worst = worst.max(rel);
            }
        }
        worst
    }
}

fn wrap(x: f64) -> f64 {
    let mut y = x % TAU;
    if y > PI {
        y -= TAU;
    } else if y <= -PI {
        y += TAU;
    }
    y
}

// Taylor coefficients of f at 0 from the discrete Cauchy integral on a
// circle of radius TAYLOR_RADIUS.
fn taylor_coefficients(f: &SisFunction) -> Vec<Complex64> {
    let n = TAYLOR_NODES;
    let values: Vec<Complex64> = (0..n)
        .map(|l| {
            let z = Complex64::from_polar(TAYLOR_RADIUS, TAU * l as f64 / n as f64);
            let v = scaled_eval_unchecked(f, z);
            if v.log_scale == f64::NEG_INFINITY {
                Complex64::new(0.0, 0.0)
            } else {
                v.sum * v.log_scale.exp()
            }
        })
        .collect();
    (0..=MAX_ORDER)
        .map(|j| {
            let s: Complex64 = values
                .iter()
                .enumerate()
                .map(|(l, v)| v * Complex64::from_polar(1.0, -TAU * (j * l) as f64 / n as f64))
                .sum();
            s / n as f64 / TAYLOR_RADIUS.powi(j as i32)
        })
        .collect()
}

/// First radius `r + j·RADIUS_NUDGE` (j = 0..200) whose distance to the
/// nearest known zero is at least [`PREFERRED_CLEARANCE`]; failing that the
/// candidate with the largest clearance.
pub fn nudge_radius(ctx: &JensenContext, r: f64) -> f64 {
    let moduli = ctx.lattice_moduli(r + 1.0);
    let clearance = |t: f64| moduli.iter().fold(f64::INFINITY, |m, x| m.min((x - t).abs()));
    let mut best = (r, clearance(r));
    for j in 0..=200 {
        let t = r + RADIUS_NUDGE * j as f64;
        let c = clearance(t);
        if c >= PREFERRED_CLEARANCE {
            return t;
        }
        if c > best.1 {
            best = (t, c);
        }
    }
    best.0
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BaseCaseRow {
    /// Radius actually used (after perturbation off zeros).
    pub r: f64,
    pub r_requested: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// `(a/2) · circ_direct(Λ∖{0})` at `r`.
    pub circ_scaled: f64,
    pub circ_direct: f64,
    /// `log(C_fit)/r² + a/2`.
    pub bound: f64,
    pub extra_zeros: i64,
    pub lattice_zeros: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BaseCaseReport {
    pub a: f64,
    pub order_at_origin: usize,
    pub log_c_fit: f64,
    pub rows: Vec<BaseCaseRow>,
}

impl BaseCaseReport {
    /// Checks `lhs ≈ rhs <= bound`, `(a/2) circ <= lhs + 20/r` and
    /// `circ <= 1 + 40/r` at every radius.
    pub fn check(&self) -> Result<()> {
        for row in &self.rows {
            let r = row.r;
            let fail = |detail: String| Err(Error::ChainViolation { radius: r, detail });
            if row.extra_zeros == 0 {
                if (row.lhs - row.rhs).abs() > 2e-6 {
                    return fail(format!("lhs {} differs from rhs {}", row.lhs, row.rhs));
                }
            } else if row.lhs > row.rhs + 1e-6 {
                return fail(format!("lhs {} exceeds rhs {}", row.lhs, row.rhs));
            }
            if row.rhs > row.bound + 1e-6 || row.lhs > row.bound + 1e-6 {
                return fail(format!(
                    "lhs {} / rhs {} above growth bound {}",
                    row.lhs, row.rhs, row.bound
                ));
            }
            if row.circ_scaled > row.lhs + 20.0 / r {
                return fail(format!(
                    "(a/2) circ = {} exceeds lhs {} + 20/r",
                    row.circ_scaled, row.lhs
                ));
            }
            if row.circ_direct > 1.0 + 40.0 / r {
                return fail(format!("circular density {} above 1 + 40/r", row.circ_direct));
            }
        }
        Ok(())
    }
}

/// Evaluates the base-case chain at each radius without asserting it.
pub fn evaluate_base_case(ctx: &JensenContext, radii: &[f64]) -> Result<BaseCaseReport> {
    let used: Vec<f64> = radii.iter().map(|&r| nudge_radius(ctx, r)).collect();
    let fit_radius = used.iter().fold(8.0f64, |m, r| m.max(*r));
    let log_c_fit = ctx.growth_constant(fit_radius, &used);
    let mut rows = Vec::with_capacity(radii.len());
    for (&req, &r) in radii.iter().zip(&used) {
        let count = ctx.count_zeros_disk(r)?;
        let lhs = ctx.jensen_lhs(r)?;
        let rhs = ctx.jensen_rhs(r, 64)?;
        let circ = circ_density_direct(ctx.real_zeros(), &[r])?.values[0];
        rows.push(BaseCaseRow {
            r,
            r_requested: req,
            lhs,
            rhs,
            circ_scaled: 0.5 * ctx.a() * circ,
            circ_direct: circ,
            bound: log_c_fit / (r * r) + 0.5 * ctx.a(),
            extra_zeros: count.extra,
            lattice_zeros: count.lattice,
        });
    }
    Ok(BaseCaseReport {
        a: ctx.a(),
        order_at_origin: ctx.order(),
        log_c_fit,
        rows,
    })
}

/// [`evaluate_base_case`] followed by [`BaseCaseReport::check`].
pub fn verify_base_case(ctx: &JensenContext, radii: &[f64]) -> Result<BaseCaseReport> {
    let report = evaluate_base_case(ctx, radii)?;
    report.check()?;
    Ok(report)
}

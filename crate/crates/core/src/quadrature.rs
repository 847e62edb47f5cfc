//! Globally adaptive 15-point Gauss–Kronrod quadrature.
//!
//! The integrand may be vector valued (`[Complex64; N]`), which lets the
//! inverse transform of the generator and of its first two derivatives share
//! one set of nodes. Each component carries its own absolute tolerance; an
//! interval is accepted once every component meets its share.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use num_complex::Complex64;

use crate::error::{Error, Result};

// Kronrod abscissae on [-1, 1], positive half. Gauss nodes sit at odd indices.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_838_258_730,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// 7-point Gauss weights for XGK[1], XGK[3], XGK[5] and the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Default cap on the number of live subintervals.
pub const DEFAULT_MAX_INTERVALS: usize = 20_000;

#[derive(Clone, Debug)]
pub struct QuadResult<const N: usize> {
    pub value: [Complex64; N],
    /// Per-component error estimate.
    pub error: [f64; N],
    pub evaluations: usize,
}

struct Panel<const N: usize> {
    lo: f64,
    hi: f64,
    value: [Complex64; N],
    error: [f64; N],
    // Largest error-to-tolerance ratio over the components.
    priority: f64,
}

impl<const N: usize> PartialEq for Panel<N> {
    fn eq(&self, other: &Self) -> bool {
        self.priority == other.priority
    }
}
impl<const N: usize> Eq for Panel<N> {}
impl<const N: usize> PartialOrd for Panel<N> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<const N: usize> Ord for Panel<N> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority.total_cmp(&other.priority)
    }
}

fn qk15<const N: usize, F>(f: &F, lo: f64, hi: f64) -> ([Complex64; N], [f64; N])
where
    F: Fn(f64) -> [Complex64; N],
{
    let centre = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = f(centre);

    let mut kron = [Complex64::new(0.0, 0.0); N];
    let mut gauss = [Complex64::new(0.0, 0.0); N];
    let mut resabs = [0.0; N];
    let mut fvals: Vec<([Complex64; N], [Complex64; N])> = Vec::with_capacity(7);

    for c in 0..N {
        kron[c] = fc[c] * WGK[7];
        gauss[c] = fc[c] * WG[3];
        resabs[c] = fc[c].norm() * WGK[7];
    }
    for (j, (&x, &w)) in XGK[..7].iter().zip(&WGK[..7]).enumerate() {
        let dx = half * x;
        let f1 = f(centre - dx);
        let f2 = f(centre + dx);
        for c in 0..N {
            kron[c] += (f1[c] + f2[c]) * w;
            resabs[c] += (f1[c].norm() + f2[c].norm()) * w;
            if j % 2 == 1 {
                gauss[c] += (f1[c] + f2[c]) * WG[j / 2];
            }
        }
        fvals.push((f1, f2));
    }

    let mut error = [0.0; N];
    for c in 0..N {
        let mean = kron[c] * 0.5;
        let mut resasc = WGK[7] * (fc[c] - mean).norm();
        for (j, (f1, f2)) in fvals.iter().enumerate() {
            resasc += WGK[j] * ((f1[c] - mean).norm() + (f2[c] - mean).norm());
        }
        let resasc = resasc * half.abs();
        let resabs = resabs[c] * half.abs();
        let mut err = ((kron[c] - gauss[c]) * half).norm();
        if resasc != 0.0 && err != 0.0 {
            err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
        }
        if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
            err = err.max(50.0 * f64::EPSILON * resabs);
        }
        error[c] = err;
        kron[c] *= half;
    }
    (kron, error)
}

fn priority<const N: usize>(error: &[f64; N], tol: &[f64; N]) -> f64 {
    error
        .iter()
        .zip(tol)
        .map(|(e, t)| e / t)
        .fold(0.0, f64::max)
}

/// Integrate a vector-valued function over `[lo, hi]` until every component's
/// error estimate is below its entry in `abs_tol`.
pub fn integrate_vec<const N: usize, F>(
    f: F,
    lo: f64,
    hi: f64,
    abs_tol: [f64; N],
    max_intervals: usize,
) -> Result<QuadResult<N>>
where
    F: Fn(f64) -> [Complex64; N],
{
    let (value, error) = qk15(&f, lo, hi);
    let mut evaluations = 15;
    let mut heap = BinaryHeap::new();
    let mut total_value = value;
    let mut total_error = error;
    heap.push(Panel {
        lo,
        hi,
        value,
        error,
        priority: priority(&error, &abs_tol),
    });

    loop {
        let finite = total_error.iter().all(|e| e.is_finite())
            && total_value.iter().all(|v| v.re.is_finite() && v.im.is_finite());
        if !finite {
            return Err(Error::QuadratureNonConvergence {
                lo,
                hi,
                error: f64::INFINITY,
                intervals: heap.len(),
            });
        }
        let done = total_error.iter().zip(&abs_tol).all(|(e, t)| e <= t);
        if done {
            return Ok(QuadResult {
                value: total_value,
                error: total_error,
                evaluations,
            });
        }
        if heap.len() >= max_intervals {
            return Err(Error::QuadratureNonConvergence {
                lo,
                hi,
                error: priority(&total_error, &abs_tol),
                intervals: heap.len(),
            });
        }
        let worst = heap.pop().expect("heap holds at least one panel");
        let mid = 0.5 * (worst.lo + worst.hi);
        if mid <= worst.lo || mid >= worst.hi {
            // Interval collapsed to adjacent floats.
            return Err(Error::QuadratureNonConvergence {
                lo,
                hi,
                error: priority(&total_error, &abs_tol),
                intervals: heap.len() + 1,
            });
        }
        let (v1, e1) = qk15(&f, worst.lo, mid);
        let (v2, e2) = qk15(&f, mid, worst.hi);
        evaluations += 30;
        for c in 0..N {
            total_value[c] += v1[c] + v2[c] - worst.value[c];
            total_error[c] += e1[c] + e2[c] - worst.error[c];
        }
        heap.push(Panel {
            lo: worst.lo,
            hi: mid,
            value: v1,
            error: e1,
            priority: priority(&e1, &abs_tol),
        });
        heap.push(Panel {
            lo: mid,
            hi: worst.hi,
            value: v2,
            error: e2,
            priority: priority(&e2, &abs_tol),
        });
        // Running sums drift; resum once in a while.
        if heap.len() % 512 == 0 {
            total_value = [Complex64::new(0.0, 0.0); N];
            total_error = [0.0; N];
            for p in heap.iter() {
                for c in 0..N {
                    total_value[c] += p.value[c];
                    total_error[c] += p.error[c];
                }
            }
        }
    }
}

/// Scalar convenience wrapper: integrate a real function to absolute
/// tolerance `abs_tol`.
pub fn integrate<F>(f: F, lo: f64, hi: f64, abs_tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let r = integrate_vec(
        |x| [Complex64::new(f(x), 0.0)],
        lo,
        hi,
        [abs_tol],
        DEFAULT_MAX_INTERVALS,
    )?;
    Ok(r.value[0].re)
}

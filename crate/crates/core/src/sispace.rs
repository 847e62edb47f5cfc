//! Functions in the shift-invariant space `V(g) = { Σ c_k g(· - k) }` with
//! finitely supported real coefficients.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::{gaussian_derivs, GeneratorParams, TimeDomainTable};

/// Scan step used by [`SisFunction::find_zeros`].
pub const SCAN_STEP: f64 = 0.02;
/// Bisection stops once the bracket is shorter than this.
pub const ZERO_TOL: f64 = 1e-10;
/// Samples below this magnitude count towards identically-zero detection.
pub const IDENTICALLY_ZERO_FLOOR: f64 = 1e-12;
/// Slack in the segment inequality.
pub const SEGMENT_SLACK: f64 = 1e-12;

/// Finitely supported coefficients `c_offset, ..., c_{offset+n-1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCoeffs", into = "RawCoeffs")]
pub struct CoeffSeq {
    offset: i64,
    coeffs: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCoeffs {
    #[serde(default)]
    offset: i64,
    coeffs: Vec<f64>,
}

impl TryFrom<RawCoeffs> for CoeffSeq {
    type Error = Error;
    fn try_from(r: RawCoeffs) -> Result<Self> {
        CoeffSeq::new(r.offset, r.coeffs)
    }
}

impl From<CoeffSeq> for RawCoeffs {
    fn from(c: CoeffSeq) -> Self {
        RawCoeffs {
            offset: c.offset,
            coeffs: c.coeffs,
        }
    }
}

impl CoeffSeq {
    pub fn new(offset: i64, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("coefficients must be finite".into()));
        }
        Ok(Self { offset, coeffs })
    }

    /// Single `1` at index `k`.
    pub fn unit(k: i64) -> Self {
        Self {
            offset: k,
            coeffs: vec![1.0],
        }
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Last index carrying a coefficient. Equal to `offset - 1` when empty.
    pub fn last_index(&self) -> i64 {
        self.offset + self.coeffs.len() as i64 - 1
    }

    pub fn get(&self, k: i64) -> f64 {
        if k < self.offset || k > self.last_index() {
            0.0
        } else {
            self.coeffs[(k - self.offset) as usize]
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == 0.0)
    }

    pub fn negated(&self) -> Self {
        Self {
            offset: self.offset,
            coeffs: self.coeffs.iter().map(|c| -c).collect(),
        }
    }

    /// Coefficient-wise sum over the union of both supports.
    pub fn add(&self, other: &Self) -> Self {
        if self.is_empty() {
            return other.clone();
        }
        if other.is_empty() {
            return self.clone();
        }
        let lo = self.offset.min(other.offset);
        let hi = self.last_index().max(other.last_index());
        let coeffs = (lo..=hi).map(|k| self.get(k) + other.get(k)).collect();
        Self { offset: lo, coeffs }
    }
}

/// Finite, strictly increasing set of reals observed through `window`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPointSet", into = "RawPointSet")]
pub struct PointSet {
    points: Vec<f64>,
    window: (f64, f64),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RawPointSet {
    points: Vec<f64>,
    window: Option<[f64; 2]>,
}

impl TryFrom<RawPointSet> for PointSet {
    type Error = Error;
    fn try_from(r: RawPointSet) -> Result<Self> {
        match r.window {
            Some([lo, hi]) => PointSet::new(r.points, (lo, hi)),
            None => {
                let lo = r.points.first().copied().unwrap_or(0.0);
                let hi = r.points.last().copied().unwrap_or(0.0);
                PointSet::new(r.points, (lo, hi))
            }
        }
    }
}

impl From<PointSet> for RawPointSet {
    fn from(p: PointSet) -> Self {
        RawPointSet {
            points: p.points,
            window: Some([p.window.0, p.window.1]),
        }
    }
}

impl PointSet {
    pub fn new(points: Vec<f64>, window: (f64, f64)) -> Result<Self> {
        let (lo, hi) = window;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::InvalidParameter(format!("bad window [{lo}, {hi}]")));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidParameter("points must be finite".into()));
        }
        if let Some(w) = points.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(format!(
                "points must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        if let Some(p) = points.iter().find(|p| **p < lo || **p > hi) {
            return Err(Error::InvalidParameter(format!(
                "point {p} lies outside the window [{lo}, {hi}]"
            )));
        }
        Ok(Self { points, window })
    }

    /// Sorts and drops exact duplicates before validating.
    pub fn from_unsorted(mut points: Vec<f64>, window: (f64, f64)) -> Result<Self> {
        points.sort_by(f64::total_cmp);
        points.dedup();
        Self::new(points, window)
    }

    pub fn empty(window: (f64, f64)) -> Self {
        Self {
            points: Vec::new(),
            window,
        }
    }

    /// `spacing · ℤ ∩ [lo, hi]`, observed through `[lo, hi]`.
    pub fn lattice(spacing: f64, lo: f64, hi: f64) -> Result<Self> {
        if !(spacing > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "lattice spacing must be positive, got {spacing}"
            )));
        }
        let k0 = (lo / spacing).ceil() as i64;
        let k1 = (hi / spacing).floor() as i64;
        let points = (k0..=k1)
            .map(|k| k as f64 * spacing)
            .filter(|x| *x >= lo && *x <= hi)
            .collect();
        Self::new(points, (lo, hi))
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn window(&self) -> (f64, f64) {
        self.window
    }

    pub fn window_length(&self) -> f64 {
        self.window.1 - self.window.0
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Union of both sets; the window is the hull of both windows.
    pub fn union(&self, other: &Self) -> Self {
        let mut points = Vec::with_capacity(self.len() + other.len());
        let (mut i, mut j) = (0, 0);
        while i < self.points.len() || j < other.points.len() {
            let next = match (self.points.get(i), other.points.get(j)) {
                (Some(&a), Some(&b)) if a < b => {
                    i += 1;
                    a
                }
                (Some(&a), Some(&b)) if b < a => {
                    j += 1;
                    b
                }
                (Some(&a), Some(_)) => {
                    i += 1;
                    j += 1;
                    a
                }
                (Some(&a), None) => {
                    i += 1;
                    a
                }
                (None, Some(&b)) => {
                    j += 1;
                    b
                }
                (None, None) => unreachable!(),
            };
            points.push(next);
        }
        Self {
            points,
            window: (
                self.window.0.min(other.window.0),
                self.window.1.max(other.window.1),
            ),
        }
    }

    /// The set with the point `0` removed, if present.
    pub fn without_origin(&self) -> Self {
        Self {
            points: self.points.iter().copied().filter(|p| *p != 0.0).collect(),
            window: self.window,
        }
    }
}

#[derive(Clone, Debug)]
enum Kernel {
    Gaussian { amp: f64, a: f64, reach: f64 },
    Table(Arc<TimeDomainTable>),
}

impl Kernel {
    fn reach(&self) -> f64 {
        match self {
            Kernel::Gaussian { reach, .. } => *reach,
            Kernel::Table(t) => t.half_width(),
        }
    }

    fn value(&self, x: f64) -> f64 {
        match self {
            Kernel::Gaussian { amp, a, .. } => amp * (-a * x * x).exp(),
            Kernel::Table(t) => t.eval(x),
        }
    }

    fn deriv(&self, x: f64) -> f64 {
        match self {
            Kernel::Gaussian { amp, a, .. } => gaussian_derivs(*amp, *a, x)[1],
            Kernel::Table(t) => t.eval_deriv(x),
        }
    }
}

type TableKey = Vec<u64>;

fn table_cache() -> &'static Mutex<HashMap<TableKey, Arc<TimeDomainTable>>> {
    static CACHE: OnceLock<Mutex<HashMap<TableKey, Arc<TimeDomainTable>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Process-wide table for `params` built by [`GeneratorParams::auto_table`].
pub fn shared_table(params: &GeneratorParams) -> Result<Arc<TimeDomainTable>> {
    let mut key = vec![params.c0().to_bits(), params.gamma().to_bits()];
    key.extend(params.deltas().iter().map(|d| d.to_bits()));
    if let Some(t) = table_cache().lock().expect("table cache poisoned").get(&key) {
        return Ok(t.clone());
    }
    let table = Arc::new(params.auto_table()?);
    let mut cache = table_cache().lock().expect("table cache poisoned");
    Ok(cache.entry(key).or_insert(table).clone())
}

/// `f = Σ c_k g(· - k)`.
#[derive(Clone, Debug)]
pub struct SisFunction {
    params: GeneratorParams,
    coeffs: CoeffSeq,
    kernel: Kernel,
}

/// Real zeros found on an interval. `zeros` holds every zero, sign changes
/// and touch points alike; `touch` repeats the ones where `f` does not change
/// sign (even multiplicity).
#[derive(Clone, Debug)]
pub struct ZeroScan {
    pub zeros: PointSet,
    pub touch: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InterlaceReport {
    pub nonnegative_side: bool,
    pub nonpositive_side: bool,
    pub interlaced: bool,
    /// First gap `(λ_{k-1}, λ_k)` without a zero of the image, if any.
    pub first_empty_gap: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SegmentReport {
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl SisFunction {
    pub fn new(params: GeneratorParams, coeffs: CoeffSeq) -> Result<Self> {
        let kernel = if params.m() == 0 {
            Kernel::Gaussian {
                amp: params.gaussian_amplitude(),
                a: params.gaussian_rate(),
                reach: params.decay_radius(),
            }
        } else {
            Kernel::Table(shared_table(&params)?)
        };
        Ok(Self {
            params,
            coeffs,
            kernel,
        })
    }

    pub fn params(&self) -> &GeneratorParams {
        &self.params
    }

    pub fn coeffs(&self) -> &CoeffSeq {
        &self.coeffs
    }

    /// Distance beyond which a single shift no longer contributes.
    pub fn kernel_reach(&self) -> f64 {
        self.kernel.reach()
    }

    /// Support of the coefficients as a real interval.
    pub fn support_span(&self) -> (f64, f64) {
        (self.coeffs.offset() as f64, self.coeffs.last_index() as f64)
    }

    fn index_range(&self, x: f64) -> std::ops::RangeInclusive<i64> {
        let reach = self.kernel.reach();
        let lo = ((x - reach).ceil() as i64).max(self.coeffs.offset());
        let hi = ((x + reach).floor() as i64).min(self.coeffs.last_index());
        lo..=hi
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.index_range(x)
            .map(|k| self.coeffs.get(k) * self.kernel.value(x - k as f64))
            .sum()
    }

    pub fn eval_deriv(&self, x: f64) -> f64 {
        self.index_range(x)
            .map(|k| self.coeffs.get(k) * self.kernel.deriv(x - k as f64))
            .sum()
    }

    /// `Σ_k c_k g(x - k)` for one shift only; used by design matrices.
    pub fn kernel_value(&self, x: f64) -> f64 {
        if x.abs() > self.kernel.reach() {
            0.0
        } else {
            self.kernel.value(x)
        }
    }

    /// Same coefficients over the generator with its last factor removed.
    /// The result equals `f + delta · f'`.
    pub fn apply_rolle_op(&self, delta: f64) -> Result<SisFunction> {
        let expected = *self.params.deltas().last().ok_or(Error::EmptyDeltas)?;
        if delta != expected {
            return Err(Error::DeltaMismatch {
                given: delta,
                expected,
            });
        }
        SisFunction::new(self.params.reduce()?, self.coeffs.clone())
    }

    /// Same generator, different coefficients; reuses the kernel.
    pub fn with_coeffs(&self, coeffs: CoeffSeq) -> SisFunction {
        SisFunction {
            params: self.params.clone(),
            coeffs,
            kernel: self.kernel.clone(),
        }
    }

    /// Real zeros on `[lo, hi]`: sign changes located by scanning at
    /// [`SCAN_STEP`] and bisecting to [`ZERO_TOL`]; local minima of `|f|`
    /// below `1e-9 (1 + max |c_k|)` without a sign change are reported as
    /// touch zeros. Zeros are counted without multiplicity.
    pub fn find_zeros(&self, lo: f64, hi: f64) -> Result<ZeroScan> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::DegenerateInterval { lo, hi });
        }
        let n = ((hi - lo) / SCAN_STEP).ceil().max(2.0) as usize;
        let step = (hi - lo) / n as f64;
        let xs: Vec<f64> = (0..=n).map(|i| if i == n { hi } else { lo + i as f64 * step }).collect();
        let vs: Vec<f64> = xs.iter().map(|&x| self.eval(x)).collect();

        let small = vs.iter().filter(|v| v.abs() < IDENTICALLY_ZERO_FLOOR).count();
        let fraction = small as f64 / vs.len() as f64;
        if fraction >= 0.99 {
            return Err(Error::IdenticallyZero { lo, hi, fraction });
        }

        // Samples that evaluate to exactly zero are skipped: away from the
        // coefficient support they are underflow, not zeros. A sign change
        // across them is still bisected.
        let mut zeros = Vec::new();
        let mut last_nonzero: Option<usize> = None;
        for i in 0..vs.len() {
            if vs[i] == 0.0 {
                continue;
            }
            if let Some(j) = last_nonzero {
                if vs[j].signum() != vs[i].signum() {
                    zeros.push(self.bisect(xs[j], xs[i], vs[j]));
                }
            }
            last_nonzero = Some(i);
        }

        let touch_tol = 1e-9 * (1.0 + self.coeffs.max_abs());
        let mut touch = Vec::new();
        for i in 1..vs.len() - 1 {
            let (a, b, c) = (vs[i - 1], vs[i], vs[i + 1]);
            if a == 0.0 || b == 0.0 || c == 0.0 {
                continue;
            }
            let same_sign = a.signum() == b.signum() && b.signum() == c.signum();
            if same_sign && b.abs() <= a.abs() && b.abs() <= c.abs() {
                let (xm, fm) = self.minimize_abs(xs[i - 1], xs[i + 1]);
                if fm < touch_tol && !zeros.iter().any(|z: &f64| (z - xm).abs() < 1e-6) {
                    touch.push(xm);
                }
            }
        }

        zeros.extend(touch.iter().copied());
        let zeros = PointSet::from_unsorted(zeros, (lo, hi))?;
        Ok(ZeroScan { zeros, touch })
    }

    fn bisect(&self, mut a: f64, mut b: f64, fa: f64) -> f64 {
        let sa = fa.signum();
        while b - a > ZERO_TOL {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            let fm = self.eval(mid);
            if fm == 0.0 {
                return mid;
            }
            if fm.signum() == sa {
                a = mid;
            } else {
                b = mid;
            }
        }
        0.5 * (a + b)
    }

    // Golden-section search for the minimum of |f| on [a, b].
    fn minimize_abs(&self, mut a: f64, mut b: f64) -> (f64, f64) {
        let inv_phi = 0.5 * (5.0f64.sqrt() - 1.0);
        let mut c = b - inv_phi * (b - a);
        let mut d = a + inv_phi * (b - a);
        let mut fc = self.eval(c).abs();
        let mut fd = self.eval(d).abs();
        while b - a > ZERO_TOL {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - inv_phi * (b - a);
                fc = self.eval(c).abs();
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + inv_phi * (b - a);
                fd = self.eval(d).abs();
            }
        }
        let x = 0.5 * (a + b);
        (x, self.eval(x).abs())
    }

    /// `max |f|` over a uniform grid on `[lo, hi]`.
    pub fn sup_on_grid(&self, lo: f64, hi: f64, step: f64) -> f64 {
        let n = ((hi - lo) / step).ceil().max(1.0) as usize;
        (0..=n)
            .map(|i| self.eval(lo + (hi - lo) * i as f64 / n as f64).abs())
            .fold(0.0, f64::max)
    }
}

// Greedy certificate on the non-negative half: every gap between consecutive
// zeros of f must hold a distinct zero of the image.
fn interlace_half(lambdas: &[f64], gammas: &[f64]) -> Option<(f64, f64)> {
    let mut j = 0;
    for w in lambdas.windows(2) {
        let (left, right) = (w[0], w[1]);
        while j < gammas.len() && gammas[j] <= left {
            j += 1;
        }
        if j < gammas.len() && gammas[j] < right {
            j += 1;
        } else {
            return Some((left, right));
        }
    }
    None
}

/// Checks that zeros of the Rolle image `zf1` interlace the non-negative and
/// the non-positive zeros of `zf`.
pub fn check_interlacing(zf: &PointSet, zf1: &PointSet) -> InterlaceReport {
    let pos_l: Vec<f64> = zf.points().iter().copied().filter(|x| *x >= 0.0).collect();
    let pos_g: Vec<f64> = zf1.points().iter().copied().filter(|x| *x > 0.0).collect();
    // Mirror the non-positive half so the same greedy sweep applies.
    let neg_l: Vec<f64> = zf.points().iter().rev().filter(|x| **x <= 0.0).map(|x| -x).collect();
    let neg_g: Vec<f64> = zf1.points().iter().rev().filter(|x| **x < 0.0).map(|x| -x).collect();

    let pos_gap = interlace_half(&pos_l, &pos_g);
    let neg_gap = interlace_half(&neg_l, &neg_g).map(|(a, b)| (-b, -a));
    InterlaceReport {
        nonnegative_side: pos_gap.is_none(),
        nonpositive_side: neg_gap.is_none(),
        interlaced: pos_gap.is_none() && neg_gap.is_none(),
        first_empty_gap: pos_gap.or(neg_gap),
    }
}

/// `Σ_{λ ∈ zf ∩ [-t,t]} √(t²-λ²)` against `2t + Σ_{γ ∈ zf1 ∩ [-t,t]} √(t²-γ²)`.
pub fn segment_inequality(zf: &PointSet, zf1: &PointSet, t: f64) -> Result<SegmentReport> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("t must be positive, got {t}")));
    }
    let chord = |x: &f64| {
        if x.abs() <= t {
            (t * t - x * x).max(0.0).sqrt()
        } else {
            0.0
        }
    };
    let lhs: f64 = zf.points().iter().map(chord).sum();
    let rhs = 2.0 * t + zf1.points().iter().map(chord).sum::<f64>();
    Ok(SegmentReport {
        t,
        lhs,
        rhs,
        holds: lhs <= rhs + SEGMENT_SLACK,
    })
}

//! Sign retrieval: recovering `f = Σ c_k g(· - k)` up to a global sign from
//! `|f|` on a point set.
//!
//! Real `f` can only change sign at its zeros, so the unknown signs are
//! searched as run-structured patterns: constant between the gaps
//! ("crossing slots") where a sign change is placed. For a fixed pattern
//! the coefficients solve a linear least-squares problem.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::GeneratorParams;
use crate::rng;
use crate::sispace::{CoeffSeq, PointSet, SisFunction};

/// Design matrices with a larger condition number are rejected.
pub const MAX_CONDITION: f64 = 1e12;
/// Accept a pattern when its RMS residual is below this times the largest
/// magnitude.
pub const ACCEPT_REL: f64 = 1e-5;
/// Magnitudes all below this carry no sign information.
pub const MIN_SIGNAL: f64 = 1e-10;
/// Search nodes visited before giving up.
pub const NODE_BUDGET: usize = 100_000;
/// Largest number of patterns the exhaustive search will enumerate.
pub const ENUMERATION_CAP: u128 = 1_000_000;
/// Success tolerance of the experiment, relative to `max |f|`.
pub const SUCCESS_REL: f64 = 1e-4;
/// Spacing of the grid on which recovered functions are compared.
pub const CHECK_STEP: f64 = 0.01;
// Design entries below this fraction of max g are dropped when bounding
// partial residuals.
const TRUNCATION_REL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSample")]
pub struct MagnitudeSample {
    lambda: PointSet,
    magnitudes: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSample {
    lambda: PointSet,
    magnitudes: Vec<f64>,
}

impl TryFrom<RawSample> for MagnitudeSample {
    type Error = Error;

    fn try_from(raw: RawSample) -> Result<Self> {
        MagnitudeSample::new(raw.lambda, raw.magnitudes)
    }
}

impl MagnitudeSample {
    pub fn new(lambda: PointSet, magnitudes: Vec<f64>) -> Result<Self> {
        if lambda.len() != magnitudes.len() {
            return Err(Error::InvalidParameter(format!(
                "{} points but {} magnitudes",
                lambda.len(),
                magnitudes.len()
            )));
        }
        if let Some(m) = magnitudes.iter().find(|m| !(m.is_finite() && **m >= 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "magnitudes must be finite and nonnegative, got {m}"
            )));
        }
        Ok(Self { lambda, magnitudes })
    }

    pub fn lambda(&self) -> &PointSet {
        &self.lambda
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    pub fn max_magnitude(&self) -> f64 {
        self.magnitudes.iter().fold(0.0, |m, v| m.max(*v))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SignPattern {
    pub signs: Vec<i8>,
    /// Indices `i` with `signs[i + 1] != signs[i]`.
    pub change_points: Vec<usize>,
}

impl SignPattern {
    pub fn from_signs(signs: Vec<i8>) -> Self {
        let change_points = signs
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[0] != w[1])
            .map(|(i, _)| i)
            .collect();
        Self {
            signs,
            change_points,
        }
    }

    pub fn changes(&self) -> usize {
        self.change_points.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RetrievalResult {
    pub coeffs: CoeffSeq,
    pub signs: SignPattern,
    pub residual: f64,
    pub sign_changes: usize,
}

/// `|f(λ)|` for every `λ ∈ Λ`.
pub fn sample_magnitudes(f: &SisFunction, lambda: &PointSet) -> MagnitudeSample {
    let magnitudes = lambda.points().iter().map(|&x| f.eval(x).abs()).collect();
    MagnitudeSample {
        lambda: lambda.clone(),
        magnitudes,
    }
}

fn check_support(support: (i64, i64)) -> Result<usize> {
    if support.0 > support.1 {
        return Err(Error::InvalidParameter(format!(
            "empty support [{}, {}]",
            support.0, support.1
        )));
    }
    Ok((support.1 - support.0 + 1) as usize)
}

fn design_matrix(params: &GeneratorParams, points: &[f64], support: (i64, i64)) -> Result<DMatrix<f64>> {
    let k = check_support(support)?;
    let kernel = SisFunction::new(params.clone(), CoeffSeq::unit(0))?;
    Ok(DMatrix::from_fn(points.len(), k, |i, j| {
        kernel.kernel_value(points[i] - (support.0 + j as i64) as f64)
    }))
}

// Householder QR of the design matrix, reused for every sign pattern.
struct LeastSquares {
    design: DMatrix<f64>,
    qr: nalgebra::QR<f64, nalgebra::Dyn, nalgebra::Dyn>,
    r: DMatrix<f64>,
    offset: i64,
}

// Singular values of the triangular factor; nalgebra's default stopping
// rule leaves errors near 1e-4, so convergence is tightened.
fn condition_number(r: &DMatrix<f64>) -> f64 {
    match r.clone().try_svd(false, false, 1e-22, 100_000) {
        Some(svd) => {
            let smax = svd.singular_values.max();
            let smin = svd.singular_values.min();
            if smin > 0.0 {
                smax / smin
            } else {
                f64::INFINITY
            }
        }
        None => f64::INFINITY,
    }
}

impl LeastSquares {
    fn new(params: &GeneratorParams, lambda: &PointSet, support: (i64, i64)) -> Result<Self> {
        let unknowns = check_support(support)?;
        if lambda.len() < unknowns {
            return Err(Error::Underdetermined {
                samples: lambda.len(),
                unknowns,
            });
        }
        let design = design_matrix(params, lambda.points(), support)?;
        let qr = design.clone().qr();
        let r = qr.r();
        let condition = condition_number(&r);
        if !(condition <= MAX_CONDITION) {
            return Err(Error::RankDeficient { condition });
        }
        Ok(Self {
            design,
            qr,
            r,
            offset: support.0,
        })
    }

    fn solve(&self, values: &[f64]) -> (Vec<f64>, f64) {
        let b = DVector::from_column_slice(values);
        let mut y = b.clone();
        self.qr.q_tr_mul(&mut y);
        let k = self.r.ncols();
        let c = self
            .r
            .solve_upper_triangular(&y.rows(0, k).into_owned())
            .expect("condition number was checked");
        let res = &self.design * &c - &b;
        let rms = (res.norm_squared() / values.len() as f64).sqrt();
        (c.iter().copied().collect(), rms)
    }

    fn coeffs(&self, c: Vec<f64>) -> CoeffSeq {
        CoeffSeq::new(self.offset, c).expect("support is non-empty")
    }
}

/// Least-squares coefficients on `support` for `signed_values` at `Λ`, and
/// the RMS residual. Uses a QR factorization of the design matrix
/// `g(λ_i - k)`.
pub fn fit_coeffs(
    params: &GeneratorParams,
    lambda: &PointSet,
    signed_values: &[f64],
    support: (i64, i64),
) -> Result<(CoeffSeq, f64)> {
    if signed_values.len() != lambda.len() {
        return Err(Error::InvalidParameter(format!(
            "{} points but {} values",
            lambda.len(),
            signed_values.len()
        )));
    }
    let ls = LeastSquares::new(params, lambda, support)?;
    let (c, rms) = ls.solve(signed_values);
    Ok((ls.coeffs(c), rms))
}

// Ordering used by both searches: residual, then fewer changes, then the
// lexicographically smaller list of change points.
fn better(a: &RetrievalResult, b: &RetrievalResult) -> bool {
    match a.residual.total_cmp(&b.residual) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => {
            (a.sign_changes, &a.signs.change_points) < (b.sign_changes, &b.signs.change_points)
        }
    }
}

fn validate_sample(sample: &MagnitudeSample) -> Result<()> {
    if sample.max_magnitude() < MIN_SIGNAL {
        return Err(Error::InvalidParameter(format!(
            "all magnitudes below {MIN_SIGNAL:e}; no sign information"
        )));
    }
    Ok(())
}

// Slots where a change is never placed: before the first nonzero magnitude
// (global sign) and just before a zero magnitude (the zero copies the
// previous sign).
fn blocked_slots(mu: &[f64]) -> Vec<bool> {
    let first = mu.iter().position(|m| *m > 0.0).unwrap_or(mu.len());
    (0..mu.len().saturating_sub(1))
        .map(|j| j < first || mu[j + 1] == 0.0)
        .collect()
}

fn score(ls: &LeastSquares, mu: &[f64], signs: &[i8]) -> RetrievalResult {
    let values: Vec<f64> = signs.iter().zip(mu).map(|(s, m)| *s as f64 * m).collect();
    let (c, residual) = ls.solve(&values);
    let signs = SignPattern::from_signs(signs.to_vec());
    RetrievalResult {
        coeffs: ls.coeffs(c),
        sign_changes: signs.changes(),
        signs,
        residual,
    }
}

// Upper-triangular factor of the prefix rows, updated one row at a time by
// Givens rotations. `sse` is the least-squares residual of the prefix.
#[derive(Clone)]
struct Prefix {
    k: usize,
    r: Vec<f64>,
    z: Vec<f64>,
    sse: f64,
}

impl Prefix {
    fn new(k: usize) -> Self {
        Self {
            k,
            r: vec![0.0; k * k],
            z: vec![0.0; k],
            sse: 0.0,
        }
    }

    fn with_row(&self, row: &[f64], first: usize, value: f64) -> Self {
        let mut out = self.clone();
        let k = self.k;
        let mut a = row.to_vec();
        let mut b = value;
        for j in first..k {
            if a[j] == 0.0 {
                continue;
            }
            let rjj = out.r[j * k + j];
            let h = rjj.hypot(a[j]);
            let (c, s) = (rjj / h, a[j] / h);
            for l in j..k {
                let rl = out.r[j * k + l];
                let al = a[l];
                out.r[j * k + l] = c * rl + s * al;
                a[l] = c * al - s * rl;
            }
            let zj = out.z[j];
            out.z[j] = c * zj + s * b;
            b = c * b - s * zj;
        }
        out.sse += b * b;
        out
    }
}

struct Search<'a> {
    ls: &'a LeastSquares,
    mu: &'a [f64],
    rows: Vec<(usize, Vec<f64>)>,
    blocked: Vec<bool>,
    dip: Vec<f64>,
    max_changes: usize,
    accept_sse: f64,
    floor: f64,
    best: Option<RetrievalResult>,
    best_sse: f64,
    nodes: usize,
    budget_hit: bool,
}

impl Search<'_> {
    fn threshold(&self) -> f64 {
        self.best_sse.min(self.accept_sse) + self.floor
    }

    fn visit(&mut self, i: usize, prefix: &Prefix, signs: &mut Vec<i8>, changes: usize) {
        let n = self.mu.len();
        if i == n {
            let cand = score(self.ls, self.mu, signs);
            if self.best.as_ref().is_none_or(|b| better(&cand, b)) {
                self.best_sse = cand.residual * cand.residual * n as f64;
                self.best = Some(cand);
            }
            return;
        }
        if self.nodes >= NODE_BUDGET {
            self.budget_hit = true;
            return;
        }
        self.nodes += 1;
        let prev = signs[i - 1];
        let (first, row) = &self.rows[i];
        let mut children = vec![(prev, prefix.with_row(row, *first, prev as f64 * self.mu[i]))];
        if !self.blocked[i - 1] && changes < self.max_changes {
            let s = -prev;
            children.push((s, prefix.with_row(row, *first, s as f64 * self.mu[i])));
            let prefer_change = self.dip[i - 1] < 0.5;
            children.sort_by(|x, y| {
                x.1.sse.total_cmp(&y.1.sse).then_with(|| {
                    let xc = (x.0 != prev) == prefer_change;
                    let yc = (y.0 != prev) == prefer_change;
                    yc.cmp(&xc)
                })
            });
        }
        for (s, child) in children {
            if child.sse > self.threshold() {
                continue;
            }
            signs.push(s);
            self.visit(i + 1, &child, signs, changes + usize::from(s != prev));
            signs.pop();
        }
    }
}

// Small when |f| dips between two samples relative to their neighbours.
fn dip_scores(mu: &[f64]) -> Vec<f64> {
    let n = mu.len();
    (0..n.saturating_sub(1))
        .map(|j| {
            let lo = j.saturating_sub(1);
            let hi = (j + 2).min(n - 1);
            let local = mu[lo..=hi].iter().fold(0.0f64, |m, v| m.max(*v));
            if local == 0.0 {
                0.0
            } else {
                mu[j].min(mu[j + 1]) / local
            }
        })
        .collect()
}

/// Branch-and-bound over run-structured sign patterns with at most
/// `max_changes` changes. Signs are fixed left to right; a branch is cut
/// when the least-squares residual of its prefix rows already exceeds the
/// best complete fit (or the acceptance level). The first nonzero sign of
/// the result is `+1`.
pub fn solve_signs(
    params: &GeneratorParams,
    sample: &MagnitudeSample,
    support: (i64, i64),
    max_changes: usize,
) -> Result<RetrievalResult> {
    validate_sample(sample)?;
    let ls = LeastSquares::new(params, sample.lambda(), support)?;
    let mu = sample.magnitudes();
    let n = mu.len();
    let k = ls.design.ncols();
    let max_mu = sample.max_magnitude();
    let tol = ACCEPT_REL * max_mu;

    let gmax = ls.design.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let rows = (0..n)
        .map(|i| {
            let row: Vec<f64> = (0..k)
                .map(|j| {
                    let v = ls.design[(i, j)];
                    if v.abs() < TRUNCATION_REL * gmax {
                        0.0
                    } else {
                        v
                    }
                })
                .collect();
            let first = row.iter().position(|v| *v != 0.0).unwrap_or(k);
            (first, row)
        })
        .collect();
    let floor = n as f64 * (1e-6 * max_mu).powi(2);
    let mut search = Search {
        ls: &ls,
        mu,
        rows,
        blocked: blocked_slots(mu),
        dip: dip_scores(mu),
        max_changes,
        accept_sse: n as f64 * tol * tol,
        floor,
        best: None,
        best_sse: f64::INFINITY,
        nodes: 0,
        budget_hit: false,
    };
    let (first, row0) = search.rows[0].clone();
    let root = Prefix::new(k).with_row(&row0, first, mu[0]);
    let mut signs = vec![1i8];
    search.visit(1, &root, &mut signs, 0);

    let best_residual = search.best.as_ref().map_or(f64::INFINITY, |b| b.residual);
    match search.best {
        Some(b) if b.residual < tol => Ok(b),
        _ if search.budget_hit => Err(Error::BudgetExhausted {
            explored: search.nodes,
            best_residual,
        }),
        _ => Err(Error::NoAcceptablePattern {
            best_residual,
            tolerance: tol,
        }),
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k.min(n));
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Exhaustive search over every run-structured pattern with at most
/// `max_changes` changes; the reference for [`solve_signs`].
pub fn brute_force_signs(
    params: &GeneratorParams,
    sample: &MagnitudeSample,
    support: (i64, i64),
    max_changes: usize,
) -> Result<RetrievalResult> {
    validate_sample(sample)?;
    let ls = LeastSquares::new(params, sample.lambda(), support)?;
    let mu = sample.magnitudes();
    let blocked = blocked_slots(mu);
    let slots: Vec<usize> = (0..blocked.len()).filter(|j| !blocked[*j]).collect();
    let patterns: u128 = (0..=max_changes.min(slots.len()))
        .map(|c| binomial(slots.len(), c))
        .sum();
    if patterns > ENUMERATION_CAP {
        return Err(Error::CombinatorialBlowup { patterns });
    }
    let mut best: Option<RetrievalResult> = None;
    let mut chosen = Vec::with_capacity(max_changes);
    let mut consider = |chosen: &[usize]| {
        let mut signs = vec![1i8; mu.len()];
        let mut s = 1i8;
        let mut next = chosen.iter().peekable();
        for (i, slot) in signs.iter_mut().enumerate().skip(1) {
            if next.peek() == Some(&&(i - 1)) {
                s = -s;
                next.next();
            }
            *slot = s;
        }
        let cand = score(&ls, mu, &signs);
        if best.as_ref().is_none_or(|b| better(&cand, b)) {
            best = Some(cand);
        }
    };
    enumerate_subsets(&slots, max_changes, 0, &mut chosen, &mut consider);
    Ok(best.expect("the constant pattern is always enumerated"))
}

fn enumerate_subsets(
    slots: &[usize],
    max: usize,
    start: usize,
    chosen: &mut Vec<usize>,
    visit: &mut impl FnMut(&[usize]),
) {
    visit(chosen);
    if chosen.len() == max {
        return;
    }
    for idx in start..slots.len() {
        chosen.push(slots[idx]);
        enumerate_subsets(slots, max, idx + 1, chosen, visit);
        chosen.pop();
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub generator: GeneratorParams,
    pub densities: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub support: (i64, i64),
    pub window: (f64, f64),
    /// Defaults to `ceil(window length) + 2`.
    #[serde(default)]
    pub max_changes: Option<usize>,
    /// Relative amplitude of uniform noise added to the magnitudes.
    #[serde(default)]
    pub noise: f64,
    /// Add a second point `0.05/d` to the right of every lattice point.
    #[serde(default)]
    pub doubled: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.densities.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return bad("densities must be positive".into());
        }
        if self.support.0 > self.support.1 {
            return bad(format!("empty support {:?}", self.support));
        }
        let (lo, hi) = self.window;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return bad(format!("invalid window {:?}", self.window));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return bad(format!("noise must be nonnegative, got {}", self.noise));
        }
        Ok(())
    }

    pub fn effective_max_changes(&self) -> usize {
        self.max_changes
            .unwrap_or_else(|| (self.window.1 - self.window.0).ceil() as usize + 2)
    }
}

/// Jittered lattice of spacing `1/d` on `window`, uniform jitter `±0.25/d`.
pub fn jittered_lattice<R: Rng>(rng: &mut R, density: f64, window: (f64, f64), doubled: bool) -> Result<PointSet> {
    let (lo, hi) = window;
    let h = 1.0 / density;
    let count = ((hi - lo) * density - 0.75).floor();
    let count = if count < 0.0 { 0 } else { count as usize + 1 };
    let mut pts = Vec::with_capacity(if doubled { 2 * count } else { count });
    for j in 0..count {
        let x = lo + (j as f64 + 0.5) * h + rng.random_range(-0.25..0.25) * h;
        pts.push(x);
        if doubled && x + 0.05 * h <= hi {
            pts.push(x + 0.05 * h);
        }
    }
    PointSet::new(pts, window)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub success: bool,
    /// RMS residual of the returned fit, when the solver returned one.
    pub residual: Option<f64>,
    /// `min(max|f̂ - f|, max|f̂ + f|) / max|f|` on the check grid.
    pub function_error: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentRow {
    pub density: f64,
    pub trials: usize,
    pub successes: usize,
    /// Mean residual over trials where the solver returned a fit.
    pub mean_residual: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub m: usize,
    pub max_changes: usize,
    pub rows: Vec<ExperimentRow>,
}

impl ExperimentReport {
    pub fn success_rate(&self, density_index: usize) -> f64 {
        let row = &self.rows[density_index];
        if row.trials == 0 {
            0.0
        } else {
            row.successes as f64 / row.trials as f64
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("density,trials,successes,mean_residual\n");
        for row in &self.rows {
            let mean = row.mean_residual.map(|m| format!("{m:e}")).unwrap_or_default();
            s.push_str(&format!("{},{},{},{}\n", row.density, row.trials, row.successes, mean));
        }
        s
    }
}

/// One seeded trial: random coefficients on the support, a jittered lattice
/// of density `d`, sign retrieval from `|f|`, comparison on a fine grid.
pub fn run_trial(config: &ExperimentConfig, density_index: usize, trial: usize) -> Result<TrialOutcome> {
    let density = config.densities[density_index];
    let mut rng = rng::stream(config.seed, &[density_index as u64, trial as u64]);
    let k = check_support(config.support)?;
    let coeffs: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
    let f = SisFunction::new(config.generator.clone(), CoeffSeq::new(config.support.0, coeffs)?)?;
    let lambda = jittered_lattice(&mut rng, density, config.window, config.doubled)?;
    let mut sample = sample_magnitudes(&f, &lambda);
    if config.noise > 0.0 {
        let scale = config.noise * sample.max_magnitude();
        for m in &mut sample.magnitudes {
            *m = (*m + scale * rng.random_range(-1.0..1.0)).abs();
        }
    }
    let solved = solve_signs(&config.generator, &sample, config.support, config.effective_max_changes());
    let result = match solved {
        Ok(r) => r,
        Err(e) => {
            return Ok(TrialOutcome {
                success: false,
                residual: None,
                function_error: None,
                error: Some(e.to_string()),
            })
        }
    };
    let fhat = f.with_coeffs(result.coeffs.clone());
    let (lo, hi) = config.window;
    let steps = ((hi - lo) / CHECK_STEP).round() as usize;
    let (mut fmax, mut dminus, mut dplus) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..=steps {
        let x = (lo + i as f64 * CHECK_STEP).min(hi);
        let (a, b) = (f.eval(x), fhat.eval(x));
        fmax = fmax.max(a.abs());
        dminus = dminus.max((b - a).abs());
        dplus = dplus.max((b + a).abs());
    }
    let err = dminus.min(dplus) / fmax;
    Ok(TrialOutcome {
        success: err <= SUCCESS_REL,
        residual: Some(result.residual),
        function_error: Some(err),
        error: None,
    })
}

/// Success counts per density. Trials run in parallel on independent
/// random streams; the report does not depend on scheduling.
pub fn run_threshold_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let mut rows = Vec::with_capacity(config.densities.len());
    for (di, &density) in config.densities.iter().enumerate() {
        let outcomes: Vec<TrialOutcome> = (0..config.trials)
            .into_par_iter()
            .map(|t| run_trial(config, di, t))
            .collect::<Result<_>>()?;
        let successes = outcomes.iter().filter(|o| o.success).count();
        let residuals: Vec<f64> = outcomes.iter().filter_map(|o| o.residual).collect();
        let mean_residual = if residuals.is_empty() {
            None
        } else {
            Some(residuals.iter().sum::<f64>() / residuals.len() as f64)
        };
        rows.push(ExperimentRow {
            density,
            trials: config.trials,
            successes,
            mean_residual,
        });
    }
    Ok(ExperimentReport {
        m: config.generator.m(),
        max_changes: config.effective_max_changes(),
        rows,
    })
}

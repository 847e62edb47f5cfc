use std::fmt::Write;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tpshift::density::{self, DensityProfile};
use tpshift::jensen::{self, JensenContext};
use tpshift::sigret::{self, ExperimentConfig, MagnitudeSample};
use tpshift::sispace::{check_interlacing, segment_inequality};
use tpshift::{CoeffSeq, Error, ErrorKind, GeneratorParams, PointSet, SisFunction};

use crate::{Command, Failure};

/// What a command produced: the report body in both formats, a one-line
/// summary, the effective seed, and a message when a checked relation failed.
pub struct Output {
    pub json: Value,
    pub csv: String,
    pub summary: String,
    pub seed: Option<u64>,
    pub violation: Option<String>,
}

impl Output {
    fn new(json: Value, csv: String, summary: String) -> Self {
        Output {
            json,
            csv,
            summary,
            seed: None,
            violation: None,
        }
    }
}

fn parse<T: DeserializeOwned>(text: &str) -> Result<T, Failure> {
    serde_json::from_str(text).map_err(|e| Failure::invalid(format!("config: {e}")))
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report serializes")
}

pub fn dispatch(command: Command, text: &str, seed: Option<u64>) -> Result<Output, Failure> {
    match command {
        Command::Gen => gen(parse(text)?),
        Command::Eval => eval(parse(text)?),
        Command::Zeros => zeros(parse(text)?),
        Command::Density => density(parse(text)?),
        Command::Lemma1 => lemma1(parse(text)?),
        Command::Jensen => jensen(parse(text)?),
        Command::Interlace => interlace(parse(text)?),
        Command::Retrieve => retrieve(parse(text)?),
        Command::Experiment => experiment(parse(text)?, seed),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GenConfig {
    generator: GeneratorParams,
    #[serde(default = "default_range")]
    range: (f64, f64),
    #[serde(default = "default_step")]
    step: f64,
}

fn default_range() -> (f64, f64) {
    (-5.0, 5.0)
}

fn default_step() -> f64 {
    0.05
}

fn grid(range: (f64, f64), step: f64) -> Result<Vec<f64>, Failure> {
    let (lo, hi) = range;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi && step > 0.0 && step.is_finite()) {
        return Err(Failure::invalid(format!("bad grid [{lo}, {hi}] with step {step}")));
    }
    let n = ((hi - lo) / step).round() as usize;
    if n > 10_000_000 {
        return Err(Failure::invalid(format!("grid of {n} points is too large")));
    }
    Ok((0..=n).map(|i| (lo + i as f64 * step).min(hi)).collect())
}

#[derive(Serialize)]
struct Sample {
    x: f64,
    value: f64,
    deriv: f64,
}

fn samples(f: &SisFunction, xs: &[f64]) -> (Vec<Sample>, String) {
    let mut csv = String::from("x,value,deriv\n");
    let rows: Vec<Sample> = xs
        .iter()
        .map(|&x| Sample {
            x,
            value: f.eval(x),
            deriv: f.eval_deriv(x),
        })
        .collect();
    for s in &rows {
        let _ = writeln!(csv, "{},{},{}", s.x, s.value, s.deriv);
    }
    (rows, csv)
}

fn gen(cfg: GenConfig) -> Result<Output, Failure> {
    let xs = grid(cfg.range, cfg.step)?;
    let p = cfg.generator;
    let table = p.auto_table()?;
    let g = SisFunction::new(p.clone(), CoeffSeq::unit(0))?;
    let (rows, csv) = samples(&g, &xs);
    let json = json!({
        "generator": p,
        "m": p.m(),
        "gaussian_rate": p.gaussian_rate(),
        "decay_radius": p.decay_radius(),
        "table_step": table.grid_step(),
        "samples": rows,
    });
    let summary = format!(
        "m = {}, decay radius {:.4}, g(0) = {:.12}",
        p.m(),
        p.decay_radius(),
        g.eval(0.0)
    );
    Ok(Output::new(json, csv, summary))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalConfig {
    generator: GeneratorParams,
    coeffs: CoeffSeq,
    points: Vec<f64>,
}

fn eval(cfg: EvalConfig) -> Result<Output, Failure> {
    if let Some(x) = cfg.points.iter().find(|x| !x.is_finite()) {
        return Err(Failure::invalid(format!("points must be finite, got {x}")));
    }
    let f = SisFunction::new(cfg.generator, cfg.coeffs)?;
    let (rows, csv) = samples(&f, &cfg.points);
    let summary = format!("evaluated f at {} points", rows.len());
    Ok(Output::new(json!({ "samples": rows }), csv, summary))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ZerosConfig {
    generator: GeneratorParams,
    coeffs: CoeffSeq,
    interval: (f64, f64),
}

fn zeros(cfg: ZerosConfig) -> Result<Output, Failure> {
    let f = SisFunction::new(cfg.generator, cfg.coeffs)?;
    let scan = f.find_zeros(cfg.interval.0, cfg.interval.1)?;
    let mut csv = String::from("zero,touch\n");
    for z in scan.zeros.points() {
        let _ = writeln!(csv, "{},{}", z, scan.touch.contains(z) as u8);
    }
    let summary = format!(
        "{} zeros on [{}, {}], {} without sign change",
        scan.zeros.len(),
        cfg.interval.0,
        cfg.interval.1,
        scan.touch.len()
    );
    let json = json!({ "interval": cfg.interval, "zeros": scan.zeros.points(), "touch": scan.touch });
    Ok(Output::new(json, csv, summary))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LatticeSpec {
    spacing: f64,
    window: (f64, f64),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DensityConfig {
    #[serde(default)]
    points: Option<PointSet>,
    #[serde(default)]
    lattice: Option<LatticeSpec>,
    radii: Vec<f64>,
    #[serde(default)]
    alphas: Vec<f64>,
    #[serde(default = "yes")]
    beurling: bool,
}

fn yes() -> bool {
    true
}

fn point_set(points: Option<PointSet>, lattice: Option<LatticeSpec>) -> Result<PointSet, Failure> {
    match (points, lattice) {
        (Some(p), None) => Ok(p),
        (None, Some(l)) => Ok(PointSet::lattice(l.spacing, l.window.0, l.window.1)?),
        _ => Err(Failure::invalid("config needs exactly one of `points` and `lattice`")),
    }
}

fn kind_label(p: &DensityProfile) -> String {
    match p.alpha {
        Some(a) => format!("{}:alpha={a}", p.kind.as_str()),
        None => p.kind.as_str().to_string(),
    }
}

fn density(cfg: DensityConfig) -> Result<Output, Failure> {
    let lambda = point_set(cfg.points, cfg.lattice)?;
    let mut profiles = vec![density::circ_density_direct(&lambda, &cfg.radii)?];
    for &a in &cfg.alphas {
        profiles.push(density::circ_density_lattice(&lambda, a, &cfg.radii)?);
    }
    if cfg.beurling {
        profiles.push(density::beurling_lower_profile(&lambda, &cfg.radii)?);
    }
    let mut csv = String::from("kind,r,value\n");
    let mut summary = Vec::new();
    for p in &profiles {
        let label = kind_label(p);
        for (r, v) in p.radii.iter().zip(&p.values) {
            let _ = writeln!(csv, "{label},{r},{v}");
        }
        summary.push(format!("{label} {:.6}", p.extrapolated));
    }
    let r_max = cfg.radii.last().copied().unwrap_or(0.0);
    let summary = format!("{} points; at r = {r_max}: {}", lambda.len(), summary.join(", "));
    let json = json!({ "points": lambda.len(), "window": lambda.window(), "profiles": profiles });
    Ok(Output::new(json, csv, summary))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Lemma1Config {
    #[serde(default)]
    points: Option<PointSet>,
    #[serde(default)]
    lattice: Option<LatticeSpec>,
    radii: Vec<f64>,
    alphas: Vec<f64>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn lemma1(cfg: Lemma1Config) -> Result<Output, Failure> {
    if cfg.alphas.is_empty() {
        return Err(Failure::invalid("lemma1 needs at least one alpha"));
    }
    let lambda = point_set(cfg.points, cfg.lattice)?;
    let rep = density::check_lemma1(&lambda, &cfg.alphas, &cfg.radii)?;
    let mut csv = String::from("r,circ_direct");
    for a in &rep.alphas {
        let _ = write!(csv, ",circ_lattice:alpha={a}");
    }
    csv.push_str(",beurling_lower,equivalence_gap,equivalence_slack,equivalence_ok,domination_margin,domination_slack,domination_ok\n");
    for row in &rep.rows {
        let _ = write!(csv, "{},{}", row.r, row.circ_direct);
        for v in &row.circ_lattice {
            let _ = write!(csv, ",{v}");
        }
        let _ = writeln!(
            csv,
            ",{},{},{},{},{},{},{}",
            opt(row.beurling_lower),
            row.equivalence_gap,
            row.equivalence_slack,
            row.equivalence_ok,
            opt(row.domination_margin),
            row.domination_slack,
            row.domination_ok
        );
    }
    let mut out = Output::new(to_value(&rep), csv, String::new());
    out.summary = format!("lemma1 {} on {} radii", if rep.holds { "holds" } else { "fails" }, rep.rows.len());
    if let Some(row) = rep.rows.iter().find(|r| !(r.equivalence_ok && r.domination_ok)) {
        out.violation = Some(format!(
            "lemma1 relation violated at r = {}: equivalence gap {} (slack {}), domination margin {} (slack {})",
            row.r,
            row.equivalence_gap,
            row.equivalence_slack,
            opt(row.domination_margin),
            row.domination_slack
        ));
    }
    Ok(out)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JensenConfig {
    generator: GeneratorParams,
    coeffs: CoeffSeq,
    radii: Vec<f64>,
}

fn jensen(cfg: JensenConfig) -> Result<Output, Failure> {
    let f = SisFunction::new(cfg.generator, cfg.coeffs)?;
    let ctx = JensenContext::build(&f)?;
    let rep = jensen::evaluate_base_case(&ctx, &cfg.radii)?;
    let mut csv = String::from("r,r_requested,lhs,rhs,circ_scaled,circ_direct,bound,extra_zeros,lattice_zeros\n");
    for row in &rep.rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            row.r,
            row.r_requested,
            row.lhs,
            row.rhs,
            row.circ_scaled,
            row.circ_direct,
            row.bound,
            row.extra_zeros,
            row.lattice_zeros
        );
    }
    let worst = rep.rows.iter().fold(0.0f64, |m, r| m.max((r.lhs - r.rhs).abs()));
    let summary = format!(
        "jensen chain on {} radii, max |lhs - rhs| = {worst:.2e}, order at 0 = {}",
        rep.rows.len(),
        rep.order_at_origin
    );
    let mut out = Output::new(to_value(&rep), csv, summary);
    match rep.check() {
        Ok(()) => {}
        Err(e) if e.kind() == ErrorKind::Violation => out.violation = Some(e.to_string()),
        Err(e) => return Err(e.into()),
    }
    Ok(out)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InterlaceConfig {
    generator: GeneratorParams,
    coeffs: CoeffSeq,
    interval: (f64, f64),
    /// Defaults to the last generator delta.
    #[serde(default)]
    delta: Option<f64>,
    #[serde(default)]
    t: Vec<f64>,
}

fn interlace(cfg: InterlaceConfig) -> Result<Output, Failure> {
    let delta = match cfg.delta {
        Some(d) => d,
        None => *cfg.generator.deltas().last().ok_or(Error::EmptyDeltas)?,
    };
    let f = SisFunction::new(cfg.generator, cfg.coeffs)?;
    let f1 = f.apply_rolle_op(delta)?;
    let (lo, hi) = cfg.interval;
    let zf = f.find_zeros(lo, hi)?.zeros;
    let zf1 = f1.find_zeros(lo, hi)?.zeros;
    let rep = check_interlacing(&zf, &zf1);
    let segments = cfg
        .t
        .iter()
        .map(|&t| segment_inequality(&zf, &zf1, t))
        .collect::<Result<Vec<_>, _>>()?;
    let mut csv = String::from("t,lhs,rhs,holds\n");
    for s in &segments {
        let _ = writeln!(csv, "{},{},{},{}", s.t, s.lhs, s.rhs, s.holds);
    }
    let json = json!({
        "delta": delta,
        "zeros": zf.points(),
        "image_zeros": zf1.points(),
        "interlacing": rep,
        "segments": segments,
    });
    let summary = format!(
        "{} zeros of f, {} of the image, interlaced: {}",
        zf.len(),
        zf1.len(),
        rep.interlaced
    );
    let mut out = Output::new(json, csv, summary);
    if let Some((a, b)) = rep.first_empty_gap {
        out.violation = Some(format!("no zero of the image between consecutive zeros {a} and {b}"));
    } else if let Some(s) = segments.iter().find(|s| !s.holds) {
        out.violation = Some(format!("segment inequality fails at t = {}: {} > {}", s.t, s.lhs, s.rhs));
    }
    Ok(out)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RetrieveConfig {
    generator: GeneratorParams,
    support: (i64, i64),
    sample: MagnitudeSample,
    /// Defaults to `ceil(window length) + 2`.
    #[serde(default)]
    max_changes: Option<usize>,
}

fn retrieve(cfg: RetrieveConfig) -> Result<Output, Failure> {
    let max_changes = cfg
        .max_changes
        .unwrap_or_else(|| cfg.sample.lambda().window_length().ceil() as usize + 2);
    let res = sigret::solve_signs(&cfg.generator, &cfg.sample, cfg.support, max_changes)?;
    let mut csv = String::from("k,coeff\n");
    let c = &res.coeffs;
    for (i, v) in c.coeffs().iter().enumerate() {
        let _ = writeln!(csv, "{},{}", c.offset() + i as i64, v);
    }
    let summary = format!(
        "recovered {} coefficients, {} sign changes, rms residual {:.3e}",
        c.len(),
        res.sign_changes,
        res.residual
    );
    Ok(Output::new(to_value(&res), csv, summary))
}

fn experiment(mut cfg: ExperimentConfig, seed: Option<u64>) -> Result<Output, Failure> {
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let rep = sigret::run_threshold_experiment(&cfg)?;
    let rates: Vec<String> = rep
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| format!("d={} {:.2}", r.density, rep.success_rate(i)))
        .collect();
    let summary = format!("m = {}, success rates: {}", rep.m, rates.join(", "));
    let mut out = Output::new(json!({ "config": cfg, "results": rep }), rep.to_csv(), summary);
    out.seed = Some(cfg.seed);
    Ok(out)
}

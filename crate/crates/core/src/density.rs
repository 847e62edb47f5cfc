//! Finite-radius profiles of the lower Beurling density and of the upper
//! average circular density.
//!
//! Limits in `r` are not computable from finite data; every operation returns
//! the profile over the requested radii and reports the value at the largest
//! radius as the finite-scale estimate.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sispace::PointSet;

/// Slack for the finite-radius subadditivity comparison.
pub const SUBADDITIVITY_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityKind {
    BeurlingLower,
    CircDirect,
    CircLattice,
}

impl DensityKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            DensityKind::BeurlingLower => "beurling_lower",
            DensityKind::CircDirect => "circ_direct",
            DensityKind::CircLattice => "circ_lattice",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityProfile {
    pub kind: DensityKind,
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    /// Value at the largest radius.
    pub extrapolated: f64,
    /// Lattice step for [`DensityKind::CircLattice`] profiles.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub alpha: Option<f64>,
}

impl DensityProfile {
    fn from_values(kind: DensityKind, radii: &[f64], values: Vec<f64>, alpha: Option<f64>) -> Self {
        let extrapolated = values.last().copied().unwrap_or(0.0);
        Self {
            kind,
            radii: radii.to_vec(),
            values,
            extrapolated,
            alpha,
        }
    }

    /// Rows `kind,r,value` without a header.
    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        for (r, v) in self.radii.iter().zip(&self.values) {
            let _ = writeln!(out, "{},{},{}", self.kind.as_str(), r, v);
        }
        out
    }

    /// CSV with header `kind,r,value`.
    pub fn to_csv(&self) -> String {
        format!("kind,r,value\n{}", self.csv_rows())
    }
}

fn validate_radii(radii: &[f64]) -> Result<()> {
    if radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::InvalidParameter("radii must be positive and finite".into()));
    }
    if radii.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("radii must be strictly increasing".into()));
    }
    Ok(())
}

// Number of points in the closed interval [a, b].
fn count_closed(points: &[f64], a: f64, b: f64) -> usize {
    let lo = points.partition_point(|p| *p < a);
    let hi = points.partition_point(|p| *p <= b);
    hi.saturating_sub(lo)
}

fn beurling_at(lambda: &PointSet, r: f64) -> Result<f64> {
    let (lo, hi) = lambda.window();
    let first = lo + r;
    let last = hi - r;
    if first > last {
        return Err(Error::WindowTooSmall {
            radius: r,
            length: lambda.window_length(),
        });
    }
    let pts = lambda.points();
    // The count only drops when a point leaves through the left end, so the
    // infimum is attained at the first admissible position or just after a
    // point λ has left (x = λ + r + 0).
    let mut best = count_closed(pts, lo, lo + 2.0 * r);
    let mut j = 0;
    for (i, &p) in pts.iter().enumerate() {
        if p + r >= last {
            break;
        }
        if j < i + 1 {
            j = i + 1;
        }
        while j < pts.len() && pts[j] <= p + 2.0 * r {
            j += 1;
        }
        best = best.min(j - (i + 1));
    }
    Ok(best as f64 / (2.0 * r))
}

/// `inf_x #[Λ ∩ [x-r, x+r]] / 2r` with `x` restricted to positions where the
/// whole interval lies inside the observation window.
pub fn beurling_lower_profile(lambda: &PointSet, radii: &[f64]) -> Result<DensityProfile> {
    validate_radii(radii)?;
    let values = radii
        .iter()
        .map(|&r| beurling_at(lambda, r))
        .collect::<Result<Vec<_>>>()?;
    Ok(DensityProfile::from_values(DensityKind::BeurlingLower, radii, values, None))
}

/// `∫_{|λ|}^{r} √(t² - λ²) dt / t` in closed form.
pub fn circ_inner_integral(lambda_abs: f64, r: f64) -> f64 {
    let l = lambda_abs.abs();
    if l >= r {
        return 0.0;
    }
    if l == 0.0 {
        return r;
    }
    (r * r - l * l).sqrt() - l * (l / r).acos()
}

fn circ_direct_at(points: &[f64], r: f64) -> f64 {
    let lo = points.partition_point(|p| *p < -r);
    let hi = points.partition_point(|p| *p <= r);
    let sum: f64 = points[lo..hi].iter().map(|p| circ_inner_integral(p.abs(), r)).sum();
    4.0 / (PI * r * r) * sum
}

/// `(4 / πr²) Σ_{|λ| <= r} ∫_{|λ|}^{r} √(t² - λ²) dt / t` at each radius.
pub fn circ_density_direct(lambda: &PointSet, radii: &[f64]) -> Result<DensityProfile> {
    validate_radii(radii)?;
    let pts = lambda.points();
    let values: Vec<f64> = radii.par_iter().map(|&r| circ_direct_at(pts, r)).collect();
    Ok(DensityProfile::from_values(DensityKind::CircDirect, radii, values, None))
}

// ∫_0^r N(t) dt/t with N(t) = #{(λ, k) : λ ≠ 0, λ² + α²k² < t²}. Each lattice
// point at modulus t_p < r contributes ln(r / t_p); summing these is the
// telescoped form of the breakpoint integration.
fn lattice_log_integral(points: &[f64], alpha: f64, r: f64) -> f64 {
    let r2 = r * r;
    let lo = points.partition_point(|p| *p <= -r);
    let hi = points.partition_point(|p| *p < r);
    let mut total = 0.0;
    for &l in &points[lo..hi] {
        if l == 0.0 {
            continue;
        }
        let l2 = l * l;
        let room = r2 - l2;
        let mut row = 0.5 * (r2 / l2).ln();
        let mut k = 1u64;
        loop {
            let ak = alpha * k as f64;
            let ak2 = ak * ak;
            if ak2 >= room {
                break;
            }
            row += (r2 / (l2 + ak2)).ln();
            k += 1;
        }
        total += row;
    }
    total
}

/// `(2α / πr²) ∫_0^r #[(Λ∖{0} × αℤ) ∩ B_t(0)] dt / t` at each radius, with
/// the open disk (strict inequality) and exact integration.
pub fn circ_density_lattice(lambda: &PointSet, alpha: f64, radii: &[f64]) -> Result<DensityProfile> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
    }
    validate_radii(radii)?;
    let pts = lambda.points();
    let values: Vec<f64> = radii
        .par_iter()
        .map(|&r| 2.0 * alpha / (PI * r * r) * lattice_log_integral(pts, alpha, r))
        .collect();
    Ok(DensityProfile::from_values(DensityKind::CircLattice, radii, values, Some(alpha)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Lemma1Row {
    pub r: f64,
    pub circ_direct: f64,
    /// One entry per requested `α`.
    pub circ_lattice: Vec<f64>,
    /// `None` when the window admits no Beurling position at this radius.
    pub beurling_lower: Option<f64>,
    /// `max_α |direct - lattice(α)|`.
    pub equivalence_gap: f64,
    /// `(4/π + 2 (1 + max α)) / r`; the first term is the origin, which only
    /// the direct form counts.
    pub equivalence_slack: f64,
    pub equivalence_ok: bool,
    /// `direct - beurling`.
    pub domination_margin: Option<f64>,
    /// Finite-size slack `2 (1 + max α) / r` granted to the domination check.
    pub domination_slack: f64,
    pub domination_ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Lemma1Report {
    pub alphas: Vec<f64>,
    pub rows: Vec<Lemma1Row>,
    /// Every row satisfies both checks.
    pub holds: bool,
}

/// Cross-checks the direct and lattice forms of the circular density and the
/// domination of the lower Beurling density, radius by radius.
pub fn check_lemma1(lambda: &PointSet, alphas: &[f64], radii: &[f64]) -> Result<Lemma1Report> {
    validate_radii(radii)?;
    let direct = circ_density_direct(lambda, radii)?;
    let lattices = alphas
        .iter()
        .map(|&a| circ_density_lattice(lambda, a, radii))
        .collect::<Result<Vec<_>>>()?;
    let max_alpha = alphas.iter().fold(0.0f64, |m, a| m.max(*a));

    let mut rows = Vec::with_capacity(radii.len());
    for (i, &r) in radii.iter().enumerate() {
        let d = direct.values[i];
        let lat: Vec<f64> = lattices.iter().map(|p| p.values[i]).collect();
        let gap = lat.iter().fold(0.0f64, |m, v| m.max((d - v).abs()));
        let beurling = match beurling_at(lambda, r) {
            Ok(v) => Some(v),
            Err(Error::WindowTooSmall { .. }) => None,
            Err(e) => return Err(e),
        };
        let slack = 2.0 / r * (1.0 + max_alpha);
        let eq_slack = 4.0 / (PI * r) + slack;
        let margin = beurling.map(|b| d - b);
        rows.push(Lemma1Row {
            r,
            circ_direct: d,
            circ_lattice: lat,
            beurling_lower: beurling,
            equivalence_gap: gap,
            equivalence_slack: eq_slack,
            equivalence_ok: gap <= eq_slack,
            domination_margin: margin,
            domination_slack: slack,
            domination_ok: margin.is_none_or(|m| m >= -slack),
        });
    }
    let holds = rows.iter().all(|r| r.domination_ok && r.equivalence_ok);
    Ok(Lemma1Report {
        alphas: alphas.to_vec(),
        rows,
        holds,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubadditivityRow {
    pub r: f64,
    pub union: f64,
    pub sum: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubadditivityReport {
    pub disjoint: bool,
    pub rows: Vec<SubadditivityRow>,
    pub holds: bool,
    /// For disjoint sets: `max_r |union - sum|`.
    pub max_defect: f64,
}

/// Direct-form profile of `Λ₁ ∪ Λ₂` against the sum of the two profiles.
pub fn circ_subadditivity(l1: &PointSet, l2: &PointSet, radii: &[f64]) -> Result<SubadditivityReport> {
    let union = l1.union(l2);
    let disjoint = union.len() == l1.len() + l2.len();
    let pu = circ_density_direct(&union, radii)?;
    let p1 = circ_density_direct(l1, radii)?;
    let p2 = circ_density_direct(l2, radii)?;
    let rows: Vec<SubadditivityRow> = radii
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let sum = p1.values[i] + p2.values[i];
            SubadditivityRow {
                r,
                union: pu.values[i],
                sum,
                holds: pu.values[i] <= sum + SUBADDITIVITY_SLACK,
            }
        })
        .collect();
    let max_defect = rows.iter().fold(0.0f64, |m, r| m.max((r.union - r.sum).abs()));
    Ok(SubadditivityReport {
        disjoint,
        holds: rows.iter().all(|r| r.holds),
        rows,
        max_defect,
    })
}

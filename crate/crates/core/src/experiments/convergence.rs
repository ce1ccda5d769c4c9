//! Energies and Cauchy behavior along a family `u_k`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use super::scenario::Scenario;
use crate::error::{Error, Result};
use crate::immersions::{
    lp_distance, modified_bending, stretching_energy, bending_energy, w1p_distance,
    DiscreteImmersion, ShapeField,
};
use crate::metric_core::distance_to_isometries;
use crate::transport::SasakiOptions;

/// Relative increase of `E_s` tolerated before a monotonicity warning.
const MONOTONE_SLACK: f64 = 1e-9;

/// Order statistics with linear interpolation between ranks.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Quantiles {
    pub count: usize,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

impl Quantiles {
    /// `None` for an empty sample.
    pub fn of(mut values: Vec<f64>) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        values.sort_by(f64::total_cmp);
        let at = |q: f64| {
            let pos = q * (values.len() - 1) as f64;
            let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
            values[lo] + (values[hi] - values[lo]) * (pos - lo as f64)
        };
        Some(Self {
            count: values.len(),
            min: values[0],
            q25: at(0.25),
            median: at(0.5),
            q75: at(0.75),
            max: values[values.len() - 1],
        })
    }
}

/// Node-wise `dist_{g,h}(du, Ort)`.
pub fn isometry_defects(u: &DiscreteImmersion) -> Result<Vec<f64>> {
    (0..u.values().len())
        .into_par_iter()
        .map(|i| distance_to_isometries(u.differential(i), false))
        .collect()
}

/// Node-wise `|S_u − S|_g` over nodes where both operators are defined.
pub fn shape_residuals(u: &DiscreteImmersion, reference: &ShapeField) -> Result<Vec<f64>> {
    if reference.len() != u.values().len() {
        return Err(Error::GridMismatch);
    }
    let domain = u.domain();
    Ok((0..u.values().len())
        .filter_map(|i| {
            let (su, s) = (u.induced_shape_operator().table(i)?, reference.table(i)?);
            let g = domain.node_metric(i);
            Some((g.sqrt_matrix() * (su - s) * g.inv_sqrt_matrix()).norm())
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub k: u32,
    pub e_s: f64,
    pub e_b: f64,
    pub e_bs: f64,
    pub lp_to_final: f64,
    pub w1p_to_final: f64,
    /// `w1p(u_k, u_{k+1})`; the last row evaluates one member past the sweep.
    pub cauchy_increment: f64,
    pub dist_du_ort_median: f64,
    /// Median over nodes where `S_u` is defined; NaN when there are none.
    pub shape_residual_median: f64,
}

/// Statistics on the last iterate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LimitDiagnostics {
    pub k: u32,
    pub dist_du_ort: Option<Quantiles>,
    pub shape_residual: Option<Quantiles>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceTrace {
    pub family: String,
    pub p: f64,
    pub rows: Vec<TraceRow>,
    /// Least-squares slopes of `log y` against `log k` over positive values;
    /// absent with fewer than two such points.
    pub fits: BTreeMap<String, Option<f64>>,
    pub limit: Option<LimitDiagnostics>,
    /// Last Cauchy increment over the first.
    pub cauchy_ratio: Option<f64>,
    /// Cauchy increments shrink to at most half their initial size.
    pub converging: bool,
    pub warnings: Vec<String>,
}

impl ConvergenceTrace {
    pub fn empty(family: impl Into<String>, p: f64) -> Self {
        Self {
            family: family.into(),
            p,
            rows: Vec::new(),
            fits: BTreeMap::new(),
            limit: None,
            cauchy_ratio: None,
            converging: false,
            warnings: Vec::new(),
        }
    }
}

/// Slope of the least-squares line through `(log k, log y)` for `y > 0`.
pub fn fit_exponent(points: &[(f64, f64)]) -> Option<f64> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(k, y)| *k > 0.0 && *y > 0.0 && y.is_finite())
        .map(|(k, y)| (k.ln(), y.ln()))
        .collect();
    if logs.len() < 2 {
        return None;
    }
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

struct Member {
    k: u32,
    u: DiscreteImmersion,
    e_s: f64,
    e_b: f64,
    e_bs: f64,
    defects: Vec<f64>,
    residuals: Vec<f64>,
}

/// Runs the family over `ks` (strictly increasing). Members are built and
/// measured in parallel; rows are assembled in the order of `ks`.
pub fn convergence_experiment(
    scenario: &Scenario,
    ks: &[u32],
    sasaki: &SasakiOptions,
) -> Result<ConvergenceTrace> {
    let p = scenario.config().p;
    let family = scenario.summary().family.to_string();
    if ks.is_empty() {
        return Ok(ConvergenceTrace::empty(family, p));
    }
    if ks.windows(2).any(|w| w[0] >= w[1]) || ks[0] == 0 {
        return Err(Error::InvalidArgument(
            "sweep indices must be positive and strictly increasing".into(),
        ));
    }
    let reference = scenario.reference()?;
    let build = |k: u32| -> Result<Member> {
        let u = scenario.immersion(k)?;
        Ok(Member {
            k,
            e_s: stretching_energy(&u, p)?,
            e_b: bending_energy(&u, p)?,
            e_bs: modified_bending(&u, &reference, p)?,
            defects: isometry_defects(&u)?,
            residuals: shape_residuals(&u, &reference)?,
            u,
        })
    };
    let members: Vec<Member> = ks.par_iter().map(|&k| build(k)).collect::<Result<_>>()?;
    let last = members.last().expect("ks is non-empty");

    let rows: Vec<TraceRow> = members
        .par_iter()
        .enumerate()
        .map(|(idx, m)| {
            let next = match members.get(idx + 1) {
                Some(n) if n.k == m.k + 1 => None,
                _ => Some(scenario.immersion(m.k + 1)?),
            };
            let next_u = next.as_ref().unwrap_or_else(|| &members[idx + 1].u);
            let median = |v: &[f64]| Quantiles::of(v.to_vec()).map_or(f64::NAN, |q| q.median);
            Ok(TraceRow {
                k: m.k,
                e_s: m.e_s,
                e_b: m.e_b,
                e_bs: m.e_bs,
                lp_to_final: lp_distance(&m.u, &last.u, p)?,
                w1p_to_final: w1p_distance(&m.u, &last.u, p, sasaki)?,
                cauchy_increment: w1p_distance(&m.u, next_u, p, sasaki)?,
                dist_du_ort_median: median(&m.defects),
                shape_residual_median: median(&m.residuals),
            })
        })
        .collect::<Result<_>>()?;

    let series = |f: fn(&TraceRow) -> f64| -> Vec<(f64, f64)> {
        rows.iter().map(|r| (f64::from(r.k), f(r))).collect()
    };
    let mut fits = BTreeMap::new();
    fits.insert("e_s".to_string(), fit_exponent(&series(|r| r.e_s)));
    fits.insert("e_b".to_string(), fit_exponent(&series(|r| r.e_b)));
    fits.insert("e_bs".to_string(), fit_exponent(&series(|r| r.e_bs)));
    fits.insert("cauchy_increment".to_string(), fit_exponent(&series(|r| r.cauchy_increment)));
    let before_final = &rows[..rows.len() - 1];
    fits.insert(
        "w1p_to_final".to_string(),
        fit_exponent(&before_final.iter().map(|r| (f64::from(r.k), r.w1p_to_final)).collect::<Vec<_>>()),
    );

    let mut warnings = Vec::new();
    for w in rows.windows(2) {
        if w[1].e_s > w[0].e_s * (1.0 + MONOTONE_SLACK) + f64::MIN_POSITIVE {
            warnings.push(format!(
                "E_s increases from k = {} to k = {} ({:e} -> {:e})",
                w[0].k, w[1].k, w[0].e_s, w[1].e_s
            ));
        }
    }

    let first = rows[0].cauchy_increment;
    let final_inc = rows[rows.len() - 1].cauchy_increment;
    let cauchy_ratio = (rows.len() > 1 && first > 0.0).then(|| final_inc / first);
    Ok(ConvergenceTrace {
        family,
        p,
        fits,
        limit: Some(LimitDiagnostics {
            k: last.k,
            dist_du_ort: Quantiles::of(last.defects.clone()),
            shape_residual: Quantiles::of(last.residuals.clone()),
        }),
        converging: cauchy_ratio.is_some_and(|r| r <= 0.5),
        cauchy_ratio,
        warnings,
        rows,
    })
}

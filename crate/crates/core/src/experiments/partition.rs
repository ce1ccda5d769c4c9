//! Subcube partition by image density, and the aggregation of per-cube
//! reverse Poincaré estimates into a global bound.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::immersions::{sasaki_node_distances, target_distance, DiscreteImmersion, GridDomain};
use crate::metric_core::frobenius_norm;
use crate::rigidity::{reverse_poincare_check, ChartHypotheses, GoodSet};
use crate::target_space::{epsilon_isometric_check, ExtendedChart};
use crate::transport::SasakiOptions;

/// Relative slack on floating-point volume comparisons.
const VOLUME_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PartitionClassification {
    pub m: usize,
    pub q0: Vec<f64>,
    pub tau: f64,
    pub epsilon: f64,
    pub p: f64,
    /// Per-cube fraction of volume mapped into `B(q₀, τ)`, cubes in
    /// lexicographic order with the last axis fastest.
    pub densities: Vec<f64>,
    /// Cubes with density above one half.
    pub good: Vec<usize>,
    pub bad: Vec<usize>,
    /// `|Q ∖ u⁻¹(B(q₀, τ))| / |Q|`.
    pub outside_fraction: f64,
    pub volume: f64,
    pub bad_volume: f64,
    /// `2ε^p|Q|` when `outside_fraction ≤ ε^p`, otherwise absent.
    pub bad_volume_bound: Option<f64>,
}

impl PartitionClassification {
    pub fn cube_count(&self) -> usize {
        self.densities.len()
    }

    /// Whether the global density hypothesis holds.
    pub fn hypothesis_holds(&self) -> bool {
        self.bad_volume_bound.is_some()
    }
}

/// Grid nodes per side of each of the `m^d` subcubes.
fn cube_nodes(domain: &GridDomain, m: usize) -> Result<usize> {
    let intervals = domain.nodes_per_side() - 1;
    if m == 0 || !intervals.is_multiple_of(m) {
        return Err(Error::InvalidArgument(format!(
            "{m} subdivisions do not divide {intervals} grid intervals"
        )));
    }
    Ok(intervals / m + 1)
}

/// Lower-corner node multi-index of cube `c`.
fn cube_start(dim: usize, m: usize, step: usize, c: usize) -> Vec<usize> {
    let mut start = vec![0; dim];
    let mut rest = c;
    for axis in (0..dim).rev() {
        start[axis] = (rest % m) * step;
        rest /= m;
    }
    start
}

/// Classifies the `m^d` subcubes by the `dx`-weighted fraction of nodes
/// with `d_h(u, q₀) ≤ τ`. Subcube trapezoid weights add up to the global
/// ones, so the bad-volume bound holds exactly whenever the global
/// hypothesis does.
pub fn classify_partition(
    u: &DiscreteImmersion,
    m: usize,
    q0: &DVector<f64>,
    tau: f64,
    epsilon: f64,
    p: f64,
) -> Result<PartitionClassification> {
    let domain = u.domain();
    let dim = domain.dim();
    let nodes = cube_nodes(domain, m)?;
    if q0.len() != u.target().dim() {
        return Err(Error::DimensionMismatch {
            expected: u.target().dim(),
            found: q0.len(),
        });
    }
    if !(tau.is_finite() && tau > 0.0) || !(epsilon > 0.0 && epsilon < 1.0) || !(p >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "need τ > 0, 0 < ε < 1, p >= 1 (got {tau}, {epsilon}, {p})"
        )));
    }
    let inside: Vec<bool> = u
        .values()
        .par_iter()
        .map(|q| target_distance(u.target(), q, q0).map(|d| d <= tau))
        .collect::<Result<_>>()?;

    let cubes = m.pow(dim as u32);
    let mut densities = Vec::with_capacity(cubes);
    let (mut good, mut bad) = (Vec::new(), Vec::new());
    let mut bad_volume = 0.0;
    for c in 0..cubes {
        let start = cube_start(dim, m, nodes - 1, c);
        let sub = domain.subcube(&start, nodes)?;
        let map = domain.subcube_map(&start, nodes)?;
        let within: f64 = map
            .iter()
            .enumerate()
            .filter(|&(_, &g)| inside[g])
            .map(|(l, _)| sub.weight(l))
            .fold(0.0, |a, w| a + w);
        let density = within / sub.volume();
        densities.push(density);
        if density > 0.5 {
            good.push(c);
        } else {
            bad.push(c);
            bad_volume += sub.volume();
        }
    }

    let volume = domain.volume();
    let outside: f64 = (0..domain.node_count())
        .filter(|&i| !inside[i])
        .map(|i| domain.weight(i))
        .fold(0.0, |a, w| a + w);
    let outside_fraction = outside / volume;
    let ep = epsilon.powf(p);
    let bad_volume_bound = (outside_fraction <= ep * (1.0 + VOLUME_SLACK)).then_some(2.0 * ep * volume);
    if let Some(bound) = bad_volume_bound {
        assert!(
            bad_volume <= bound * (1.0 + VOLUME_SLACK),
            "bad cubes cover {bad_volume} > 2ε^p|Q| = {bound}"
        );
    }
    Ok(PartitionClassification {
        m,
        q0: q0.as_slice().to_vec(),
        tau,
        epsilon,
        p,
        densities,
        good,
        bad,
        outside_fraction,
        volume,
        bad_volume,
        bad_volume_bound,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggregationReport {
    /// `Σ` over good cubes of the reverse Poincaré left-hand side.
    pub good_lhs: f64,
    /// `3^{p−1} Σ_bad ∫ (|du₁|^p + d_h^p(u₁, u₂) + |du₂|^p) dx`.
    pub bad_bound: f64,
    /// `∫_Q d_σ^p(du₁, du₂) dx`.
    pub global: f64,
    /// Good cubes moved to the crude bound because a chart hypothesis fails
    /// there for one of the immersions.
    pub demoted: Vec<usize>,
    /// Chart ε measured on both images and used for every cube.
    pub chart_epsilon: f64,
    pub holds: bool,
}

/// Reproduces the localization step: good cubes contribute their reverse
/// Poincaré left-hand side, bad cubes the crude pointwise bound
/// `d_σ ≤ |e₁| + |e₂| + d_h`, and the sum must dominate the global
/// `∫ d_σ^p`.
pub fn aggregation_check(
    u1: &DiscreteImmersion,
    u2: &DiscreteImmersion,
    partition: &PartitionClassification,
    ext: &ExtendedChart,
    sasaki: &SasakiOptions,
) -> Result<AggregationReport> {
    let p = partition.p;
    let domain = u1.domain();
    let nodes = cube_nodes(domain, partition.m)?;
    let dim = domain.dim();

    let sigma = sasaki_node_distances(u1, u2, sasaki)?;
    let global: f64 = (0..domain.node_count())
        .map(|i| domain.weight(i) * sigma[i].powf(p))
        .sum();

    let chart = ext.base();
    let mut probes: Vec<DVector<f64>> = u1
        .values()
        .iter()
        .chain(u2.values())
        .filter(|q| ext.in_identity_zone(q))
        .filter_map(|q| ext.chart_coords(q))
        .collect();
    if probes.is_empty() {
        probes.push(DVector::zeros(chart.dim()));
    }
    let chart_epsilon = epsilon_isometric_check(chart, &probes)?.epsilon * (1.0 + 1e-9) + 1e-15;

    let crude = |start: &[usize]| -> Result<f64> {
        let (c1, c2) = (u1.restrict(start, nodes)?, u2.restrict(start, nodes)?);
        let sub = c1.domain();
        let mut total = 0.0;
        for i in 0..sub.node_count() {
            let gap = target_distance(u1.target(), c1.value(i), c2.value(i))?;
            total += sub.weight(i)
                * (frobenius_norm(c1.differential(i)).powf(p)
                    + gap.powf(p)
                    + frobenius_norm(c2.differential(i)).powf(p));
        }
        Ok(3f64.powf(p - 1.0) * total)
    };

    let mut good_lhs = 0.0;
    let mut bad_bound = 0.0;
    let mut demoted = Vec::new();
    for &c in &partition.bad {
        bad_bound += crude(&cube_start(dim, partition.m, nodes - 1, c))?;
    }
    for &c in &partition.good {
        let start = cube_start(dim, partition.m, nodes - 1, c);
        let (c1, c2) = (u1.restrict(&start, nodes)?, u2.restrict(&start, nodes)?);
        let (f1, f2) = (GoodSet::from_chart(&c1, ext), GoodSet::from_chart(&c2, ext));
        let outside = f1.fraction().max(f2.fraction());
        let delta = outside.powf(1.0 / p) * (1.0 + 1e-9);
        let hyp = ChartHypotheses {
            delta,
            epsilon: chart_epsilon,
        };
        let attempt = if delta < 1.0 {
            reverse_poincare_check(&c1, &c2, ext, &f1, &f2, hyp, p, sasaki)
        } else {
            Err(Error::Hypothesis(format!("cube {c} has an empty good set")))
        };
        match attempt {
            Ok(report) => good_lhs += report.lhs,
            Err(Error::Hypothesis(_)) => {
                demoted.push(c);
                bad_bound += crude(&start)?;
            }
            Err(e) => return Err(e),
        }
    }
    let holds = good_lhs + bad_bound >= global * (1.0 - 1e-10);
    Ok(AggregationReport {
        good_lhs,
        bad_bound,
        global,
        demoted,
        chart_epsilon,
        holds,
    })
}

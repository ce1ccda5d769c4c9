//! The target manifold as one coordinate patch with a metric field.
//!
//! Covers Christoffel symbols (closed form for the built-in catalog, central
//! differences otherwise), the connector operator in coordinates, almost
//! isometric charts including Riemannian normal coordinates, and cutoff
//! extensions of centered charts.

mod chart;
mod cutoff;
mod metric_field;

pub use chart::{extend_chart, geodesic_flow, normal_coordinates, Chart, ExtendedChart, Region};
pub use cutoff::{CutoffBounds, CutoffProfile};
pub use metric_field::{
    polar_embedding, stereographic_embedding, Christoffel, ChristoffelField, CoefficientFn,
    MetricField, MetricKind, PatchFn, DEFAULT_DERIV_STEP,
};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::metric_core::{distance_to_isometries, ConstMetric, LinearMapSample};

/// Coefficients of `K_{TN}(ξ)` for `ξ = (y, w, Y, W)`:
/// `W_k + Σ_ij w_j Y_i Γ^k_ij(y)`.
pub fn connector(
    christoffel: &ChristoffelField,
    y: &[f64],
    w: &[f64],
    tangent: &[f64],
    vertical: &[f64],
) -> Result<DVector<f64>> {
    let n = christoffel.source().dim();
    for v in [w, tangent, vertical] {
        if v.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: v.len(),
            });
        }
    }
    let g = christoffel.at(y)?;
    Ok(DVector::from_column_slice(vertical) + g.contract(tangent, w))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpsilonReport {
    /// Smallest ε for which both conditions hold on the samples.
    pub epsilon: f64,
    /// `max(μ_max − 1, 1/μ_min − 1)` over the pushforward metric eigenvalues.
    pub metric_part: f64,
    /// `max |Γ^k_ij|` of the pushforward metric.
    pub christoffel_part: f64,
    /// Index of the sample attaining `epsilon`.
    pub worst_sample: usize,
}

/// How far a chart is from being isometric on `samples ⊂ φ(U)`.
pub fn epsilon_isometric_check(chart: &Chart, samples: &[DVector<f64>]) -> Result<EpsilonReport> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut report = EpsilonReport {
        epsilon: 0.0,
        metric_part: 0.0,
        christoffel_part: 0.0,
        worst_sample: 0,
    };
    for (idx, z) in samples.iter().enumerate() {
        if !chart.image().contains(z.as_slice()) {
            return Err(Error::OutsidePatch {
                point: z.as_slice().to_vec(),
            });
        }
        let (lo, hi) = chart.metric_at(z)?.eigen_bounds();
        let m = (hi - 1.0).max(1.0 / lo - 1.0).max(0.0);
        let c = chart.christoffel_at(z)?.max_abs();
        report.metric_part = report.metric_part.max(m);
        report.christoffel_part = report.christoffel_part.max(c);
        if m.max(c) > report.epsilon {
            report.epsilon = m.max(c);
            report.worst_sample = idx;
        }
    }
    Ok(report)
}

/// Uniform samples from the open ball `B(0, radius) ⊂ ℝ^dim`.
pub fn ball_samples(dim: usize, radius: f64, count: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let z = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
        let n = z.norm();
        if n < 1.0 {
            out.push(z * (radius * (1.0 - 1e-9)));
        }
    }
    out
}

/// For `ξ = (z, w, Y, W)` in chart coordinates, the ratio
/// `|W| / (|K(ξ)|_h + |w|_h |Y|_h)`: the flat connector of `d²φ(ξ)` against
/// the covariant one. Bounded by a dimensional constant on almost isometric
/// charts. Returns 0 when both sides vanish.
pub fn connector_comparison_ratio(
    chart: &Chart,
    z: &DVector<f64>,
    w: &DVector<f64>,
    tangent: &DVector<f64>,
    vertical: &DVector<f64>,
) -> Result<f64> {
    let h = chart.metric_at(z)?;
    let g = chart.christoffel_at(z)?;
    let k = vertical + g.contract(tangent.as_slice(), w.as_slice());
    let lhs = vertical.norm();
    let rhs = h.norm(&k) + h.norm(w) * h.norm(tangent);
    if rhs == 0.0 {
        return Ok(if lhs == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(lhs / rhs)
}

/// The constant `C` realized by `L : (ℝ^d, g₀) → T_qN` in
/// `dist(Dφ(q)∘L, Ort(g₀, e)) ≤ √(1+ε)·dist(L, Ort(g₀, h_q)) + Cε`.
pub fn isometry_defect_constant(
    chart: &Chart,
    q: &DVector<f64>,
    map: &DMatrix<f64>,
    src_metric: &ConstMetric,
    epsilon: f64,
) -> Result<f64> {
    if epsilon <= 0.0 {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    let h = chart.field().metric_at(q.as_slice())?;
    let n = chart.dim();
    let on_manifold = LinearMapSample::new(map.clone(), src_metric.clone(), h)?;
    let in_chart = LinearMapSample::new(
        chart.jacobian(q)? * map,
        src_metric.clone(),
        ConstMetric::euclidean(n),
    )?;
    let lhs = distance_to_isometries(&in_chart, false)?;
    let base = distance_to_isometries(&on_manifold, false)?;
    Ok((lhs - (1.0 + epsilon).sqrt() * base) / epsilon)
}

/// `|n − ñ|` where `n` is a Euclidean unit normal of a hyperplane `Π` in
/// chart coordinates and `ñ` the pushforward-metric unit normal of `Π`
/// inducing the same orientation.
pub fn normal_defect(chart: &Chart, z: &DVector<f64>, normal: &DVector<f64>) -> Result<f64> {
    let h = chart.metric_at(z)?;
    let n = normal / normal.norm();
    let raw = h.inverse_matrix() * &n;
    let tilde = &raw / h.norm(&raw);
    Ok((n - tilde).norm())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn connector_examples() {
        let flat = ChristoffelField::new(MetricField::flat(3));
        let k = connector(&flat, &[0.1, 0.2, 0.3], &[1.0, 2.0, 3.0], &[0.5, 0.0, 1.0], &[4.0, 5.0, 6.0])
            .unwrap();
        assert_eq!(k.as_slice(), &[4.0, 5.0, 6.0]);

        let polar = ChristoffelField::new(MetricField::sphere_polar(1.0).unwrap());
        let k = connector(&polar, &[0.8, 0.0], &[0.0, 0.0], &[0.3, 0.7], &[1.0, -1.0]).unwrap();
        assert_eq!(k.as_slice(), &[1.0, -1.0]);

        // Y and w along λ: only Γ^φ_λλ contributes
        let (phi, w, y) = (0.8f64, 0.6, 1.3);
        let k = connector(&polar, &[phi, 0.0], &[0.0, w], &[0.0, y], &[0.0, 0.0]).unwrap();
        assert!((k[0] + w * y * phi.sin() * phi.cos()).abs() < 1e-15);
        assert_eq!(k[1], 0.0);
    }

    #[test]
    fn identity_chart_on_flat_metric_is_isometric() {
        let chart = Chart::identity(MetricField::flat(3));
        let r = epsilon_isometric_check(&chart, &ball_samples(3, 1.0, 20, 1)).unwrap();
        assert_eq!(r.epsilon, 0.0);
        assert!(matches!(
            epsilon_isometric_check(&chart, &[]),
            Err(Error::EmptySamples)
        ));
    }

    #[test]
    fn stretched_metric_forces_epsilon() {
        let t = 0.3;
        let chart = Chart::identity(MetricField::constant(
            ConstMetric::diagonal(&[1.0 + t, 1.0]).unwrap(),
        ));
        let r = epsilon_isometric_check(&chart, &ball_samples(2, 1.0, 5, 2)).unwrap();
        assert!(r.epsilon >= t - 1e-15);
    }
}

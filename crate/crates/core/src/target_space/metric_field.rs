use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::metric_core::ConstMetric;

pub const DEFAULT_DERIV_STEP: f64 = 1e-4;

pub type CoefficientFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
pub type PatchFn = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

/// Built-in metrics with closed-form Christoffel symbols, plus user supplied
/// coefficient functions.
#[derive(Clone)]
pub enum MetricKind {
    Flat,
    Constant(ConstMetric),
    /// Round sphere of the given radius minus the south pole, in stereographic
    /// coordinates on the tangent plane at the north pole:
    /// `h = (1 + |y|²/(4ρ²))⁻² δ`.
    SphereStereographic { radius: f64 },
    /// Round 2-sphere in (colatitude, longitude): `h = ρ² diag(1, sin²φ)`,
    /// patch `0 < φ < π`.
    SpherePolar { radius: f64 },
    /// `h = dt² + e^{2at}|dx|²` with `t = y[0]`; hyperbolic of curvature `−a²`.
    Warped { rate: f64 },
    Custom {
        label: String,
        coefficients: CoefficientFn,
        patch: Option<PatchFn>,
    },
}

impl fmt::Debug for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricKind::Flat => write!(f, "Flat"),
            MetricKind::Constant(g) => write!(f, "Constant({:?})", g.entries()),
            MetricKind::SphereStereographic { radius } => {
                write!(f, "SphereStereographic {{ radius: {radius} }}")
            }
            MetricKind::SpherePolar { radius } => write!(f, "SpherePolar {{ radius: {radius} }}"),
            MetricKind::Warped { rate } => write!(f, "Warped {{ rate: {rate} }}"),
            MetricKind::Custom { label, .. } => write!(f, "Custom({label})"),
        }
    }
}

/// A metric `y ↦ h(y)` on a coordinate patch of the target.
#[derive(Clone, Debug)]
pub struct MetricField {
    kind: MetricKind,
    dim: usize,
    deriv_step: f64,
}

impl MetricField {
    pub fn flat(dim: usize) -> Self {
        Self::with_kind(MetricKind::Flat, dim)
    }

    pub fn constant(metric: ConstMetric) -> Self {
        let dim = metric.dim();
        Self::with_kind(MetricKind::Constant(metric), dim)
    }

    pub fn sphere_stereographic(dim: usize, radius: f64) -> Result<Self> {
        positive("radius", radius)?;
        Ok(Self::with_kind(MetricKind::SphereStereographic { radius }, dim))
    }

    pub fn sphere_polar(radius: f64) -> Result<Self> {
        positive("radius", radius)?;
        Ok(Self::with_kind(MetricKind::SpherePolar { radius }, 2))
    }

    pub fn warped(dim: usize, rate: f64) -> Result<Self> {
        if !rate.is_finite() || dim < 2 {
            return Err(Error::InvalidArgument(format!(
                "warped product needs dim >= 2 and finite rate (dim {dim}, rate {rate})"
            )));
        }
        Ok(Self::with_kind(MetricKind::Warped { rate }, dim))
    }

    pub fn custom(
        label: impl Into<String>,
        dim: usize,
        coefficients: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
        patch: Option<PatchFn>,
    ) -> Self {
        Self::with_kind(
            MetricKind::Custom {
                label: label.into(),
                coefficients: Arc::new(coefficients),
                patch,
            },
            dim,
        )
    }

    fn with_kind(kind: MetricKind, dim: usize) -> Self {
        Self {
            kind,
            dim,
            deriv_step: DEFAULT_DERIV_STEP,
        }
    }

    pub fn with_deriv_step(mut self, step: f64) -> Self {
        self.deriv_step = step;
        self
    }

    pub fn kind(&self) -> &MetricKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn deriv_step(&self) -> f64 {
        self.deriv_step
    }

    pub fn name(&self) -> String {
        match &self.kind {
            MetricKind::Flat => "flat".into(),
            MetricKind::Constant(_) => "constant".into(),
            MetricKind::SphereStereographic { .. } => "sphere-stereographic".into(),
            MetricKind::SpherePolar { .. } => "sphere-polar".into(),
            MetricKind::Warped { .. } => "warped".into(),
            MetricKind::Custom { label, .. } => label.clone(),
        }
    }

    /// Constant coefficients (Christoffel symbols vanish identically).
    pub fn is_constant(&self) -> bool {
        matches!(self.kind, MetricKind::Flat | MetricKind::Constant(_))
    }

    pub fn has_closed_form_christoffel(&self) -> bool {
        !matches!(self.kind, MetricKind::Custom { .. })
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        if y.len() != self.dim || y.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match &self.kind {
            MetricKind::SpherePolar { .. } => y[0] > 0.0 && y[0] < std::f64::consts::PI,
            MetricKind::Custom { patch: Some(p), .. } => p(y),
            _ => true,
        }
    }

    pub(crate) fn check(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: y.len(),
            });
        }
        if !self.contains(y) {
            return Err(Error::OutsidePatch { point: y.to_vec() });
        }
        Ok(())
    }

    /// Raw coefficient table at `y` (no SPD validation).
    pub fn coefficients(&self, y: &[f64]) -> Result<DMatrix<f64>> {
        self.check(y)?;
        Ok(self.coefficients_unchecked(y))
    }

    pub(crate) fn coefficients_unchecked(&self, y: &[f64]) -> DMatrix<f64> {
        let n = self.dim;
        match &self.kind {
            MetricKind::Flat => DMatrix::identity(n, n),
            MetricKind::Constant(g) => g.entries().clone(),
            MetricKind::SphereStereographic { radius } => {
                let s = norm_sq(y) / (4.0 * radius * radius);
                DMatrix::identity(n, n) / (1.0 + s).powi(2)
            }
            MetricKind::SpherePolar { radius } => {
                let r2 = radius * radius;
                let sin = y[0].sin();
                DMatrix::from_diagonal(&DVector::from_vec(vec![r2, r2 * sin * sin]))
            }
            MetricKind::Warped { rate } => {
                let w = (2.0 * rate * y[0]).exp();
                let mut m = DMatrix::identity(n, n) * w;
                m[(0, 0)] = 1.0;
                m
            }
            MetricKind::Custom { coefficients, .. } => coefficients(y),
        }
    }

    /// `h(y)` validated as a [`ConstMetric`]. Custom coefficients are
    /// symmetrized first.
    pub fn metric_at(&self, y: &[f64]) -> Result<ConstMetric> {
        let m = self.coefficients(y)?;
        match self.kind {
            MetricKind::Custom { .. } => ConstMetric::symmetrized(m),
            _ => ConstMetric::new(m),
        }
    }

    /// Levi-Civita symbols at `y`: closed form for catalog metrics, central
    /// differences otherwise.
    pub fn christoffel(&self, y: &[f64]) -> Result<Christoffel> {
        self.check(y)?;
        match &self.kind {
            MetricKind::Custom { .. } => self.christoffel_fd(y, self.deriv_step),
            _ => Ok(self.christoffel_closed(y)),
        }
    }

    fn christoffel_closed(&self, y: &[f64]) -> Christoffel {
        let n = self.dim;
        let mut g = Christoffel::zeros(n);
        match &self.kind {
            MetricKind::Flat | MetricKind::Constant(_) | MetricKind::Custom { .. } => {}
            MetricKind::SphereStereographic { radius } => {
                // conformal h = e^{2f} δ with f = −ln(1 + |y|²/(4ρ²))
                let r2 = radius * radius;
                let s = norm_sq(y) / (4.0 * r2);
                let df: Vec<f64> = y.iter().map(|v| -v / (2.0 * r2 * (1.0 + s))).collect();
                for k in 0..n {
                    for i in 0..n {
                        for j in 0..n {
                            let mut v = 0.0;
                            if i == k {
                                v += df[j];
                            }
                            if j == k {
                                v += df[i];
                            }
                            if i == j {
                                v -= df[k];
                            }
                            g.set(k, i, j, v);
                        }
                    }
                }
            }
            MetricKind::SpherePolar { .. } => {
                let (sin, cos) = y[0].sin_cos();
                g.set(0, 1, 1, -sin * cos);
                g.set(1, 0, 1, cos / sin);
                g.set(1, 1, 0, cos / sin);
            }
            MetricKind::Warped { rate } => {
                let w = (2.0 * rate * y[0]).exp();
                for i in 1..n {
                    g.set(0, i, i, -rate * w);
                    g.set(i, 0, i, *rate);
                    g.set(i, i, 0, *rate);
                }
            }
        }
        g
    }

    /// `∂_m h` at `y` by central differences with step `step`.
    pub fn metric_derivatives(&self, y: &[f64], step: f64) -> Result<Vec<DMatrix<f64>>> {
        self.check(y)?;
        let mut out = Vec::with_capacity(self.dim);
        let mut p = y.to_vec();
        for m in 0..self.dim {
            p[m] = y[m] + step;
            let plus = self.coefficients(&p)?;
            p[m] = y[m] - step;
            let minus = self.coefficients(&p)?;
            p[m] = y[m];
            out.push((plus - minus) / (2.0 * step));
        }
        Ok(out)
    }

    /// `Γ^k_ij = ½ h^{kl}(∂_i h_jl + ∂_j h_il − ∂_l h_ij)` from central
    /// differences.
    pub fn christoffel_fd(&self, y: &[f64], step: f64) -> Result<Christoffel> {
        let n = self.dim;
        let h = self.metric_at(y)?;
        let hinv = h.inverse_matrix();
        let dh = self.metric_derivatives(y, step)?;
        let mut g = Christoffel::zeros(n);
        for i in 0..n {
            for j in 0..n {
                // lowered symbol Γ_{ij,l}
                let lowered: Vec<f64> = (0..n)
                    .map(|l| 0.5 * (dh[i][(j, l)] + dh[j][(i, l)] - dh[l][(i, j)]))
                    .collect();
                for k in 0..n {
                    let v: f64 = (0..n).map(|l| hinv[(k, l)] * lowered[l]).sum();
                    g.set(k, i, j, v);
                }
            }
        }
        Ok(g)
    }

    /// Closed-form Riemannian distance for catalog metrics.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> Option<f64> {
        if !self.contains(a) || !self.contains(b) {
            return None;
        }
        match &self.kind {
            MetricKind::Flat => Some(euclid(a, b)),
            MetricKind::Constant(g) => {
                let d = DVector::from_fn(a.len(), |i, _| a[i] - b[i]);
                Some(g.norm(&d))
            }
            MetricKind::SphereStereographic { radius } => {
                let (xa, xb) = (
                    stereographic_embedding(a, *radius),
                    stereographic_embedding(b, *radius),
                );
                Some(chord_to_arc(euclid(&xa, &xb), *radius))
            }
            MetricKind::SpherePolar { radius } => {
                let (xa, xb) = (polar_embedding(a, *radius), polar_embedding(b, *radius));
                Some(chord_to_arc(euclid(&xa, &xb), *radius))
            }
            MetricKind::Warped { rate } => {
                if *rate == 0.0 {
                    return Some(euclid(a, b));
                }
                let (za, zb) = ((-rate * a[0]).exp() / rate.abs(), (-rate * b[0]).exp() / rate.abs());
                let dx2: f64 = a[1..].iter().zip(&b[1..]).map(|(p, q)| (p - q).powi(2)).sum();
                let arg = 1.0 + (dx2 + (za - zb).powi(2)) / (2.0 * za * zb);
                Some(arg.acosh() / rate.abs())
            }
            MetricKind::Custom { .. } => None,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")))
    }
}

fn norm_sq(y: &[f64]) -> f64 {
    y.iter().map(|v| v * v).sum()
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
}

fn chord_to_arc(chord: f64, radius: f64) -> f64 {
    2.0 * radius * (chord / (2.0 * radius)).min(1.0).asin()
}

/// Point of the sphere of radius `ρ` in `ℝ^{n+1}` (centered at the origin)
/// with stereographic coordinates `y`; `y = 0` is the north pole.
pub fn stereographic_embedding(y: &[f64], radius: f64) -> Vec<f64> {
    let s = norm_sq(y) / (4.0 * radius * radius);
    let mut x: Vec<f64> = y.iter().map(|v| v / (1.0 + s)).collect();
    x.push(radius * (1.0 - s) / (1.0 + s));
    x
}

/// Point of the round 2-sphere with colatitude `y[0]` and longitude `y[1]`.
pub fn polar_embedding(y: &[f64], radius: f64) -> Vec<f64> {
    let (sp, cp) = y[0].sin_cos();
    let (sl, cl) = y[1].sin_cos();
    vec![radius * sp * cl, radius * sp * sl, radius * cp]
}

/// A table `Γ^k_ij`, stored `[k][i][j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Christoffel {
    dim: usize,
    data: Vec<f64>,
}

impl Christoffel {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[(k * self.dim + i) * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, k: usize, i: usize, j: usize, v: f64) {
        self.data[(k * self.dim + i) * self.dim + j] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_diff(&self, other: &Christoffel) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// `c_k = Σ_ij a_i b_j Γ^k_ij`.
    pub fn contract(&self, a: &[f64], b: &[f64]) -> DVector<f64> {
        let n = self.dim;
        DVector::from_fn(n, |k, _| {
            let mut s = 0.0;
            for i in 0..n {
                if a[i] == 0.0 {
                    continue;
                }
                for j in 0..n {
                    s += a[i] * b[j] * self.get(k, i, j);
                }
            }
            s
        })
    }
}

/// The Levi-Civita connection of a [`MetricField`].
#[derive(Clone, Debug)]
pub struct ChristoffelField {
    source: MetricField,
}

impl ChristoffelField {
    pub fn new(source: MetricField) -> Self {
        Self { source }
    }

    pub fn source(&self) -> &MetricField {
        &self.source
    }

    pub fn at(&self, y: &[f64]) -> Result<Christoffel> {
        self.source.christoffel(y)
    }

    /// `max |Γ^k_ij − Γ^k_ji|`.
    pub fn symmetry_defect(&self, y: &[f64]) -> Result<f64> {
        let g = self.at(y)?;
        let n = g.dim();
        let mut m: f64 = 0.0;
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    m = m.max((g.get(k, i, j) - g.get(k, j, i)).abs());
                }
            }
        }
        Ok(m)
    }

    /// `max |∂_i h_jl − Σ_k (Γ^k_ij h_kl + Γ^k_il h_kj)|` with metric
    /// derivatives by central differences.
    pub fn compatibility_defect(&self, y: &[f64]) -> Result<f64> {
        let g = self.at(y)?;
        let h = self.source.coefficients(y)?;
        let dh = self.source.metric_derivatives(y, self.source.deriv_step())?;
        let n = g.dim();
        let mut m: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    let rhs: f64 = (0..n)
                        .map(|k| g.get(k, i, j) * h[(k, l)] + g.get(k, i, l) * h[(k, j)])
                        .sum();
                    m = m.max((dh[i][(j, l)] - rhs).abs());
                }
            }
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_has_zero_christoffel() {
        let f = MetricField::flat(3);
        assert_eq!(f.christoffel(&[0.3, -1.0, 2.0]).unwrap().max_abs(), 0.0);
        let c = MetricField::constant(ConstMetric::diagonal(&[2.0, 3.0]).unwrap());
        assert!(c.christoffel_fd(&[0.1, 0.2], 1e-4).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn polar_sphere_symbol() {
        let f = MetricField::sphere_polar(1.0).unwrap();
        let y = [0.7, 0.3];
        let g = f.christoffel(&y).unwrap();
        assert!((g.get(0, 1, 1) + 0.7f64.sin() * 0.7f64.cos()).abs() < 1e-15);
        let fd = f.christoffel_fd(&y, 1e-4).unwrap();
        assert!(g.max_diff(&fd) < 1e-6);
    }

    #[test]
    fn outside_patch_is_an_error() {
        let f = MetricField::sphere_polar(1.0).unwrap();
        assert!(matches!(
            f.christoffel(&[-0.1, 0.0]),
            Err(Error::OutsidePatch { .. })
        ));
        assert!(matches!(
            f.christoffel(&[0.1, 0.0, 0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn catalog_distances_vanish_on_diagonal() {
        for f in [
            MetricField::sphere_stereographic(3, 1.5).unwrap(),
            MetricField::warped(3, 0.7).unwrap(),
        ] {
            assert!(f.distance(&[0.2, 0.1, -0.3], &[0.2, 0.1, -0.3]).unwrap() < 1e-7);
        }
        let s = MetricField::sphere_stereographic(2, 1.0).unwrap();
        // north pole to equator: quarter great circle
        let d = s.distance(&[0.0, 0.0], &[2.0, 0.0]).unwrap();
        assert!((d - std::f64::consts::FRAC_PI_2).abs() < 1e-14);
    }
}

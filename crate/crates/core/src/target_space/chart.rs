use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::cutoff::CutoffProfile;
use super::metric_field::{Christoffel, MetricField};
use crate::error::{Error, Result};
use crate::metric_core::{ConstMetric, LinearMapSample};

/// Endpoint change below which a geodesic step count is accepted.
const STEP_TOLERANCE: f64 = 1e-10;
const MAX_GEODESIC_STEPS: usize = 4096;
/// Central-difference step for the Jacobian of the exponential map.
const EXP_JACOBIAN_STEP: f64 = 1e-5;
/// Derivative step used for the pushforward metric of a normal chart.
const NORMAL_CHART_DERIV_STEP: f64 = 1e-3;

/// Integrates `y'' = −Γ(y)(y', y')` over `[0, 1]` with `steps` classical
/// Runge–Kutta steps; returns the endpoint and the final velocity.
pub fn geodesic_flow(
    field: &MetricField,
    start: &DVector<f64>,
    velocity: &DVector<f64>,
    steps: usize,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let h = 1.0 / steps as f64;
    let accel = |y: &DVector<f64>, v: &DVector<f64>| -> Result<DVector<f64>> {
        let g = field.christoffel(y.as_slice())?;
        Ok(-g.contract(v.as_slice(), v.as_slice()))
    };
    let mut y = start.clone();
    let mut v = velocity.clone();
    for _ in 0..steps {
        let a1 = accel(&y, &v)?;
        let (y2, v2) = (&y + &v * (0.5 * h), &v + &a1 * (0.5 * h));
        let a2 = accel(&y2, &v2)?;
        let (y3, v3) = (&y + &v2 * (0.5 * h), &v + &a2 * (0.5 * h));
        let a3 = accel(&y3, &v3)?;
        let (y4, v4) = (&y + &v3 * h, &v + &a3 * h);
        let a4 = accel(&y4, &v4)?;
        y += (&v + &v2 * 2.0 + &v3 * 2.0 + &v4) * (h / 6.0);
        v += (&a1 + &a2 * 2.0 + &a3 * 2.0 + &a4) * (h / 6.0);
    }
    field.check(y.as_slice())?;
    Ok((y, v))
}

/// A set in chart coordinates.
#[derive(Clone, Debug, PartialEq)]
pub enum Region {
    Whole,
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl Region {
    pub fn contains(&self, z: &[f64]) -> bool {
        match self {
            Region::Whole => true,
            Region::Ball { center, radius } => {
                dist(center, z) < *radius
            }
            Region::Box { lo, hi } => z
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(v, (a, b))| *a < *v && *v < *b),
        }
    }

    /// Whether the closed ball `B̄(center, radius)` lies inside the region.
    pub fn contains_ball(&self, center: &[f64], radius: f64) -> bool {
        match self {
            Region::Whole => true,
            Region::Ball { center: c, radius: r } => dist(c, center) + radius < *r,
            Region::Box { lo, hi } => center
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(v, (a, b))| *a < v - radius && v + radius < *b),
        }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
}

#[derive(Clone, Debug)]
struct NormalData {
    /// `h(q)^{-1/2}`: columns are an h-orthonormal frame at `q`.
    frame: DMatrix<f64>,
    frame_inv: DMatrix<f64>,
    steps: usize,
}

#[derive(Clone, Debug)]
enum ChartKind {
    /// `φ(y) = A(y − base)`.
    Affine {
        matrix: DMatrix<f64>,
        inverse: DMatrix<f64>,
    },
    /// `φ = exp_q⁻¹` in the frame `h(q)^{-1/2}`.
    Normal(Arc<NormalData>),
}

/// A coordinate chart `φ : U → φ(U) ⊂ ℝ^{d+1}` on the target patch.
#[derive(Clone, Debug)]
pub struct Chart {
    field: MetricField,
    kind: ChartKind,
    base: DVector<f64>,
    image: Region,
}

impl Chart {
    /// `φ(y) = y` on the whole patch.
    pub fn identity(field: MetricField) -> Self {
        let n = field.dim();
        Self {
            kind: ChartKind::Affine {
                matrix: DMatrix::identity(n, n),
                inverse: DMatrix::identity(n, n),
            },
            base: DVector::zeros(n),
            field,
            image: Region::Whole,
        }
    }

    /// `φ(y) = A(y − base)` with image restricted to `image`.
    pub fn affine(
        field: MetricField,
        base: DVector<f64>,
        matrix: DMatrix<f64>,
        image: Region,
    ) -> Result<Self> {
        let n = field.dim();
        if base.len() != n || matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: matrix.nrows(),
            });
        }
        let inverse = matrix
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidArgument("affine chart matrix is singular".into()))?;
        Ok(Self {
            kind: ChartKind::Affine { matrix, inverse },
            base,
            field,
            image,
        })
    }

    pub fn field(&self) -> &MetricField {
        &self.field
    }

    pub fn image(&self) -> &Region {
        &self.image
    }

    /// The point `φ⁻¹(0)` for centered charts (the base point otherwise).
    pub fn base_point(&self) -> &DVector<f64> {
        &self.base
    }

    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    pub fn forward(&self, q: &DVector<f64>) -> Result<DVector<f64>> {
        self.field.check(q.as_slice())?;
        match &self.kind {
            ChartKind::Affine { matrix, .. } => Ok(matrix * (q - &self.base)),
            ChartKind::Normal(data) => self.log(data, q),
        }
    }

    pub fn inverse(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        match &self.kind {
            ChartKind::Affine { inverse, .. } => {
                let q = &self.base + inverse * z;
                self.field.check(q.as_slice())?;
                Ok(q)
            }
            ChartKind::Normal(data) => self.exp(data, z),
        }
    }

    /// `q ∈ U`.
    pub fn contains(&self, q: &DVector<f64>) -> bool {
        self.forward(q)
            .map(|z| self.image.contains(z.as_slice()))
            .unwrap_or(false)
    }

    /// `z ∈ φ(U)`.
    pub fn image_contains(&self, z: &DVector<f64>) -> bool {
        self.image.contains(z.as_slice()) && self.inverse(z).is_ok()
    }

    /// `Dφ⁻¹(z)`.
    pub fn inverse_jacobian(&self, z: &DVector<f64>) -> Result<DMatrix<f64>> {
        match &self.kind {
            ChartKind::Affine { inverse, .. } => Ok(inverse.clone()),
            ChartKind::Normal(data) => {
                let n = self.dim();
                let mut jac = DMatrix::zeros(n, n);
                let mut p = z.clone();
                for j in 0..n {
                    p[j] = z[j] + EXP_JACOBIAN_STEP;
                    let plus = self.exp(data, &p)?;
                    p[j] = z[j] - EXP_JACOBIAN_STEP;
                    let minus = self.exp(data, &p)?;
                    p[j] = z[j];
                    jac.set_column(j, &((plus - minus) / (2.0 * EXP_JACOBIAN_STEP)));
                }
                Ok(jac)
            }
        }
    }

    /// `Dφ(q)` as a coefficient table.
    pub fn jacobian(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        match &self.kind {
            ChartKind::Affine { matrix, .. } => {
                self.field.check(q.as_slice())?;
                Ok(matrix.clone())
            }
            ChartKind::Normal(_) => {
                let z = self.forward(q)?;
                self.inverse_jacobian(&z)?
                    .try_inverse()
                    .ok_or_else(|| Error::InvalidArgument("exponential map is singular".into()))
            }
        }
    }

    /// `Dφ(q) : (T_qN, h_q) → (ℝ^{d+1}, e)`.
    pub fn differential(&self, q: &DVector<f64>) -> Result<LinearMapSample> {
        let j = self.jacobian(q)?;
        LinearMapSample::new(
            j,
            self.field.metric_at(q.as_slice())?,
            ConstMetric::euclidean(self.dim()),
        )
    }

    /// Coefficients of the pushforward metric `(Dφ⁻¹)ᵀ h (Dφ⁻¹)` at `z`.
    pub fn metric_coefficients(&self, z: &DVector<f64>) -> Result<DMatrix<f64>> {
        let q = self.inverse(z)?;
        let h = self.field.coefficients(q.as_slice())?;
        let j = self.inverse_jacobian(z)?;
        let m = j.transpose() * h * &j;
        Ok((&m + m.transpose()) * 0.5)
    }

    pub fn metric_at(&self, z: &DVector<f64>) -> Result<ConstMetric> {
        ConstMetric::symmetrized(self.metric_coefficients(z)?)
    }

    /// Christoffel symbols of the pushforward metric at `z`. Exact tensor
    /// transformation for affine charts; central differences otherwise.
    pub fn christoffel_at(&self, z: &DVector<f64>) -> Result<Christoffel> {
        match &self.kind {
            ChartKind::Affine { matrix, inverse } => {
                let q = self.inverse(z)?;
                let g = self.field.christoffel(q.as_slice())?;
                if g.max_abs() == 0.0 {
                    return Ok(g);
                }
                let n = self.dim();
                let mut out = Christoffel::zeros(n);
                for k in 0..n {
                    for i in 0..n {
                        for j in 0..n {
                            let mut s = 0.0;
                            for a in 0..n {
                                for b in 0..n {
                                    for c in 0..n {
                                        s += matrix[(k, a)]
                                            * g.get(a, b, c)
                                            * inverse[(b, i)]
                                            * inverse[(c, j)];
                                    }
                                }
                            }
                            out.set(k, i, j, s);
                        }
                    }
                }
                Ok(out)
            }
            ChartKind::Normal(_) => self
                .pushforward_metric()
                .christoffel_fd(z.as_slice(), NORMAL_CHART_DERIV_STEP),
        }
    }

    /// The pushed-forward metric as a field on `φ(U)`.
    pub fn pushforward_metric(&self) -> MetricField {
        if let ChartKind::Affine { matrix, .. } = &self.kind {
            let n = self.dim();
            if self.base.iter().all(|v| *v == 0.0)
                && *matrix == DMatrix::identity(n, n)
                && self.image == Region::Whole
            {
                return self.field.clone();
            }
        }
        let chart = self.clone();
        let patch_chart = self.clone();
        let step = match self.kind {
            ChartKind::Affine { .. } => self.field.deriv_step(),
            ChartKind::Normal(_) => NORMAL_CHART_DERIV_STEP,
        };
        MetricField::custom(
            format!("pushforward({})", self.field.name()),
            self.dim(),
            move |z| {
                let z = DVector::from_column_slice(z);
                chart
                    .metric_coefficients(&z)
                    .unwrap_or_else(|_| DMatrix::from_element(z.len(), z.len(), f64::NAN))
            },
            // wherever φ⁻¹ is defined, so differences may straddle ∂φ(U)
            Some(Arc::new(move |z: &[f64]| {
                patch_chart.inverse(&DVector::from_column_slice(z)).is_ok()
            })),
        )
        .with_deriv_step(step)
    }

    fn exp(&self, data: &NormalData, z: &DVector<f64>) -> Result<DVector<f64>> {
        let v = &data.frame * z;
        Ok(geodesic_flow(&self.field, &self.base, &v, data.steps)?.0)
    }

    fn log(&self, data: &NormalData, y: &DVector<f64>) -> Result<DVector<f64>> {
        let scale = 1.0 + y.norm();
        let mut z = &data.frame_inv * (y - &self.base);
        let mut refreshed = false;
        let mut jac_inv = self.newton_matrix(&z)?;
        let mut iter = 0;
        loop {
            let r = self.exp(data, &z)? - y;
            if r.norm() <= 1e-13 * scale {
                return Ok(z);
            }
            iter += 1;
            if iter > 40 {
                if refreshed {
                    return Err(Error::OutsidePatch {
                        point: y.as_slice().to_vec(),
                    });
                }
                refreshed = true;
                iter = 0;
                jac_inv = self.newton_matrix(&z)?;
            }
            z -= &jac_inv * r;
        }
    }

    fn newton_matrix(&self, z: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.inverse_jacobian(z)?
            .try_inverse()
            .ok_or_else(|| Error::InvalidArgument("exponential map is singular".into()))
    }
}

/// Riemannian normal coordinates at `q` on the ball of the given radius:
/// `φ⁻¹(z) = exp_q(Σ z_i E_i)` for the h-orthonormal frame `E = h(q)^{-1/2}`.
pub fn normal_coordinates(field: &MetricField, q: &DVector<f64>, radius: f64) -> Result<Chart> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "radius must be positive, got {radius}"
        )));
    }
    let h = field.metric_at(q.as_slice())?;
    let n = field.dim();
    let image = Region::Ball {
        center: vec![0.0; n],
        radius,
    };
    if field.is_constant() {
        return Chart::affine(field.clone(), q.clone(), h.sqrt_matrix(), image);
    }
    let frame = h.inv_sqrt_matrix();
    let frame_inv = h.sqrt_matrix();

    let mut directions: Vec<DVector<f64>> = Vec::new();
    for i in 0..n {
        for sign in [1.0, -1.0] {
            let mut z = DVector::zeros(n);
            z[i] = sign * radius;
            directions.push(z);
        }
    }
    for mask in 0..(1usize << n.min(4)) {
        let z = DVector::from_fn(n, |i, _| {
            let s = if i < 4 && mask & (1 << i) != 0 { -1.0 } else { 1.0 };
            s * radius / (n as f64).sqrt()
        });
        directions.push(z);
    }

    let shoot = |z: &DVector<f64>, steps: usize| -> Result<DVector<f64>> {
        geodesic_flow(field, q, &(&frame * z), steps)
            .map(|(y, _)| y)
            .map_err(|e| match e {
                Error::OutsidePatch { .. } => Error::GeodesicLeftPatch {
                    direction: z.as_slice().to_vec(),
                },
                other => other,
            })
    };

    let mut steps = 8;
    let mut previous: Vec<DVector<f64>> = directions
        .iter()
        .map(|z| shoot(z, steps))
        .collect::<Result<_>>()?;
    loop {
        let next_steps = steps * 2;
        let next: Vec<DVector<f64>> = directions
            .iter()
            .map(|z| shoot(z, next_steps))
            .collect::<Result<_>>()?;
        let change = previous
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        steps = next_steps;
        previous = next;
        if change < STEP_TOLERANCE || steps >= MAX_GEODESIC_STEPS {
            break;
        }
    }

    Ok(Chart {
        field: field.clone(),
        kind: ChartKind::Normal(Arc::new(NormalData {
            frame,
            frame_inv,
            steps,
        })),
        base: q.clone(),
        image,
    })
}

/// `φ^{(r)} = rθ(φ/r)` on `U`, zero outside.
#[derive(Clone, Debug)]
pub struct ExtendedChart {
    base: Chart,
    radius: f64,
    profile: CutoffProfile,
}

const CENTER_TOLERANCE: f64 = 1e-9;

pub fn extend_chart(chart: Chart, profile: CutoffProfile, r: f64) -> Result<ExtendedChart> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "cutoff radius must be positive, got {r}"
        )));
    }
    let n = chart.dim();
    if profile.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: profile.dim(),
        });
    }
    let center = chart.forward(chart.base_point()).map_err(|_| Error::ChartNotCentered {
        image: vec![f64::NAN; n],
    })?;
    if center.norm() > CENTER_TOLERANCE {
        return Err(Error::ChartNotCentered {
            image: center.as_slice().to_vec(),
        });
    }
    let needed = 2.0 * r;
    if !chart.image().contains_ball(&vec![0.0; n], needed) {
        return Err(Error::ChartTooSmall { needed });
    }
    // the region test does not see the patch boundary; probe the sphere
    let mut probes = Vec::new();
    for i in 0..n {
        for sign in [1.0, -1.0] {
            let mut z = DVector::zeros(n);
            z[i] = sign * needed;
            probes.push(z);
        }
    }
    probes.push(DVector::from_element(n, needed / (n as f64).sqrt()));
    probes.push(DVector::from_element(n, -needed / (n as f64).sqrt()));
    if probes.iter().any(|z| chart.inverse(z).is_err()) {
        return Err(Error::ChartTooSmall { needed });
    }
    Ok(ExtendedChart {
        base: chart,
        radius: r,
        profile,
    })
}

impl ExtendedChart {
    pub fn base(&self) -> &Chart {
        &self.base
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn profile(&self) -> &CutoffProfile {
        &self.profile
    }

    /// `φ(q)` when `q ∈ U`.
    pub fn chart_coords(&self, q: &DVector<f64>) -> Option<DVector<f64>> {
        let z = self.base.forward(q).ok()?;
        self.base.image().contains(z.as_slice()).then_some(z)
    }

    /// `q ∈ φ⁻¹(B(0, r))`, where the extension agrees with the chart.
    pub fn in_identity_zone(&self, q: &DVector<f64>) -> bool {
        self.chart_coords(q)
            .is_some_and(|z| z.norm() < self.radius)
    }

    pub fn value(&self, q: &DVector<f64>) -> DVector<f64> {
        match self.chart_coords(q) {
            Some(z) if z.norm() <= self.radius => z,
            Some(z) => self.profile.value(&(z / self.radius)) * self.radius,
            None => DVector::zeros(self.base.dim()),
        }
    }

    /// `Dφ^{(r)}(q) = Dθ(φ(q)/r)·Dφ(q)`, zero outside `U`.
    pub fn differential(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = self.base.dim();
        let Some(z) = self.chart_coords(q) else {
            return Ok(DMatrix::zeros(n, n));
        };
        let dtheta = self.profile.differential(&(z / self.radius));
        if dtheta.iter().all(|v| *v == 0.0) {
            return Ok(DMatrix::zeros(n, n));
        }
        Ok(dtheta * self.base.jacobian(q)?)
    }
}

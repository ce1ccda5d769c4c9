//! Scenario construction and the immersion family catalog.
//!
//! Every family has closed-form values; the anti-wrinkle profile is the
//! only one that needs quadrature (an arc-length integral).

use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::config::{
    const_metric, Config, FamilyKind, ReferenceKind, SourceMetric, TargetMetric,
};
use crate::error::{Error, Result};
use crate::immersions::{reference_shape_operator, DiscreteImmersion, GridDomain, ShapeField};
use crate::target_space::{stereographic_embedding, MetricField};

/// Gauss–Legendre nodes per grid interval of the anti-wrinkle profile.
const PROFILE_QUADRATURE: NonZeroUsize = NonZeroUsize::new(8).unwrap();

/// A validated configuration together with the objects it describes.
#[derive(Clone, Debug)]
pub struct Scenario {
    config: Config,
    domain: GridDomain,
    target: MetricField,
    family: Family,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScenarioSummary {
    pub name: String,
    pub family: &'static str,
    pub dim: usize,
    pub nodes_per_side: usize,
    pub spacing: f64,
    pub source_metric: String,
    pub target_metric: String,
    pub p: f64,
    pub seed: u64,
}

#[derive(Clone, Debug)]
struct Family {
    kind: FamilyKind,
    dim: usize,
    amplitude: f64,
    frequency: f64,
    radius: f64,
    origin: Vec<f64>,
    side: f64,
    center: Vec<f64>,
    rotation: DMatrix<f64>,
    translation: DVector<f64>,
}

/// Instantiates the grid, the target metric and the family generator.
pub fn build_scenario(config: &Config) -> Result<Scenario> {
    config.validate()?;
    let d = config.domain.dim;
    let origin = config.domain.origin.clone().unwrap_or_else(|| vec![0.0; d]);

    let source = match config.domain.metric {
        SourceMetric::Flat => MetricField::flat(d),
        SourceMetric::Constant => {
            let rows = config.domain.entries.as_deref().unwrap_or_default();
            MetricField::constant(const_metric("domain.entries", rows, d)?)
        }
    };
    let domain = GridDomain::new(origin.clone(), config.domain.side, config.domain.nodes, source)
        .map_err(|e| Error::config("domain", e.to_string()))?;

    let t = &config.target;
    let target = match t.metric {
        TargetMetric::Flat => MetricField::flat(d + 1),
        TargetMetric::Constant => {
            let rows = t.entries.as_deref().unwrap_or_default();
            MetricField::constant(const_metric("target.entries", rows, d + 1)?)
        }
        TargetMetric::Sphere => MetricField::sphere_stereographic(d + 1, t.radius.unwrap_or(1.0))
            .map_err(|e| Error::config("target.radius", e.to_string()))?,
        TargetMetric::SpherePolar => MetricField::sphere_polar(t.radius.unwrap_or(1.0))
            .map_err(|e| Error::config("target.radius", e.to_string()))?,
        TargetMetric::Warped => MetricField::warped(d + 1, t.rate.unwrap_or(1.0))
            .map_err(|e| Error::config("target.rate", e.to_string()))?,
    };

    let f = &config.family;
    let mut rotation = DMatrix::identity(d + 1, d + 1);
    let mut translation = DVector::zeros(d + 1);
    if let Some(rigid) = &f.rigid {
        let [i, j] = rigid.plane;
        let (s, c) = rigid.angle.sin_cos();
        rotation[(i, i)] = c;
        rotation[(j, j)] = c;
        rotation[(i, j)] = -s;
        rotation[(j, i)] = s;
        if let Some(tr) = &rigid.translation {
            translation = DVector::from_column_slice(tr);
        }
    }
    let family = Family {
        kind: f.kind,
        dim: d,
        amplitude: f.amplitude.unwrap_or(0.0),
        frequency: f.frequency.unwrap_or(1.0),
        radius: f.radius.unwrap_or(1.0),
        center: domain.center(),
        origin,
        side: config.domain.side,
        rotation,
        translation,
    };
    Ok(Scenario {
        config: config.clone(),
        domain,
        target,
        family,
    })
}

impl Scenario {
    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn domain(&self) -> &GridDomain {
        &self.domain
    }

    pub fn target(&self) -> &MetricField {
        &self.target
    }

    pub fn summary(&self) -> ScenarioSummary {
        ScenarioSummary {
            name: self.config.name.clone(),
            family: self.family.kind.name(),
            dim: self.domain.dim(),
            nodes_per_side: self.domain.nodes_per_side(),
            spacing: self.domain.spacing(),
            source_metric: self.domain.metric().name(),
            target_metric: self.target.name(),
            p: self.config.p,
            seed: self.config.seed,
        }
    }

    /// The family member `u_k` sampled on the grid.
    pub fn immersion(&self, k: u32) -> Result<DiscreteImmersion> {
        if k == 0 {
            return Err(Error::InvalidArgument("sequence index starts at 1".into()));
        }
        let fam = &self.family;
        let values: Vec<DVector<f64>> = match fam.kind {
            FamilyKind::AntiWrinkle => {
                let profile = anti_wrinkle_profile(
                    fam.amplitude,
                    fam.frequency * f64::from(k),
                    self.domain.spacing(),
                    self.domain.nodes_per_side(),
                );
                (0..self.domain.node_count())
                    .map(|i| {
                        let (x, y) = profile[self.domain.multi_index(i)[0]];
                        let p = self.domain.point(i);
                        let mut v = Vec::with_capacity(fam.dim + 1);
                        v.push(fam.origin[0] + x);
                        v.extend_from_slice(&p[1..]);
                        v.push(y);
                        fam.place(DVector::from_vec(v))
                    })
                    .collect()
            }
            _ => (0..self.domain.node_count())
                .map(|i| fam.place(fam.evaluate(&self.domain.point(i), k)))
                .collect(),
        };
        DiscreteImmersion::from_values(self.domain.clone(), self.target.clone(), values)
    }

    /// The configured reference shape operator field.
    pub fn reference(&self) -> Result<ShapeField> {
        let d = self.domain.dim();
        let r = &self.config.reference;
        match r.kind {
            ReferenceKind::Family => Ok(ShapeField::new(
                (0..self.domain.node_count())
                    .map(|i| Some(self.family.limit_shape(&self.domain.point(i))))
                    .collect(),
            )),
            ReferenceKind::Zero => Ok(ShapeField::zeros(&self.domain)),
            ReferenceKind::Scalar => {
                let c = r.value.unwrap_or(0.0);
                let metric = self.domain.metric().clone();
                reference_shape_operator(&self.domain, |x| {
                    metric.coefficients(x).expect("grid points lie in the source patch") * c
                })
            }
            ReferenceKind::Diag => {
                let diag = DVector::from_column_slice(r.values.as_deref().unwrap_or_default());
                if diag.len() != d {
                    return Err(Error::config("reference.values", format!("needs {d} values")));
                }
                reference_shape_operator(&self.domain, |_| DMatrix::from_diagonal(&diag))
            }
        }
    }
}

impl Family {
    fn place(&self, y: DVector<f64>) -> DVector<f64> {
        &self.rotation * y + &self.translation
    }

    fn plane(&self, x: &[f64], height: f64) -> DVector<f64> {
        let mut v = x.to_vec();
        v.push(height);
        DVector::from_vec(v)
    }

    fn evaluate(&self, x: &[f64], k: u32) -> DVector<f64> {
        let k = f64::from(k);
        let a = self.amplitude;
        match self.kind {
            FamilyKind::Flat => self.plane(x, 0.0),
            FamilyKind::Graph => self.plane(x, self.graph_height(x).0),
            FamilyKind::Cylinder => {
                let rho = self.radius;
                let t = x[0] / rho;
                let mut v = vec![rho * t.cos(), rho * t.sin()];
                v.extend_from_slice(&x[1..]);
                DVector::from_vec(v)
            }
            FamilyKind::SphereCap => {
                let y: Vec<f64> = x.iter().zip(&self.center).map(|(a, c)| a - c).collect();
                DVector::from_vec(stereographic_embedding(&y, self.radius))
            }
            FamilyKind::Wrinkle => {
                let s = x[0] - self.origin[0];
                let phase = 2.0 * std::f64::consts::PI * self.frequency * k * s;
                self.plane(x, a / (k * k) * phase.sin())
            }
            FamilyKind::Perturbation => self.plane(x, 0.0) + perturbation(x) * (a / k),
            FamilyKind::AntiWrinkle => unreachable!("tabulated profile"),
        }
    }

    /// `η = A Π sin(π f ξᵢ)` with its gradient and Hessian in `x`.
    fn graph_height(&self, x: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
        let d = self.dim;
        let w = std::f64::consts::PI * self.frequency / self.side;
        let (s, c): (Vec<f64>, Vec<f64>) = (0..d)
            .map(|i| (w * (x[i] - self.origin[i])).sin_cos())
            .unzip();
        let prod = |skip: &[usize]| -> f64 {
            (0..d).filter(|i| !skip.contains(i)).map(|i| s[i]).product()
        };
        let eta = self.amplitude * prod(&[]);
        let grad = DVector::from_fn(d, |i, _| self.amplitude * w * c[i] * prod(&[i]));
        let hess = DMatrix::from_fn(d, d, |i, j| {
            if i == j {
                -w * w * eta
            } else {
                self.amplitude * w * w * c[i] * c[j] * prod(&[i, j])
            }
        });
        (eta, grad, hess)
    }

    /// Shape operator of the limit surface in the orientation used by
    /// [`DiscreteImmersion`]; rigid motions leave it unchanged.
    fn limit_shape(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.dim;
        match self.kind {
            FamilyKind::Graph => {
                // upward normal: S = −(I + ∇η∇ηᵀ)⁻¹ D²η / √(1 + |∇η|²)
                let (_, grad, hess) = self.graph_height(x);
                let g = DMatrix::identity(d, d) + &grad * grad.transpose();
                let w = (1.0 + grad.norm_squared()).sqrt();
                -g.lu().solve(&hess).expect("first fundamental form is positive") / w
            }
            FamilyKind::Cylinder => {
                // the oriented normal points outward exactly when d is even
                let sign = if d.is_multiple_of(2) { 1.0 } else { -1.0 };
                let mut s = DMatrix::zeros(d, d);
                s[(0, 0)] = sign / self.radius;
                s
            }
            FamilyKind::SphereCap => DMatrix::identity(d, d) / self.radius,
            _ => DMatrix::zeros(d, d),
        }
    }
}

/// The fixed smooth field `w : ℝ^d → ℝ^{d+1}`,
/// `w_j(x) = sin(Σᵢ (1 + (i + j) mod 3) xᵢ + 0.7 j)`.
pub(crate) fn perturbation(x: &[f64]) -> DVector<f64> {
    DVector::from_fn(x.len() + 1, |j, _| {
        let phase: f64 = x
            .iter()
            .enumerate()
            .map(|(i, xi)| (1 + (i + j) % 3) as f64 * xi)
            .sum();
        (phase + 0.7 * j as f64).sin()
    })
}

/// `(X, Y)(s) = ∫₀ˢ (cos θ, sin θ)`, `θ = A sin(2π ω t)`, at `s = i h`.
fn anti_wrinkle_profile(amplitude: f64, omega: f64, h: f64, nodes: usize) -> Vec<(f64, f64)> {
    let quad = GaussLegendre::new(PROFILE_QUADRATURE);
    let theta = |t: f64| amplitude * (2.0 * std::f64::consts::PI * omega * t).sin();
    let mut out = Vec::with_capacity(nodes);
    let (mut x, mut y) = (0.0, 0.0);
    out.push((x, y));
    for i in 1..nodes {
        let (a, b) = ((i - 1) as f64 * h, i as f64 * h);
        x += quad.integrate(a, b, |t| theta(t).cos());
        y += quad.integrate(a, b, |t| theta(t).sin());
        out.push((x, y));
    }
    out
}

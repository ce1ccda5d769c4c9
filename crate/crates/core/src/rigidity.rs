//! Quantitative rigidity estimates, each evaluated as a measured left-hand
//! side against its labeled right-hand side terms. Unknown constants are set
//! to one, so a ratio `lhs / Σ terms` that stays bounded across a sweep is
//! the observable content of an estimate.
//!
//! All integrals here are against `dx` with the tensor trapezoid weights of
//! the grid, except the energies `E_s` and `E_b`, which keep their `dvol_g`
//! definition.

use std::collections::BTreeMap;
use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::immersions::{
    bending_energy, check_exponent, oriented_normal, sasaki_node_distances, stretching_energy,
    target_distance, DiscreteImmersion, GridDomain,
};
use crate::metric_core::{
    distance_to_isometries, frobenius_norm, metric_distance, nearest_isometry, ConstMetric,
    LinearMapSample,
};
use crate::target_space::{epsilon_isometric_check, ExtendedChart};
use crate::transport::SasakiOptions;

/// Node pairs examined by [`oscillation`].
pub const OSCILLATION_PAIRS: usize = 10_000;
/// Chart images probed for the ε-isometry hypothesis.
const EPSILON_PROBES: usize = 256;
const HYPOTHESIS_SLACK: f64 = 1e-12;
const UNIT_TOLERANCE: f64 = 1e-10;

/// `lhs / rhs`; zero when both vanish and undefined when only `rhs` does.
fn ratio(lhs: f64, rhs: f64) -> Option<f64> {
    if rhs > 0.0 {
        Some(lhs / rhs)
    } else if lhs == 0.0 {
        Some(0.0)
    } else {
        None
    }
}

fn serialize_rows<S: Serializer>(t: &LinearMapSample, s: S) -> Result<S::Ok, S::Error> {
    let c = t.coefficients();
    let rows: Vec<Vec<f64>> = (0..c.nrows())
        .map(|i| c.row(i).iter().copied().collect())
        .collect();
    rows.serialize(s)
}

/// `|T|_{e,h}`: the norm of a differential with the source metric replaced by
/// the Euclidean one.
fn euclidean_source_norm(t: &LinearMapSample) -> f64 {
    let e = LinearMapSample::new(
        t.coefficients().clone(),
        ConstMetric::euclidean(t.src_dim()),
        t.tgt_metric().clone(),
    )
    .expect("dimensions unchanged");
    frobenius_norm(&e)
}

fn differential_of(domain: &GridDomain, values: &[DVector<f64>], idx: usize) -> DMatrix<f64> {
    let cols: Vec<DVector<f64>> = (0..domain.dim())
        .map(|k| domain.difference(values, idx, k))
        .collect();
    DMatrix::from_columns(&cols)
}

/// `osc_Q g`: the largest entrywise distance between node metrics, over all
/// pairs when there are at most [`OSCILLATION_PAIRS`] of them and over a
/// fixed-seed sample of that size otherwise.
pub fn oscillation(domain: &GridDomain) -> f64 {
    if domain.metric().is_constant() {
        return 0.0;
    }
    let n = domain.node_count();
    let dist = |i: usize, j: usize| {
        metric_distance(domain.node_metric(i), domain.node_metric(j)).expect("one source dimension")
    };
    let mut best: f64 = 0.0;
    if n * (n - 1) / 2 <= OSCILLATION_PAIRS {
        for i in 0..n {
            for j in i + 1..n {
                best = best.max(dist(i, j));
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..OSCILLATION_PAIRS {
            let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
            best = best.max(dist(i, j));
        }
    }
    best
}

/// Where the flat rigidity estimate anchors its rotation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BasePoint {
    /// The node nearest the cube center.
    #[default]
    Center,
    Node(usize),
}

impl BasePoint {
    pub fn resolve(self, domain: &GridDomain) -> Result<usize> {
        match self {
            BasePoint::Center => {
                let mid = (domain.nodes_per_side() - 1) / 2;
                Ok(domain.flat_index(&vec![mid; domain.dim()]))
            }
            BasePoint::Node(i) if i < domain.node_count() => Ok(i),
            BasePoint::Node(i) => Err(Error::InvalidArgument(format!(
                "base node {i} is not a node of a grid with {} nodes",
                domain.node_count()
            ))),
        }
    }
}

/// Measured sides of a rigidity estimate. `rhs_terms` holds the additive
/// terms of the bound; `diagnostics` holds their ingredients and other
/// quantities that do not enter the sum.
#[derive(Clone, Debug, Serialize)]
pub struct RigidityReport {
    pub x0_index: usize,
    pub x0: Vec<f64>,
    #[serde(serialize_with = "serialize_rows")]
    pub rotation: LinearMapSample,
    pub lhs: f64,
    pub rhs_terms: BTreeMap<String, f64>,
    pub diagnostics: BTreeMap<String, f64>,
    pub rhs_total: f64,
    pub ratio: Option<f64>,
}

impl RigidityReport {
    fn assemble(
        domain: &GridDomain,
        x0: usize,
        rotation: LinearMapSample,
        lhs: f64,
        rhs_terms: BTreeMap<String, f64>,
        diagnostics: BTreeMap<String, f64>,
    ) -> Self {
        let rhs_total = rhs_terms.values().sum();
        Self {
            x0_index: x0,
            x0: domain.point(x0),
            rotation,
            lhs,
            ratio: ratio(lhs, rhs_total),
            rhs_terms,
            diagnostics,
            rhs_total,
        }
    }
}

struct FlatParts {
    rotation: LinearMapSample,
    lhs: f64,
    stretching: f64,
}

/// `R̄ ∈ SO(g(x₀), e)` nearest to the mean differential, `∫|Dv − R̄|^p_{g,e}`
/// and `∫dist^p(Dv, SO(g,e))`.
fn flat_parts(domain: &GridDomain, dv: &[DMatrix<f64>], p: f64, x0: usize) -> Result<FlatParts> {
    let d = domain.dim();
    let e = ConstMetric::euclidean(d);
    let mut mean = DMatrix::zeros(d, d);
    for (i, a) in dv.iter().enumerate() {
        mean += a * domain.weight(i);
    }
    mean /= domain.volume();
    let anchor = LinearMapSample::new(mean, domain.node_metric(x0).clone(), e.clone())?;
    let rotation = nearest_isometry(&anchor, true)?.map;
    let parts: Vec<(f64, f64)> = (0..dv.len())
        .into_par_iter()
        .map(|i| {
            let g = domain.node_metric(i);
            let gap = LinearMapSample::new(&dv[i] - rotation.coefficients(), g.clone(), e.clone())?;
            let map = LinearMapSample::new(dv[i].clone(), g.clone(), e.clone())?;
            let w = domain.weight(i);
            Ok((
                w * frobenius_norm(&gap).powf(p),
                w * distance_to_isometries(&map, true)?.powf(p),
            ))
        })
        .collect::<Result<_>>()?;
    Ok(FlatParts {
        rotation,
        lhs: parts.iter().map(|x| x.0).sum(),
        stretching: parts.iter().map(|x| x.1).sum(),
    })
}

/// Rigidity of an equidimensional grid map `v : (Q, g) → ℝ^d`:
/// `lhs = ∫|Dv − R|^p_{g,e}` against `|Q| osc(g)^p` and
/// `∫dist^p(Dv, SO(g,e))`, with `R ∈ SO(g(x₀), e)`.
pub fn flat_rigidity(
    values: &[DVector<f64>],
    domain: &GridDomain,
    p: f64,
    base: BasePoint,
) -> Result<RigidityReport> {
    check_exponent(p)?;
    let d = domain.dim();
    if values.len() != domain.node_count() {
        return Err(Error::GridMismatch);
    }
    if let Some(v) = values.iter().find(|v| v.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: v.len(),
        });
    }
    let x0 = base.resolve(domain)?;
    let dv: Vec<DMatrix<f64>> = (0..values.len())
        .into_par_iter()
        .map(|i| differential_of(domain, values, i))
        .collect();
    let flat = flat_parts(domain, &dv, p, x0)?;
    let osc = oscillation(domain);
    let terms = BTreeMap::from([
        ("oscillation".to_string(), domain.volume() * osc.powf(p)),
        ("stretching".to_string(), flat.stretching),
    ]);
    let diagnostics = BTreeMap::from([("osc_g".to_string(), osc)]);
    Ok(RigidityReport::assemble(
        domain,
        x0,
        flat.rotation,
        flat.lhs,
        terms,
        diagnostics,
    ))
}

/// Tensor Gauss–Legendre rule for `∫_{[-1,1]^d} f(z) Π(1 − |z_i|) dz`. The
/// weight is the density of `x − y` for independent uniform `x, y` in the
/// unit cube, so `Ψ(R)^p = ∬|R(x − y)|^p dx dy` becomes a single integral.
/// Each factor splits at the kink `z_i = 0`.
#[derive(Clone, Debug)]
pub struct DifferenceQuadrature {
    dim: usize,
    degree: usize,
    points: Vec<DVector<f64>>,
    weights: Vec<f64>,
}

impl DifferenceQuadrature {
    pub fn new(dim: usize, degree: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidArgument(format!(
                "source dimension must be 1, 2 or 3, got {dim}"
            )));
        }
        let deg = NonZeroUsize::new(degree)
            .ok_or_else(|| Error::InvalidArgument("quadrature degree must be positive".into()))?;
        let rule = GaussLegendre::new(deg);
        let mut line = Vec::with_capacity(2 * degree);
        for (a, b) in [(-1.0, 0.0), (0.0, 1.0)] {
            for &(x, w) in rule.as_node_weight_pairs() {
                let z: f64 = 0.5 * ((b - a) * x + (a + b));
                line.push((z, 0.5 * (b - a) * w * (1.0 - z.abs())));
            }
        }
        let m = line.len();
        let count = m.pow(dim as u32);
        let mut points = Vec::with_capacity(count);
        let mut weights = Vec::with_capacity(count);
        for k in 0..count {
            let mut rest = k;
            let mut z = DVector::zeros(dim);
            let mut w = 1.0;
            for i in 0..dim {
                let (zi, wi) = line[rest % m];
                rest /= m;
                z[i] = zi;
                w *= wi;
            }
            points.push(z);
            weights.push(w);
        }
        Ok(Self {
            dim,
            degree,
            points,
            weights,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    fn check(&self, r: &DMatrix<f64>) -> Result<()> {
        if r.ncols() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: r.ncols(),
            });
        }
        Ok(())
    }

    fn psi_pow(&self, r: &DMatrix<f64>, p: f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(z, w)| w * (r * z).norm().powf(p))
            .sum()
    }

    fn psi_pow_gradient(&self, r: &DMatrix<f64>, p: f64) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(r.nrows(), r.ncols());
        for (z, w) in self.points.iter().zip(&self.weights) {
            let rz = r * z;
            let len = rz.norm();
            if len > 0.0 {
                g += (rz * z.transpose()) * (w * p * len.powf(p - 2.0));
            }
        }
        g
    }

    /// `Ψ(R) = (∬_{[0,1]^d × [0,1]^d} |R(x − y)|^p dx dy)^{1/p}`.
    pub fn psi(&self, r: &DMatrix<f64>, p: f64) -> Result<f64> {
        check_exponent(p)?;
        self.check(r)?;
        Ok(self.psi_pow(r, p).powf(1.0 / p))
    }

    /// `Ψ_Q(R)` on a cube of side `side`, which scales as `side^{2d/p + 1}`.
    pub fn psi_on_cube(&self, r: &DMatrix<f64>, p: f64, side: f64) -> Result<f64> {
        Ok(side.powf(2.0 * self.dim as f64 / p + 1.0) * self.psi(r, p)?)
    }
}

#[derive(Clone, Debug)]
pub struct NormEstimateOptions {
    pub seed: u64,
    /// Random starts in addition to the coordinate-aligned ones.
    pub random_starts: usize,
    /// Gauss–Legendre degree on each half of `[-1, 1]`.
    pub quadrature_degree: usize,
    pub max_iterations: usize,
}

impl Default for NormEstimateOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            random_starts: 8,
            quadrature_degree: 12,
            max_iterations: 400,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct NormEstimate {
    pub dim: usize,
    pub tgt_dim: usize,
    pub p: f64,
    /// `min Ψ(R)` over `|R| = 1` on the unit cube.
    pub m: f64,
    /// `C = 1/m`.
    pub constant: f64,
    /// Largest minus smallest local minimum over all starts.
    pub spread: f64,
    pub starts: usize,
    pub quadrature_degree: usize,
    #[serde(skip)]
    pub minimizer: DMatrix<f64>,
}

/// Projected gradient descent on the unit Frobenius sphere with Armijo
/// backtracking. Returns the final point and its `Ψ`.
fn descend_on_sphere(
    quad: &DifferenceQuadrature,
    start: DMatrix<f64>,
    p: f64,
    iterations: usize,
) -> (DMatrix<f64>, f64) {
    let mut r = &start / start.norm();
    let mut f = quad.psi_pow(&r, p);
    let mut step = 1.0;
    for _ in 0..iterations {
        let g = quad.psi_pow_gradient(&r, p);
        let tangent = &g - &r * g.dot(&r);
        let gn2 = tangent.norm_squared();
        if gn2.sqrt() <= 1e-13 * f.max(f64::MIN_POSITIVE) {
            break;
        }
        let mut accepted = false;
        while step > 1e-16 {
            let mut trial = &r - &tangent * step;
            trial /= trial.norm();
            let ft = quad.psi_pow(&trial, p);
            if ft <= f - 1e-4 * step * gn2 {
                r = trial;
                f = ft;
                accepted = true;
                step *= 2.0;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (r, f.powf(1.0 / p))
}

/// Brute-force `m = min_{|R|=1} Ψ(R)` for `R : ℝ^d → ℝ^tgt_dim`, from every
/// coordinate-aligned start and `random_starts` seeded random ones. `Ψ` is
/// positively homogeneous of degree one, so `|R| ≤ (1/m) Ψ(R)` on the unit
/// cube. The side of `domain` plays no role; only its dimension is used.
pub fn norm_estimate_constant(
    domain: &GridDomain,
    p: f64,
    tgt_dim: usize,
    options: &NormEstimateOptions,
) -> Result<NormEstimate> {
    check_exponent(p)?;
    if tgt_dim == 0 {
        return Err(Error::InvalidArgument("target dimension must be positive".into()));
    }
    let d = domain.dim();
    let quad = DifferenceQuadrature::new(d, options.quadrature_degree)?;
    let mut starts = Vec::new();
    for i in 0..tgt_dim {
        for j in 0..d {
            let mut e = DMatrix::zeros(tgt_dim, d);
            e[(i, j)] = 1.0;
            starts.push(e);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    while starts.len() < tgt_dim * d + options.random_starts {
        let r = DMatrix::from_fn(tgt_dim, d, |_, _| rng.random_range(-1.0..1.0));
        if r.norm() > 1e-3 {
            starts.push(r);
        }
    }
    let results: Vec<(DMatrix<f64>, f64)> = starts
        .into_par_iter()
        .map(|s| descend_on_sphere(&quad, s, p, options.max_iterations))
        .collect();
    let (lo, hi) = results
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            (lo.min(r.1), hi.max(r.1))
        });
    let minimizer = results
        .iter()
        .find(|r| r.1 == lo)
        .map(|r| r.0.clone())
        .expect("at least one start");
    Ok(NormEstimate {
        dim: d,
        tgt_dim,
        p,
        m: lo,
        constant: 1.0 / lo,
        spread: hi - lo,
        starts: results.len(),
        quadrature_degree: options.quadrature_degree,
        minimizer,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormCheck {
    pub trials: usize,
    /// Largest `|R| / ((1/m)|Q|^{−1/d−2/p} Ψ_Q(R))`; at most one up to the
    /// optimizer gap.
    pub worst_ratio: f64,
    pub violations: usize,
}

/// Tests `|R| ≤ (1/m)|Q|^{−1/d−2/p} Ψ_Q(R)` on `trials` seeded random maps
/// over a cube of side `side`.
pub fn norm_estimate_check(estimate: &NormEstimate, side: f64, trials: usize, seed: u64) -> Result<NormCheck> {
    if !(side.is_finite() && side > 0.0) {
        return Err(Error::InvalidArgument(format!("cube side must be positive, got {side}")));
    }
    let quad = DifferenceQuadrature::new(estimate.dim, estimate.quadrature_degree)?;
    let (d, p) = (estimate.dim as f64, estimate.p);
    let volume = side.powf(d);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut violations = 0;
    for _ in 0..trials {
        let scale = 10f64.powf(rng.random_range(-2.0..2.0));
        let r = DMatrix::from_fn(estimate.tgt_dim, estimate.dim, |_, _| {
            scale * rng.random_range(-1.0..1.0)
        });
        let bound = volume.powf(-1.0 / d - 2.0 / p) * quad.psi_on_cube(&r, p, side)? / estimate.m;
        let q = r.norm() / bound;
        if q > 1.0 + 1e-9 {
            violations += 1;
        }
        worst = worst.max(q);
    }
    Ok(NormCheck {
        trials,
        worst_ratio: worst,
        violations,
    })
}

/// A positively oriented orthonormal basis `E₀` of `n⊥ ⊂ ℝ^{d+1}`, meaning
/// `det[E₀ | n] > 0`: Gram–Schmidt on the standard basis with the axis most
/// aligned with `n` left out.
pub fn oriented_frame(n: &DVector<f64>) -> DMatrix<f64> {
    let dim = n.len();
    let unit = n / n.norm();
    let skip = unit.iamax();
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(dim - 1);
    for k in (0..dim).filter(|&k| k != skip) {
        let mut v = DVector::zeros(dim);
        v[k] = 1.0;
        v -= &unit * unit[k];
        for c in &cols {
            let proj = c.dot(&v);
            v -= c * proj;
        }
        cols.push(v.normalize());
    }
    let mut frame = DMatrix::from_columns(&cols);
    let mut full = DMatrix::zeros(dim, dim);
    full.view_mut((0, 0), (dim, dim - 1)).copy_from(&frame);
    full.set_column(dim - 1, &unit);
    if full.determinant() < 0.0 {
        let last = dim - 2;
        let flipped = -frame.column(last);
        frame.set_column(last, &flipped);
    }
    frame
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProjectionReport {
    /// `|PT − T|_{g₀,e}`.
    pub projection_error: f64,
    /// `|T|_{g₀,e} |n₀ − n|`.
    pub projection_bound: f64,
    /// `dist(PT, SO(g₀, Π₀))`.
    pub projected_distance: f64,
    /// `dist(T, Ort(g₀, e))`.
    pub base_distance: f64,
    /// `(projected_distance − base_distance) / |n₀ − n|`, defined for
    /// orientation-preserving `T` and `n₀ ≠ n`.
    pub constant: Option<f64>,
    /// `det[T | n] > 0`.
    pub orientation_preserving: bool,
}

fn check_unit(v: &DVector<f64>, name: &str) -> Result<()> {
    if (v.norm() - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::InvalidArgument(format!(
            "{name} must be a unit vector, has length {}",
            v.norm()
        )));
    }
    Ok(())
}

/// Both sides of the projection estimates for `T : (ℝ^d, g₀) → n⊥` and the
/// projection `P` onto `Π₀ = n₀⊥`.
pub fn projection_error_check(
    t: &LinearMapSample,
    n0: &DVector<f64>,
    n: &DVector<f64>,
) -> Result<ProjectionReport> {
    let d = t.src_dim();
    if t.tgt_dim() != d + 1 || n0.len() != d + 1 || n.len() != d + 1 {
        return Err(Error::DimensionMismatch {
            expected: d + 1,
            found: if t.tgt_dim() != d + 1 { t.tgt_dim() } else { n0.len().min(n.len()) },
        });
    }
    if !t.tgt_metric().is_euclidean() {
        return Err(Error::InvalidArgument("T must map into Euclidean space".into()));
    }
    check_unit(n0, "n0")?;
    check_unit(n, "n")?;
    let a = t.coefficients();
    if (n.transpose() * a).norm() > UNIT_TOLERANCE * (1.0 + a.norm()) {
        return Err(Error::InvalidArgument("T does not map into the plane orthogonal to n".into()));
    }
    let p = DMatrix::identity(d + 1, d + 1) - n0 * n0.transpose();
    let pa = &p * a;
    let gap = (n0 - n).norm();
    let projection_error = frobenius_norm(&t.with_coefficients(&pa - a)?);
    let projection_bound = frobenius_norm(t) * gap;
    debug_assert!(projection_error <= projection_bound + 1e-12 * (1.0 + projection_bound));

    let within = |normal: &DVector<f64>, map: &DMatrix<f64>| -> Result<LinearMapSample> {
        LinearMapSample::new(
            oriented_frame(normal).transpose() * map,
            t.src_metric().clone(),
            ConstMetric::euclidean(d),
        )
    };
    let projected_distance = distance_to_isometries(&within(n0, &pa)?, true)?;
    let base_distance = distance_to_isometries(t, false)?;
    let orientation_preserving = within(n, a)?.coefficients().determinant() > 0.0;
    let constant = (orientation_preserving && gap > 0.0)
        .then(|| (projected_distance - base_distance) / gap);
    Ok(ProjectionReport {
        projection_error,
        projection_bound,
        projected_distance,
        base_distance,
        constant,
        orientation_preserving,
    })
}

/// A node set `F ⊂ Q` and the `dx` fraction `|Q∖F|/|Q|` of its complement.
#[derive(Clone, Debug, PartialEq)]
pub struct GoodSet {
    mask: Vec<bool>,
    fraction: f64,
}

impl GoodSet {
    pub fn new(domain: &GridDomain, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != domain.node_count() {
            return Err(Error::GridMismatch);
        }
        let outside: f64 = (0..mask.len())
            .filter(|&i| !mask[i])
            .map(|i| domain.weight(i))
            .fold(0.0, |a, w| a + w);
        Ok(Self {
            fraction: outside / domain.volume(),
            mask,
        })
    }

    pub fn full(domain: &GridDomain) -> Self {
        Self {
            mask: vec![true; domain.node_count()],
            fraction: 0.0,
        }
    }

    /// `F = u⁻¹(φ⁻¹(B(0, r)))`.
    pub fn from_chart(u: &DiscreteImmersion, ext: &ExtendedChart) -> Self {
        let mask = u.values().iter().map(|q| ext.in_identity_zone(q)).collect();
        Self::new(u.domain(), mask).expect("one flag per node")
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.mask[idx]
    }

    pub fn fraction(&self) -> f64 {
        self.fraction
    }

    pub fn nodes(&self) -> Vec<usize> {
        (0..self.mask.len()).filter(|&i| self.mask[i]).collect()
    }
}

/// The chart parameters of the local estimates: `δ` bounds the relative
/// size of `Q∖F` and `ε` the chart's deviation from an isometry.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ChartHypotheses {
    pub delta: f64,
    pub epsilon: f64,
}

/// Checks the hypotheses on `(u, F)` and returns the ε measured on the
/// chart images of `F`. The ε-isometry is only probed there, on at most
/// [`EPSILON_PROBES`] nodes.
fn check_hypotheses(
    label: &str,
    u: &DiscreteImmersion,
    ext: &ExtendedChart,
    good: &GoodSet,
    hyp: &ChartHypotheses,
    p: f64,
) -> Result<f64> {
    if !(0.0..1.0).contains(&hyp.delta) {
        return Err(Error::InvalidArgument(format!("delta must lie in [0, 1), got {}", hyp.delta)));
    }
    if !(hyp.epsilon.is_finite() && hyp.epsilon >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be nonnegative, got {}",
            hyp.epsilon
        )));
    }
    if good.mask.len() != u.domain().node_count() {
        return Err(Error::GridMismatch);
    }
    if ext.base().dim() != u.target().dim() {
        return Err(Error::DimensionMismatch {
            expected: u.target().dim(),
            found: ext.base().dim(),
        });
    }
    let allowed = hyp.delta.powf(p);
    if good.fraction > allowed + HYPOTHESIS_SLACK {
        return Err(Error::Hypothesis(format!(
            "{label}: |Q∖F|/|Q| = {:.6e} exceeds δ^p = {allowed:.6e}",
            good.fraction
        )));
    }
    let nodes = good.nodes();
    if nodes.is_empty() {
        return Err(Error::Hypothesis(format!("{label}: the good set F is empty")));
    }
    if let Some(&i) = nodes.iter().find(|&&i| !ext.in_identity_zone(u.value(i))) {
        return Err(Error::Hypothesis(format!(
            "{label}: u(F) leaves φ⁻¹(B(0, r)) at node {i}"
        )));
    }
    let stride = nodes.len().div_ceil(EPSILON_PROBES);
    let samples: Vec<DVector<f64>> = nodes
        .iter()
        .step_by(stride)
        .map(|&i| ext.chart_coords(u.value(i)).expect("inside the identity zone"))
        .collect();
    let measured = epsilon_isometric_check(ext.base(), &samples)?.epsilon;
    if measured > hyp.epsilon * (1.0 + 1e-9) + HYPOTHESIS_SLACK {
        return Err(Error::Hypothesis(format!(
            "{label}: the chart is only {measured:.6e}-isometric on u(F), declared ε = {}",
            hyp.epsilon
        )));
    }
    Ok(measured)
}

/// The three parts of `𝓔(u)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnergyParts {
    /// `(1/r^p) ∫_{Q∖F} |du|^p_{e,h} dx`.
    pub outside: f64,
    /// `∫_Q |du|^p_{e,h} dx`.
    pub differential: f64,
    /// `E_b(u)`.
    pub bending: f64,
}

impl EnergyParts {
    pub fn total(&self) -> f64 {
        self.outside + self.differential + self.bending
    }

    fn compute(u: &DiscreteImmersion, radius: f64, mask: &[bool], p: f64) -> Result<Self> {
        let domain = u.domain();
        let mut outside = 0.0;
        let mut differential = 0.0;
        for (i, &inside) in mask.iter().enumerate() {
            let part = domain.weight(i) * euclidean_source_norm(u.differential(i)).powf(p);
            differential += part;
            if !inside {
                outside += part;
            }
        }
        Ok(Self {
            outside: outside / radius.powf(p),
            differential,
            bending: bending_energy(u, p)?,
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct NormalFieldReport {
    /// `ñ(x) = Dφ^{(r)}(u(x)) ν(x)` per node.
    #[serde(skip)]
    pub normals: Vec<DVector<f64>>,
    /// `|Dñ(x)|` per node.
    #[serde(skip)]
    pub derivative_norms: Vec<f64>,
    /// `∫ |Dñ|^p dx`.
    pub lhs: f64,
    pub energy: EnergyParts,
    /// `lhs / 𝓔(u)`.
    pub constant: Option<f64>,
    /// `|Q∖F|/|Q|` for `F = u⁻¹(φ⁻¹(B(0, r)))`.
    pub outside_fraction: f64,
}

fn pushed_normals(u: &DiscreteImmersion, ext: &ExtendedChart) -> Result<(Vec<DMatrix<f64>>, Vec<DVector<f64>>)> {
    let dphi: Vec<DMatrix<f64>> = (0..u.domain().node_count())
        .into_par_iter()
        .map(|i| ext.differential(u.value(i)))
        .collect::<Result<_>>()?;
    let normals = dphi
        .iter()
        .enumerate()
        .map(|(i, j)| j * u.normal_vector(i))
        .collect();
    Ok((dphi, normals))
}

/// The Euclidean pushforward `ñ` of the unit normal under `φ^{(r)}`, its
/// finite-difference derivative, and `∫|Dñ|^p dx` against `𝓔(u)`.
pub fn euclidean_normal_field(
    u: &DiscreteImmersion,
    ext: &ExtendedChart,
    p: f64,
) -> Result<NormalFieldReport> {
    check_exponent(p)?;
    if ext.base().dim() != u.target().dim() {
        return Err(Error::DimensionMismatch {
            expected: u.target().dim(),
            found: ext.base().dim(),
        });
    }
    let domain = u.domain();
    let (_, normals) = pushed_normals(u, ext)?;
    let derivative_norms: Vec<f64> = (0..normals.len())
        .into_par_iter()
        .map(|i| differential_of(domain, &normals, i).norm())
        .collect();
    let lhs = derivative_norms
        .iter()
        .enumerate()
        .map(|(i, n)| domain.weight(i) * n.powf(p))
        .sum();
    let good = GoodSet::from_chart(u, ext);
    let energy = EnergyParts::compute(u, ext.radius(), &good.mask, p)?;
    Ok(NormalFieldReport {
        normals,
        derivative_norms,
        lhs,
        constant: ratio(lhs, energy.total()),
        energy,
        outside_fraction: good.fraction,
    })
}

/// Local rigidity of a codimension-one immersion read through an extended
/// chart, executed as the constructive argument:
///
/// 1. `ũ = φ^{(r)}∘u` and `ñ = Dφ^{(r)} ν`;
/// 2. `x₀ ∈ F` minimizes `∫|ñ(x) − ñ(x₀)|^p dx`;
/// 3. `Π₀ = n(x₀)⊥` for the Euclidean oriented normal `n` of `Dũ`, and
///    `v = T⁻¹Pũ` with `T` the oriented frame of `Π₀`;
/// 4. flat rigidity of `v` anchored at `x₀` gives `R̄`;
/// 5. `R = T R̄` and `lhs = ∫|Dũ − R|^p_{g,e}`.
pub fn local_rigidity_codim1(
    u: &DiscreteImmersion,
    ext: &ExtendedChart,
    good: &GoodSet,
    hyp: ChartHypotheses,
    p: f64,
) -> Result<RigidityReport> {
    check_exponent(p)?;
    let measured_epsilon = check_hypotheses("u", u, ext, good, &hyp, p)?;
    let domain = u.domain();
    let d = domain.dim();
    let (dphi, tilde) = pushed_normals(u, ext)?;
    let du_tilde: Vec<DMatrix<f64>> = dphi
        .iter()
        .enumerate()
        .map(|(i, j)| j * u.differential(i).coefficients())
        .collect();

    let spread: Vec<(usize, f64)> = good
        .nodes()
        .into_par_iter()
        .map(|z| {
            let s = tilde
                .iter()
                .enumerate()
                .map(|(x, n)| domain.weight(x) * (n - &tilde[z]).norm().powf(p))
                .sum();
            (z, s)
        })
        .collect();
    let (x0, spread0) = spread
        .iter()
        .copied()
        .fold((usize::MAX, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best });

    let (n0, regular) = oriented_normal(&LinearMapSample::euclidean(du_tilde[x0].clone()));
    if !regular {
        return Err(Error::Hypothesis(format!(
            "u: D(φ^(r)∘u) is rank deficient at the selected node {x0}"
        )));
    }
    let frame = oriented_frame(&n0);
    let dv: Vec<DMatrix<f64>> = du_tilde.iter().map(|a| frame.transpose() * a).collect();
    let flat = flat_parts(domain, &dv, p, x0)?;
    let rotation = LinearMapSample::new(
        &frame * flat.rotation.coefficients(),
        domain.node_metric(x0).clone(),
        ConstMetric::euclidean(d + 1),
    )?;
    let e = ConstMetric::euclidean(d + 1);
    let lhs: f64 = (0..du_tilde.len())
        .into_par_iter()
        .map(|i| {
            let gap = LinearMapSample::new(
                &du_tilde[i] - rotation.coefficients(),
                domain.node_metric(i).clone(),
                e.clone(),
            )?;
            Ok(domain.weight(i) * frobenius_norm(&gap).powf(p))
        })
        .collect::<Result<Vec<f64>>>()?
        .iter()
        .sum();

    let energy = EnergyParts::compute(u, ext.radius(), &good.mask, p)?;
    let volume = domain.volume();
    let osc = oscillation(domain);
    let factor = domain.diameter().powf(p) / (1.0 - hyp.delta.powf(p));
    let terms = BTreeMap::from([
        ("delta".to_string(), volume * hyp.delta.powf(p)),
        ("epsilon".to_string(), volume * hyp.epsilon.powf(p)),
        ("oscillation".to_string(), volume * osc.powf(p)),
        ("stretching".to_string(), stretching_energy(u, p)?),
        ("normal_variation".to_string(), factor * energy.total()),
    ]);
    let normal_gap = (&n0 - tilde[x0].normalize()).norm();
    let diagnostics = BTreeMap::from([
        ("energy_outside".to_string(), energy.outside),
        ("energy_differential".to_string(), energy.differential),
        ("energy_bending".to_string(), energy.bending),
        ("energy_total".to_string(), energy.total()),
        ("diameter_factor".to_string(), factor),
        ("normal_gap".to_string(), normal_gap),
        ("normal_spread".to_string(), spread0),
        ("flat_lhs".to_string(), flat.lhs),
        ("flat_stretching".to_string(), flat.stretching),
        ("outside_fraction".to_string(), good.fraction),
        ("measured_epsilon".to_string(), measured_epsilon),
        ("osc_g".to_string(), osc),
    ]);
    Ok(RigidityReport::assemble(domain, x0, rotation, lhs, terms, diagnostics))
}

#[derive(Clone, Debug, Serialize)]
pub struct ReversePoincareReport {
    /// `∫_Q d_σ^p(du₁, du₂) dx` with the Sasaki upper bound.
    pub lhs: f64,
    /// The same integral over `F₁ ∩ F₂`.
    pub lhs_good: f64,
    pub rhs_terms: BTreeMap<String, f64>,
    pub diagnostics: BTreeMap<String, f64>,
    pub rhs_total: f64,
    pub ratio: Option<f64>,
}

/// The `W^{1,p}` distance of two immersions controlled by their `L^p`
/// distance: `∫d_σ^p(du₁, du₂) dx` against the volume, stretching, bending
/// and `L^p` terms of the bound.
#[allow(clippy::too_many_arguments)]
pub fn reverse_poincare_check(
    u1: &DiscreteImmersion,
    u2: &DiscreteImmersion,
    ext: &ExtendedChart,
    f1: &GoodSet,
    f2: &GoodSet,
    hyp: ChartHypotheses,
    p: f64,
    sasaki: &SasakiOptions,
) -> Result<ReversePoincareReport> {
    check_exponent(p)?;
    u1.check_compatible(u2)?;
    let eps1 = check_hypotheses("u1", u1, ext, f1, &hyp, p)?;
    let eps2 = check_hypotheses("u2", u2, ext, f2, &hyp, p)?;
    let domain = u1.domain();
    let sigma = sasaki_node_distances(u1, u2, sasaki)?;
    let gaps: Vec<f64> = (0..domain.node_count())
        .into_par_iter()
        .map(|i| target_distance(u1.target(), u1.value(i), u2.value(i)))
        .collect::<Result<_>>()?;
    let mut lhs = 0.0;
    let mut lhs_good = 0.0;
    let mut lp = 0.0;
    for i in 0..domain.node_count() {
        let w = domain.weight(i);
        let part = w * sigma[i].powf(p);
        lhs += part;
        if f1.contains(i) && f2.contains(i) {
            lhs_good += part;
        }
        lp += w * gaps[i].powf(p);
    }

    let volume = domain.volume();
    let dp = hyp.delta.powf(p);
    let r = ext.radius();
    let osc = oscillation(domain);
    let factor = domain.diameter().powf(p) / (1.0 - dp);
    let stretching = stretching_energy(u1, p)?.max(stretching_energy(u2, p)?);
    let bending = bending_energy(u1, p)?.max(bending_energy(u2, p)?);
    let terms = BTreeMap::from([
        (
            "volume".to_string(),
            volume
                * (dp + hyp.epsilon.powf(p) + osc.powf(p) + factor * (1.0 + dp / r.powf(p))),
        ),
        ("stretching".to_string(), (1.0 + r.powf(-p)) * stretching),
        ("bending".to_string(), factor * bending),
        (
            "lp".to_string(),
            (1.0 + volume.powf(-p / domain.dim() as f64)) * lp,
        ),
    ]);
    let diagnostics = BTreeMap::from([
        ("lp_integral".to_string(), lp),
        ("max_stretching".to_string(), stretching),
        ("max_bending".to_string(), bending),
        ("osc_g".to_string(), osc),
        ("diameter_factor".to_string(), factor),
        ("measured_epsilon".to_string(), eps1.max(eps2)),
    ]);
    let rhs_total = terms.values().sum();
    Ok(ReversePoincareReport {
        lhs,
        lhs_good,
        ratio: ratio(lhs, rhs_total),
        rhs_terms: terms,
        diagnostics,
        rhs_total,
    })
}

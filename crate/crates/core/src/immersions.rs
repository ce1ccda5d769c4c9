//! Codimension-1 immersions `u : (Q, g) → (N, h)` sampled on a uniform grid
//! over a cube `Q ⊂ ℝ^d`, with `dim N = d + 1`.
//!
//! Differentials are second-order finite differences (central inside,
//! one-sided at the boundary) and integrals use the tensor trapezoid rule, so
//! every derived quantity converges at order two on smooth inputs.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::metric_core::{
    distance_to_isometries, frobenius_norm, svd, ConstMetric, LinearMapSample, RANK_TOLERANCE,
};
use crate::target_space::{ChristoffelField, MetricField};
use crate::transport::{geodesic_between, sasaki_distance_maps, MapAt, SasakiOptions, TangentAt};

/// Symmetry tolerance for reference second fundamental forms, relative to `|B|`.
const SYMMETRY_TOLERANCE: f64 = 1e-12;


pub(crate) fn check_exponent(p: f64) -> Result<()> {
    if p.is_finite() && p > 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidExponent(p))
    }
}

/// A uniform grid with `nodes_per_side^d` nodes on the closed cube
/// `origin + [0, side]^d`, carrying a source metric `g`.
#[derive(Clone, Debug)]
pub struct GridDomain {
    dim: usize,
    side: f64,
    nodes_per_side: usize,
    origin: Vec<f64>,
    metric: MetricField,
    node_metrics: Vec<ConstMetric>,
    lambda: f64,
}

impl GridDomain {
    pub fn new(origin: Vec<f64>, side: f64, nodes_per_side: usize, metric: MetricField) -> Result<Self> {
        let dim = origin.len();
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidArgument(format!(
                "source dimension must be 1, 2 or 3, got {dim}"
            )));
        }
        if metric.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: metric.dim(),
            });
        }
        if !(side.is_finite() && side > 0.0) {
            return Err(Error::InvalidArgument(format!("side must be positive, got {side}")));
        }
        if nodes_per_side < 3 {
            return Err(Error::InvalidArgument(
                "second-order stencils need at least 3 nodes per side".into(),
            ));
        }
        let mut grid = Self {
            dim,
            side,
            nodes_per_side,
            origin,
            metric,
            node_metrics: Vec::new(),
            lambda: 1.0,
        };
        grid.node_metrics = (0..grid.node_count())
            .into_par_iter()
            .map(|i| grid.metric.metric_at(&grid.point(i)))
            .collect::<Result<_>>()?;
        grid.lambda = grid
            .node_metrics
            .iter()
            .map(ConstMetric::comparability)
            .fold(1.0, f64::max);
        Ok(grid)
    }

    /// `[0, 1]^d` with the Euclidean metric.
    pub fn unit_cube(dim: usize, nodes_per_side: usize) -> Result<Self> {
        Self::new(vec![0.0; dim], 1.0, nodes_per_side, MetricField::flat(dim))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn nodes_per_side(&self) -> usize {
        self.nodes_per_side
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn metric(&self) -> &MetricField {
        &self.metric
    }

    /// Smallest `λ ≥ 1` with `λ⁻¹·e ≤ g ≤ λ·e` on every node.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn node_count(&self) -> usize {
        self.nodes_per_side.pow(self.dim as u32)
    }

    pub fn spacing(&self) -> f64 {
        self.side / (self.nodes_per_side - 1) as f64
    }

    /// Lebesgue measure `|Q|`.
    pub fn volume(&self) -> f64 {
        self.side.powi(self.dim as i32)
    }

    /// Euclidean diameter of `Q`.
    pub fn diameter(&self) -> f64 {
        self.side * (self.dim as f64).sqrt()
    }

    pub fn center(&self) -> Vec<f64> {
        self.origin.iter().map(|o| o + 0.5 * self.side).collect()
    }

    /// Axis 0 varies fastest.
    pub fn multi_index(&self, idx: usize) -> Vec<usize> {
        let m = self.nodes_per_side;
        let mut rest = idx;
        (0..self.dim)
            .map(|_| {
                let i = rest % m;
                rest /= m;
                i
            })
            .collect()
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi
            .iter()
            .rev()
            .fold(0, |acc, &i| acc * self.nodes_per_side + i)
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        let h = self.spacing();
        self.multi_index(idx)
            .iter()
            .zip(&self.origin)
            .map(|(&i, o)| o + i as f64 * h)
            .collect()
    }

    /// `g` at node `idx`.
    pub fn node_metric(&self, idx: usize) -> &ConstMetric {
        &self.node_metrics[idx]
    }

    /// Trapezoid weight of node `idx` for `dx`.
    pub fn weight(&self, idx: usize) -> f64 {
        let h = self.spacing();
        let last = self.nodes_per_side - 1;
        self.multi_index(idx)
            .iter()
            .map(|&i| if i == 0 || i == last { 0.5 * h } else { h })
            .product()
    }

    /// Trapezoid weight of node `idx` for `dvol_g = √det G dx`.
    pub fn volume_weight(&self, idx: usize) -> f64 {
        self.weight(idx) * self.node_metrics[idx].entries().determinant().sqrt()
    }

    /// The closed subcube with `nodes` nodes per side whose lowest corner is
    /// the node `start`. Its nodes are nodes of `self`.
    pub fn subcube(&self, start: &[usize], nodes: usize) -> Result<Self> {
        let map = self.subcube_map(start, nodes)?;
        let h = self.spacing();
        let origin = start
            .iter()
            .zip(&self.origin)
            .map(|(&s, o)| o + s as f64 * h)
            .collect();
        Ok(Self {
            dim: self.dim,
            side: (nodes - 1) as f64 * h,
            nodes_per_side: nodes,
            origin,
            metric: self.metric.clone(),
            node_metrics: map.iter().map(|&i| self.node_metrics[i].clone()).collect(),
            lambda: map
                .iter()
                .map(|&i| self.node_metrics[i].comparability())
                .fold(1.0, f64::max),
        })
    }

    /// Parent index of every subcube node, in subcube order.
    pub(crate) fn subcube_map(&self, start: &[usize], nodes: usize) -> Result<Vec<usize>> {
        if start.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: start.len(),
            });
        }
        if nodes < 3 || start.iter().any(|&s| s + nodes > self.nodes_per_side) {
            return Err(Error::InvalidArgument(format!(
                "subcube at {start:?} with {nodes} nodes per side does not fit a grid of {}",
                self.nodes_per_side
            )));
        }
        let count = nodes.pow(self.dim as u32);
        Ok((0..count)
            .map(|k| {
                let mut rest = k;
                let multi: Vec<usize> = start
                    .iter()
                    .map(|&s| {
                        let i = rest % nodes;
                        rest /= nodes;
                        s + i
                    })
                    .collect();
                self.flat_index(&multi)
            })
            .collect())
    }

    /// Same nodes and the same metric values on them.
    pub fn same_grid(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.nodes_per_side == other.nodes_per_side
            && self.side == other.side
            && self.origin == other.origin
            && self.node_metrics == other.node_metrics
    }

    /// Nodes and coefficients `(node, c)` of the second-order difference
    /// quotient along `axis` at `idx`.
    fn stencil(&self, idx: usize, axis: usize) -> [(usize, f64); 3] {
        let stride = self.nodes_per_side.pow(axis as u32);
        let i = self.multi_index(idx)[axis];
        let inv = 1.0 / (2.0 * self.spacing());
        if i == 0 {
            [(idx, -3.0 * inv), (idx + stride, 4.0 * inv), (idx + 2 * stride, -inv)]
        } else if i == self.nodes_per_side - 1 {
            [(idx, 3.0 * inv), (idx - stride, -4.0 * inv), (idx - 2 * stride, inv)]
        } else {
            [(idx - stride, -inv), (idx + stride, inv), (idx, 0.0)]
        }
    }

    pub(crate) fn difference(&self, values: &[DVector<f64>], idx: usize, axis: usize) -> DVector<f64> {
        let mut out = DVector::zeros(values[idx].len());
        for (node, c) in self.stencil(idx, axis) {
            if c != 0.0 {
                out.axpy(c, &values[node], 1.0);
            }
        }
        out
    }
}

/// Per-node `d × d` tables of linear maps of the source tangent space.
/// `None` marks nodes where the field is undefined.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeField {
    tables: Vec<Option<DMatrix<f64>>>,
    residuals: Vec<f64>,
}

impl ShapeField {
    pub fn new(tables: Vec<Option<DMatrix<f64>>>) -> Self {
        let residuals = vec![0.0; tables.len()];
        Self { tables, residuals }
    }

    pub fn zeros(domain: &GridDomain) -> Self {
        let d = domain.dim();
        Self::new(vec![Some(DMatrix::zeros(d, d)); domain.node_count()])
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    pub fn table(&self, idx: usize) -> Option<&DMatrix<f64>> {
        self.tables[idx].as_ref()
    }

    /// Least-squares residual `|du∘S_u − K∘dν|_{g,h}` of the defining system;
    /// zero for prescribed fields.
    pub fn residual(&self, idx: usize) -> f64 {
        self.residuals[idx]
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    pub fn defined_count(&self) -> usize {
        self.tables.iter().filter(|t| t.is_some()).count()
    }

    fn restricted(&self, map: &[usize]) -> Self {
        Self {
            tables: map.iter().map(|&i| self.tables[i].clone()).collect(),
            residuals: map.iter().map(|&i| self.residuals[i]).collect(),
        }
    }
}

/// `S = G⁻¹B` per node, the reference shape operator of a symmetric
/// 2-tensor `b` with coefficient table `B(x)`.
pub fn reference_shape_operator(
    domain: &GridDomain,
    b: impl Fn(&[f64]) -> DMatrix<f64>,
) -> Result<ShapeField> {
    let d = domain.dim();
    let mut tables = Vec::with_capacity(domain.node_count());
    for idx in 0..domain.node_count() {
        let bx = b(&domain.point(idx));
        if bx.shape() != (d, d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: bx.nrows(),
            });
        }
        if (&bx - bx.transpose()).norm() > SYMMETRY_TOLERANCE * (1.0 + bx.norm()) {
            return Err(Error::InvalidArgument(format!(
                "second fundamental form is not symmetric at node {idx}"
            )));
        }
        tables.push(Some(domain.node_metric(idx).inverse_matrix() * bx));
    }
    Ok(ShapeField::new(tables))
}

/// A grid immersion with its differential, oriented unit normal,
/// `K∘dν` and induced shape operator computed once on construction.
#[derive(Clone, Debug)]
pub struct DiscreteImmersion {
    domain: GridDomain,
    target: MetricField,
    values: Vec<DVector<f64>>,
    du: Vec<LinearMapSample>,
    normals: Vec<DVector<f64>>,
    regular: Vec<bool>,
    covariant: Vec<Option<LinearMapSample>>,
    shape: ShapeField,
}

struct NodeFrame {
    du: LinearMapSample,
    normal: DVector<f64>,
    regular: bool,
}

impl DiscreteImmersion {
    pub fn from_fn(
        domain: GridDomain,
        target: MetricField,
        f: impl Fn(&[f64]) -> DVector<f64> + Sync,
    ) -> Result<Self> {
        let values = (0..domain.node_count())
            .into_par_iter()
            .map(|i| f(&domain.point(i)))
            .collect();
        Self::from_values(domain, target, values)
    }

    pub fn from_values(domain: GridDomain, target: MetricField, values: Vec<DVector<f64>>) -> Result<Self> {
        let d = domain.dim();
        if target.dim() != d + 1 {
            return Err(Error::DimensionMismatch {
                expected: d + 1,
                found: target.dim(),
            });
        }
        if values.len() != domain.node_count() {
            return Err(Error::GridMismatch);
        }
        for v in &values {
            if v.len() != d + 1 {
                return Err(Error::DimensionMismatch {
                    expected: d + 1,
                    found: v.len(),
                });
            }
            target.check(v.as_slice())?;
        }

        let frames: Vec<NodeFrame> = (0..values.len())
            .into_par_iter()
            .map(|idx| {
                let a = DMatrix::from_columns(
                    &(0..d).map(|k| domain.difference(&values, idx, k)).collect::<Vec<_>>(),
                );
                let h = target.metric_at(values[idx].as_slice())?;
                let du = LinearMapSample::new(a, domain.node_metric(idx).clone(), h)?;
                let (normal, regular) = oriented_normal(&du);
                Ok(NodeFrame { du, normal, regular })
            })
            .collect::<Result<_>>()?;
        let mut du = Vec::with_capacity(frames.len());
        let mut normals = Vec::with_capacity(frames.len());
        let mut regular = Vec::with_capacity(frames.len());
        for f in frames {
            du.push(f.du);
            normals.push(f.normal);
            regular.push(f.regular);
        }

        let christoffel = ChristoffelField::new(target.clone());
        let covariant: Vec<Option<LinearMapSample>> = (0..values.len())
            .into_par_iter()
            .map(|idx| {
                let neighbours_regular = regular[idx]
                    && (0..d).all(|k| {
                        domain
                            .stencil(idx, k)
                            .iter()
                            .all(|&(n, c)| c == 0.0 || regular[n])
                    });
                if !neighbours_regular {
                    return Ok(None);
                }
                let gamma = christoffel.at(values[idx].as_slice())?;
                let cols: Vec<DVector<f64>> = (0..d)
                    .map(|k| {
                        domain.difference(&normals, idx, k)
                            + gamma.contract(du[idx].coefficients().column(k).as_slice(), normals[idx].as_slice())
                    })
                    .collect();
                Ok(Some(du[idx].with_coefficients(DMatrix::from_columns(&cols))?))
            })
            .collect::<Result<_>>()?;

        let (tables, residuals): (Vec<_>, Vec<_>) = du
            .par_iter()
            .zip(&covariant)
            .map(|(du, k)| match k {
                Some(k) => {
                    let (s, res) = solve_shape(du, k);
                    (Some(s), res)
                }
                None => (None, 0.0),
            })
            .unzip();

        Ok(Self {
            domain,
            target,
            values,
            du,
            normals,
            regular,
            covariant,
            shape: ShapeField { tables, residuals },
        })
    }

    pub fn domain(&self) -> &GridDomain {
        &self.domain
    }

    pub fn target(&self) -> &MetricField {
        &self.target
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    pub fn value(&self, idx: usize) -> &DVector<f64> {
        &self.values[idx]
    }

    /// `du_x` with source metric `g(x)` and target metric `h(u(x))`.
    pub fn differential(&self, idx: usize) -> &LinearMapSample {
        &self.du[idx]
    }

    /// `ν_u(x)`; zero on degenerate nodes.
    pub fn unit_normal(&self, idx: usize) -> TangentAt {
        TangentAt {
            base: self.values[idx].clone(),
            vector: self.normals[idx].clone(),
        }
    }

    pub fn normal_vector(&self, idx: usize) -> &DVector<f64> {
        &self.normals[idx]
    }

    pub fn is_regular(&self, idx: usize) -> bool {
        self.regular[idx]
    }

    pub fn degenerate_count(&self) -> usize {
        self.regular.iter().filter(|r| !**r).count()
    }

    /// `v ↦ K_{TN}(dν_u(v))`; `None` where a node of the difference stencil
    /// is degenerate.
    pub fn covariant_normal_derivative(&self, idx: usize) -> Option<&LinearMapSample> {
        self.covariant[idx].as_ref()
    }

    /// Nodes without `K∘dν`, excluded from the bending energies.
    pub fn bending_excluded(&self) -> usize {
        self.covariant.iter().filter(|k| k.is_none()).count()
    }

    /// `S_u` solving `du∘S_u = K∘dν` in the least-squares sense.
    pub fn induced_shape_operator(&self) -> &ShapeField {
        &self.shape
    }

    /// The same immersion on a subcube; derived fields are inherited from
    /// the parent grid, so subcube integrals add up to global ones.
    pub fn restrict(&self, start: &[usize], nodes: usize) -> Result<Self> {
        let map = self.domain.subcube_map(start, nodes)?;
        let pick = |v: &Vec<DVector<f64>>| map.iter().map(|&i| v[i].clone()).collect::<Vec<_>>();
        Ok(Self {
            domain: self.domain.subcube(start, nodes)?,
            target: self.target.clone(),
            values: pick(&self.values),
            du: map.iter().map(|&i| self.du[i].clone()).collect(),
            normals: pick(&self.normals),
            regular: map.iter().map(|&i| self.regular[i]).collect(),
            covariant: map.iter().map(|&i| self.covariant[i].clone()).collect(),
            shape: self.shape.restricted(&map),
        })
    }

    pub(crate) fn check_compatible(&self, other: &Self) -> Result<()> {
        if !self.domain.same_grid(&other.domain)
            || self.target.dim() != other.target.dim()
            || self.target.name() != other.target.name()
        {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }
}

/// Generalized cross product of the columns, made `h`-orthogonal by `H⁻¹`
/// and `h`-normalized. The cofactor vector `n_k = det[A | e_k]` is Euclidean
/// orthogonal to the columns, so `H⁻¹n` is `h`-orthogonal to them, and
/// `det[A | H⁻¹n] = nᵀH⁻¹n > 0` fixes the orientation.
pub(crate) fn oriented_normal(du: &LinearMapSample) -> (DVector<f64>, bool) {
    let a = du.coefficients();
    let n = a.nrows();
    let (_, sv, _) = svd(&du.whitened());
    if sv.iter().copied().fold(f64::INFINITY, f64::min) < RANK_TOLERANCE {
        return (DVector::zeros(n), false);
    }
    let cof = DVector::from_fn(n, |k, _| {
        let mut m = DMatrix::zeros(n, n);
        m.view_mut((0, 0), (n, n - 1)).copy_from(a);
        m[(k, n - 1)] = 1.0;
        m.determinant()
    });
    let h = du.tgt_metric();
    let raw = h.inverse_matrix() * cof;
    let len = h.norm(&raw);
    (raw / len, true)
}

/// `S = (AᵀHA)⁻¹AᵀHK` and the residual `|AS − K|_{g,h}`.
fn solve_shape(du: &LinearMapSample, k: &LinearMapSample) -> (DMatrix<f64>, f64) {
    let a = du.coefficients();
    let ath = a.transpose() * du.tgt_metric().entries();
    let s = (&ath * a)
        .lu()
        .solve(&(&ath * k.coefficients()))
        .expect("regular node has full-rank differential");
    let r = a * &s - k.coefficients();
    let res = frobenius_norm(&du.with_coefficients(r).expect("shape preserved"));
    (s, res)
}

/// `E_s(u) = ∫ dist^p_{g,h}(du, Ort) dvol_g`. Degenerate nodes enter with
/// their actual distance, which is `d^{p/2}` when `du = 0`.
pub fn stretching_energy(u: &DiscreteImmersion, p: f64) -> Result<f64> {
    check_exponent(p)?;
    let parts: Vec<f64> = (0..u.du.len())
        .into_par_iter()
        .map(|i| {
            distance_to_isometries(&u.du[i], false).map(|d| u.domain.volume_weight(i) * d.powf(p))
        })
        .collect::<Result<_>>()?;
    Ok(parts.iter().sum())
}

/// `E_b(u) = ∫ |K∘dν|^p_{g,h} dvol_g` over nodes where `K∘dν` is defined.
pub fn bending_energy(u: &DiscreteImmersion, p: f64) -> Result<f64> {
    check_exponent(p)?;
    Ok(u.covariant
        .iter()
        .enumerate()
        .filter_map(|(i, k)| k.as_ref().map(|k| u.domain.volume_weight(i) * frobenius_norm(k).powf(p)))
        .sum())
}

/// `E_b^S(u) = ∫ |du∘(S_u − S)|^p_{g,h} dvol_g` over nodes where both
/// shape operators are defined.
pub fn modified_bending(u: &DiscreteImmersion, reference: &ShapeField, p: f64) -> Result<f64> {
    check_exponent(p)?;
    if reference.len() != u.values.len() {
        return Err(Error::GridMismatch);
    }
    let mut total = 0.0;
    for i in 0..u.values.len() {
        if let (Some(su), Some(s)) = (u.shape.table(i), reference.table(i)) {
            let t = u.du[i].with_coefficients(u.du[i].coefficients() * (su - s))?;
            total += u.domain.volume_weight(i) * frobenius_norm(&t).powf(p);
        }
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyReport {
    pub p: f64,
    pub stretching: f64,
    pub bending: f64,
    pub modified_bending: Option<f64>,
    pub degenerate_nodes: usize,
    /// Nodes left out of `E_b` and `E_b^S`.
    pub excluded_nodes: usize,
}

pub fn energy_report(u: &DiscreteImmersion, reference: Option<&ShapeField>, p: f64) -> Result<EnergyReport> {
    Ok(EnergyReport {
        p,
        stretching: stretching_energy(u, p)?,
        bending: bending_energy(u, p)?,
        modified_bending: reference.map(|s| modified_bending(u, s, p)).transpose()?,
        degenerate_nodes: u.degenerate_count(),
        excluded_nodes: u.bending_excluded(),
    })
}

/// Riemannian distance in the target: closed form for catalog metrics,
/// geodesic shooting otherwise.
pub fn target_distance(target: &MetricField, a: &DVector<f64>, b: &DVector<f64>) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    match target.distance(a.as_slice(), b.as_slice()) {
        Some(d) => Ok(d),
        None => Ok(geodesic_between(target, a, b)?.distance),
    }
}

/// `(∫ d_h^p(u₁, u₂) dvol_g)^{1/p}`.
pub fn lp_distance(u1: &DiscreteImmersion, u2: &DiscreteImmersion, p: f64) -> Result<f64> {
    check_exponent(p)?;
    u1.check_compatible(u2)?;
    let parts: Vec<f64> = (0..u1.values.len())
        .into_par_iter()
        .map(|i| {
            target_distance(&u1.target, &u1.values[i], &u2.values[i])
                .map(|d| u1.domain.volume_weight(i) * d.powf(p))
        })
        .collect::<Result<_>>()?;
    Ok(parts.iter().sum::<f64>().powf(1.0 / p))
}

/// `(∫ d_σ^p(du₁, du₂) dvol_g)^{1/p}` with the node-wise Sasaki distance
/// replaced by its upper bound over a candidate family of curves; the
/// result is an upper bound as well.
pub fn w1p_distance(
    u1: &DiscreteImmersion,
    u2: &DiscreteImmersion,
    p: f64,
    options: &SasakiOptions,
) -> Result<f64> {
    Ok(w1p_integrand(u1, u2, p, options)?.iter().sum::<f64>().powf(1.0 / p))
}

/// Weighted node contributions `w_i d_σ^p(du₁, du₂)(x_i)` of [`w1p_distance`].
pub fn w1p_integrand(
    u1: &DiscreteImmersion,
    u2: &DiscreteImmersion,
    p: f64,
    options: &SasakiOptions,
) -> Result<Vec<f64>> {
    check_exponent(p)?;
    let d = sasaki_node_distances(u1, u2, options)?;
    Ok(d.iter()
        .enumerate()
        .map(|(i, d)| u1.domain.volume_weight(i) * d.powf(p))
        .collect())
}

/// Node-wise upper bounds on `d_σ(du₁(x_i), du₂(x_i))`.
pub fn sasaki_node_distances(
    u1: &DiscreteImmersion,
    u2: &DiscreteImmersion,
    options: &SasakiOptions,
) -> Result<Vec<f64>> {
    u1.check_compatible(u2)?;
    let christoffel = ChristoffelField::new(u1.target.clone());
    (0..u1.values.len())
        .into_par_iter()
        .map(|i| {
            let l1 = MapAt {
                base: u1.values[i].clone(),
                map: u1.du[i].clone(),
            };
            let l2 = MapAt {
                base: u2.values[i].clone(),
                map: u2.du[i].clone(),
            };
            Ok(sasaki_distance_maps(&christoffel, &l1, &l2, options)?.distance)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PoincareReport {
    /// `∬_{Q×Q} d_h^p(u(x), u(z)) dx dz`.
    pub lhs: f64,
    /// `diam(Q)^p |Q| ∫_Q |du|^p_{e,h} dx`.
    pub rhs: f64,
    /// `lhs / rhs`, an empirical Poincaré constant.
    pub ratio: f64,
    /// Whether `lhs` is a full double quadrature or a sampled estimate.
    pub sampled: bool,
}

#[derive(Clone, Debug)]
pub struct PoincareOptions {
    /// Largest node-pair count integrated exactly.
    pub full_pairs: usize,
    /// Pairs drawn (with probability `∝ w_x w_z`) otherwise.
    pub sampled_pairs: usize,
    pub seed: u64,
}

impl Default for PoincareOptions {
    fn default() -> Self {
        Self {
            full_pairs: 25_000_000,
            sampled_pairs: 20_000,
            seed: 0,
        }
    }
}

/// Both sides of the Poincaré inequality on the cube, with `dx` the
/// Lebesgue measure. `lhs` is the full double trapezoid rule when the target
/// has a closed-form distance and the pair count is within
/// `options.full_pairs`, and a sampled estimate otherwise.
pub fn poincare_check(u: &DiscreteImmersion, p: f64, options: &PoincareOptions) -> Result<PoincareReport> {
    check_exponent(p)?;
    let dom = &u.domain;
    let n = u.values.len();
    let weights: Vec<f64> = (0..n).map(|i| dom.weight(i)).collect();
    let closed_form = u.target.distance(u.values[0].as_slice(), u.values[0].as_slice()).is_some();
    let sampled = !closed_form || n * n > options.full_pairs;
    let lhs = if sampled {
        let total: f64 = weights.iter().sum();
        let pick = WeightedIndex::new(&weights)
            .map_err(|e| Error::InvalidArgument(format!("quadrature weights: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        let pairs: Vec<(usize, usize)> = (0..options.sampled_pairs.max(1))
            .map(|_| (pick.sample(&mut rng), pick.sample(&mut rng)))
            .collect();
        let terms: Vec<f64> = pairs
            .par_iter()
            .map(|&(i, j)| target_distance(&u.target, &u.values[i], &u.values[j]).map(|d| d.powf(p)))
            .collect::<Result<_>>()?;
        total * total * terms.iter().sum::<f64>() / pairs.len() as f64
    } else {
        let rows: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| {
                let row: f64 = (0..n)
                    .map(|j| {
                        let d = u
                            .target
                            .distance(u.values[i].as_slice(), u.values[j].as_slice())
                            .unwrap_or(0.0);
                        weights[j] * d.powf(p)
                    })
                    .sum();
                weights[i] * row
            })
            .collect();
        rows.iter().sum()
    };
    let grad: f64 = (0..n)
        .map(|i| {
            let a = u.du[i].coefficients();
            let sq = (a.transpose() * u.du[i].tgt_metric().entries() * a).trace();
            weights[i] * sq.max(0.0).sqrt().powf(p)
        })
        .sum();
    let rhs = dom.diameter().powf(p) * dom.volume() * grad;
    let ratio = if rhs > 0.0 { lhs / rhs } else { 0.0 };
    Ok(PoincareReport {
        lhs,
        rhs,
        ratio,
        sampled,
    })
}

/// One row per node: `node, x0.., u0.., nu0.., regular, S00.. (row-major),
/// shape_residual`. Shape entries are empty where `S_u` is undefined.
pub fn write_csv(u: &DiscreteImmersion, out: impl Write) -> Result<()> {
    let d = u.domain.dim();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["node".to_string()];
    header.extend((0..d).map(|k| format!("x{k}")));
    header.extend((0..=d).map(|k| format!("u{k}")));
    header.extend((0..=d).map(|k| format!("nu{k}")));
    header.push("regular".into());
    for i in 0..d {
        header.extend((0..d).map(|j| format!("S{i}{j}")));
    }
    header.push("shape_residual".into());
    w.write_record(&header)?;
    for idx in 0..u.values.len() {
        let mut row = vec![idx.to_string()];
        row.extend(u.domain.point(idx).iter().map(f64::to_string));
        row.extend(u.values[idx].iter().map(f64::to_string));
        row.extend(u.normals[idx].iter().map(f64::to_string));
        row.push(u.regular[idx].to_string());
        match u.shape.table(idx) {
            Some(s) => row.extend(s.transpose().iter().map(f64::to_string)),
            None => row.extend(std::iter::repeat_n(String::new(), d * d)),
        }
        row.push(u.shape.residual(idx).to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_indexing_round_trips() {
        let g = GridDomain::unit_cube(3, 4).unwrap();
        for idx in 0..g.node_count() {
            assert_eq!(g.flat_index(&g.multi_index(idx)), idx);
        }
        let total: f64 = (0..g.node_count()).map(|i| g.weight(i)).sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn planar_embedding_normal_points_up() {
        let u = DiscreteImmersion::from_fn(GridDomain::unit_cube(2, 5).unwrap(), MetricField::flat(3), |x| {
            DVector::from_vec(vec![x[0], x[1], 0.0])
        })
        .unwrap();
        for i in 0..u.values().len() {
            assert_eq!(u.normal_vector(i).as_slice(), &[0.0, 0.0, 1.0]);
            assert_eq!(u.induced_shape_operator().table(i).unwrap(), &DMatrix::zeros(2, 2));
        }
    }

    #[test]
    fn constant_map_is_degenerate() {
        let u = DiscreteImmersion::from_fn(GridDomain::unit_cube(2, 4).unwrap(), MetricField::flat(3), |_| {
            DVector::from_vec(vec![1.0, 2.0, 3.0])
        })
        .unwrap();
        assert_eq!(u.degenerate_count(), 16);
        assert_eq!(u.bending_excluded(), 16);
        assert!(u.normal_vector(5).iter().all(|v| *v == 0.0));
        assert!(u.induced_shape_operator().table(5).is_none());
        let es = stretching_energy(&u, 2.0).unwrap();
        assert!((es - 2.0).abs() < 1e-12);
    }

    #[test]
    fn exponent_must_exceed_one() {
        let u = DiscreteImmersion::from_fn(GridDomain::unit_cube(1, 4).unwrap(), MetricField::flat(2), |x| {
            DVector::from_vec(vec![x[0], 0.0])
        })
        .unwrap();
        assert!(matches!(stretching_energy(&u, 1.0), Err(Error::InvalidExponent(_))));
    }

    #[test]
    fn subcube_weights_add_up() {
        let g = GridDomain::unit_cube(2, 9).unwrap();
        let mut total = 0.0;
        for a in [0, 4] {
            for b in [0, 4] {
                let s = g.subcube(&[a, b], 5).unwrap();
                total += (0..s.node_count()).map(|i| s.weight(i)).sum::<f64>();
            }
        }
        assert!((total - 1.0).abs() < 1e-14);
    }
}

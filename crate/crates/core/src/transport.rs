//! Curves, geodesics, parallel transport and Sasaki distances.
//!
//! Curves are polylines in patch coordinates with uniform parameterization on
//! `[0, 1]`. Parallel transport `P^γ` maps the fiber over `γ(1)` to the fiber
//! over `γ(0)`. Sasaki distances are upper bounds: the infimum over all curves
//! is replaced by a minimum over a finite candidate family.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::metric_core::{frobenius_norm, ConstMetric, LinearMapSample};
use crate::target_space::{geodesic_flow, Chart, ChristoffelField, MetricField};

/// Tolerance on the change of a transported vector under substep doubling.
pub const TRANSPORT_TOLERANCE: f64 = 1e-11;
const MAX_SUBSTEPS: usize = 1 << 14;
const ENDPOINT_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct CurveSample {
    nodes: Vec<DVector<f64>>,
}

impl CurveSample {
    pub fn new(nodes: Vec<DVector<f64>>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidArgument(
                "a curve needs at least two nodes".into(),
            ));
        }
        let dim = nodes[0].len();
        if let Some(bad) = nodes.iter().find(|n| n.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        Ok(Self { nodes })
    }

    /// Straight segment in coordinates with `segments` equal pieces.
    pub fn segment(a: &DVector<f64>, b: &DVector<f64>, segments: usize) -> Self {
        let m = segments.max(1);
        let nodes = (0..=m)
            .map(|i| a + (b - a) * (i as f64 / m as f64))
            .collect();
        Self { nodes }
    }

    pub fn constant(q: &DVector<f64>) -> Self {
        Self {
            nodes: vec![q.clone(), q.clone()],
        }
    }

    /// `t ↦ f(t)` sampled at `segments + 1` uniform parameters.
    pub fn from_fn(segments: usize, f: impl Fn(f64) -> DVector<f64>) -> Result<Self> {
        let m = segments.max(1);
        Self::new((0..=m).map(|i| f(i as f64 / m as f64)).collect())
    }

    pub fn nodes(&self) -> &[DVector<f64>] {
        &self.nodes
    }

    pub fn segments(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn start(&self) -> &DVector<f64> {
        &self.nodes[0]
    }

    pub fn end(&self) -> &DVector<f64> {
        &self.nodes[self.nodes.len() - 1]
    }

    pub fn dim(&self) -> usize {
        self.nodes[0].len()
    }

    pub fn reversed(&self) -> Self {
        let mut nodes = self.nodes.clone();
        nodes.reverse();
        Self { nodes }
    }

    /// Inserts segment midpoints.
    pub fn refined(&self) -> Self {
        let mut nodes = Vec::with_capacity(2 * self.nodes.len() - 1);
        for w in self.nodes.windows(2) {
            nodes.push(w[0].clone());
            nodes.push((&w[0] + &w[1]) * 0.5);
        }
        nodes.push(self.end().clone());
        Self { nodes }
    }

    pub fn point_at(&self, t: f64) -> DVector<f64> {
        let m = self.segments() as f64;
        let x = (t.clamp(0.0, 1.0) * m).min(m);
        let s = (x.floor() as usize).min(self.segments() - 1);
        let tau = x - s as f64;
        &self.nodes[s] + (&self.nodes[s + 1] - &self.nodes[s]) * tau
    }

    fn check(&self, field: &MetricField) -> Result<()> {
        for n in &self.nodes {
            field.check(n.as_slice())?;
        }
        Ok(())
    }
}

/// A tangent vector `v ∈ T_qN` in chart-frame coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentAt {
    pub base: DVector<f64>,
    pub vector: DVector<f64>,
}

impl TangentAt {
    pub fn new(field: &MetricField, base: DVector<f64>, vector: DVector<f64>) -> Result<Self> {
        field.check(base.as_slice())?;
        if vector.len() != base.len() {
            return Err(Error::DimensionMismatch {
                expected: base.len(),
                found: vector.len(),
            });
        }
        Ok(Self { base, vector })
    }

    pub fn zero(field: &MetricField, base: DVector<f64>) -> Result<Self> {
        let n = base.len();
        Self::new(field, base, DVector::zeros(n))
    }

    pub fn norm(&self, field: &MetricField) -> Result<f64> {
        Ok(field.metric_at(self.base.as_slice())?.norm(&self.vector))
    }
}

/// A linear map `L : (T_xℝ^d, g_x) → (T_qN, h_q)` with its base point `q`.
#[derive(Clone, Debug)]
pub struct MapAt {
    pub base: DVector<f64>,
    pub map: LinearMapSample,
}

/// `∫₀¹ |γ'|_h dt`, Simpson's rule on each segment.
pub fn curve_length(field: &MetricField, curve: &CurveSample) -> Result<f64> {
    curve.check(field)?;
    let mut total = 0.0;
    for w in curve.nodes.windows(2) {
        let delta = &w[1] - &w[0];
        if delta.iter().all(|v| *v == 0.0) {
            continue;
        }
        let mid = (&w[0] + &w[1]) * 0.5;
        let speed = |y: &DVector<f64>| -> Result<f64> {
            Ok(field.metric_at(y.as_slice())?.norm(&delta))
        };
        total += (speed(&w[0])? + 4.0 * speed(&mid)? + speed(&w[1])?) / 6.0;
    }
    Ok(total)
}

/// Transports the columns of `columns` (vectors over `curve.end()`) to
/// `curve.start()` with `substeps` RK4 steps per segment.
fn transport_columns_fixed(
    christoffel: &ChristoffelField,
    curve: &CurveSample,
    columns: &DMatrix<f64>,
    substeps: usize,
) -> Result<DMatrix<f64>> {
    let mut a = columns.clone();
    let h = 1.0 / substeps as f64;
    let rhs = |y: &DVector<f64>, delta: &DVector<f64>, a: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        let g = christoffel.at(y.as_slice())?;
        let mut out = DMatrix::zeros(a.nrows(), a.ncols());
        for c in 0..a.ncols() {
            let col = a.column(c);
            let v = g.contract(col.as_slice(), delta.as_slice());
            out.set_column(c, &(-v));
        }
        Ok(out)
    };
    for s in (0..curve.segments()).rev() {
        let (y0, y1) = (&curve.nodes[s], &curve.nodes[s + 1]);
        let delta = y1 - y0;
        if delta.iter().all(|v| *v == 0.0) {
            continue;
        }
        // τ runs from 1 down to 0 on this segment
        for step in 0..substeps {
            let tau = 1.0 - step as f64 * h;
            let at = |t: f64| y0 + &delta * t;
            let k1 = rhs(&at(tau), &delta, &a)?;
            let k2 = rhs(&at(tau - 0.5 * h), &delta, &(&a - &k1 * (0.5 * h)))?;
            let k3 = rhs(&at(tau - 0.5 * h), &delta, &(&a - &k2 * (0.5 * h)))?;
            let k4 = rhs(&at(tau - h), &delta, &(&a - &k3 * h))?;
            a -= (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
    }
    Ok(a)
}

fn check_base(curve: &CurveSample, base: &DVector<f64>) -> Result<()> {
    if (curve.end() - base).norm() > ENDPOINT_TOLERANCE * (1.0 + base.norm()) {
        return Err(Error::InvalidArgument(
            "vector must be based at the curve endpoint γ(1)".into(),
        ));
    }
    Ok(())
}

fn transport_columns(
    christoffel: &ChristoffelField,
    curve: &CurveSample,
    columns: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    curve.check(christoffel.source())?;
    if christoffel.source().is_constant() {
        return Ok(columns.clone());
    }
    let scale = 1.0 + columns.norm();
    let mut substeps = 1;
    let mut prev = transport_columns_fixed(christoffel, curve, columns, substeps)?;
    loop {
        substeps *= 2;
        let next = transport_columns_fixed(christoffel, curve, columns, substeps)?;
        let change = (&next - &prev).norm();
        prev = next;
        if change <= TRANSPORT_TOLERANCE * scale || substeps >= MAX_SUBSTEPS {
            return Ok(prev);
        }
    }
}

/// `P^γ(v)`: parallel transport of `v ∈ T_{γ(1)}N` back to `γ(0)`, with
/// substeps doubled until the result changes by less than
/// [`TRANSPORT_TOLERANCE`].
pub fn parallel_transport(
    christoffel: &ChristoffelField,
    curve: &CurveSample,
    v: &TangentAt,
) -> Result<TangentAt> {
    check_base(curve, &v.base)?;
    let col = DMatrix::from_column_slice(v.vector.len(), 1, v.vector.as_slice());
    let out = transport_columns(christoffel, curve, &col)?;
    Ok(TangentAt {
        base: curve.start().clone(),
        vector: out.column(0).into_owned(),
    })
}

/// [`parallel_transport`] with a fixed number of RK4 steps per segment.
pub fn parallel_transport_fixed(
    christoffel: &ChristoffelField,
    curve: &CurveSample,
    v: &TangentAt,
    substeps: usize,
) -> Result<TangentAt> {
    check_base(curve, &v.base)?;
    curve.check(christoffel.source())?;
    let col = DMatrix::from_column_slice(v.vector.len(), 1, v.vector.as_slice());
    let out = transport_columns_fixed(christoffel, curve, &col, substeps.max(1))?;
    Ok(TangentAt {
        base: curve.start().clone(),
        vector: out.column(0).into_owned(),
    })
}

#[derive(Clone, Debug)]
pub struct Geodesic {
    pub curve: CurveSample,
    pub distance: f64,
    /// `γ'(0)` when the shooting polish succeeded.
    pub initial_velocity: Option<DVector<f64>>,
    /// Polylines from the energy descent, coarse to fine.
    pub iterates: Vec<CurveSample>,
}

const MAX_POLYLINE_SEGMENTS: usize = 32;
const DESCENT_ITERATIONS: usize = 400;
const OUTPUT_SEGMENTS: usize = 256;

/// Discrete energy `M Σ Δ_sᵀ h(mid_s) Δ_s` and its gradient with respect to
/// the interior nodes. Metric derivatives come from `∂h = Γh + (Γh)ᵀ`.
fn polyline_energy(
    field: &MetricField,
    nodes: &[DVector<f64>],
    with_gradient: bool,
) -> Result<(f64, Vec<DVector<f64>>)> {
    let m = (nodes.len() - 1) as f64;
    let n = nodes[0].len();
    let mut energy = 0.0;
    let mut grad = vec![DVector::zeros(n); nodes.len()];
    for s in 0..nodes.len() - 1 {
        let delta = &nodes[s + 1] - &nodes[s];
        let mid = (&nodes[s] + &nodes[s + 1]) * 0.5;
        let h = field.coefficients(mid.as_slice())?;
        let hd = &h * &delta;
        energy += m * delta.dot(&hd);
        if with_gradient {
            let g = field.christoffel(mid.as_slice())?;
            // (Δᵀ ∂_i h Δ) = 2 Σ_k (hΔ)_k Γ^k_ij Δ_j
            let dh = DVector::from_fn(n, |i, _| {
                let mut acc = 0.0;
                for k in 0..n {
                    for j in 0..n {
                        acc += hd[k] * g.get(k, i, j) * delta[j];
                    }
                }
                2.0 * acc
            });
            grad[s + 1] += (&hd * 2.0 + &dh * 0.5) * m;
            grad[s] += (&hd * -2.0 + &dh * 0.5) * m;
        }
    }
    Ok((energy, grad))
}

/// Solves `tridiag(−1, 2, −1) x = b` (Thomas algorithm) for each coordinate.
fn laplacian_solve(rhs: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let k = rhs.len();
    if k == 0 {
        return Vec::new();
    }
    let n = rhs[0].len();
    let mut c = vec![0.0; k];
    let mut d: Vec<DVector<f64>> = vec![DVector::zeros(n); k];
    c[0] = -0.5;
    d[0] = &rhs[0] / 2.0;
    for i in 1..k {
        let denom = 2.0 + c[i - 1];
        c[i] = -1.0 / denom;
        d[i] = (&rhs[i] + &d[i - 1]) / denom;
    }
    let mut x = vec![DVector::zeros(n); k];
    x[k - 1] = d[k - 1].clone();
    for i in (0..k - 1).rev() {
        x[i] = &d[i] - &x[i + 1] * c[i];
    }
    x
}

fn minimize_polyline(field: &MetricField, mut nodes: Vec<DVector<f64>>) -> Result<Vec<DVector<f64>>> {
    let m = nodes.len() - 1;
    if m < 2 {
        return Ok(nodes);
    }
    let (mut energy, mut grad) = polyline_energy(field, &nodes, true)?;
    for _ in 0..DESCENT_ITERATIONS {
        // precondition with h⁻¹ at each node and the inverse path Laplacian
        let scaled: Vec<DVector<f64>> = (1..m)
            .map(|i| -> Result<DVector<f64>> {
                let h = field.metric_at(nodes[i].as_slice())?;
                Ok(h.inverse_matrix() * &grad[i])
            })
            .collect::<Result<_>>()?;
        let dir: Vec<DVector<f64>> = laplacian_solve(&scaled)
            .into_iter()
            .map(|v| v * (-1.0 / (2.0 * m as f64)))
            .collect();
        let slope: f64 = (1..m).map(|i| grad[i].dot(&dir[i - 1])).sum();
        if slope >= 0.0 || slope.abs() <= 1e-15 * (1.0 + energy) {
            break;
        }
        let mut alpha = 1.0;
        let mut accepted = false;
        while alpha > 1e-8 {
            let mut trial = nodes.clone();
            for i in 1..m {
                trial[i] += &dir[i - 1] * alpha;
            }
            if let Ok((e, _)) = polyline_energy(field, &trial, false) {
                if e <= energy + 1e-4 * alpha * slope {
                    nodes = trial;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
        let (e, g) = polyline_energy(field, &nodes, true)?;
        let decrease = energy - e;
        energy = e;
        grad = g;
        if decrease <= 1e-15 * (1.0 + energy) {
            break;
        }
    }
    Ok(nodes)
}

/// Step count for which `exp_q(v)` is stable to `tol` under doubling.
fn settled_steps(field: &MetricField, q: &DVector<f64>, v: &DVector<f64>, tol: f64) -> Result<usize> {
    let mut steps = 16;
    let mut prev = geodesic_flow(field, q, v, steps)?.0;
    while steps < 1 << 14 {
        steps *= 2;
        let next = geodesic_flow(field, q, v, steps)?.0;
        let change = (&next - &prev).norm();
        prev = next;
        if change < tol {
            break;
        }
    }
    Ok(steps)
}

/// Newton iteration on `exp_{q1}(v) = q2` with a finite-difference Jacobian.
fn shoot(
    field: &MetricField,
    q1: &DVector<f64>,
    q2: &DVector<f64>,
    guess: DVector<f64>,
) -> Option<(DVector<f64>, usize)> {
    let n = q1.len();
    let scale = 1.0 + q2.norm();
    let mut v = guess;
    for _ in 0..30 {
        let steps = settled_steps(field, q1, &v, 1e-13 * scale).ok()?;
        let end = geodesic_flow(field, q1, &v, steps).ok()?.0;
        let r = &end - q2;
        if r.norm() <= 1e-12 * scale {
            return Some((v, steps));
        }
        let step = 1e-6 * (1.0 + v.norm());
        let mut jac = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut vp = v.clone();
            vp[j] += step;
            let mut vm = v.clone();
            vm[j] -= step;
            let ep = geodesic_flow(field, q1, &vp, steps).ok()?.0;
            let em = geodesic_flow(field, q1, &vm, steps).ok()?.0;
            jac.set_column(j, &((ep - em) / (2.0 * step)));
        }
        let dv = jac.lu().solve(&r)?;
        v -= dv;
    }
    None
}

/// Nodes of `t ↦ exp_q(t v)` at `segments + 1` uniform parameters.
fn geodesic_nodes(
    field: &MetricField,
    q: &DVector<f64>,
    v: &DVector<f64>,
    segments: usize,
    steps: usize,
) -> Result<Vec<DVector<f64>>> {
    let per = steps.div_ceil(segments).max(1);
    let mut nodes = vec![q.clone()];
    let (mut y, mut w) = (q.clone(), v.clone());
    for _ in 0..segments {
        // integrate over a parameter interval of length 1/segments
        let (y1, w1) = geodesic_flow(field, &y, &(&w / segments as f64), per)?;
        y = y1;
        w = w1 * segments as f64;
        nodes.push(y.clone());
    }
    Ok(nodes)
}

/// A minimizing geodesic from `q1` to `q2`: polyline energy descent with node
/// doubling, then a shooting polish on `exp_{q1}(v) = q2`.
pub fn geodesic_between(field: &MetricField, q1: &DVector<f64>, q2: &DVector<f64>) -> Result<Geodesic> {
    field.check(q1.as_slice())?;
    field.check(q2.as_slice())?;
    if q1 == q2 {
        return Ok(Geodesic {
            curve: CurveSample::constant(q1),
            distance: 0.0,
            initial_velocity: Some(DVector::zeros(q1.len())),
            iterates: Vec::new(),
        });
    }
    if field.is_constant() {
        let v = q2 - q1;
        let distance = field.metric_at(q1.as_slice())?.norm(&v);
        return Ok(Geodesic {
            curve: CurveSample::segment(q1, q2, 1),
            distance,
            initial_velocity: Some(v),
            iterates: Vec::new(),
        });
    }
    let fail = |reason: String| Error::ConnectFailed {
        from: q1.as_slice().to_vec(),
        to: q2.as_slice().to_vec(),
        reason,
    };

    let mut poly = CurveSample::segment(q1, q2, 4);
    poly.check(field).map_err(|e| fail(e.to_string()))?;
    let mut iterates = Vec::new();
    loop {
        let nodes = minimize_polyline(field, poly.nodes.clone()).map_err(|e| fail(e.to_string()))?;
        poly = CurveSample::new(nodes)?;
        iterates.push(poly.clone());
        if poly.segments() >= MAX_POLYLINE_SEGMENTS {
            break;
        }
        poly = poly.refined();
    }
    let poly_length = curve_length(field, &poly).map_err(|e| fail(e.to_string()))?;

    let guess = (&poly.nodes[1] - &poly.nodes[0]) * poly.segments() as f64;
    if let Some((v, steps)) = shoot(field, q1, q2, guess) {
        let distance = field.metric_at(q1.as_slice())?.norm(&v);
        if distance <= poly_length + 1e-6 {
            if let Ok(mut nodes) = geodesic_nodes(field, q1, &v, OUTPUT_SEGMENTS, steps) {
                let last = nodes.len() - 1;
                nodes[0] = q1.clone();
                nodes[last] = q2.clone();
                if let Ok(curve) = CurveSample::new(nodes) {
                    if curve.check(field).is_ok() {
                        return Ok(Geodesic {
                            curve,
                            distance,
                            initial_velocity: Some(v),
                            iterates,
                        });
                    }
                }
            }
        }
    }
    Ok(Geodesic {
        curve: poly,
        distance: poly_length,
        initial_velocity: None,
        iterates,
    })
}

#[derive(Clone, Debug)]
pub struct SasakiOptions {
    /// Number of perturbed geodesics added to the candidate family.
    pub family_size: usize,
    pub seed: u64,
    /// Further candidates from `q1` to `q2`.
    pub extra_curves: Vec<CurveSample>,
}

impl Default for SasakiOptions {
    fn default() -> Self {
        Self {
            family_size: 6,
            seed: 0,
            extra_curves: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SasakiEstimate {
    /// Minimum over the candidate family (an upper bound on `d_σ`).
    pub distance: f64,
    /// Value along the geodesic candidate alone.
    pub geodesic_value: f64,
    /// `geodesic_value − distance`; the gap between candidate families.
    pub family_gap: f64,
    pub candidates: usize,
}

fn candidate_family(
    field: &MetricField,
    q1: &DVector<f64>,
    q2: &DVector<f64>,
    options: &SasakiOptions,
) -> Result<(Vec<CurveSample>, f64)> {
    let geo = geodesic_between(field, q1, q2)?;
    let mut family = vec![geo.curve.clone()];
    family.extend(geo.iterates.iter().cloned());
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let chord = (q2 - q1).norm();
    let n = q1.len();
    let mut attempts = 0;
    let mut added = 0;
    while added < options.family_size && attempts < 4 * options.family_size {
        attempts += 1;
        let dir = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let amp = 0.2 * chord * rng.random::<f64>();
        let bumped = CurveSample::from_fn(OUTPUT_SEGMENTS, |t| {
            geo.curve.point_at(t) + &dir * (amp * (std::f64::consts::PI * t).sin())
        })?;
        if bumped.check(field).is_ok() {
            family.push(bumped);
            added += 1;
        }
    }
    for c in &options.extra_curves {
        if (c.start() - q1).norm() > ENDPOINT_TOLERANCE * (1.0 + q1.norm())
            || (c.end() - q2).norm() > ENDPOINT_TOLERANCE * (1.0 + q2.norm())
        {
            return Err(Error::InvalidArgument(
                "extra Sasaki candidates must run from q1 to q2".into(),
            ));
        }
        family.push(c.clone());
    }
    Ok((family, geo.distance))
}

/// Evaluates `(|fiber gap|² + length²)^{1/2}` over the family. The first
/// member is the geodesic, whose length is known more accurately than its
/// polyline quadrature.
fn sasaki_over_family(
    christoffel: &ChristoffelField,
    (family, geodesic_length): (Vec<CurveSample>, f64),
    columns: &DMatrix<f64>,
    gap: impl Fn(&DMatrix<f64>) -> Result<f64>,
) -> Result<SasakiEstimate> {
    let field = christoffel.source();
    let mut best = f64::INFINITY;
    let mut geodesic_value = f64::NAN;
    for (i, curve) in family.iter().enumerate() {
        let transported = match transport_columns(christoffel, curve, columns) {
            Ok(t) => t,
            Err(e) if i == 0 => return Err(e),
            Err(_) => continue,
        };
        let len = if i == 0 {
            geodesic_length
        } else {
            curve_length(field, curve)?
        };
        let value = (gap(&transported)?.powi(2) + len * len).sqrt();
        if i == 0 {
            geodesic_value = value;
        }
        best = best.min(value);
    }
    Ok(SasakiEstimate {
        distance: best,
        geodesic_value,
        family_gap: geodesic_value - best,
        candidates: family.len(),
    })
}

/// With constant coefficients parallel transport is the identity and every
/// curve is at least as long as the segment, so the infimum is attained by
/// the segment: `d_σ² = |fiber gap|² + d_h²`.
fn exact_for_constant(fiber_gap: f64, base_distance: f64) -> SasakiEstimate {
    let d = fiber_gap.hypot(base_distance);
    SasakiEstimate {
        distance: d,
        geodesic_value: d,
        family_gap: 0.0,
        candidates: 1,
    }
}

/// Upper bound on the Sasaki distance between `e1 ∈ T_{q1}N` and
/// `e2 ∈ T_{q2}N`. Exact when `q1 == q2`.
pub fn sasaki_distance_vectors(
    christoffel: &ChristoffelField,
    e1: &TangentAt,
    e2: &TangentAt,
    options: &SasakiOptions,
) -> Result<SasakiEstimate> {
    let field = christoffel.source();
    let h1 = field.metric_at(e1.base.as_slice())?;
    field.check(e2.base.as_slice())?;
    if e1.base == e2.base {
        let d = h1.norm(&(&e1.vector - &e2.vector));
        return Ok(SasakiEstimate {
            distance: d,
            geodesic_value: d,
            family_gap: 0.0,
            candidates: 1,
        });
    }
    if field.is_constant() {
        return Ok(exact_for_constant(
            h1.norm(&(&e1.vector - &e2.vector)),
            h1.norm(&(&e2.base - &e1.base)),
        ));
    }
    let family = candidate_family(field, &e1.base, &e2.base, options)?;
    let col = DMatrix::from_column_slice(e2.vector.len(), 1, e2.vector.as_slice());
    sasaki_over_family(christoffel, family, &col, |t| {
        Ok(h1.norm(&(&e1.vector - t.column(0))))
    })
}

fn check_map_at(field: &MetricField, m: &MapAt) -> Result<ConstMetric> {
    let h = field.metric_at(m.base.as_slice())?;
    let diff = (h.entries() - m.map.tgt_metric().entries()).norm();
    if diff > 1e-10 * (1.0 + h.entries().norm()) {
        return Err(Error::InvalidArgument(
            "target metric of the map differs from h at its base point".into(),
        ));
    }
    Ok(h)
}

/// Upper bound on the Sasaki distance in `T*Q ⊗ TN` between maps over the
/// same source point; `L2` is transported columnwise.
pub fn sasaki_distance_maps(
    christoffel: &ChristoffelField,
    l1: &MapAt,
    l2: &MapAt,
    options: &SasakiOptions,
) -> Result<SasakiEstimate> {
    let field = christoffel.source();
    check_map_at(field, l1)?;
    check_map_at(field, l2)?;
    if l1.map.src_metric() != l2.map.src_metric() || l1.map.src_dim() != l2.map.src_dim() {
        return Err(Error::InvalidArgument(
            "maps are based at different source points".into(),
        ));
    }
    let diff_norm = |t: &DMatrix<f64>| -> Result<f64> {
        Ok(frobenius_norm(
            &l1.map.with_coefficients(l1.map.coefficients() - t)?,
        ))
    };
    if l1.base == l2.base {
        let d = diff_norm(l2.map.coefficients())?;
        return Ok(SasakiEstimate {
            distance: d,
            geodesic_value: d,
            family_gap: 0.0,
            candidates: 1,
        });
    }
    if field.is_constant() {
        let h = field.metric_at(l1.base.as_slice())?;
        return Ok(exact_for_constant(
            diff_norm(l2.map.coefficients())?,
            h.norm(&(&l2.base - &l1.base)),
        ));
    }
    let family = candidate_family(field, &l1.base, &l2.base, options)?;
    sasaki_over_family(christoffel, family, l2.map.coefficients(), diff_norm)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SasakiCoordinateCheck {
    pub sasaki: f64,
    /// `|Dφ(q1)∘L1 − Dφ(q2)∘L2|_{g,e} + d_h(q1,q2)(1 + |L2|_{g,h})`.
    pub coordinate_bound: f64,
    pub ratio: f64,
}

/// Compares the Sasaki distance of two maps with its coordinate bound for an
/// almost isometric chart. The preimage of the chart segment joining `φ(q1)`
/// and `φ(q2)` joins the candidate family.
pub fn sasaki_coordinate_check(
    chart: &Chart,
    l1: &MapAt,
    l2: &MapAt,
    options: &SasakiOptions,
) -> Result<SasakiCoordinateCheck> {
    let field = chart.field();
    let christoffel = ChristoffelField::new(field.clone());
    let (z1, z2) = (chart.forward(&l1.base)?, chart.forward(&l2.base)?);
    let mut opts = options.clone();
    if l1.base != l2.base {
        let mut nodes = Vec::with_capacity(OUTPUT_SEGMENTS + 1);
        for i in 0..=OUTPUT_SEGMENTS {
            let t = i as f64 / OUTPUT_SEGMENTS as f64;
            nodes.push(chart.inverse(&(&z1 + (&z2 - &z1) * t))?);
        }
        nodes[0] = l1.base.clone();
        nodes[OUTPUT_SEGMENTS] = l2.base.clone();
        opts.extra_curves.push(CurveSample::new(nodes)?);
    }
    let sasaki = sasaki_distance_maps(&christoffel, l1, l2, &opts)?.distance;
    let pushed = chart.jacobian(&l1.base)? * l1.map.coefficients()
        - chart.jacobian(&l2.base)? * l2.map.coefficients();
    let coord = frobenius_norm(&LinearMapSample::new(
        pushed,
        l1.map.src_metric().clone(),
        ConstMetric::euclidean(chart.dim()),
    )?);
    let dist = geodesic_between(field, &l1.base, &l2.base)?.distance;
    let coordinate_bound = coord + dist * (1.0 + frobenius_norm(&l2.map));
    let ratio = if coordinate_bound > 0.0 {
        sasaki / coordinate_bound
    } else {
        0.0
    };
    Ok(SasakiCoordinateCheck {
        sasaki,
        coordinate_bound,
        ratio,
    })
}

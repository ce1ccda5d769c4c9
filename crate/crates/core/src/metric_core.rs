//! Linear algebra over coordinate spaces carrying constant metrics.
//!
//! A [`ConstMetric`] is a symmetric positive-definite coefficient table
//! `(e_i, e_j)_g`. A [`LinearMapSample`] is a coefficient table together with
//! the metrics on its source and target, which is all that is needed to talk
//! about Frobenius norms and distances to the set of linear isometries.
//!
//! Nearest isometries are computed by whitening with metric square roots,
//! solving the Euclidean orthogonal Procrustes problem with a singular value
//! decomposition, and unwhitening.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Metrics whose condition number exceeds this are rejected.
pub const MAX_CONDITION: f64 = 1e8;

/// Whitened singular values below this mark a map as rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct ConstMetric {
    entries: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl PartialEq for ConstMetric {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl ConstMetric {
    /// Validates symmetry (exact), positive definiteness and conditioning.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if !entries.is_square() || entries.nrows() == 0 {
            return Err(Error::DimensionMismatch {
                expected: entries.nrows().max(1),
                found: entries.ncols(),
            });
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotPositiveDefinite);
        }
        if entries != entries.transpose() {
            return Err(Error::NotSymmetric);
        }
        if entries.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite);
        }
        let eig = SymmetricEigen::new(entries.clone());
        let min = eig.eigenvalues.min();
        let max = eig.eigenvalues.max();
        if min <= 0.0 {
            return Err(Error::NotPositiveDefinite);
        }
        let condition = max / min;
        if condition > MAX_CONDITION {
            return Err(Error::IllConditioned {
                condition,
                limit: MAX_CONDITION,
            });
        }
        Ok(Self {
            entries,
            eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
        })
    }

    /// Symmetrizes `(A + Aᵀ)/2` before validating. Use for tables assembled
    /// by floating point products that are symmetric only up to rounding.
    pub fn symmetrized(entries: DMatrix<f64>) -> Result<Self> {
        let sym = (&entries + entries.transpose()) * 0.5;
        Self::new(sym)
    }

    pub fn euclidean(dim: usize) -> Self {
        Self::new(DMatrix::identity(dim, dim)).expect("identity is a metric")
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        let mut m = DMatrix::zeros(n, n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            for (j, v) in row.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        Self::new(m)
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn is_euclidean(&self) -> bool {
        self.entries == DMatrix::identity(self.dim(), self.dim())
    }

    pub fn inner(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        (u.transpose() * &self.entries * v)[(0, 0)]
    }

    pub fn norm(&self, v: &DVector<f64>) -> f64 {
        self.inner(v, v).max(0.0).sqrt()
    }

    /// Smallest and largest eigenvalue.
    pub fn eigen_bounds(&self) -> (f64, f64) {
        (self.eigenvalues.min(), self.eigenvalues.max())
    }

    /// The smallest `λ ≥ 1` with `(1/λ)·I ≤ g ≤ λ·I`.
    pub fn comparability(&self) -> f64 {
        let (lo, hi) = self.eigen_bounds();
        hi.max(1.0 / lo).max(1.0)
    }

    fn spectral(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let d = DMatrix::from_diagonal(&self.eigenvalues.map(f));
        &self.eigenvectors * d * self.eigenvectors.transpose()
    }

    pub fn inverse_matrix(&self) -> DMatrix<f64> {
        self.spectral(|l| 1.0 / l)
    }

    pub fn sqrt_matrix(&self) -> DMatrix<f64> {
        self.spectral(f64::sqrt)
    }

    pub fn inv_sqrt_matrix(&self) -> DMatrix<f64> {
        self.spectral(|l| 1.0 / l.sqrt())
    }

    /// Gram–Schmidt under this metric. Vectors that become (numerically)
    /// dependent are dropped.
    pub fn orthonormalize(&self, vectors: &[DVector<f64>]) -> Vec<DVector<f64>> {
        let mut basis: Vec<DVector<f64>> = Vec::with_capacity(vectors.len());
        for v in vectors {
            let mut w = v.clone();
            for _ in 0..2 {
                for b in &basis {
                    let c = self.inner(&w, b);
                    w -= b * c;
                }
            }
            let n = self.norm(&w);
            if n > 1e-12 * self.norm(v).max(1e-300) {
                basis.push(w / n);
            }
        }
        basis
    }
}

/// A linear map `T : (V, g₀) → (W, h₀)` in coordinates; `coefficients` is
/// `tgt_dim × src_dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearMapSample {
    coefficients: DMatrix<f64>,
    src_metric: ConstMetric,
    tgt_metric: ConstMetric,
}

impl LinearMapSample {
    pub fn new(
        coefficients: DMatrix<f64>,
        src_metric: ConstMetric,
        tgt_metric: ConstMetric,
    ) -> Result<Self> {
        if coefficients.ncols() != src_metric.dim() {
            return Err(Error::DimensionMismatch {
                expected: src_metric.dim(),
                found: coefficients.ncols(),
            });
        }
        if coefficients.nrows() != tgt_metric.dim() {
            return Err(Error::DimensionMismatch {
                expected: tgt_metric.dim(),
                found: coefficients.nrows(),
            });
        }
        Ok(Self {
            coefficients,
            src_metric,
            tgt_metric,
        })
    }

    /// Both spaces Euclidean.
    pub fn euclidean(coefficients: DMatrix<f64>) -> Self {
        let src = ConstMetric::euclidean(coefficients.ncols());
        let tgt = ConstMetric::euclidean(coefficients.nrows());
        Self {
            coefficients,
            src_metric: src,
            tgt_metric: tgt,
        }
    }

    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coefficients
    }

    pub fn src_metric(&self) -> &ConstMetric {
        &self.src_metric
    }

    pub fn tgt_metric(&self) -> &ConstMetric {
        &self.tgt_metric
    }

    pub fn src_dim(&self) -> usize {
        self.coefficients.ncols()
    }

    pub fn tgt_dim(&self) -> usize {
        self.coefficients.nrows()
    }

    /// Same metrics, new coefficients.
    pub fn with_coefficients(&self, coefficients: DMatrix<f64>) -> Result<Self> {
        Self::new(
            coefficients,
            self.src_metric.clone(),
            self.tgt_metric.clone(),
        )
    }

    /// `H₀^{1/2} T G₀^{-1/2}`: the Euclidean representative whose Frobenius
    /// norm is `|T|_{g₀,h₀}`.
    pub fn whitened(&self) -> DMatrix<f64> {
        self.tgt_metric.sqrt_matrix() * &self.coefficients * self.src_metric.inv_sqrt_matrix()
    }
}

/// `(Σᵢ |T vᵢ|²_{h₀})^{1/2}` for a `g₀`-orthonormal basis, evaluated as
/// `trace(G₀⁻¹ Tᵀ H₀ T)^{1/2}`.
pub fn frobenius_norm(t: &LinearMapSample) -> f64 {
    let m = t.src_metric.inverse_matrix()
        * t.coefficients.transpose()
        * t.tgt_metric.entries()
        * &t.coefficients;
    m.trace().max(0.0).sqrt()
}

/// Entrywise distance `|g₀ − g₀'|` in the standard basis.
pub fn metric_distance(g0: &ConstMetric, g0p: &ConstMetric) -> Result<f64> {
    if g0.dim() != g0p.dim() {
        return Err(Error::DimensionMismatch {
            expected: g0.dim(),
            found: g0p.dim(),
        });
    }
    Ok((g0.entries() - g0p.entries()).norm())
}

#[derive(Clone, Debug)]
pub struct NearestIsometry {
    pub map: LinearMapSample,
    pub distance: f64,
    /// False when the minimizer is not unique (repeated smallest singular
    /// value under a sign flip, or a rank deficient input). The returned map
    /// is then the SVD-canonical representative.
    pub unique: bool,
}

/// Thin SVD `a = U diag(s) Vᵀ` with `s` in decreasing order.
///
/// nalgebra's bidiagonalization loses accuracy on some rectangular inputs
/// (reconstruction errors near 1e-2 on well-conditioned 3×2 matrices), so
/// rectangular matrices are reduced to a square triangular factor first.
pub fn svd(a: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let (rows, cols) = a.shape();
    if rows < cols {
        let (u, s, v_t) = svd(&a.transpose());
        return (v_t.transpose(), s, u.transpose());
    }
    let (q, r) = if rows == cols {
        (DMatrix::identity(rows, rows), a.clone())
    } else {
        let qr = a.clone().qr();
        (qr.q(), qr.r())
    };
    let f = r.svd(true, true);
    (
        q * f.u.expect("u requested"),
        f.singular_values,
        f.v_t.expect("v_t requested"),
    )
}

/// Euclidean Procrustes on a whitened `tgt × src` matrix: the closest matrix
/// with orthonormal columns (and positive determinant when `oriented`).
pub(crate) fn procrustes(a: &DMatrix<f64>, oriented: bool) -> (DMatrix<f64>, f64, bool) {
    let n = a.ncols();
    let (mut u, s, v_t) = svd(a);
    let scale = s.max().max(1e-300);
    let mut unique = s.iter().all(|&x| x > RANK_TOLERANCE * scale.max(1.0));
    if oriented {
        let r0 = &u * &v_t;
        if r0.determinant() < 0.0 {
            // flip the direction belonging to the smallest singular value
            let last = n - 1;
            let col = -u.column(last);
            u.set_column(last, &col);
            if n >= 2 && (s[n - 2] - s[n - 1]).abs() <= 1e-12 * scale.max(1.0) {
                unique = false;
            }
        }
    }
    let r = u * v_t;
    let dist = (a - &r).norm();
    (r, dist, unique)
}

/// Nearest element of `Ort((V,g₀),(W,h₀))`, or of `SO` when `oriented`
/// (square maps only).
pub fn nearest_isometry(t: &LinearMapSample, oriented: bool) -> Result<NearestIsometry> {
    let (src, tgt) = (t.src_dim(), t.tgt_dim());
    if src > tgt {
        return Err(Error::NoIsometries { src, tgt });
    }
    if oriented && src != tgt {
        return Err(Error::OrientationUndefined { src, tgt });
    }
    let a = t.whitened();
    let (r_white, distance, unique) = procrustes(&a, oriented);
    let r = t.tgt_metric.inv_sqrt_matrix() * r_white * t.src_metric.sqrt_matrix();
    Ok(NearestIsometry {
        map: t.with_coefficients(r)?,
        distance,
        unique,
    })
}

/// `dist_{g₀,h₀}(T, Ort)` (or `SO` when `oriented`).
pub fn distance_to_isometries(t: &LinearMapSample, oriented: bool) -> Result<f64> {
    let (src, tgt) = (t.src_dim(), t.tgt_dim());
    if src > tgt {
        return Err(Error::NoIsometries { src, tgt });
    }
    if oriented && src != tgt {
        return Err(Error::OrientationUndefined { src, tgt });
    }
    Ok(procrustes(&t.whitened(), oriented).1)
}

/// Symmetric positive-definite square root of `g0`, as a map between
/// Euclidean spaces.
pub fn metric_sqrt(g0: &ConstMetric) -> LinearMapSample {
    LinearMapSample::euclidean(g0.sqrt_matrix())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn frobenius_examples() {
        let t = LinearMapSample::euclidean(DMatrix::identity(2, 2));
        assert!((frobenius_norm(&t) - 2f64.sqrt()).abs() < 1e-15);

        // orthonormal basis of (R, (4)) is v = 1/2, |T v| = 1/2
        let t = LinearMapSample::new(
            dmatrix![1.0],
            ConstMetric::diagonal(&[4.0]).unwrap(),
            ConstMetric::euclidean(1),
        )
        .unwrap();
        assert!((frobenius_norm(&t) - 0.5).abs() < 1e-15);

        let t = LinearMapSample::new(
            DMatrix::zeros(3, 2),
            ConstMetric::diagonal(&[2.0, 3.0]).unwrap(),
            ConstMetric::diagonal(&[1.0, 5.0, 7.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(frobenius_norm(&t), 0.0);
    }

    #[test]
    fn metric_distance_examples() {
        let g = ConstMetric::diagonal(&[1.0, 2.0]).unwrap();
        assert_eq!(metric_distance(&g, &g).unwrap(), 0.0);
        let a = ConstMetric::diagonal(&[1.0]).unwrap();
        let b = ConstMetric::diagonal(&[2.0]).unwrap();
        assert_eq!(metric_distance(&a, &b).unwrap(), 1.0);
        let t = 0.37;
        let e = ConstMetric::euclidean(2);
        let c = ConstMetric::diagonal(&[1.0, 1.0 + t]).unwrap();
        assert!((metric_distance(&e, &c).unwrap() - t).abs() < 1e-15);
        assert!(matches!(
            metric_distance(&e, &a),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rejects_bad_metrics() {
        assert!(matches!(
            ConstMetric::from_rows(&[&[1.0, 0.5], &[0.4, 1.0]]),
            Err(Error::NotSymmetric)
        ));
        assert!(matches!(
            ConstMetric::diagonal(&[1.0, -1.0]),
            Err(Error::NotPositiveDefinite)
        ));
        assert!(matches!(
            ConstMetric::diagonal(&[1.0, 1e-9]),
            Err(Error::IllConditioned { .. })
        ));
    }

    #[test]
    fn nearest_isometry_examples() {
        let id = LinearMapSample::euclidean(DMatrix::identity(2, 2));
        let n = nearest_isometry(&id, true).unwrap();
        assert!(n.distance < 1e-15);
        assert!((n.map.coefficients() - DMatrix::<f64>::identity(2, 2)).norm() < 1e-14);

        let two = LinearMapSample::euclidean(DMatrix::identity(2, 2) * 2.0);
        let n = nearest_isometry(&two, true).unwrap();
        assert!((n.distance - 2f64.sqrt()).abs() < 1e-14);
        assert!((n.map.coefficients() - DMatrix::<f64>::identity(2, 2)).norm() < 1e-14);

        let flip = LinearMapSample::euclidean(dmatrix![1.0, 0.0; 0.0, -1.0]);
        let n = nearest_isometry(&flip, true).unwrap();
        assert!((n.distance - 2.0).abs() < 1e-14);
        assert!(!n.unique);
        assert!(n.map.coefficients().determinant() > 0.0);
        // unoriented: diag(1,-1) is itself an isometry
        let n = nearest_isometry(&flip, false).unwrap();
        assert!(n.distance < 1e-14);
    }

    #[test]
    fn nearest_isometry_rejects_wide_maps() {
        let t = LinearMapSample::euclidean(DMatrix::zeros(1, 2));
        assert!(matches!(
            nearest_isometry(&t, false),
            Err(Error::NoIsometries { src: 2, tgt: 1 })
        ));
        let t = LinearMapSample::euclidean(DMatrix::zeros(3, 2));
        assert!(matches!(
            nearest_isometry(&t, true),
            Err(Error::OrientationUndefined { .. })
        ));
    }

    #[test]
    fn rank_deficient_zero_map() {
        // dist(0, Ort) = |R| = sqrt(d) for any isometry R
        let t = LinearMapSample::new(
            DMatrix::zeros(3, 2),
            ConstMetric::diagonal(&[2.0, 0.5]).unwrap(),
            ConstMetric::euclidean(3),
        )
        .unwrap();
        let n = nearest_isometry(&t, false).unwrap();
        assert!((n.distance - 2f64.sqrt()).abs() < 1e-12);
        assert!(!n.unique);
    }

    #[test]
    fn metric_sqrt_examples() {
        let s = metric_sqrt(&ConstMetric::euclidean(3));
        assert!((s.coefficients() - DMatrix::<f64>::identity(3, 3)).norm() < 1e-15);
        let s = metric_sqrt(&ConstMetric::diagonal(&[4.0, 9.0]).unwrap());
        assert!((s.coefficients() - dmatrix![2.0, 0.0; 0.0, 3.0]).norm() < 1e-14);
    }

    #[test]
    fn orthonormalize_under_metric() {
        let g = ConstMetric::from_rows(&[&[2.0, 0.3], &[0.3, 1.0]]).unwrap();
        let b = g.orthonormalize(&[
            DVector::from_vec(vec![1.0, 0.0]),
            DVector::from_vec(vec![0.0, 1.0]),
        ]);
        assert_eq!(b.len(), 2);
        assert!((g.norm(&b[0]) - 1.0).abs() < 1e-14);
        assert!((g.norm(&b[1]) - 1.0).abs() < 1e-14);
        assert!(g.inner(&b[0], &b[1]).abs() < 1e-14);
    }
}

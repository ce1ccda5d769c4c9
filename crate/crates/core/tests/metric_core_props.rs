use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rigidkit::metric_core::{
    distance_to_isometries, frobenius_norm, metric_sqrt, nearest_isometry, svd, ConstMetric,
    LinearMapSample,
};

fn spd(dim: usize, raw: &[f64], shift: f64) -> ConstMetric {
    let a = DMatrix::from_iterator(dim, dim, raw.iter().copied().take(dim * dim));
    ConstMetric::symmetrized(&a * a.transpose() + DMatrix::identity(dim, dim) * shift).unwrap()
}

fn coeffs(rows: usize, cols: usize, raw: &[f64]) -> DMatrix<f64> {
    DMatrix::from_iterator(rows, cols, raw.iter().copied().take(rows * cols))
}

fn entries(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn svd_reconstructs_rectangular_inputs(rows in 1usize..5, cols in 1usize..5, raw in entries(16)) {
        let a = coeffs(rows, cols, &raw);
        let (u, s, v_t) = svd(&a);
        let k = rows.min(cols);
        prop_assert!((&u * DMatrix::from_diagonal(&s) * &v_t - &a).amax() < 1e-13);
        prop_assert!((u.transpose() * &u - DMatrix::identity(k, k)).amax() < 1e-13);
        prop_assert!((&v_t * v_t.transpose() - DMatrix::identity(k, k)).amax() < 1e-13);
        prop_assert!(s.as_slice().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn euclidean_distance_matches_gram_eigenvalues(
        src in 1usize..4, extra in 0usize..2, t_raw in entries(16),
    ) {
        // dist(T, Ort)² = Σ (σᵢ − 1)² with σᵢ² the eigenvalues of TᵀT
        let t = coeffs(src + extra, src, &t_raw);
        let sigma = (t.transpose() * &t).symmetric_eigen().eigenvalues;
        let oracle: f64 = sigma.iter().map(|l| (l.max(0.0).sqrt() - 1.0).powi(2)).sum::<f64>().sqrt();
        let d = distance_to_isometries(&LinearMapSample::euclidean(t), false).unwrap();
        prop_assert!((d - oracle).abs() < 1e-7, "{d} vs {oracle}");
    }

    #[test]
    fn frobenius_is_basis_independent(
        src in 1usize..4, extra in 0usize..2,
        g_raw in entries(16), h_raw in entries(16), t_raw in entries(16), b_raw in entries(16),
    ) {
        let tgt = src + extra;
        let g = spd(src, &g_raw, 0.3);
        let h = spd(tgt, &h_raw, 0.3);
        let t = LinearMapSample::new(coeffs(tgt, src, &t_raw), g.clone(), h.clone()).unwrap();
        let seeds: Vec<_> = (0..src)
            .map(|i| DVector::from_fn(src, |j, _| b_raw[i * src + j] + if i == j { 2.0 } else { 0.0 }))
            .collect();
        let basis = g.orthonormalize(&seeds);
        prop_assume!(basis.len() == src);
        let sum: f64 = basis.iter().map(|v| h.norm(&(t.coefficients() * v)).powi(2)).sum();
        prop_assert!((sum.sqrt() - frobenius_norm(&t)).abs() < 1e-10);
    }

    #[test]
    fn nearest_isometry_is_an_isometry(
        src in 1usize..4, extra in 0usize..2, oriented in any::<bool>(),
        g_raw in entries(16), h_raw in entries(16), t_raw in entries(16),
    ) {
        let tgt = src + extra;
        let oriented = oriented && extra == 0;
        let g = spd(src, &g_raw, 0.3);
        let h = spd(tgt, &h_raw, 0.3);
        let t = LinearMapSample::new(coeffs(tgt, src, &t_raw), g.clone(), h.clone()).unwrap();
        let n = nearest_isometry(&t, oriented).unwrap();
        let seeds: Vec<_> = (0..src).map(|i| DVector::from_fn(src, |j, _| (i == j) as u8 as f64)).collect();
        let basis = g.orthonormalize(&seeds);
        let r = n.map.coefficients();
        for (i, vi) in basis.iter().enumerate() {
            for (j, vj) in basis.iter().enumerate() {
                let ip = h.inner(&(r * vi), &(r * vj));
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((ip - want).abs() < 1e-10, "({i},{j}) -> {ip}");
            }
        }
        if oriented {
            prop_assert!(r.determinant() > 0.0);
        }
        let diff = t.with_coefficients(t.coefficients() - r).unwrap();
        prop_assert!((frobenius_norm(&diff) - n.distance).abs() < 1e-10);
    }

    #[test]
    fn procrustes_matches_rotation_grid(t_raw in entries(4), oriented in any::<bool>()) {
        let t = coeffs(2, 2, &t_raw);
        let n = nearest_isometry(&LinearMapSample::euclidean(t.clone()), oriented).unwrap();
        let steps = 10_000;
        let mut best = f64::INFINITY;
        for k in 0..steps {
            let a = std::f64::consts::TAU * k as f64 / steps as f64;
            let (s, c) = a.sin_cos();
            let mut cands = vec![DMatrix::from_row_slice(2, 2, &[c, -s, s, c])];
            if !oriented {
                cands.push(DMatrix::from_row_slice(2, 2, &[c, s, s, -c]));
            }
            for r in cands {
                best = best.min((&t - r).norm());
            }
        }
        // grid spacing 2π/1e4 moves a rotation by at most √2·π·1e-4 in Frobenius norm
        let resolution = 2f64.sqrt() * std::f64::consts::PI * 1e-4;
        prop_assert!(n.distance <= best + 1e-12);
        prop_assert!(best - n.distance <= resolution);
    }

    #[test]
    fn norm_comparison_under_metric_bound(
        src in 1usize..4, extra in 0usize..2,
        g_raw in entries(16), h_raw in entries(16), t_raw in entries(16), shift in 0.05f64..2.0,
    ) {
        let tgt = src + extra;
        let g = spd(src, &g_raw, shift);
        let h = spd(tgt, &h_raw, 0.3);
        let lambda = g.comparability();
        let l = coeffs(tgt, src, &t_raw);
        let with_g = frobenius_norm(&LinearMapSample::new(l.clone(), g, h.clone()).unwrap());
        let with_e = frobenius_norm(
            &LinearMapSample::new(l, ConstMetric::euclidean(src), h).unwrap(),
        );
        let slack = 1e-12 * (1.0 + with_e);
        prop_assert!(lambda.powf(-0.5) * with_g <= with_e + slack);
        prop_assert!(with_e <= lambda.sqrt() * with_g + slack);
    }

    #[test]
    fn metric_sqrt_squares_back(dim in 1usize..5, raw in entries(16)) {
        let g = spd(dim, &raw, 0.2);
        let s = metric_sqrt(&g);
        let c = s.coefficients();
        prop_assert!((c - c.transpose()).norm() < 1e-12);
        prop_assert!((c * c - g.entries()).norm() < 1e-10);
        prop_assert!(c.clone().cholesky().is_some());
    }
}

#[test]
fn flip_distance_is_constant_over_rotations() {
    let t = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
    for k in 0..1000 {
        let a = std::f64::consts::TAU * k as f64 / 1000.0;
        let (s, c) = a.sin_cos();
        let r = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        assert!(((&t - r).norm() - 2.0).abs() < 1e-12);
    }
}

#[test]
fn svd_regression_on_tall_matrix() {
    // nalgebra's direct SVD reconstructs this matrix with error ~9e-3
    let a = DMatrix::from_row_slice(
        3,
        2,
        &[
            0.9555425964526503,
            -0.2922624435201957,
            0.29318410512155246,
            0.9719086773194263,
            0.03132773321834037,
            -0.18127585718701944,
        ],
    );
    let (u, s, v_t) = svd(&a);
    assert!((u * DMatrix::from_diagonal(&s) * v_t - &a).amax() < 1e-14);
    assert!((s[1] - 1.0).abs() < 1e-12);
}

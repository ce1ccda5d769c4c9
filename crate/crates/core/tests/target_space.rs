use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rigidkit::metric_core::ConstMetric;
use rigidkit::target_space::{
    ball_samples, connector_comparison_ratio, epsilon_isometric_check, extend_chart,
    isometry_defect_constant, normal_coordinates, normal_defect, Chart, ChristoffelField,
    CutoffProfile, MetricField, Region,
};
use rigidkit::Error;

fn catalog() -> Vec<(MetricField, Vec<f64>)> {
    vec![
        (MetricField::sphere_stereographic(3, 1.3).unwrap(), vec![0.4, -0.2, 0.7]),
        (MetricField::sphere_polar(2.0).unwrap(), vec![0.9, 0.4]),
        (MetricField::warped(3, 0.8).unwrap(), vec![0.3, 0.5, -0.6]),
    ]
}

#[test]
fn finite_differences_converge_at_second_order() {
    for (field, y) in catalog() {
        let exact = field.christoffel(&y).unwrap();
        let e1 = field.christoffel_fd(&y, 2e-2).unwrap().max_diff(&exact);
        let e2 = field.christoffel_fd(&y, 1e-2).unwrap().max_diff(&exact);
        let order = (e1 / e2).log2();
        assert!((order - 2.0).abs() < 0.15, "{}: order {order}", field.name());
        let fine = field.christoffel_fd(&y, 1e-4).unwrap().max_diff(&exact);
        assert!(fine < 1e-6, "{}: {fine}", field.name());
    }
}

#[test]
fn christoffel_symmetry_and_compatibility_on_random_points() {
    let custom = MetricField::custom(
        "bumpy",
        3,
        |y| {
            DMatrix::from_fn(3, 3, |i, j| {
                if i == j {
                    1.0 + 0.3 * (y[0] + i as f64).sin() * y[2].cos()
                } else {
                    0.1 * (y[0] * y[1]).cos()
                }
            })
        },
        None,
    );
    let mut fields: Vec<MetricField> = catalog().into_iter().map(|(f, _)| f).collect();
    fields.push(custom);
    for field in fields {
        let gamma = ChristoffelField::new(field.clone());
        for (i, mut z) in ball_samples(field.dim(), 1.0, 100, 7).into_iter().enumerate() {
            if field.name() == "sphere-polar" {
                z[0] = 1.5 + 0.9 * z[0];
            }
            let y = z.as_slice();
            assert!(gamma.symmetry_defect(y).unwrap() < 1e-8, "{} sample {i}", field.name());
            let c = gamma.compatibility_defect(y).unwrap();
            assert!(c < 1e-7, "{} sample {i}: {c}", field.name());
        }
    }
}

#[test]
fn normal_coordinates_on_flat_metric_are_affine_and_isometric() {
    let g = ConstMetric::from_rows(&[&[2.0, 0.5, 0.0], &[0.5, 1.0, 0.0], &[0.0, 0.0, 3.0]]).unwrap();
    let field = MetricField::constant(g);
    let q = DVector::from_vec(vec![1.0, -2.0, 0.5]);
    let chart = normal_coordinates(&field, &q, 1.0).unwrap();
    let r = epsilon_isometric_check(&chart, &ball_samples(3, 1.0, 30, 3)).unwrap();
    assert!(r.epsilon < 1e-12, "{r:?}");
    assert!(chart.forward(&q).unwrap().norm() < 1e-15);
}

#[test]
fn sphere_normal_coordinates() {
    let field = MetricField::sphere_stereographic(2, 1.0).unwrap();
    let q = DVector::from_vec(vec![0.3, -0.2]);
    let chart = normal_coordinates(&field, &q, 0.1).unwrap();

    let centre = chart.metric_at(&DVector::zeros(2)).unwrap();
    assert!((centre.entries() - DMatrix::<f64>::identity(2, 2)).norm() < 1e-8);

    let samples = ball_samples(2, 0.1, 40, 11);
    for z in &samples {
        let (lo, hi) = chart.metric_at(z).unwrap().eigen_bounds();
        assert!(lo >= 0.99 * (1.0 - 1e-9) && hi <= 1.01 * (1.0 + 1e-9), "{lo} {hi}");
        let p = chart.inverse(z).unwrap();
        let back = chart.forward(&p).unwrap();
        assert!((back - z).norm() < 1e-9);
        let prod = chart.jacobian(&p).unwrap() * chart.inverse_jacobian(z).unwrap();
        assert!((prod - DMatrix::<f64>::identity(2, 2)).norm() < 1e-7);
    }
}

#[test]
fn normal_chart_epsilon_shrinks_with_radius() {
    let field = MetricField::sphere_stereographic(2, 1.0).unwrap();
    let q = DVector::from_vec(vec![0.1, 0.2]);
    let radii = [0.2, 0.1, 0.05];
    let mut metric = Vec::new();
    let mut gamma = Vec::new();
    for &rho in &radii {
        let chart = normal_coordinates(&field, &q, rho).unwrap();
        // points on the boundary circle carry the extremes
        let samples: Vec<_> = (0..16)
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / 16.0;
                DVector::from_vec(vec![a.cos(), a.sin()]) * (rho * (1.0 - 1e-9))
            })
            .collect();
        let r = epsilon_isometric_check(&chart, &samples).unwrap();
        metric.push(r.metric_part);
        gamma.push(r.christoffel_part);
    }
    for w in 0..2 {
        let m_slope = (metric[w] / metric[w + 1]).log2();
        let g_slope = (gamma[w] / gamma[w + 1]).log2();
        assert!((m_slope - 2.0).abs() < 0.2, "metric slope {m_slope}");
        assert!((g_slope - 1.0).abs() < 0.2, "christoffel slope {g_slope}");
    }
}

#[test]
fn geodesic_through_pole_leaves_polar_patch() {
    let field = MetricField::sphere_polar(1.0).unwrap();
    let q = DVector::from_vec(vec![0.3, 0.0]);
    let err = normal_coordinates(&field, &q, 1.0).unwrap_err();
    assert!(matches!(err, Error::GeodesicLeftPatch { .. }), "{err}");
}

#[test]
fn extended_chart_behaviour() {
    let field = MetricField::sphere_stereographic(3, 1.0).unwrap();
    let q = DVector::zeros(3);
    let chart = normal_coordinates(&field, &q, 0.5).unwrap();
    let r = 0.2;
    let ext = extend_chart(chart.clone(), CutoffProfile::new(3), r).unwrap();

    let inner = chart.inverse(&DVector::from_vec(vec![0.1, -0.05, 0.08])).unwrap();
    assert_eq!(ext.value(&inner), chart.forward(&inner).unwrap());

    let far = DVector::from_vec(vec![3.0, 0.0, 0.0]);
    assert!(!chart.contains(&far));
    assert_eq!(ext.value(&far), DVector::zeros(3));
    assert_eq!(ext.differential(&far).unwrap(), DMatrix::zeros(3, 3));

    let z = DVector::from_vec(vec![1.5 * r, 0.0, 0.0]);
    let mid = chart.inverse(&z).unwrap();
    let v = ext.value(&mid);
    let expect = CutoffProfile::new(3).value(&(&z / r)) * r;
    assert!((&v - expect).norm() < 1e-9);
    assert!(v.norm() <= r * ext.profile().bounds().value);

    assert!(matches!(
        extend_chart(chart, CutoffProfile::new(3), 0.3),
        Err(Error::ChartTooSmall { .. })
    ));
}

#[test]
fn extension_needs_centered_chart() {
    let field = MetricField::flat(2);
    let chart = Chart::affine(
        field,
        DVector::zeros(2),
        DMatrix::identity(2, 2),
        Region::Whole,
    )
    .unwrap();
    assert!(extend_chart(chart, CutoffProfile::new(2), 1.0).is_ok());
    let shifted = Chart::affine(
        MetricField::sphere_polar(1.0).unwrap(),
        DVector::from_vec(vec![1.0, 0.0]),
        DMatrix::identity(2, 2),
        Region::Whole,
    )
    .unwrap();
    // the ball of radius 2 in (φ − 1, λ) coordinates crosses the poles
    assert!(matches!(
        extend_chart(shifted, CutoffProfile::new(2), 1.0),
        Err(Error::ChartTooSmall { .. })
    ));
}

#[test]
fn chart_lemma_constants_on_normal_coordinates() {
    let field = MetricField::warped(3, 1.0).unwrap();
    let q = DVector::from_vec(vec![0.2, 0.0, 0.1]);
    let rho = 0.15;
    let chart = normal_coordinates(&field, &q, rho).unwrap();
    let samples = ball_samples(3, rho, 12, 5);
    let eps = epsilon_isometric_check(&chart, &samples).unwrap().epsilon;
    assert!(eps > 0.0 && eps < 0.5);

    let mut rng_vals = ball_samples(12, 1.0, 12, 9).into_iter();
    let mut max_ratio: f64 = 0.0;
    let mut max_iso: f64 = f64::NEG_INFINITY;
    let mut max_normal: f64 = 0.0;
    let g0 = ConstMetric::from_rows(&[&[1.5, 0.2], &[0.2, 0.8]]).unwrap();
    for z in &samples {
        let v = rng_vals.next().unwrap();
        let (w, y, big_w) = (
            v.rows(0, 3).into_owned(),
            v.rows(3, 3).into_owned(),
            v.rows(6, 3).into_owned(),
        );
        max_ratio = max_ratio.max(connector_comparison_ratio(&chart, z, &w, &y, &big_w).unwrap());
        let l = DMatrix::from_column_slice(3, 2, &v.as_slice()[6..12]);
        let p = chart.inverse(z).unwrap();
        max_iso = max_iso.max(isometry_defect_constant(&chart, &p, &l, &g0, eps).unwrap());
        let n = v.rows(0, 3).into_owned();
        max_normal = max_normal.max(normal_defect(&chart, z, &n).unwrap() / eps);
    }
    assert!(max_ratio.is_finite() && max_ratio < 4.0, "{max_ratio}");
    assert!(max_iso <= 2.0 * 3f64.sqrt(), "{max_iso}");
    assert!(max_normal < 6.0, "{max_normal}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cutoff_second_differences_respect_hessian_bound(
        r in 0.9f64..2.1, a in 0.0f64..std::f64::consts::TAU, b in 0.0f64..std::f64::consts::PI,
    ) {
        let c = CutoffProfile::new(3);
        let y = DVector::from_vec(vec![b.sin() * a.cos(), b.sin() * a.sin(), b.cos()]) * r;
        let h = 1e-4;
        for k in 0..3 {
            let hess = DMatrix::from_fn(3, 3, |i, j| {
                let mut e_i = DVector::zeros(3);
                e_i[i] = h;
                let mut e_j = DVector::zeros(3);
                e_j[j] = h;
                (c.value(&(&y + &e_i + &e_j))[k] - c.value(&(&y + &e_i - &e_j))[k]
                    - c.value(&(&y - &e_i + &e_j))[k] + c.value(&(&y - &e_i - &e_j))[k])
                    / (4.0 * h * h)
            });
            prop_assert!(hess.norm() <= c.bounds().hessian * (1.0 + 1e-3) + 1e-4);
        }
    }
}

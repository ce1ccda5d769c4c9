//! Normal coordinates on a curved target, their ε-isometry, and the
//! compactly supported extension used by the codimension-1 estimates.

use nalgebra::DVector;
use rigidkit::target_space::{
    ball_samples, epsilon_isometric_check, extend_chart, normal_coordinates, CutoffProfile, MetricField,
};

fn main() -> rigidkit::Result<()> {
    let sphere = MetricField::sphere_stereographic(3, 1.0)?;
    let center = DVector::from_vec(vec![0.2, 0.0, -0.1]);

    // the metric part shrinks like r², the Christoffel part like r
    for radius in [0.4, 0.2, 0.1] {
        let chart = normal_coordinates(&sphere, &center, radius)?;
        let samples = ball_samples(chart.dim(), radius, 64, 7);
        let eps = epsilon_isometric_check(&chart, &samples)?;
        println!(
            "r = {radius:<4} ε = {:.3e} (metric {:.3e}, Christoffel {:.3e})",
            eps.epsilon, eps.metric_part, eps.christoffel_part
        );
    }

    let chart = normal_coordinates(&sphere, &center, 0.4)?;
    let ext = extend_chart(chart, CutoffProfile::new(3), 0.1)?;
    for t in [0.05, 0.15, 0.35] {
        let z = DVector::from_vec(vec![t, 0.0, 0.0]);
        let q = ext.base().inverse(&z)?;
        println!(
            "|z| = {t:<4} in identity zone: {:<5} φ^(r)(q) = {:.4}",
            ext.in_identity_zone(&q),
            ext.value(&q).norm()
        );
    }
    Ok(())
}

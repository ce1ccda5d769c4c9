//! Parallel transport around a latitude of the round sphere: the frame
//! rotates by 2π(1 − cos φ), and the fixed-step integrator is fourth order.

use std::f64::consts::TAU;

use nalgebra::DVector;
use rigidkit::target_space::{ChristoffelField, MetricField};
use rigidkit::transport::{parallel_transport, parallel_transport_fixed, CurveSample, TangentAt};

fn angle(out: &TangentAt, phi: f64) -> f64 {
    // orthonormal frame (∂φ, ∂λ / sin φ)
    (out.vector[1] * phi.sin()).atan2(out.vector[0])
}

fn main() -> rigidkit::Result<()> {
    let field = MetricField::sphere_polar(1.0)?;
    let gamma = ChristoffelField::new(field.clone());
    for phi in [0.3, 0.9, 1.5] {
        let curve = CurveSample::segment(&DVector::from_vec(vec![phi, 0.0]), &DVector::from_vec(vec![phi, TAU]), 1);
        let start = TangentAt::new(&field, curve.end().clone(), DVector::from_vec(vec![1.0, 0.0]))?;
        let out = parallel_transport(&gamma, &curve, &start)?;
        let expected = TAU * (1.0 - phi.cos());
        println!(
            "φ = {phi}: |cos Δ − cos expected| = {:.2e}, |v| = {:.12}",
            (angle(&out, phi).cos() - expected.cos()).abs(),
            out.norm(&field)?
        );

        let err = |m| -> rigidkit::Result<f64> {
            let a = angle(&parallel_transport_fixed(&gamma, &curve, &start, m)?, phi);
            Ok((a.cos() - expected.cos()).abs() + (a.sin().abs() - expected.sin().abs()).abs())
        };
        println!("  fixed steps 16 → 32: error ratio {:.2}", err(16)? / err(32)?);
    }
    Ok(())
}

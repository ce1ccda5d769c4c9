//! Stretching, bending and modified bending energies of simple immersions.

use nalgebra::{DMatrix, DVector};
use rigidkit::immersions::{energy_report, reference_shape_operator, DiscreteImmersion, GridDomain};
use rigidkit::target_space::MetricField;

fn main() -> rigidkit::Result<()> {
    let p = 2.0;
    let domain = GridDomain::unit_cube(2, 33)?;

    let plane = DiscreteImmersion::from_fn(domain.clone(), MetricField::flat(3), |x| {
        DVector::from_vec(vec![x[0], x[1], 0.0])
    })?;
    let dilated = DiscreteImmersion::from_fn(domain.clone(), MetricField::flat(3), |x| {
        DVector::from_vec(vec![1.1 * x[0], 1.1 * x[1], 0.0])
    })?;
    let cylinder = DiscreteImmersion::from_fn(domain.clone(), MetricField::flat(3), |x| {
        DVector::from_vec(vec![x[0].cos(), x[0].sin(), x[1]])
    })?;
    let bump = DiscreteImmersion::from_fn(domain.clone(), MetricField::flat(3), |x| {
        DVector::from_vec(vec![x[0], x[1], 0.2 * (3.0 * x[0]).sin() * (2.0 * x[1]).cos()])
    })?;

    // b = diag(1, 0) is the second fundamental form of the unit cylinder
    let s = reference_shape_operator(&domain, |_| DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]))?;
    println!("{:<10} {:>12} {:>12} {:>12}", "map", "E_s", "E_b", "E_b^S(cyl)");
    for (name, u) in [("plane", &plane), ("dilated", &dilated), ("cylinder", &cylinder), ("bump", &bump)] {
        let r = energy_report(u, Some(&s), p)?;
        println!(
            "{name:<10} {:>12.4e} {:>12.4e} {:>12.4e}",
            r.stretching,
            r.bending,
            r.modified_bending.unwrap_or(f64::NAN)
        );
    }
    // uniform dilation by 1 + t has dist(du, Ort) = √d t everywhere
    println!("dilation check: (√2 · 0.1)² = {:.4e}", (2f64.sqrt() * 0.1).powi(2));
    Ok(())
}

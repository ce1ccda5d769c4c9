//! Rigidity of equidimensional maps on a cube with a constant metric: the
//! best rotation, the estimate's left-hand side and its right-hand terms.

use nalgebra::{DMatrix, DVector, Rotation2};
use rigidkit::immersions::GridDomain;
use rigidkit::metric_core::ConstMetric;
use rigidkit::rigidity::{flat_rigidity, BasePoint};
use rigidkit::target_space::MetricField;

fn main() -> rigidkit::Result<()> {
    let g = ConstMetric::from_rows(&[&[2.0, 0.3], &[0.3, 0.5]])?;
    let domain = GridDomain::new(vec![0.0, 0.0], 1.0, 17, MetricField::constant(g.clone()))?;
    let rotation = DMatrix::from_iterator(2, 2, Rotation2::new(0.4).matrix().iter().copied());
    // R g^{1/2} maps (ℝ², g) isometrically onto (ℝ², e)
    let rigid = &rotation * g.sqrt_matrix();

    println!("{:>8} {:>12} {:>12} {:>8}", "t", "lhs", "rhs", "ratio");
    for t in [0.0, 1e-1, 1e-2, 1e-3] {
        let values: Vec<DVector<f64>> = (0..domain.node_count())
            .map(|i| {
                let x = domain.point(i);
                let eta = DVector::from_vec(vec![(3.0 * x[1]).sin() * x[0], x[0] * x[0] - (2.0 * x[1]).cos()]);
                &rigid * DVector::from_column_slice(&x) + eta * t
            })
            .collect();
        let report = flat_rigidity(&values, &domain, 2.0, BasePoint::Center)?;
        println!(
            "{t:>8} {:>12.4e} {:>12.4e} {:>8}",
            report.lhs,
            report.rhs_total,
            report.ratio.map_or("-".to_string(), |r| format!("{r:.4}"))
        );
    }
    Ok(())
}

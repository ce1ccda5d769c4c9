//! Reverse Poincaré estimate on subcubes: two planar immersions related by
//! a rigid motion, compared cube by cube for several subdivisions.

use nalgebra::{DMatrix, DVector, Rotation3, Unit, Vector3};
use rigidkit::immersions::{DiscreteImmersion, GridDomain};
use rigidkit::rigidity::{reverse_poincare_check, ChartHypotheses, GoodSet};
use rigidkit::target_space::{extend_chart, Chart, CutoffProfile, MetricField};
use rigidkit::transport::SasakiOptions;

fn main() -> rigidkit::Result<()> {
    let r = Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::new(0.3, 1.0, 0.2)), 0.5);
    let rotation = DMatrix::from_iterator(3, 3, r.matrix().iter().copied());
    let shift = DVector::from_vec(vec![0.01, -0.02, 0.03]);
    let domain = GridDomain::unit_cube(2, 33)?;
    let u1 = DiscreteImmersion::from_fn(domain.clone(), MetricField::flat(3), |x| {
        DVector::from_vec(vec![x[0], x[1], 0.0])
    })?;
    let u2 = DiscreteImmersion::from_fn(domain, MetricField::flat(3), |x| {
        &rotation * DVector::from_vec(vec![x[0], x[1], 0.0]) + &shift
    })?;
    let ext = extend_chart(Chart::identity(MetricField::flat(3)), CutoffProfile::new(3), 4.0)?;
    let exact = ChartHypotheses {
        delta: 0.0,
        epsilon: 0.0,
    };
    let sasaki = SasakiOptions::default();

    for m in [1usize, 2, 4, 8] {
        let nodes = 32 / m + 1;
        let (mut lhs, mut worst): (f64, f64) = (0.0, 0.0);
        for a in 0..m {
            for b in 0..m {
                let start = [a * (nodes - 1), b * (nodes - 1)];
                let (v1, v2) = (u1.restrict(&start, nodes)?, u2.restrict(&start, nodes)?);
                let good = GoodSet::full(v1.domain());
                let rep = reverse_poincare_check(&v1, &v2, &ext, &good, &good, exact, 2.0, &sasaki)?;
                lhs += rep.lhs;
                worst = worst.max(rep.ratio.unwrap_or(0.0));
            }
        }
        println!("m = {m}: Σ lhs = {lhs:.5e}, worst cube ratio = {worst:.4}");
    }
    Ok(())
}

//! Local codimension-1 rigidity in a flat chart: bent graphs, where the
//! left-hand side scales like t^p, and wrinkled curves, where only the
//! bending term controls it.

use nalgebra::DVector;
use rigidkit::immersions::{stretching_energy, DiscreteImmersion, GridDomain};
use rigidkit::rigidity::{local_rigidity_codim1, ChartHypotheses, GoodSet};
use rigidkit::target_space::{extend_chart, Chart, CutoffProfile, MetricField};

const EXACT: ChartHypotheses = ChartHypotheses {
    delta: 0.0,
    epsilon: 0.0,
};

fn main() -> rigidkit::Result<()> {
    let ext = extend_chart(Chart::identity(MetricField::flat(3)), CutoffProfile::new(3), 4.0)?;
    println!("bent graphs (p = 2)");
    for t in [0.1, 0.05, 0.025] {
        let u = DiscreteImmersion::from_fn(GridDomain::unit_cube(2, 33)?, MetricField::flat(3), |x| {
            let eta = (std::f64::consts::PI * x[0]).sin() * (2.0 * x[1]).cos();
            DVector::from_vec(vec![x[0], x[1], t * eta])
        })?;
        let rep = local_rigidity_codim1(&u, &ext, &GoodSet::full(u.domain()), EXACT, 2.0)?;
        println!("  t = {t:<6} lhs = {:.4e}  rhs = {:.4e}", rep.lhs, rep.rhs_total);
        for (term, value) in &rep.rhs_terms {
            println!("      {term:<17} {value:.3e}");
        }
    }

    // unit-speed curves with tangent angle 0.6 sin(2πks): isometric, far from a line
    let ext2 = extend_chart(Chart::identity(MetricField::flat(2)), CutoffProfile::new(2), 4.0)?;
    println!("wrinkled curves (p = 2)");
    for k in [2.0, 4.0, 8.0] {
        let domain = GridDomain::unit_cube(1, 1025)?;
        let h = domain.spacing();
        let mut point = DVector::zeros(2);
        let mut values = vec![point.clone()];
        for i in 1..domain.node_count() {
            let s = (i as f64 - 0.5) * h;
            let theta = 0.6 * (2.0 * std::f64::consts::PI * k * s).sin();
            point += DVector::from_vec(vec![theta.cos(), theta.sin()]) * h;
            values.push(point.clone());
        }
        let u = DiscreteImmersion::from_values(domain, MetricField::flat(2), values)?;
        let rep = local_rigidity_codim1(&u, &ext2, &GoodSet::full(u.domain()), EXACT, 2.0)?;
        println!(
            "  k = {k}: lhs = {:.4}, E_s = {:.2e}, bending part = {:.3}",
            rep.lhs,
            stretching_energy(&u, 2.0)?,
            rep.diagnostics["energy_bending"]
        );
    }
    Ok(())
}

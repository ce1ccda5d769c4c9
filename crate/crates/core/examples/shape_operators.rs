//! Discrete normals and shape operators on cylinders and sphere caps,
//! compared with the exact operators under mesh refinement.

use nalgebra::{DMatrix, DVector};
use rigidkit::immersions::{DiscreteImmersion, GridDomain};
use rigidkit::target_space::{stereographic_embedding, MetricField};

fn centre_error(u: &DiscreteImmersion, exact: &DMatrix<f64>) -> rigidkit::Result<f64> {
    let m = u.domain().nodes_per_side();
    let centre = u.domain().flat_index(&[m / 2, m / 2]);
    let s = u.induced_shape_operator().table(centre).ok_or(rigidkit::Error::InvalidArgument("degenerate centre".into()))?;
    Ok((s - exact).amax())
}

fn main() -> rigidkit::Result<()> {
    let rho = 1.5;
    let scalar = DMatrix::identity(2, 2) / rho;
    let diag = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
    println!("{:>6} {:>14} {:>14}", "nodes", "cylinder err", "sphere err");
    for m in [9, 17, 33, 65] {
        let cylinder = DiscreteImmersion::from_fn(GridDomain::unit_cube(2, m)?, MetricField::flat(3), |x| {
            let t = x[0] + 0.3 * x[0] * x[0];
            DVector::from_vec(vec![t.cos(), t.sin(), x[1]])
        })?;
        let dom = GridDomain::new(vec![-0.3, -0.3], 0.6, m, MetricField::flat(2))?;
        let cap = DiscreteImmersion::from_fn(dom, MetricField::flat(3), |x| {
            DVector::from_vec(stereographic_embedding(x, rho))
        })?;
        println!(
            "{m:>6} {:>14.3e} {:>14.3e}",
            centre_error(&cylinder, &diag)?,
            centre_error(&cap, &scalar)?
        );
    }
    Ok(())
}

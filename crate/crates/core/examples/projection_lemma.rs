//! Projecting a map onto the tangent plane of a nearby normal: the error
//! is at most |T||n₀ − n|, and the distance to rotations moves by O(|n₀ − n|).

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rigidkit::metric_core::{ConstMetric, LinearMapSample};
use rigidkit::rigidity::{oriented_frame, projection_error_check};

fn main() -> rigidkit::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let n = DVector::from_vec(vec![0.0, 0.0, 1.0]);
    let t = LinearMapSample::new(
        oriented_frame(&n) * DMatrix::from_row_slice(2, 2, &[1.1, 0.2, -0.1, 0.9]),
        ConstMetric::euclidean(2),
        ConstMetric::euclidean(3),
    )?;
    println!("{:>10} {:>12} {:>12} {:>10}", "|n0 − n|", "error", "bound", "C");
    for tilt in [0.5, 0.2, 0.05, 0.01] {
        let dir = DVector::from_vec(vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.0]).normalize();
        let n0 = (&n + dir * tilt).normalize();
        let rep = projection_error_check(&t, &n0, &n)?;
        println!(
            "{:>10.4} {:>12.4e} {:>12.4e} {:>10}",
            (&n0 - &n).norm(),
            rep.projection_error,
            rep.projection_bound,
            rep.constant.map_or("-".into(), |c| format!("{c:.4}"))
        );
    }
    Ok(())
}

//! Nearest linear isometry between inner-product spaces by whitened Procrustes.

use nalgebra::DMatrix;
use rigidkit::metric_core::{distance_to_isometries, nearest_isometry, ConstMetric, LinearMapSample};

fn main() -> rigidkit::Result<()> {
    let g = ConstMetric::from_rows(&[&[2.0, 0.3], &[0.3, 0.5]])?;
    let h = ConstMetric::euclidean(3);
    let t = LinearMapSample::new(
        DMatrix::from_row_slice(3, 2, &[1.2, 0.1, -0.2, 0.9, 0.3, 0.4]),
        g,
        h,
    )?;

    let ort = nearest_isometry(&t, false)?;
    println!("dist(T, Ort) = {:.6} (unique: {})", ort.distance, ort.unique);
    println!("nearest isometry:{}", ort.map.coefficients());

    // the minimizer really is an isometry: Rᵀ h R = g
    let r = ort.map.coefficients();
    let defect = (r.transpose() * r - t.src_metric().entries()).amax();
    println!("|RᵀR − G|_max = {defect:.2e}");

    // a square map can also be restricted to orientation-preserving isometries
    let square = LinearMapSample::euclidean(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
    println!(
        "reflection: dist to O(2) = {:.3}, to SO(2) = {:.3}",
        distance_to_isometries(&square, false)?,
        distance_to_isometries(&square, true)?
    );
    Ok(())
}

//! Sasaki distance between tangent vectors and between linear maps over
//! different base points of a curved target.

use nalgebra::{DMatrix, DVector};
use rigidkit::metric_core::{ConstMetric, LinearMapSample};
use rigidkit::target_space::{ChristoffelField, MetricField};
use rigidkit::transport::{sasaki_distance_maps, sasaki_distance_vectors, MapAt, SasakiOptions, TangentAt};

fn main() -> rigidkit::Result<()> {
    let field = MetricField::sphere_stereographic(2, 1.0)?;
    let gamma = ChristoffelField::new(field.clone());
    let opts = SasakiOptions::default();
    let (q1, q2) = (DVector::from_vec(vec![0.3, -0.4]), DVector::from_vec(vec![-0.6, 0.5]));

    let z1 = TangentAt::zero(&field, q1.clone())?;
    let z2 = TangentAt::zero(&field, q2.clone())?;
    let d = sasaki_distance_vectors(&gamma, &z1, &z2, &opts)?;
    let exact = field.distance(q1.as_slice(), q2.as_slice()).unwrap();
    println!("zero vectors: d_σ = {:.9}, d_h = {exact:.9}", d.distance);

    let e1 = TangentAt::new(&field, q1.clone(), DVector::from_vec(vec![1.0, 0.2]))?;
    let e2 = TangentAt::new(&field, q2.clone(), DVector::from_vec(vec![0.4, -0.7]))?;
    let d = sasaki_distance_vectors(&gamma, &e1, &e2, &opts)?;
    println!(
        "vectors: d_σ = {:.6} (geodesic {:.6}, {} candidate curves)",
        d.distance, d.geodesic_value, d.candidates
    );

    // maps (ℝ², g) → T_q S² compare the same way, column by column
    let g = ConstMetric::diagonal(&[1.0, 2.0])?;
    let at = |q: &DVector<f64>, c: DMatrix<f64>| -> rigidkit::Result<MapAt> {
        let h = field.metric_at(q.as_slice())?;
        Ok(MapAt {
            base: q.clone(),
            map: LinearMapSample::new(c, g.clone(), h)?,
        })
    };
    let l1 = at(&q1, DMatrix::identity(2, 2))?;
    let l2 = at(&q2, DMatrix::from_row_slice(2, 2, &[0.9, -0.1, 0.2, 1.1]))?;
    println!("maps: d_σ = {:.6}", sasaki_distance_maps(&gamma, &l1, &l2, &opts)?.distance);
    Ok(())
}

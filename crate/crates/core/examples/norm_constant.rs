//! Brute-force minimization of the difference-quotient functional behind
//! the norm estimate, and a randomized check of the resulting inequality.

use rigidkit::immersions::GridDomain;
use rigidkit::rigidity::{norm_estimate_check, norm_estimate_constant, NormEstimateOptions};

fn main() -> rigidkit::Result<()> {
    let opts = NormEstimateOptions::default();
    for (dim, tgt) in [(1, 1), (2, 2), (2, 3)] {
        for p in [2.0, 3.0] {
            let domain = GridDomain::unit_cube(dim, 3)?;
            let est = norm_estimate_constant(&domain, p, tgt, &opts)?;
            let check = norm_estimate_check(&est, 0.5, 500, 1)?;
            println!(
                "d = {dim}, n = {tgt}, p = {p}: m = {:.6}, C = {:.4}, spread {:.1e}, violations {}/{}",
                est.m, est.constant, est.spread, check.violations, check.trials
            );
        }
    }
    println!("1/√6 = {:.6}", 1.0 / 6f64.sqrt());
    Ok(())
}

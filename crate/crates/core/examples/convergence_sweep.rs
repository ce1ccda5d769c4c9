//! Config-driven convergence experiment: the 1/k-perturbation family
//! converges to a plane, the isometric anti-wrinkle family does not.
//!
//! `cargo run --release --example convergence_sweep [config.toml]`

use std::path::PathBuf;

use rigidkit::experiments::{sweep, Config};

fn main() -> rigidkit::Result<()> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/configs");
    let paths: Vec<PathBuf> = match std::env::args().nth(1) {
        Some(path) => vec![path.into()],
        None => vec![dir.join("perturbation.toml"), dir.join("anti_wrinkle.toml")],
    };
    for path in paths {
        let config = Config::load(&path, &[])?;
        let report = sweep(&config)?;
        let trace = &report.trace;
        println!("== {} ({} family)", config.name, trace.family);
        println!("{:>4} {:>11} {:>11} {:>11} {:>11}", "k", "E_s", "E_b", "E_bS", "increment");
        for row in &trace.rows {
            println!(
                "{:>4} {:>11.3e} {:>11.3e} {:>11.3e} {:>11.3e}",
                row.k, row.e_s, row.e_b, row.e_bs, row.cauchy_increment
            );
        }
        for (name, slope) in &trace.fits {
            if let Some(slope) = slope {
                println!("fit {name}: k^{slope:.3}");
            }
        }
        println!("Cauchy ratio {:?}, converging: {}", trace.cauchy_ratio, trace.converging);
        if let Some(partition) = &report.partition {
            println!(
                "partition m = {}: {} good, {} bad cubes",
                partition.m,
                partition.good.len(),
                partition.bad.len()
            );
        }
        if let Some(agg) = &report.aggregation {
            println!(
                "aggregation: good {:.3e} + bad {:.3e} ≥ global {:.3e}: {}",
                agg.good_lhs, agg.bad_bound, agg.global, agg.holds
            );
        }
        if let Some(first) = trace.warnings.first() {
            println!("{} warnings, first: {first}", trace.warnings.len());
        }
    }
    Ok(())
}

//! Batch experiments: scenario construction from versioned TOML, the
//! partition-and-classify localization step, convergence sweeps over
//! immersion families and deterministic report emission.
//!
//! Every output is a pure function of the resolved configuration, which
//! includes the seed.

mod config;
mod convergence;
mod partition;
mod scenario;

use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::Serialize;

pub use config::{
    parse_param, Config, DomainConfig, FamilyConfig, FamilyKind, OutputConfig, Override,
    PartitionConfig, ReferenceConfig, ReferenceKind, RigidConfig, RigidityConfig, SourceMetric,
    SweepConfig, TargetConfig, TargetMetric, CONFIG_VERSION, MIN_INTERVALS_PER_PERIOD,
};
pub use convergence::{
    convergence_experiment, fit_exponent, isometry_defects, shape_residuals, ConvergenceTrace,
    LimitDiagnostics, Quantiles, TraceRow,
};
pub use partition::{aggregation_check, classify_partition, AggregationReport, PartitionClassification};
pub use scenario::{build_scenario, Scenario, ScenarioSummary};

use crate::error::{Error, Result};
use crate::immersions::{energy_report, target_distance, DiscreteImmersion, EnergyReport};
use crate::rigidity::{local_rigidity_codim1, ChartHypotheses, GoodSet, RigidityReport};
use crate::target_space::{extend_chart, normal_coordinates, CutoffProfile, ExtendedChart};
use crate::transport::SasakiOptions;

/// Environment variable that replaces `output.dir`.
pub const OUT_DIR_ENV: &str = "RIGIDKIT_OUT_DIR";

/// Column order of the sweep CSV.
pub const CSV_COLUMNS: [&str; 9] = [
    "k",
    "E_s",
    "E_b",
    "E_bS",
    "lp_to_final",
    "w1p_to_final",
    "cauchy_increment",
    "dist_du_Ort_median",
    "shape_residual_median",
];

/// The chart image must contain the ball of twice the cutoff radius.
const CHART_MARGIN: f64 = 2.5;

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub scenario: ScenarioSummary,
    pub config: Config,
    pub k: u32,
    pub energies: EnergyReport,
    pub dist_du_ort: Option<Quantiles>,
    pub shape_residual: Option<Quantiles>,
    pub partition: Option<PartitionClassification>,
    pub rigidity: Option<RigidityReport>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub scenario: ScenarioSummary,
    pub config: Config,
    pub trace: ConvergenceTrace,
    /// Classification of the last member.
    pub partition: Option<PartitionClassification>,
    /// Localization of `∫ d_σ^p` between the last two members.
    pub aggregation: Option<AggregationReport>,
}

fn sasaki_options(config: &Config) -> SasakiOptions {
    SasakiOptions {
        seed: config.seed,
        ..SasakiOptions::default()
    }
}

/// Index of the node at `(n − 1)/2` along every axis.
fn central_node(u: &DiscreteImmersion) -> usize {
    let dom = u.domain();
    dom.flat_index(&vec![(dom.nodes_per_side() - 1) / 2; dom.dim()])
}

fn centered_chart(u: &DiscreteImmersion, q: &DVector<f64>, radius: f64) -> Result<ExtendedChart> {
    let chart = normal_coordinates(u.target(), q, CHART_MARGIN * radius)?;
    extend_chart(chart, CutoffProfile::new(u.target().dim()), radius)
}

/// `q₀` and `τ` as configured, defaulting to the central image point and
/// three times the image radius about it.
fn partition_ball(u: &DiscreteImmersion, part: &PartitionConfig) -> Result<(DVector<f64>, f64)> {
    let q0 = match &part.q0 {
        Some(q) => DVector::from_column_slice(q),
        None => u.value(central_node(u)).clone(),
    };
    let tau = match part.tau {
        Some(t) => t,
        None => {
            let mut radius = 0.0f64;
            for q in u.values() {
                radius = radius.max(target_distance(u.target(), q, &q0)?);
            }
            3.0 * radius.max(f64::EPSILON)
        }
    };
    Ok((q0, tau))
}

fn classify(u: &DiscreteImmersion, part: &PartitionConfig, p: f64) -> Result<PartitionClassification> {
    let (q0, tau) = partition_ball(u, part)?;
    classify_partition(u, part.m, &q0, tau, part.epsilon, p)
}

/// Validates the configuration and constructs every object it names,
/// including the member at `family.k` and the reference shape.
pub fn check(config: &Config) -> Result<Scenario> {
    let scenario = build_scenario(config)?;
    scenario.immersion(config.family.k)?;
    scenario.reference()?;
    Ok(scenario)
}

/// Energies, limit diagnostics, and the optional partition and local
/// rigidity analyses of the member at `family.k`.
pub fn run(config: &Config) -> Result<RunReport> {
    let scenario = build_scenario(config)?;
    let p = config.p;
    let k = config.family.k;
    let u = scenario.immersion(k)?;
    let reference = scenario.reference()?;
    let energies = energy_report(&u, Some(&reference), p)?;

    let partition = config.partition.as_ref().map(|part| classify(&u, part, p)).transpose()?;
    let rigidity = match &config.rigidity {
        Some(rig) => {
            let q = u.value(central_node(&u)).clone();
            let ext = centered_chart(&u, &q, rig.chart_radius)?;
            let good = GoodSet::from_chart(&u, &ext);
            let hyp = ChartHypotheses {
                delta: rig.delta,
                epsilon: rig.epsilon,
            };
            Some(local_rigidity_codim1(&u, &ext, &good, hyp, p)?)
        }
        None => None,
    };
    Ok(RunReport {
        scenario: scenario.summary(),
        config: config.clone(),
        k,
        energies,
        dist_du_ort: Quantiles::of(isometry_defects(&u)?),
        shape_residual: Quantiles::of(shape_residuals(&u, &reference)?),
        partition,
        rigidity,
    })
}

/// The convergence experiment over `sweep.k_min..=sweep.k_max` (or the
/// single index `family.k`), plus the localization check on the last pair
/// when a partition is configured.
pub fn sweep(config: &Config) -> Result<SweepReport> {
    let scenario = build_scenario(config)?;
    let (lo, hi) = config.k_range();
    let ks: Vec<u32> = (lo..=hi).collect();
    let sasaki = sasaki_options(config);
    let trace = convergence_experiment(&scenario, &ks, &sasaki)?;

    let (mut partition, mut aggregation) = (None, None);
    if let Some(part) = &config.partition {
        let last = scenario.immersion(hi)?;
        let class = classify(&last, part, config.p)?;
        if ks.len() > 1 {
            let prev = scenario.immersion(ks[ks.len() - 2])?;
            let q0 = DVector::from_column_slice(&class.q0);
            let ext = centered_chart(&last, &q0, class.tau * (1.0 + 1e-9))?;
            aggregation = Some(aggregation_check(&last, &prev, &class, &ext, &sasaki)?);
        }
        partition = Some(class);
    }
    Ok(SweepReport {
        scenario: scenario.summary(),
        config: config.clone(),
        trace,
        partition,
        aggregation,
    })
}

/// `$RIGIDKIT_OUT_DIR` (when given) or `output.dir`, joined with the
/// scenario name.
pub fn output_dir(config: &Config, env_override: Option<&str>) -> PathBuf {
    let base = env_override.filter(|s| !s.is_empty()).unwrap_or(&config.output.dir);
    Path::new(base).join(&config.name)
}

/// Pretty JSON with a trailing newline; byte-stable for identical values.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

/// One row per sweep point under [`CSV_COLUMNS`]; an empty trace yields the
/// header alone.
pub fn write_trace_csv<W: Write>(trace: &ConvergenceTrace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in &trace.rows {
        let cells = [
            r.e_s,
            r.e_b,
            r.e_bs,
            r.lp_to_final,
            r.w1p_to_final,
            r.cauchy_increment,
            r.dist_du_ort_median,
            r.shape_residual_median,
        ];
        let mut record = vec![r.k.to_string()];
        record.extend(cells.iter().map(|x| format!("{x:e}")));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Reports that can be written to an output directory.
#[derive(Clone, Debug)]
pub enum Reports {
    Run(RunReport),
    Sweep(SweepReport),
}

/// Writes `resolved.toml` and `run.json`, or `resolved.toml`, `sweep.csv`
/// and `sweep.json`, into `dir`; returns the written paths.
pub fn emit_reports(reports: &Reports, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let write = |name: &str, bytes: &[u8]| -> Result<PathBuf> {
        let path = dir.join(name);
        std::fs::write(&path, bytes)?;
        Ok(path)
    };
    let config = match reports {
        Reports::Run(r) => &r.config,
        Reports::Sweep(r) => &r.config,
    };
    let mut paths = vec![write("resolved.toml", config.to_toml().as_bytes())?];
    match reports {
        Reports::Run(r) => paths.push(write("run.json", to_json(r)?.as_bytes())?),
        Reports::Sweep(r) => {
            let mut csv = Vec::new();
            write_trace_csv(&r.trace, &mut csv)?;
            paths.push(write("sweep.csv", &csv)?);
            paths.push(write("sweep.json", to_json(r)?.as_bytes())?);
        }
    }
    Ok(paths)
}

/// Process exit code for an outcome: 0 on success, 2 on a violated
/// hypothesis, 1 on configuration and every other error.
pub fn exit_code(outcome: &Result<()>) -> i32 {
    match outcome {
        Ok(()) => 0,
        Err(Error::Hypothesis(_)) => 2,
        Err(_) => 1,
    }
}

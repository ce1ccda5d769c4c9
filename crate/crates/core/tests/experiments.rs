use nalgebra::DVector;
use proptest::prelude::*;
use rigidkit::experiments::{
    aggregation_check, build_scenario, check, classify_partition, convergence_experiment,
    emit_reports, exit_code, fit_exponent, output_dir, parse_param, run, sweep, to_json,
    write_trace_csv, Config, ConvergenceTrace, Override, Quantiles, Reports, CSV_COLUMNS,
};
use rigidkit::immersions::{bending_energy, stretching_energy, DiscreteImmersion};
use rigidkit::target_space::{extend_chart, normal_coordinates, CutoffProfile};
use rigidkit::transport::SasakiOptions;
use rigidkit::Error;

const FLAT_PLANE: &str = r#"
version = 1
name = "plane"

[domain]
dim = 2
nodes = 9

[family]
kind = "flat"
"#;

fn config(text: &str, sets: &[&str]) -> Config {
    let overrides: Vec<Override> = sets.iter().map(|s| Override::parse(s).unwrap()).collect();
    Config::parse(text, &overrides).unwrap()
}

fn config_error(text: &str, sets: &[&str]) -> (String, String) {
    let overrides: Vec<Override> = sets.iter().map(|s| Override::parse(s).unwrap()).collect();
    match Config::parse(text, &overrides) {
        Err(Error::Config { key, message }) => (key, message),
        other => panic!("expected a config error, got {other:?}"),
    }
}

fn family(kind: &str, dim: usize, nodes: usize, extra: &[&str]) -> Config {
    let mut sets = vec![
        format!("family.kind={kind}"),
        format!("domain.dim={dim}"),
        format!("domain.nodes={nodes}"),
    ];
    sets.extend(extra.iter().map(|s| s.to_string()));
    let refs: Vec<&str> = sets.iter().map(String::as_str).collect();
    config(FLAT_PLANE, &refs)
}

/// Nodes whose coordinates all lie in the middle half of the cube.
fn middle(u: &DiscreteImmersion) -> Vec<usize> {
    let dom = u.domain();
    (0..dom.node_count())
        .filter(|&i| {
            dom.multi_index(i).iter().all(|&j| {
                let t = j as f64 / (dom.nodes_per_side() - 1) as f64;
                (0.25..=0.75).contains(&t)
            })
        })
        .collect()
}

#[test]
fn flat_plane_has_no_stretching() {
    let report = run(&config(FLAT_PLANE, &[])).unwrap();
    assert!(report.energies.stretching <= 1e-24);
    assert!(report.energies.bending <= 1e-24);
    assert_eq!(report.dist_du_ort.unwrap().max, 0.0);
}

#[test]
fn cylinder_modified_bending_decays_at_second_order() {
    let base = [
        "family.kind=cylinder",
        "reference.kind=diag",
        "reference.values=[1.0, 0.0]",
    ];
    let values: Vec<f64> = [17, 33, 65]
        .iter()
        .map(|n| {
            let nodes = format!("domain.nodes={n}");
            let mut sets = base.to_vec();
            sets.push(&nodes);
            run(&config(FLAT_PLANE, &sets)).unwrap().energies.modified_bending.unwrap()
        })
        .collect();
    // the boundary layer is first order in S_u, so E_b^S with p = 2 is O(h³)
    for w in values.windows(2) {
        assert!(w[1] < w[0] / 7.0, "{values:?}");
    }
    assert!(values[2] < 1e-6, "{values:?}");
}

#[test]
fn misspelled_names_report_their_key() {
    let (key, message) = config_error(FLAT_PLANE, &["target.metric=spherre"]);
    assert_eq!(key, "target.metric");
    assert!(message.contains("spherre"), "{message}");

    let (key, _) = config_error(FLAT_PLANE, &["family.kind=cylindre"]);
    assert_eq!(key, "family.kind");

    let (key, message) = config_error(FLAT_PLANE, &["family.amplitud=0.2"]);
    assert_eq!(key, "family.amplitud");
    assert!(message.contains("amplitud"), "{message}");

    let (key, _) = config_error("version = 1\nname = \"x\"\n[family]\nkind = \"flat\"\n", &[]);
    assert_eq!(key, "<document>");
}

#[test]
fn invalid_ranges_report_their_key() {
    let cases: [(&[&str], &str); 9] = [
        (&["version=2"], "version"),
        (&["p=0.5"], "p"),
        (&["domain.nodes=2"], "domain.nodes"),
        (&["domain.origin=[0.0]"], "domain.origin"),
        (&["target.metric=sphere", "target.radius=-1.0"], "target.radius"),
        (&["target.metric=sphere_polar"], "target.metric"),
        (&["partition.m=3"], "partition.m"),
        (&["family.kind=wrinkle", "family.k=2"], "family.k"),
        (&["family.rigid.plane=[0, 0]"], "family.rigid.plane"),
    ];
    for (sets, expected) in cases {
        let (key, message) = config_error(FLAT_PLANE, sets);
        assert_eq!(key, expected, "{sets:?}: {message}");
    }
    // a non-SPD constant metric is rejected at construction
    let (key, _) = config_error(
        FLAT_PLANE,
        &["domain.metric=constant", "domain.entries=[[1.0, 2.0], [2.0, 1.0]]"],
    );
    assert_eq!(key, "domain.entries");
}

#[test]
fn wrinkle_resolution_is_checked_one_past_the_sweep() {
    let sets = ["family.kind=wrinkle", "domain.nodes=65", "sweep.k_min=1", "sweep.k_max=8"];
    let (key, message) = config_error(FLAT_PLANE, &sets);
    assert_eq!(key, "sweep.k_max");
    assert!(message.contains("k = 9"), "{message}");
    config(FLAT_PLANE, &["family.kind=wrinkle", "domain.nodes=65", "sweep.k_min=1", "sweep.k_max=7"]);
}

#[test]
fn overrides_parse_toml_literals() {
    let o = Override::parse("family.k=4").unwrap();
    assert_eq!(o.value, toml::Value::Integer(4));
    let o = Override::parse("domain.origin = [0.5, -1.0]").unwrap();
    assert_eq!(o.key, "domain.origin");
    assert!(o.value.is_array());
    assert_eq!(Override::parse("output.dir=/tmp/x").unwrap().value.as_str(), Some("/tmp/x"));
    assert!(Override::parse("no-equals").is_err());
    assert!(Override::parse("a..b=1").is_err());

    // overrides create missing sections and cannot descend into values
    let c = config(FLAT_PLANE, &["sweep.k_min=2", "sweep.k_max=5"]);
    assert_eq!(c.k_range(), (2, 5));
    let (key, _) = config_error(FLAT_PLANE, &["name.x=1"]);
    assert_eq!(key, "name");

    let [lo, hi] = parse_param("k=1..32").unwrap();
    assert_eq!((lo.value.as_integer(), hi.value.as_integer()), (Some(1), Some(32)));
    assert!(parse_param("t=1..3").is_err());
    assert!(parse_param("k=4").is_err());
}

#[test]
fn resolved_config_round_trips() {
    let c = config(FLAT_PLANE, &["family.kind=perturbation", "partition.m=4"]);
    assert_eq!(c.family.amplitude, Some(0.1));
    assert_eq!(c.domain.origin, Some(vec![0.0, 0.0]));
    let again = Config::parse(&c.to_toml(), &[]).unwrap();
    assert_eq!(again, c);
}

#[test]
fn family_reference_matches_induced_shape() {
    for dim in 1..=3 {
        let meshes = if dim == 3 { [9, 17] } else { [33, 65] };
        for (kind, extra) in [
            ("cylinder", vec!["family.radius=1.5"]),
            ("sphere_cap", vec!["family.radius=2.0", "domain.side=0.5"]),
            ("graph", vec!["family.amplitude=0.2"]),
        ] {
            let mut sets = extra.clone();
            sets.push("family.rigid.angle=0.4");
            sets.push("family.rigid.plane=[0, 1]");
            let errors = meshes.map(|nodes| {
                let scenario = build_scenario(&family(kind, dim, nodes, &sets)).unwrap();
                let u = scenario.immersion(1).unwrap();
                let reference = scenario.reference().unwrap();
                middle(&u)
                    .into_iter()
                    .map(|i| {
                        (u.induced_shape_operator().table(i).unwrap() - reference.table(i).unwrap())
                            .amax()
                    })
                    .fold(0.0, f64::max)
            });
            // a wrong sign or scale would leave an O(1) error
            assert!(errors[1] < 5e-2, "{kind} d = {dim}: {errors:?}");
            assert!(errors[1] < 1e-10 || errors[0] / errors[1] > 3.5, "{kind} d = {dim}: {errors:?}");
        }
    }
}

#[test]
fn rigid_motions_leave_energies_unchanged() {
    for kind in ["graph", "sphere_cap", "perturbation"] {
        let plain = build_scenario(&family(kind, 2, 17, &[])).unwrap().immersion(2).unwrap();
        let moved = build_scenario(&family(
            kind,
            2,
            17,
            &["family.rigid.plane=[2, 0]", "family.rigid.angle=1.1", "family.rigid.translation=[1.0, 2.0, -3.0]"],
        ))
        .unwrap()
        .immersion(2)
        .unwrap();
        for p in [2.0, 3.0] {
            let (a, b) = (stretching_energy(&plain, p).unwrap(), stretching_energy(&moved, p).unwrap());
            assert!((a - b).abs() <= 1e-10 * (1.0 + a), "{kind}: {a} vs {b}");
            let (a, b) = (bending_energy(&plain, p).unwrap(), bending_energy(&moved, p).unwrap());
            assert!((a - b).abs() <= 1e-10 * (1.0 + a), "{kind}: {a} vs {b}");
        }
    }
}

#[test]
fn anti_wrinkle_is_isometric_with_growing_bending() {
    let scenario = build_scenario(&family("anti_wrinkle", 2, 129, &[])).unwrap();
    let (u1, u4) = (scenario.immersion(1).unwrap(), scenario.immersion(4).unwrap());
    // unit-speed profile: only the difference stencils stretch
    assert!(stretching_energy(&u4, 2.0).unwrap() < 1e-5);
    let (b1, b4) = (bending_energy(&u1, 2.0).unwrap(), bending_energy(&u4, 2.0).unwrap());
    assert!((b4 / b1 - 16.0).abs() < 0.5, "{b1} {b4}");
    // height amplitude is O(1/k)
    let height = |u: &DiscreteImmersion| u.values().iter().map(|v| v[2].abs()).fold(0.0, f64::max);
    let ratio = height(&u1) / height(&u4);
    assert!((ratio - 4.0).abs() < 0.2, "{ratio}");
}

fn brute_force_densities(u: &DiscreteImmersion, m: usize, q0: &DVector<f64>, tau: f64) -> Vec<f64> {
    let dom = u.domain();
    let n = dom.nodes_per_side();
    let step = (n - 1) / m;
    let d = dom.dim();
    let mut inside = vec![0.0; m.pow(d as u32)];
    let mut total = vec![0.0; m.pow(d as u32)];
    for i in 0..dom.node_count() {
        let multi = dom.multi_index(i);
        let within = (u.value(i) - q0).norm() <= tau;
        // every cube containing the node, with that cube's trapezoid weight
        let choices: Vec<Vec<usize>> = multi
            .iter()
            .map(|&j| {
                let mut c = Vec::new();
                if j % step == 0 && j > 0 {
                    c.push(j / step - 1);
                }
                if j / step < m {
                    c.push(j / step);
                }
                c
            })
            .collect();
        let mut stack = vec![(0usize, 0usize, 1.0f64)];
        while let Some((axis, cube, weight)) = stack.pop() {
            if axis == d {
                total[cube] += weight;
                if within {
                    inside[cube] += weight;
                }
                continue;
            }
            for &c in &choices[axis] {
                let local = multi[axis] - c * step;
                let w = if local == 0 || local == step { 0.5 } else { 1.0 };
                stack.push((axis + 1, cube * m + c, weight * w));
            }
        }
    }
    inside.iter().zip(&total).map(|(a, b)| a / b).collect()
}

#[test]
fn partition_classification_examples() {
    let scenario = build_scenario(&config(FLAT_PLANE, &["domain.nodes=17"])).unwrap();
    let u = scenario.immersion(1).unwrap();
    let center = DVector::from_vec(vec![0.5, 0.5, 0.0]);

    let all_in = classify_partition(&u, 4, &center, 1.0, 0.1, 2.0).unwrap();
    assert_eq!(all_in.good.len(), 16);
    assert_eq!(all_in.outside_fraction, 0.0);
    assert_eq!(all_in.bad_volume, 0.0);
    assert!(all_in.hypothesis_holds());

    let far = DVector::from_vec(vec![10.0, 10.0, 10.0]);
    let all_out = classify_partition(&u, 4, &far, 1.0, 0.1, 2.0).unwrap();
    assert_eq!(all_out.bad.len(), 16);
    assert!(!all_out.hypothesis_holds());

    // the ball around the left edge covers roughly half the square
    let edge = DVector::from_vec(vec![0.0, 0.5, 0.0]);
    let mixed = classify_partition(&u, 4, &edge, 0.55, 0.1, 2.0).unwrap();
    assert!(!mixed.good.is_empty() && !mixed.bad.is_empty());
    let expected = brute_force_densities(&u, 4, &edge, 0.55);
    for (a, b) in mixed.densities.iter().zip(&expected) {
        assert!((a - b).abs() < 1e-14, "{a} vs {b}");
    }
    for (c, density) in expected.iter().enumerate() {
        assert_eq!(mixed.good.contains(&c), *density > 0.5);
    }

    assert!(classify_partition(&u, 3, &center, 1.0, 0.1, 2.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn partition_bookkeeping(
        m in prop::sample::select(vec![1usize, 2, 4, 8]),
        cx in -0.5f64..1.5,
        cy in -0.5f64..1.5,
        tau in 0.05f64..1.2,
        eps in 0.05f64..0.95,
    ) {
        let scenario = build_scenario(&config(FLAT_PLANE, &["domain.nodes=17", "family.kind=graph"])).unwrap();
        let u = scenario.immersion(1).unwrap();
        let q0 = DVector::from_vec(vec![cx, cy, 0.0]);
        let c = classify_partition(&u, m, &q0, tau, eps, 2.0).unwrap();
        prop_assert_eq!(c.good.len() + c.bad.len(), m * m);
        prop_assert_eq!(c.cube_count(), m * m);
        if let Some(bound) = c.bad_volume_bound {
            prop_assert!(c.bad_volume <= bound * (1.0 + 1e-12));
        }
    }
}

#[test]
fn aggregation_dominates_the_global_integral() {
    let text = config(FLAT_PLANE, &["family.kind=perturbation", "domain.nodes=33"]);
    let scenario = build_scenario(&text).unwrap();
    let (u1, u2) = (scenario.immersion(3).unwrap(), scenario.immersion(2).unwrap());
    let sasaki = SasakiOptions::default();
    for (tau, expect_bad) in [(2.0, false), (0.45, true)] {
        let q0 = u1.value(u1.domain().flat_index(&[16, 16])).clone();
        let part = classify_partition(&u1, 4, &q0, tau, 0.5, 2.0).unwrap();
        assert_eq!(!part.bad.is_empty(), expect_bad);
        let chart = normal_coordinates(u1.target(), &q0, 2.5 * tau).unwrap();
        let ext = extend_chart(chart, CutoffProfile::new(3), tau).unwrap();
        let agg = aggregation_check(&u1, &u2, &part, &ext, &sasaki).unwrap();
        assert!(agg.holds, "{agg:?}");
        assert!(agg.global > 0.0);
        if !expect_bad {
            // good cubes alone reproduce the integral
            assert!((agg.good_lhs - agg.global).abs() <= 1e-12 * agg.global);
            assert_eq!(agg.bad_bound, 0.0);
        } else {
            assert!(agg.bad_bound > 0.0);
        }
    }
}

#[test]
fn convergence_trace_of_a_short_perturbation_sweep() {
    let c = config(FLAT_PLANE, &["family.kind=perturbation", "domain.nodes=33"]);
    let scenario = build_scenario(&c).unwrap();
    let trace = convergence_experiment(&scenario, &[1, 2, 4, 8], &SasakiOptions::default()).unwrap();
    assert_eq!(trace.rows.len(), 4);
    assert!(trace.warnings.is_empty(), "{:?}", trace.warnings);
    let last = trace.rows.last().unwrap();
    assert_eq!((last.lp_to_final, last.w1p_to_final), (0.0, 0.0));
    // increments are w1p(u_k, u_{k+1}) ∝ 1/(k(k+1)) on a flat target
    for r in &trace.rows {
        let k = f64::from(r.k);
        let scaled = r.cauchy_increment * k * (k + 1.0);
        let first = trace.rows[0].cauchy_increment * 2.0;
        assert!((scaled - first).abs() < 1e-12 * first, "k = {k}");
    }
    let e_s = trace.fits["e_s"].unwrap();
    assert!((e_s + 2.0).abs() < 0.3, "{e_s}");
    assert!(trace.converging);
    assert!(trace.limit.as_ref().unwrap().dist_du_ort.is_some());

    assert!(convergence_experiment(&scenario, &[2, 2], &SasakiOptions::default()).is_err());
    let empty = convergence_experiment(&scenario, &[], &SasakiOptions::default()).unwrap();
    assert!(empty.rows.is_empty());
}

#[test]
fn non_monotone_stretching_is_a_warning() {
    // E_s of the anti-wrinkle is discretization error, growing with k
    let c = config(
        FLAT_PLANE,
        &["family.kind=anti_wrinkle", "domain.dim=1", "domain.nodes=257", "sweep.k_min=1", "sweep.k_max=4"],
    );
    let report = sweep(&c).unwrap();
    assert!(!report.trace.warnings.is_empty());
    assert!(!report.trace.converging);
}

#[test]
fn quantiles_and_fits() {
    let q = Quantiles::of(vec![4.0, 1.0, 3.0, 2.0]).unwrap();
    assert_eq!((q.min, q.q25, q.median, q.q75, q.max), (1.0, 1.75, 2.5, 3.25, 4.0));
    assert!(Quantiles::of(Vec::new()).is_none());
    let pts: Vec<(f64, f64)> = (1..10).map(|k| (k as f64, 3.0 * (k as f64).powf(-1.5))).collect();
    assert!((fit_exponent(&pts).unwrap() + 1.5).abs() < 1e-12);
    assert!(fit_exponent(&[(1.0, 0.0), (2.0, 1.0)]).is_none());
}

#[test]
fn empty_trace_writes_the_header_only() {
    let mut out = Vec::new();
    write_trace_csv(&ConvergenceTrace::empty("flat", 2.0), &mut out).unwrap();
    assert_eq!(String::from_utf8(out).unwrap(), format!("{}\n", CSV_COLUMNS.join(",")));
}

#[test]
fn three_point_sweep_writes_three_rows() {
    let c = config(
        FLAT_PLANE,
        &["family.kind=perturbation", "sweep.k_min=2", "sweep.k_max=4", "partition.m=2"],
    );
    let report = sweep(&c).unwrap();
    let mut out = Vec::new();
    write_trace_csv(&report.trace, &mut out).unwrap();
    let mut reader = csv::Reader::from_reader(out.as_slice());
    assert_eq!(reader.headers().unwrap().iter().collect::<Vec<_>>(), CSV_COLUMNS);
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3);
    for (row, k) in rows.iter().zip(2..) {
        assert_eq!(row.len(), CSV_COLUMNS.len());
        assert_eq!(row[0].parse::<u32>().unwrap(), k);
        for cell in row.iter().skip(1) {
            assert!(cell.parse::<f64>().unwrap().is_finite());
        }
    }
    assert!(report.aggregation.unwrap().holds);
}

#[test]
fn reports_are_byte_deterministic() {
    let c = config(
        FLAT_PLANE,
        &["family.kind=wrinkle", "domain.nodes=33", "sweep.k_min=1", "sweep.k_max=3", "partition.m=4"],
    );
    let a = to_json(&sweep(&c).unwrap()).unwrap();
    let b = to_json(&sweep(&c).unwrap()).unwrap();
    assert_eq!(a, b);

    let dir = tempfile::tempdir().unwrap();
    let (d1, d2) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&d1, &d2] {
        emit_reports(&Reports::Sweep(sweep(&c).unwrap()), d).unwrap();
    }
    for name in ["resolved.toml", "sweep.csv", "sweep.json"] {
        let x = std::fs::read(d1.join(name)).unwrap();
        let y = std::fs::read(d2.join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
}

#[test]
fn unwritable_output_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, b"x").unwrap();
    let report = run(&config(FLAT_PLANE, &[])).unwrap();
    assert!(matches!(
        emit_reports(&Reports::Run(report), &blocker.join("sub")),
        Err(Error::Io(_))
    ));
}

#[test]
fn output_dir_prefers_the_environment_value() {
    let c = config(FLAT_PLANE, &["output.dir=results"]);
    assert_eq!(output_dir(&c, None), std::path::Path::new("results/plane"));
    assert_eq!(output_dir(&c, Some("/tmp/o")), std::path::Path::new("/tmp/o/plane"));
    assert_eq!(output_dir(&c, Some("")), std::path::Path::new("results/plane"));
}

#[test]
fn hypothesis_violations_map_to_exit_code_two() {
    let text = r#"
version = 1
name = "curved"
[domain]
dim = 2
side = 0.1
nodes = 9
origin = [-0.05, -0.05]
[target]
metric = "sphere"
[family]
kind = "flat"
[rigidity]
chart_radius = 0.3
"#;
    let strict = run(&config(text, &[])).map(|_| ());
    assert!(matches!(strict, Err(Error::Hypothesis(_))));
    assert_eq!(exit_code(&strict), 2);
    let relaxed = run(&config(text, &["rigidity.epsilon=0.5"])).map(|_| ());
    assert_eq!(exit_code(&relaxed), 0);
    assert_eq!(exit_code(&Err(Error::Config { key: "k".into(), message: "m".into() })), 1);
    assert!(check(&config(text, &[])).is_ok());
}


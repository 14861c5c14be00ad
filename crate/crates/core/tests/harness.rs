use std::fs;

use opker_core::estimators::simulate_dataset;
use opker_core::harness::*;

const BASE: &str = r#"
experiment_id = "small"
model = "integral"
seed = 11
truncation = 16

[ensemble]
preset = "poly"
rate = 1.0
modes = 8

[class]
beta = 1.0
radius = 10.0

[sweep]
m_values = [64, 128, 256, 512, 1024]
repetitions = 4

[grid]
n = 64
quad_nodes = 64

[diagnostics]
points = [[1, 200], [2, 2000]]
trials = 50
kappa_trials = 0
"#;

fn build(text: &str) -> Experiment {
    Experiment::build(&ExperimentConfig::from_toml(text).unwrap()).unwrap()
}

#[test]
fn sweep_is_identical_across_worker_counts() {
    let exp = build(BASE);
    let a = run_rate_sweep(&exp, Some(1)).unwrap();
    let b = run_rate_sweep(&exp, Some(3)).unwrap();
    assert_eq!(a, b);
    let mut ca = Vec::new();
    let mut cb = Vec::new();
    write_records_csv(&a.records, &mut ca).unwrap();
    write_records_csv(&b.records, &mut cb).unwrap();
    assert_eq!(ca, cb);
}

#[test]
fn noiseless_full_dimension_sweep_is_degenerate() {
    let text = BASE
        .replace("repetitions = 4", "repetitions = 2\ndimension = { fixed = 16 }")
        .replace("[class]", "[noise]\nkind = \"gaussian\"\nsigma = 0.0\n\n[class]");
    let res = run_rate_sweep(&build(&text), None).unwrap();
    assert!(res.records.iter().all(|r| !r.cutoff && r.total_err < 1e-20), "{:?}", res.records);
    assert!(matches!(res.fit, SlopeFit::Degenerate { .. }));
    assert_eq!(res.passed, None);
}

#[test]
fn oracle_bias_is_non_increasing() {
    let res = run_rate_sweep(&build(BASE), None).unwrap();
    let ns: Vec<usize> = res.points.iter().map(|p| p.n).collect();
    assert!(ns.windows(2).all(|w| w[0] <= w[1]), "{ns:?}");
    let reps = 4;
    let bias: Vec<f64> = res.records.chunks(reps).map(|c| c[0].bias_err).collect();
    assert!(bias.windows(2).all(|w| w[1] <= w[0] + 1e-15), "{bias:?}");
    assert!(res.records.iter().all(|r| (r.var_err + r.bias_err - r.total_err).abs() < 1e-12));
}

#[test]
fn emitted_files_carry_config_hash() {
    let exp = build(BASE);
    let res = run_rate_sweep(&exp, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let paths = emit_results(&res, &exp.config, OutputFormat::Both, dir.path(), true).unwrap();
    assert_eq!(paths.len(), 4);
    let jsonl = fs::read_to_string(dir.path().join("small.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(jsonl.lines().next().unwrap()).unwrap();
    assert_eq!(first["record"], "run");
    assert_eq!(first["config_hash"], exp.config.hash());
    assert_eq!(first["software"], SOFTWARE_VERSION);
    let back = read_records_csv(fs::File::open(dir.path().join("small.csv")).unwrap()).unwrap();
    assert_eq!(back, res.records);
    let svg = fs::read_to_string(dir.path().join("small.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("<circle"));
    // A second run writes byte-identical files.
    let dir2 = tempfile::tempdir().unwrap();
    emit_results(&run_rate_sweep(&exp, Some(2)).unwrap(), &exp.config, OutputFormat::Both, dir2.path(), true).unwrap();
    for name in ["small.csv", "small.jsonl", "small_loglog.dat", "small.svg"] {
        assert_eq!(fs::read(dir.path().join(name)).unwrap(), fs::read(dir2.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn campaign_reports_both_events() {
    let exp = build(BASE);
    let res = run_diagnostics_campaign(&exp, None).unwrap();
    assert_eq!(res.kappa, 3.0);
    assert_eq!(res.reports.len(), 4);
    assert!(res.violations().is_empty());
    let empty = BASE.replace("points = [[1, 200], [2, 2000]]", "points = []");
    assert!(run_diagnostics_campaign(&build(&empty), None).unwrap().reports.is_empty());
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(emit_campaign(&res, &exp.config, OutputFormat::Both, dir.path()).unwrap().len(), 2);
}

#[test]
fn dataset_round_trip_and_rejection() {
    let exp = build(BASE);
    let data = simulate_dataset(&exp.ctx, &exp.eig, &exp.true_kernel(), exp.noise(), 10, 5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.json");
    write_dataset(&path, &exp.config, &data).unwrap();
    let (cfg, back) = read_dataset(&path).unwrap();
    assert_eq!(cfg, exp.config);
    assert_eq!(back.samples, data.samples);
    assert_eq!(back.true_kernel, data.true_kernel);

    let text = fs::read_to_string(&path).unwrap().replace("\"version\":1", "\"version\":9");
    fs::write(&path, text).unwrap();
    assert!(matches!(read_dataset(&path), Err(HarnessError::Format { .. })));
    assert!(matches!(read_dataset(&dir.path().join("missing.json")), Err(HarnessError::Io { .. })));
}

use std::fs;
use std::path::Path;

use spdeflow::run::{
    read_snapshot, report, run_path, run_scenario, write_outputs, Manifest, RunOptions, CONFIG_ECHO,
    DIAGNOSTICS_CSV, MANIFEST, PATHS_CSV,
};
use spdeflow::scenario::{parse_config, Method, Scenario, ScenarioKind};
use spdeflow::Error;

const HEAT: &str = r#"
scenario = "heat"
[grid]
d = 1
n = 128
[time]
t_end = 0.1
dt = 1e-4
"#;

fn build(text: &str) -> Scenario {
    Scenario::build(parse_config(text).unwrap()).unwrap()
}

#[test]
fn minimal_heat_config_materializes_defaults() {
    let cfg = parse_config(HEAT).unwrap();
    assert_eq!(cfg.scenario, ScenarioKind::Heat);
    let noise = cfg.noise.as_ref().unwrap();
    assert_eq!(noise.family, "zero");
    assert_eq!(noise.modes, Some(0));
    assert_eq!(cfg.monte_carlo.paths, 1);
    assert_eq!(cfg.solver.method, Method::Flow);
    assert_eq!(cfg.steps(), 1000);
    let s = Scenario::build(cfg).unwrap();
    assert_eq!(s.family.modes(), 0);
}

#[test]
fn sincos_identity_diffusion_has_half_margin() {
    let s = build(
        r#"
scenario = "sincos2d"
[grid]
d = 2
n = 16
[time]
t_end = 0.01
dt = 1e-3
[coefficients]
a = { kind = "diagonal", values = [1.0, 1.0] }
"#,
    );
    assert!((s.parabolicity.nu_hat - 0.5).abs() <= 1e-15);
    assert!(s.parabolicity.pass);
}

#[test]
fn sincos_with_weak_diffusion_is_rejected() {
    let err = parse_config(
        r#"
scenario = "sincos2d"
[grid]
d = 2
n = 16
[time]
t_end = 0.01
dt = 1e-3
[coefficients]
a = { kind = "diagonal", values = [0.4, 1.0] }
nu = 0.1
"#,
    )
    .and_then(Scenario::build)
    .unwrap_err();
    assert!(matches!(err, Error::Parabolicity { .. }), "{err}");
}

#[test]
fn schema_errors_name_the_field() {
    let err = parse_config(&HEAT.replace("n = 128", "n = 128\nq = 3")).unwrap_err();
    assert!(err.to_string().contains("grid"), "{err}");
    let err = parse_config(&HEAT.replace("dt = 1e-4", "dt = \"small\"")).unwrap_err();
    assert!(err.to_string().contains("time.dt"), "{err}");
}

#[test]
fn echoed_config_parses_back_to_itself() {
    for text in [
        HEAT,
        include_str!("../configs/heat.toml"),
        include_str!("../configs/sincos2d_tail.toml"),
        include_str!("../configs/constant_noise.toml"),
        include_str!("../configs/rough_a.toml"),
        include_str!("../configs/quasilinear.toml"),
        include_str!("../configs/axis_commuting.toml"),
    ] {
        let cfg = parse_config(text).unwrap();
        let again = parse_config(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.hash(), cfg.hash());
    }
}

#[test]
fn heat_path_matches_fourier_oracle() {
    let s = build(include_str!("../configs/heat.toml"));
    let summary = run_scenario(&s, RunOptions::default()).unwrap();
    let e = summary.paths[0].summary.oracle_error;
    assert!(e <= 1e-3, "oracle error {e}");
    assert_eq!(summary.aggregates.max_oracle_error, Some(e));
}

#[test]
fn constant_noise_cross_validation_gap() {
    let s = build(
        r#"
scenario = "constant_noise"
[grid]
d = 2
n = 32
[time]
t_end = 0.05
dt = 1e-3
[diagnostics]
cross_validate = true
"#,
    );
    let summary = run_scenario(&s, RunOptions::default()).unwrap();
    let gap = summary.paths[0].summary.cross_gap;
    assert!(gap <= 0.05, "gap {gap}");
}

fn unique_tmp() -> tempfile::TempDir {
    tempfile::tempdir().unwrap()
}

#[test]
fn empty_run_writes_manifest_and_echo_only() {
    let s = build(&HEAT.replace("dt = 1e-4", "dt = 1e-4\n[monte_carlo]\npaths = 0"));
    let summary = run_scenario(&s, RunOptions::default()).unwrap();
    let tmp = unique_tmp();
    write_outputs(&summary, tmp.path()).unwrap();
    let mut names: Vec<String> = fs::read_dir(tmp.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names, vec![CONFIG_ECHO.to_string(), MANIFEST.to_string()]);
}

#[test]
fn final_snapshot_round_trips_bit_identically() {
    let s = build(HEAT);
    let summary = run_scenario(&s, RunOptions::default()).unwrap();
    let tmp = unique_tmp();
    write_outputs(&summary, tmp.path()).unwrap();
    let snap = summary.paths[0].snapshots.last().unwrap();
    let bin = fs::read_dir(tmp.path().join("snapshots"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|e| e == "bin"))
        .unwrap();
    let (meta, values) = read_snapshot(&bin).unwrap();
    assert_eq!(meta.config_hash, summary.config_hash);
    assert_eq!((meta.d, meta.n), (1, 128));
    let a: Vec<u64> = values.iter().map(|v| v.to_bits()).collect();
    let b: Vec<u64> = snap.field.values.iter().map(|v| v.to_bits()).collect();
    assert_eq!(a, b);
}

const SMALL_MC: &str = r#"
scenario = "constant_noise"
[grid]
d = 1
n = 16
[time]
t_end = 0.02
dt = 1e-3
[monte_carlo]
paths = 100
seed = 42
[diagnostics]
record_every = 5
"#;

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap()
}

#[test]
fn worker_count_does_not_change_outputs() {
    let s = build(SMALL_MC);
    let tmp = unique_tmp();
    let mut dirs = Vec::new();
    for workers in [1, 8] {
        let summary = run_scenario(&s, RunOptions { workers, fail_fast: false }).unwrap();
        let dir = tmp.path().join(format!("w{workers}"));
        write_outputs(&summary, &dir).unwrap();
        dirs.push(dir);
    }
    for name in [DIAGNOSTICS_CSV, PATHS_CSV, CONFIG_ECHO] {
        assert_eq!(read(&dirs[0], name), read(&dirs[1], name), "{name}");
    }
    let manifests: Vec<Manifest> = dirs
        .iter()
        .map(|d| serde_json::from_slice(&read(d, MANIFEST)).unwrap())
        .collect();
    let strip = |m: &Manifest| {
        let mut m = m.clone();
        m.timing.wall_seconds = 0.0;
        m.timing.workers = 0;
        serde_json::to_vec(&m).unwrap()
    };
    assert_eq!(strip(&manifests[0]), strip(&manifests[1]));
}

#[test]
fn report_reproduces_manifest_aggregates() {
    let s = build(SMALL_MC);
    let summary = run_scenario(&s, RunOptions { workers: 2, fail_fast: false }).unwrap();
    let tmp = unique_tmp();
    write_outputs(&summary, tmp.path()).unwrap();
    let (cfg, agg) = report(tmp.path()).unwrap();
    assert_eq!(cfg, summary.config);
    let manifest: Manifest = serde_json::from_slice(&read(tmp.path(), MANIFEST)).unwrap();
    assert_eq!(
        serde_json::to_string(&agg).unwrap(),
        serde_json::to_string(&manifest.aggregates).unwrap()
    );
}

#[test]
fn single_path_runs_equal_full_run_records() {
    let s = build(SMALL_MC);
    let summary = run_scenario(&s, RunOptions { workers: 3, fail_fast: false }).unwrap();
    for idx in [0u64, 17, 99] {
        let alone = run_path(&s, idx).unwrap();
        let full = &summary.paths[idx as usize];
        assert_eq!(alone.rows.len(), full.rows.len());
        let bits = |r: &spdeflow::run::PathRecord| serde_json::to_string(&r.rows).unwrap();
        assert_eq!(bits(&alone), bits(full));
        assert_eq!(alone.summary.seed, full.summary.seed);
    }
}

const FRAGILE: &str = r#"
scenario = "constant_noise"
[grid]
d = 1
n = 16
[time]
t_end = 0.02
dt = 1e-3
[monte_carlo]
paths = 12
seed = 3
[solver]
method = "direct"
blowup_bound = 0.5
"#;

#[test]
fn failing_paths_are_isolated_or_fatal() {
    let s = build(FRAGILE);
    let err = run_scenario(&s, RunOptions { workers: 2, fail_fast: true }).unwrap_err();
    assert!(err.to_string().contains("path 0"), "{err}");
    let summary = run_scenario(&s, RunOptions { workers: 2, fail_fast: false }).unwrap();
    assert_eq!(summary.paths.len(), 12);
    assert_eq!(summary.aggregates.paths_failed, 12);
    assert!(summary.paths.iter().all(|p| !p.summary.ok && p.error.is_some()));
}

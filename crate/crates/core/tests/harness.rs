use std::path::PathBuf;

use relosc::criteria::Verdict;
use relosc::harness::report::criteria_csv;
use relosc::harness::run::config_hash;
use relosc::harness::{run_experiment, write_outputs, ExitStatus, ExperimentConfig, RunMode};
use relosc::Error;

fn config(name: &str) -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(format!("{name}.cfg"));
    ExperimentConfig::from_file(&path).unwrap()
}

const SMALL: &str = r#"{
  "name": "small",
  "interval": { "a": 1.0 },
  "background": { "q": "0" },
  "perturbation": { "q": "(div mu (pow x 2))" },
  "energy": 0.0,
  "params": { "mu": -1.0 },
  "edge": { "u0": "1", "v0": "x" },
  "criteria": [],
  "numerics": { "x_max": 1e5 }
}"#;

#[test]
fn empty_criteria_list_gives_no_rows() {
    let cfg = ExperimentConfig::from_json(SMALL).unwrap();
    let report = run_experiment(&cfg, RunMode::Full).unwrap();
    assert!(report.rows.is_empty());
    assert_eq!(criteria_csv(&report).lines().count(), 1);
    assert_eq!(report.exit_status(), ExitStatus::Success);
}

#[test]
fn one_row_per_criterion() {
    let src = SMALL.replace(
        r#""criteria": []"#,
        r#""criteria": [{ "name": "gu" }, { "name": "hille_wintner" }, { "name": "classify" }]"#,
    );
    let cfg = ExperimentConfig::from_json(&src).unwrap();
    let report = run_experiment(&cfg, RunMode::Full).unwrap();
    assert_eq!(report.rows.len(), 3);
    assert_eq!(criteria_csv(&report).lines().count(), 4);
    assert!(report.rows.iter().all(|r| r.verdict == Some(Verdict::Oscillatory)), "{:?}", report.rows);
}

#[test]
fn kneser_gu_verdicts() {
    let report = run_experiment(&config("kneser"), RunMode::Full).unwrap();
    let gu: Vec<_> = report.rows.iter().filter(|r| r.criterion == "gu").map(|r| r.verdict.unwrap()).collect();
    use Verdict::*;
    assert_eq!(gu, [Oscillatory, Oscillatory, Oscillatory, Inconclusive, Nonoscillatory, Nonoscillatory]);
    assert_eq!(report.exit_status(), ExitStatus::Inconclusive);
}

#[test]
fn reruns_are_byte_identical() {
    let cfg = config("kneser");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let fa = write_outputs(&run_experiment(&cfg, RunMode::Full).unwrap(), a.path(), cfg.prefix()).unwrap();
    let fb = write_outputs(&run_experiment(&cfg, RunMode::Full).unwrap(), b.path(), cfg.prefix()).unwrap();
    assert_eq!(fa.len(), fb.len());
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(x.file_name(), y.file_name());
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap(), "{}", x.display());
    }
}

#[test]
fn unwritable_output_is_an_io_error() {
    let cfg = ExperimentConfig::from_json(SMALL).unwrap();
    let report = run_experiment(&cfg, RunMode::Full).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let err = write_outputs(&report, &blocker.join("sub"), "x").unwrap_err();
    assert!(matches!(err, Error::Io(_)), "{err:?}");
}

#[test]
fn config_hash_tracks_content() {
    let a = ExperimentConfig::from_json(SMALL).unwrap();
    let b = ExperimentConfig::from_json(&SMALL.replace("1e5", "2e5")).unwrap();
    assert_eq!(config_hash(&a), config_hash(&ExperimentConfig::from_json(SMALL).unwrap()));
    assert_ne!(config_hash(&a), config_hash(&b));
    assert_eq!(config_hash(&a).len(), 64);
}

#[test]
fn free_floquet_has_a_single_band_edge() {
    let report = run_experiment(&config("free_floquet"), RunMode::Bands).unwrap();
    assert_eq!(report.bands.len(), 1);
    let edge = &report.bands[0];
    assert!(edge.e.abs() < 1e-9);
    assert!((edge.mu_c.unwrap() - 1.0).abs() < 1e-6);
    assert!(!report.discriminant.is_empty());
}

#[test]
fn bad_configs_are_rejected() {
    assert!(ExperimentConfig::from_json("{").is_err());
    assert!(ExperimentConfig::from_json(&SMALL.replace("(div mu", "(div nope")).is_err());
    let gu = SMALL.replace(r#""criteria": []"#, r#""criteria": [{ "name": "gu" }]"#);
    assert!(ExperimentConfig::from_json(&gu).is_ok());
    assert!(ExperimentConfig::from_json(&gu.replace("1e5", "2.0")).is_err());
}

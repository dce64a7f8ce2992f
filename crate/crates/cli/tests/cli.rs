use std::path::PathBuf;
use std::process::{Command, Output};

fn relosc(args: &[&str], out: &std::path::Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relosc"))
        .args(args)
        .env("RELOSC_OUT_DIR", out)
        .output()
        .unwrap()
}

fn cfg(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(format!("{name}.cfg"))
        .to_string_lossy()
        .into_owned()
}

#[test]
fn validate_accepts_bundled_configs() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["kneser", "whh", "free_floquet", "mathieu", "averaged"] {
        let o = relosc(&["validate", &cfg(name)], dir.path());
        assert_eq!(o.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn validate_rejects_broken_config() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, r#"{ "name": "bad", "interval": { "a": 1.0 } }"#).unwrap();
    let o = relosc(&["validate", bad.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
}

#[test]
fn kneser_run_is_inconclusive_at_the_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let o = relosc(&["run", &cfg("kneser")], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    for suffix in ["criteria.csv", "cross.csv", "counts.csv", "plot.csv", "report.json"] {
        assert!(dir.path().join(format!("kneser.{suffix}")).exists(), "{suffix}");
    }
    let criteria = std::fs::read_to_string(dir.path().join("kneser.criteria.csv")).unwrap();
    assert!(criteria.starts_with("criterion,n,ell,param,value,estimate,margin,verdict,direct_verdict,cross,notes\n"));
}

#[test]
fn whh_run_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let o = relosc(&["run", &cfg("whh")], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn bands_writes_band_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nested");
    let o = Command::new(env!("CARGO_BIN_EXE_relosc"))
        .args(["bands", &cfg("free_floquet"), "--out-dir", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let bands = std::fs::read_to_string(out.join("free_floquet.bands.csv")).unwrap();
    assert_eq!(bands.lines().count(), 2);
    assert!(out.join("free_floquet.discriminant.csv").exists());
}

#[test]
fn too_small_x_max_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = relosc(&["run", &cfg("free_floquet"), "--x-max", "3"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(!dir.path().join("free_floquet.criteria.csv").exists());
}

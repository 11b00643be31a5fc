//! End-to-end behavior of the `toolkit` binary and the run/compare library API.

use std::path::Path;
use std::process::{Command, Output};

use kinetic_toolkit::{compare_reports, run, Report, RunConfig, Subcommand};
use serde_json::json;

fn toolkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_toolkit")).args(args).output().expect("toolkit runs")
}

fn write_config(dir: &Path, name: &str, value: serde_json::Value) -> String {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_vec_pretty(&value).unwrap()).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn exit_status_follows_checks() {
    let dir = tempfile::tempdir().unwrap();
    let ok = write_config(dir.path(), "ok.json", json!({ "subcommand": "scaling-audit", "seed": 0 }));
    let out = toolkit(&["scaling-audit", "--config", &ok]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    // plancherel_spread sits near 1e-9, far above this override.
    let tight = write_config(
        dir.path(),
        "tight.json",
        json!({ "subcommand": "scaling-audit", "seed": 0, "tolerances": { "plancherel_spread": 1e-15 } }),
    );
    let out = toolkit(&["scaling-audit", "--config", &tight]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL plancherel_spread"));
}

#[test]
fn malformed_configs_are_schema_errors() {
    let dir = tempfile::tempdir().unwrap();
    let empty = write_config(dir.path(), "empty.json", json!({}));
    let out = toolkit(&["check-kernel", "--config", &empty]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("schema") && err.contains("subcommand"), "{err}");

    let other = write_config(dir.path(), "other.json", json!({ "subcommand": "cover-demo", "seed": 0 }));
    let out = toolkit(&["check-kernel", "--config", &other]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("invoked as"));

    let stray = write_config(
        dir.path(),
        "stray.json",
        json!({ "subcommand": "scaling-audit", "seed": 0, "tolerances": { "no_such_check": 1.0 } }),
    );
    let out = toolkit(&["scaling-audit", "--config", &stray]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_check"));
}

#[test]
fn out_directory_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "k.json", json!({ "subcommand": "check-kernel", "seed": 3 }));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (o, w) in [(&a, "1"), (&b, "2")] {
        let out = toolkit(&["check-kernel", "--config", &cfg, "--out", o.to_str().unwrap(), "--workers", w]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(o.join("timing.json").exists());
    }
    let ra = std::fs::read(a.join("report.json")).unwrap();
    assert_eq!(ra, std::fs::read(b.join("report.json")).unwrap());
    let parsed = Report::read(&a.join("report.json")).unwrap();
    assert_eq!(parsed.canonical_bytes(), ra);
    assert!(parsed.timing.is_none());
    let text = String::from_utf8(ra).unwrap();
    assert!(!text.contains("workers") && !text.contains("\"out\""));

    let out = toolkit(&["compare", a.join("report.json").to_str().unwrap(), b.join("report.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "[]");
}

#[test]
fn coercivity_is_stable_under_refinement() {
    let mut coarse = RunConfig::new(Subcommand::CheckKernel, 0);
    coarse.grid = Some(vec![121]);
    let mut fine = coarse.clone();
    fine.grid = Some(vec![241]);
    let (a, b) = (run(&coarse).unwrap(), run(&fine).unwrap());
    assert!(a.passed() && b.passed());
    let deltas = compare_reports(&a, &b).unwrap();
    let c = deltas.iter().find(|d| d.name == "measured.coercivity");
    assert!(c.is_none_or(|d| d.relative <= 0.05), "{deltas:?}");
}

#[test]
fn covering_checks_hold_for_several_seeds() {
    for seed in 0..3 {
        let mut cfg = RunConfig::new(Subcommand::CoverDemo, seed);
        cfg.parameters.insert("interval_families".into(), 300.0);
        cfg.parameters.insert("cylinder_families".into(), 6.0);
        cfg.parameters.insert("vitali_samples".into(), 2000.0);
        let r = run(&cfg).unwrap();
        assert!(r.passed(), "seed {seed}: {:?}", r.failed().collect::<Vec<_>>());
    }
}

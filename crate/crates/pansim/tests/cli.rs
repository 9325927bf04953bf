//! The `pansim` binary end to end on a small training budget.

mod common;

use std::path::Path;
use std::process::{Command, Output};

use pansim::config::Config;

fn pansim(data: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pansim"))
        .arg("--data")
        .arg(data)
        .args(args)
        .env_remove("PANSIM_DATA_DIR")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(out.status.success(), "exit {:?}: {stderr}", out.status);
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn failed(out: &Output) -> String {
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr).into_owned();
    assert!(stderr.starts_with("error: "), "{stderr}");
    stderr
}

#[test]
fn synth_ingest_train_run_export() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path();
    let scenarios = common::fixtures().join("scenarios");
    let scenario = |name: &str| scenarios.join(name).to_string_lossy().into_owned();

    ok(&pansim(data, &["synth", "--out", data.to_str().unwrap()]));
    let out = ok(&pansim(data, &["ingest"]));
    assert!(out.contains("npis.csv"), "{out}");

    // shrink the training budget of the generated config
    let cfg_path = data.join("pansim.toml");
    let mut cfg = Config::load(&cfg_path).unwrap();
    let (_, small) = common::small();
    cfg.reff = small.reff;
    cfg.correction = small.correction;
    cfg.collateral = small.collateral;
    std::fs::write(&cfg_path, cfg.to_toml()).unwrap();

    ok(&pansim(data, &["train", "--with-collateral", "--threads", "2"]));
    assert!(data.join("artifacts/manifest.json").exists());

    ok(&pansim(data, &["run", &scenario("no-masks.toml"), "--with-collateral"]));
    for f in ["result.json", "forecasts.csv", "summary.csv", "collateral.csv"] {
        assert!(data.join("out/no-masks").join(f).exists(), "{f}");
    }
    ok(&pansim(data, &["run", &scenario("events-open-autumn.json")]));

    let export = data.join("exp");
    ok(&pansim(data, &["--seed", "9", "export", "--scenario", &scenario("forecast-90d.json"), "--out", export.to_str().unwrap()]));
    for f in ["trajectory_upper.csv", "selection.csv", "history.csv", "reff.csv"] {
        assert!(export.join(f).exists(), "{f}");
    }

    let err = failed(&pansim(data, &["run", &scenario("invalid-unknown-npi.json")]));
    assert!(err.contains("remove[0]"), "{err}");
}

#[test]
fn errors_exit_non_zero_with_a_message() {
    let tmp = tempfile::tempdir().unwrap();
    let err = failed(&pansim(tmp.path(), &["ingest"]));
    assert!(err.contains("npis.csv"), "{err}");

    let err = failed(&pansim(tmp.path(), &["--config", "/nonexistent/pansim.toml", "ingest"]));
    assert!(err.contains("pansim.toml"), "{err}");

    std::fs::write(tmp.path().join("pansim.toml"), "[epi]\nrecovery_rate = -1.0\n").unwrap();
    let err = failed(&pansim(tmp.path(), &["ingest"]));
    assert!(err.contains("recovery_rate"), "{err}");

    std::fs::write(tmp.path().join("pansim.toml"), "[service]\ncolour = 1\n").unwrap();
    let err = failed(&pansim(tmp.path(), &["ingest"]));
    assert!(err.contains("colour"), "{err}");

    let err = failed(&pansim(tmp.path(), &["run", "missing.json"]));
    assert!(err.contains("missing.json") || err.contains("artifacts"), "{err}");
}

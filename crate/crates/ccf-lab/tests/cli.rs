use std::path::Path;
use std::process::{Command, Output};

use ccf_lab::config::DOCUMENTED_KEYS;
use ccf_lab::harness::load;

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ccf-lab")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const SMALL: &str = r#"
[grid]
n = 64
[sim]
dt = 0.01
horizon = 0.05
[initial]
kind = "fourier"
cos = [0.3]
[noise]
family = "general_h"
q = { kind = "constant", value = 0.5 }
power_k = 2
power_n = 2
wiener = { components = 4, decay = 2.0 }
"#;

#[test]
fn missing_config_exits_with_3() {
    let o = lab(&["simulate", "--config", "/nonexistent/cfg.toml"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/cfg.toml"));
}

#[test]
fn malformed_config_and_bad_overrides_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.toml", "[grid]\nn = \"many\"\n");
    assert_eq!(code(&lab(&["simulate", "--config", &bad])), 3);
    let typo = write(dir.path(), "typo.toml", "[sim]\ndtt = 0.1\n");
    assert_eq!(code(&lab(&["simulate", "--config", &typo])), 3);
    assert_eq!(code(&lab(&["simulate", "--set", "sim.dt=fast"])), 3);
    assert_eq!(code(&lab(&["simulate", "--set", "sim.nope=1"])), 3);
    assert_eq!(code(&lab(&["simulate", "--unknown-flag"])), 3);
    assert_eq!(code(&lab(&["converge", "--tolerance", "0.1"])), 3);
}

#[test]
fn help_lists_every_key_and_exits_0() {
    let o = lab(&["--help"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    for (k, _) in DOCUMENTED_KEYS {
        assert!(text.contains(k), "{k} missing from --help");
    }
    let sub = lab(&["blowup", "--help"]);
    assert_eq!(code(&sub), 0);
    assert!(String::from_utf8_lossy(&sub.stdout).contains("study.blowup.*"));
}

#[test]
fn identities_pass_and_zero_tolerance_fails() {
    assert_eq!(code(&lab(&["identities"])), 0);
    let o = lab(&["identities", "--tolerance", "0"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn report_writes_csv_tables() {
    let dir = tempfile::tempdir().unwrap();
    let rep = dir.path().join("tables");
    let o = lab(&["identities", "--report", rep.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let checks = std::fs::read_to_string(rep.join("identities_checks.csv")).unwrap();
    assert!(checks.starts_with("check,value,lower,upper,pass,detail"));
    assert_eq!(checks.lines().count(), 7);
    assert!(rep.join("modulated_norm_ratio.csv").exists());
}

#[test]
fn zero_config_gives_zero_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "zero.toml", "[grid]\nn = 32\n[sim]\nhorizon = 0.01\n");
    let out = dir.path().join("out");
    let o = lab(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = load(&out.join("simulate.jsonl")).unwrap();
    assert_eq!(r.per_path.len(), 1);
    let row = &r.per_path[0];
    assert_eq!(row.status, "completed");
    for k in ["max_hs", "max_blowup_quantity", "max_lambda", "final_hs", "final_lyapunov"] {
        assert_eq!(row.metrics[k], 0.0, "{k}");
    }
    assert_eq!(row.metrics["final_beta"], 1.0);
}

#[test]
fn paths_and_seed_flags_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL);
    let mut files = Vec::new();
    for (i, workers) in ["1", "2"].iter().enumerate() {
        let out = dir.path().join(format!("run{i}"));
        let o = lab(&[
            "simulate", "--config", &cfg, "--paths", "4", "--seed", "7", "--workers", workers, "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        files.push(std::fs::read(out.join("simulate.jsonl")).unwrap());
    }
    assert_eq!(files[0], files[1]);
    let r = load(&dir.path().join("run0/simulate.jsonl")).unwrap();
    assert_eq!(r.per_path.len(), 4);
    assert_eq!(r.per_path.iter().map(|p| p.seed).collect::<Vec<_>>(), vec![7, 6, 5, 4]);
    let other = dir.path().join("other");
    lab(&["simulate", "--config", &cfg, "--paths", "4", "--seed", "8", "--out", other.to_str().unwrap()]);
    assert_ne!(std::fs::read(other.join("simulate.jsonl")).unwrap(), files[0]);
}

#[test]
fn saved_config_reproduces_the_digest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL);
    let out = dir.path().join("out");
    lab(&["simulate", "--config", &cfg, "--set", "sim.seed=3", "--out", out.to_str().unwrap()]);
    let saved = ccf_lab::LabConfig::load(&out.join("simulate_config.toml")).unwrap();
    let r = load(&out.join("simulate.jsonl")).unwrap();
    assert_eq!(saved.digest(), r.config_digest);
}

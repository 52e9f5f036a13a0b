use std::io::Write;

use ccf_core::exec::Sequential;
use ccf_lab::harness::{
    append, convergence_study, load, load_expecting, merge, persist, run_ensemble, run_ensemble_range, summarize,
    RayonRunner,
};
use ccf_lab::{LabConfig, LabError};

fn small_config(extra: &[&str]) -> LabConfig {
    let mut sets = vec![
        "grid.n=64",
        "sim.dt=0.01",
        "sim.horizon=0.1",
        "sim.record_every=2",
        "sim.seed=11",
        "initial={kind=\"fourier\", cos=[0.3], sin=[0.0, 0.1]}",
        "noise={family=\"general_h\", q={kind=\"constant\", value=0.5}, power_k=2, power_n=2, wiener={components=4, decay=2.0}}",
    ];
    sets.extend_from_slice(extra);
    LabConfig::default().with_overrides(&sets).unwrap()
}

fn setup(cfg: &LabConfig) -> (ccf_core::integrator::SimConfig, ccf_core::Field) {
    let grid = cfg.grid.build().unwrap();
    (cfg.sim_config(&grid).unwrap(), cfg.initial.build(&grid).unwrap())
}

#[test]
fn worker_count_does_not_change_the_bytes() {
    let cfg = small_config(&[]);
    let (sim, u0) = setup(&cfg);
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for w in [1, 3] {
        let (r, _) = run_ensemble(&sim, &u0, 7, &cfg.digest(), &RayonRunner::new(w).unwrap());
        let p = dir.path().join(format!("{w}.jsonl"));
        persist(&r, &p).unwrap();
        files.push(std::fs::read(p).unwrap());
    }
    assert_eq!(files[0], files[1]);
    let (seq, _) = run_ensemble(&sim, &u0, 7, &cfg.digest(), &Sequential);
    let p = dir.path().join("seq.jsonl");
    persist(&seq, &p).unwrap();
    assert_eq!(std::fs::read(p).unwrap(), files[0]);
}

#[test]
fn same_config_and_seed_give_identical_rows() {
    let cfg = small_config(&[]);
    let again = small_config(&[]);
    assert_eq!(cfg.digest(), again.digest());
    let (sim, u0) = setup(&cfg);
    let (a, _) = run_ensemble(&sim, &u0, 3, &cfg.digest(), &Sequential);
    let (b, _) = run_ensemble(&sim, &u0, 3, &again.digest(), &Sequential);
    assert_eq!(a.per_path, b.per_path);
    assert_eq!(a.per_path.len(), 3);
    assert_eq!(a.per_path[2].seed, 11 ^ 2);
}

#[test]
fn round_trip_is_lossless_and_summaries_recompute() {
    let cfg = small_config(&[]);
    let (sim, u0) = setup(&cfg);
    let (r, _) = run_ensemble(&sim, &u0, 4, &cfg.digest(), &Sequential);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("r.jsonl");
    persist(&r, &p).unwrap();
    let back = load(&p).unwrap();
    assert_eq!(back, r);
    assert_eq!(summarize(&back.per_path), r.summaries);
    assert_eq!(load_expecting(&p, &cfg.digest()).unwrap(), r);
}

#[test]
fn corrupted_line_reports_its_number() {
    let cfg = small_config(&[]);
    let (sim, u0) = setup(&cfg);
    let (r, _) = run_ensemble(&sim, &u0, 3, &cfg.digest(), &Sequential);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("r.jsonl");
    persist(&r, &p).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let half = lines[2].len() / 2;
    lines[2].truncate(half);
    std::fs::write(&p, lines.join("\n") + "\n").unwrap();
    match load(&p) {
        Err(LabError::Format { line, .. }) => assert_eq!(line, 3),
        other => panic!("expected a format error, got {other:?}"),
    }
}

#[test]
fn tampered_summary_is_rejected() {
    let cfg = small_config(&[]);
    let (sim, u0) = setup(&cfg);
    let (r, _) = run_ensemble(&sim, &u0, 2, &cfg.digest(), &Sequential);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("r.jsonl");
    persist(&r, &p).unwrap();
    let text = std::fs::read_to_string(&p).unwrap().replace("\"completed\":2", "\"completed\":1");
    std::fs::write(&p, text).unwrap();
    assert!(matches!(load(&p), Err(LabError::Format { line: 4, .. })));
}

#[test]
fn digest_mismatch_is_an_error() {
    let cfg = small_config(&[]);
    let other = small_config(&["sim.seed=12"]);
    assert_ne!(cfg.digest(), other.digest());
    let (sim, u0) = setup(&cfg);
    let (r, _) = run_ensemble(&sim, &u0, 1, &cfg.digest(), &Sequential);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("r.jsonl");
    persist(&r, &p).unwrap();
    assert!(matches!(load_expecting(&p, &other.digest()), Err(LabError::DigestMismatch { .. })));
    let (s, _) = run_ensemble_range(&sim, &u0, 1, 1, &other.digest(), &Sequential);
    assert!(matches!(append(&s, &p), Err(LabError::DigestMismatch { .. })));
}

#[test]
fn appended_shards_merge_to_the_full_run() {
    let cfg = small_config(&[]);
    let (sim, u0) = setup(&cfg);
    let d = cfg.digest();
    let (full, _) = run_ensemble(&sim, &u0, 6, &d, &Sequential);
    let (a, _) = run_ensemble_range(&sim, &u0, 0, 4, &d, &Sequential);
    let (b, _) = run_ensemble_range(&sim, &u0, 4, 2, &d, &Sequential);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("shards.jsonl");
    append(&b, &p).unwrap();
    append(&a, &p).unwrap();
    let merged = load(&p).unwrap();
    assert_eq!(merged.per_path, full.per_path);
    assert_eq!(merged.summaries, full.summaries);
    // Appending a shard twice duplicates indices.
    append(&b, &p).unwrap();
    assert!(matches!(load(&p), Err(LabError::Merge(_))));
    assert!(matches!(merge(vec![]), Err(LabError::Merge(_))));
}

#[test]
fn truncated_file_is_rejected() {
    let cfg = small_config(&[]);
    let (sim, u0) = setup(&cfg);
    let (r, _) = run_ensemble(&sim, &u0, 2, &cfg.digest(), &Sequential);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("r.jsonl");
    persist(&r, &p).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    let keep: Vec<&str> = text.lines().take(2).collect();
    let mut f = std::fs::File::create(&p).unwrap();
    writeln!(f, "{}", keep.join("\n")).unwrap();
    assert!(matches!(load(&p), Err(LabError::Format { .. })));
}

#[test]
fn zero_paths_give_empty_summaries() {
    let cfg = small_config(&[]);
    let (sim, u0) = setup(&cfg);
    let (r, recs) = run_ensemble(&sim, &u0, 0, &cfg.digest(), &Sequential);
    assert!(r.per_path.is_empty() && recs.is_empty());
    assert_eq!(r.summaries.paths, 0);
    assert!(r.summaries.blowup_fraction.is_none() && r.summaries.metrics.is_empty());
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("empty.jsonl");
    persist(&r, &p).unwrap();
    assert_eq!(load(&p).unwrap(), r);
}

#[test]
fn exponential_martingale_has_mean_one() {
    // β(t) = exp(∫b dW − ½∫b²) is recorded along each path; E β = 1.
    let cfg = LabConfig::default()
        .with_overrides(&[
            "grid.n=16",
            "sim.dt=0.05",
            "sim.horizon=1.0",
            "sim.record_every=20",
            "sim.seed=5",
            "noise={family=\"linear_b\", b={kind=\"exponential\", amplitude=0.8, rate=0.5}, b_star=0.65}",
        ])
        .unwrap();
    let (sim, u0) = setup(&cfg);
    let paths = 10_000;
    let (r, _) = run_ensemble(&sim, &u0, paths, &cfg.digest(), &RayonRunner::new(0).unwrap());
    assert_eq!(r.summaries.completed, paths as u64);
    let m = r.summaries.metrics["final_beta"];
    assert_eq!(m.count, paths as u64);
    assert!((m.mean - 1.0).abs() <= 3.0 * m.std_err, "mean {} ± {}", m.mean, m.std_err);
    let t = r.summaries.metrics["final_t"];
    assert!((t.mean - 1.0).abs() < 1e-12);
}

#[test]
fn convergence_study_preconditions() {
    let cfg = small_config(&[]);
    let (sim, u0) = setup(&cfg);
    for bad in [&[0.25][..], &[0.25, 0.2], &[0.25, 0.25], &[1.5, 0.75]] {
        assert!(matches!(convergence_study(&sim, &u0, bad, 2, &Sequential), Err(LabError::Config(_))));
    }
    assert!(convergence_study(&sim, &u0, &[0.25, 0.125], 0, &Sequential).is_err());
    // Two scales give one row and no fit.
    let t = convergence_study(&sim, &u0, &[0.125, 0.25], 2, &Sequential).unwrap();
    assert_eq!(t.reference_eps, 0.125);
    assert_eq!(t.rows.len(), 1);
    assert!(t.fit.is_none());
    assert!(t.rows[0].mean > 0.0);
}

// `!(x > 0.0)` rejects NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ccf_lab::config::keys_help;
use ccf_lab::harness::{persist, RayonRunner};
use ccf_lab::studies::{self, tolerance_keys, Study, StudyReport};
use ccf_lab::{LabConfig, LabError, LabResult};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

const EXIT_FAIL: u8 = 2;
const EXIT_ERROR: u8 = 3;

/// Numerical studies of the stochastic Córdoba–Córdoba–Fontelos equation
/// `du + (Hu)u_x dt = h(t,u) dW` on the torus.
#[derive(Parser)]
#[command(name = "ccf-lab", version, after_help = keys_help())]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Operator identities, the modulated-norm limit and the maximum-point identity.
    #[command(after_help = keys_help())]
    Identities(Common),
    /// Single path or ensemble of the stochastic equation.
    #[command(after_help = keys_help())]
    Simulate(Common),
    /// Blow-up without noise or with linear noise b(t)u: flag time, Riccati
    /// inequality along the maximum, blow-up fraction against the probability bound.
    #[command(after_help = keys_help())]
    Blowup(Common),
    /// Global existence under strong noise with the Lyapunov growth check.
    #[command(after_help = keys_help())]
    Global(Common),
    /// Coupled u versus βv residual under refinement and the probability bound.
    #[command(after_help = keys_help())]
    Girsanov(Common),
    /// High-frequency approximate solutions: rate fits and the separation curve.
    #[command(after_help = keys_help())]
    Instability(Common),
    /// Convergence of the mollified problem in the mollifier scale ε.
    #[command(after_help = keys_help())]
    Converge(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration; defaults are used for absent keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for the JSON-lines result, the report and the run manifest.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides sim.paths.
    #[arg(long)]
    paths: Option<usize>,
    /// Overrides sim.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Dotted-key override, e.g. --set sim.dt=1e-4 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Replaces the study's acceptance tolerances.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Directory for the CSV tables.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

/// What was run, stored next to the results.
#[derive(Serialize)]
struct RunManifest<'a> {
    subcommand: &'a str,
    config: Option<&'a Path>,
    out: Option<&'a Path>,
    overrides: &'a [String],
    config_digest: String,
}

fn split(cmd: Command) -> (Study, Common) {
    match cmd {
        Command::Identities(c) => (Study::Identities, c),
        Command::Simulate(c) => (Study::Simulate, c),
        Command::Blowup(c) => (Study::Blowup, c),
        Command::Global(c) => (Study::Global, c),
        Command::Girsanov(c) => (Study::Girsanov, c),
        Command::Instability(c) => (Study::Instability, c),
        Command::Converge(c) => (Study::Converge, c),
    }
}

fn overrides(study: Study, args: &Common) -> LabResult<Vec<String>> {
    let mut out = args.set.clone();
    if let Some(p) = args.paths {
        out.push(format!("sim.paths={p}"));
    }
    if let Some(s) = args.seed {
        out.push(format!("sim.seed={s}"));
    }
    if let Some(t) = args.tolerance {
        let keys = tolerance_keys(study);
        if keys.is_empty() {
            return Err(LabError::Config(format!("{} has no tolerance to override", study.name())));
        }
        out.extend(keys.iter().map(|k| format!("{k}={t:?}")));
    }
    Ok(out)
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> LabResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| LabError::io(path, e))
}

fn execute(study: Study, args: &Common) -> LabResult<StudyReport> {
    let base = match &args.config {
        Some(p) => LabConfig::load(p)?,
        None => LabConfig::default(),
    };
    let sets = overrides(study, args)?;
    let cfg = base.with_overrides(&sets)?;
    let runner = RayonRunner::new(args.workers)?;
    let report = studies::run(study, &cfg, &runner)?;

    for c in &report.checks {
        let range = match (c.lower, c.upper) {
            (Some(l), Some(u)) => format!("in [{l:e}, {u:e}]"),
            (Some(l), None) => format!("≥ {l:e}"),
            (None, Some(u)) => format!("≤ {u:e}"),
            (None, None) => String::new(),
        };
        let tag = if c.pass { "PASS" } else { "FAIL" };
        println!("{tag} {}: {:e} {range} ({})", c.name, c.value, c.detail);
    }
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
        if let Some(ens) = &report.ensemble {
            persist(ens, &dir.join(format!("{}.jsonl", study.name())))?;
        }
        write_json(&report, &dir.join(format!("{}_report.json", study.name())))?;
        let manifest = RunManifest {
            subcommand: study.name(),
            config: args.config.as_deref(),
            out: Some(dir),
            overrides: &sets,
            config_digest: cfg.digest(),
        };
        write_json(&manifest, &dir.join(format!("{}_manifest.json", study.name())))?;
        std::fs::write(dir.join(format!("{}_config.toml", study.name())), cfg.to_toml_string()?)
            .map_err(|e| LabError::io(dir, e))?;
    }
    if let Some(dir) = &args.report {
        std::fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
        for t in &report.tables {
            t.write(dir)?;
        }
    }
    Ok(report)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_ERROR)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let (study, args) = split(cli.command);
    match execute(study, &args) {
        Ok(r) if r.pass => {
            println!("{}: all {} checks passed", study.name(), r.checks.len());
            ExitCode::SUCCESS
        }
        Ok(r) => {
            let failed = r.checks.iter().filter(|c| !c.pass).count();
            println!("{}: {failed} of {} checks failed", study.name(), r.checks.len());
            ExitCode::from(EXIT_FAIL)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

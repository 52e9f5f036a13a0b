//! Ensemble orchestration, summaries, the ε-convergence study and the
//! JSON-lines result format.
//!
//! A result file is a sequence of segments. Each segment is a header line,
//! one line per path and a summary line; optional rate-fit lines follow the
//! paths. Appending a shard adds a segment. Loading merges all segments,
//! rejects duplicate path indices and mixed configuration digests, and
//! recomputes the summary from the rows.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ccf_core::exec::{path_seed, PathRunner};
use ccf_core::integrator::{lockstep_gaps, simulate_path, PathRecord, PathStatus, SimConfig};
use ccf_core::stats::{mean_and_sd, rate_fit, wilson, LineFit, Proportion};
use ccf_core::Field;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, LabResult};

/// Runs path jobs on a rayon pool and returns them in index order.
pub struct RayonRunner {
    pool: rayon::ThreadPool,
}

impl RayonRunner {
    /// `threads = 0` uses rayon's default (one per available core).
    pub fn new(threads: usize) -> LabResult<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| LabError::Config(format!("thread pool: {e}")))?;
        Ok(RayonRunner { pool })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl PathRunner for RayonRunner {
    fn map<T, F>(&self, count: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.pool.install(|| (0..count).into_par_iter().map(&job).collect())
    }
}

/// Outcome of one path, reduced to scalars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRow {
    pub index: usize,
    pub seed: u64,
    /// `completed`, `blew_up`, `diverged`, `exited` or `failed`.
    pub status: String,
    pub t_stop: Option<f64>,
    pub error: Option<String>,
    /// Named diagnostic extremes and final values.
    pub metrics: BTreeMap<String, f64>,
}

impl PathRow {
    pub fn from_record(index: usize, rec: &PathRecord) -> Self {
        let status = match rec.status {
            PathStatus::Completed => "completed",
            PathStatus::BlewUp { .. } => "blew_up",
            PathStatus::Diverged { .. } => "diverged",
            PathStatus::Exited { .. } => "exited",
        };
        let mut metrics = BTreeMap::new();
        let fold = |f: fn(&ccf_core::integrator::DiagnosticRow) -> f64| {
            rec.rows.iter().map(f).fold(f64::NEG_INFINITY, f64::max)
        };
        metrics.insert("max_hs".into(), fold(|r| r.hs));
        metrics.insert("max_blowup_quantity".into(), fold(|r| r.blowup_quantity()));
        metrics.insert("max_lambda".into(), fold(|r| r.max_lambda));
        let last = rec.final_row();
        metrics.insert("final_hs".into(), last.hs);
        metrics.insert("final_lyapunov".into(), last.lyapunov);
        metrics.insert("final_beta".into(), last.beta);
        metrics.insert("final_t".into(), last.t);
        metrics.insert("accepted_steps".into(), rec.accepted_steps as f64);
        metrics.insert("rejected_steps".into(), rec.rejected_steps as f64);
        metrics.retain(|_, v| v.is_finite());
        PathRow {
            index,
            seed: rec.seed,
            status: status.into(),
            t_stop: rec.status.stop_time(),
            error: None,
            metrics,
        }
    }

    pub fn failed(index: usize, seed: u64, error: String) -> Self {
        PathRow {
            index,
            seed,
            status: "failed".into(),
            t_stop: None,
            error: Some(error),
            metrics: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    pub variance: f64,
    pub std_err: f64,
}

impl Moments {
    fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let (mean, sd) = mean_and_sd(values);
        Some(Moments {
            count: values.len() as u64,
            mean,
            variance: sd * sd,
            std_err: sd / (values.len() as f64).sqrt(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summaries {
    pub paths: u64,
    pub completed: u64,
    pub blew_up: u64,
    pub diverged: u64,
    pub exited: u64,
    pub failed: u64,
    /// Blown-up share of the paths that either completed or blew up, with a
    /// 95% Wilson interval.
    pub blowup_fraction: Option<Proportion>,
    pub stop_time: Option<Moments>,
    pub metrics: BTreeMap<String, Moments>,
}

/// Aggregates rows in index order; the result depends only on the rows.
pub fn summarize(rows: &[PathRow]) -> Summaries {
    let mut sorted: Vec<&PathRow> = rows.iter().collect();
    sorted.sort_by_key(|r| r.index);
    let count = |s: &str| sorted.iter().filter(|r| r.status == s).count() as u64;
    let (completed, blew_up) = (count("completed"), count("blew_up"));
    let resolved = completed + blew_up;
    let stops: Vec<f64> = sorted.iter().filter_map(|r| r.t_stop).collect();
    let mut keys: Vec<&String> = sorted.iter().flat_map(|r| r.metrics.keys()).collect();
    keys.sort();
    keys.dedup();
    let metrics = keys
        .into_iter()
        .filter_map(|k| {
            let vals: Vec<f64> = sorted.iter().filter_map(|r| r.metrics.get(k).copied()).collect();
            Moments::of(&vals).map(|m| (k.clone(), m))
        })
        .collect();
    Summaries {
        paths: sorted.len() as u64,
        completed,
        blew_up,
        diverged: count("diverged"),
        exited: count("exited"),
        failed: count("failed"),
        blowup_fraction: (resolved > 0).then(|| wilson(blew_up, resolved, 1.96)),
        stop_time: Moments::of(&stops),
        metrics,
    }
}

/// A log-log fit attached to a result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

impl RateFit {
    pub fn fit(name: &str, points: Vec<(f64, f64)>) -> LabResult<Self> {
        let LineFit {
            slope,
            intercept,
            r_squared,
        } = rate_fit(&points)?;
        Ok(RateFit {
            name: name.into(),
            points,
            slope,
            intercept,
            r_squared,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub run_id: String,
    pub config_digest: String,
    pub per_path: Vec<PathRow>,
    pub summaries: Summaries,
    pub rate_fits: Vec<RateFit>,
}

impl EnsembleResult {
    pub fn new(config_digest: &str, run_id: String, mut per_path: Vec<PathRow>) -> Self {
        per_path.sort_by_key(|r| r.index);
        let summaries = summarize(&per_path);
        EnsembleResult {
            run_id,
            config_digest: config_digest.into(),
            per_path,
            summaries,
            rate_fits: Vec::new(),
        }
    }
}

/// Deterministic identifier of a run.
pub fn run_id(digest: &str, seed: u64, first: usize, count: usize) -> String {
    format!("{}-s{seed}-p{first}+{count}", &digest[..digest.len().min(12)])
}

/// Paths `first .. first+count` of the ensemble with base seed `cfg.seed`;
/// path `i` uses seed `cfg.seed ⊕ i`. Failures are recorded per path.
pub fn run_ensemble_range<R: PathRunner>(
    cfg: &SimConfig,
    u0: &Field,
    first: usize,
    count: usize,
    digest: &str,
    runner: &R,
) -> (EnsembleResult, Vec<Option<PathRecord>>) {
    let outcomes = runner.map(count, |k| {
        let index = first + k;
        let mut c = cfg.clone();
        c.seed = path_seed(cfg.seed, index);
        (index, c.seed, simulate_path(&c, u0))
    });
    let mut rows = Vec::with_capacity(count);
    let mut records = Vec::with_capacity(count);
    for (index, seed, out) in outcomes {
        match out {
            Ok(rec) => {
                rows.push(PathRow::from_record(index, &rec));
                records.push(Some(rec));
            }
            Err(e) => {
                rows.push(PathRow::failed(index, seed, e.to_string()));
                records.push(None);
            }
        }
    }
    let id = run_id(digest, cfg.seed, first, count);
    (EnsembleResult::new(digest, id, rows), records)
}

pub fn run_ensemble<R: PathRunner>(
    cfg: &SimConfig,
    u0: &Field,
    num_paths: usize,
    digest: &str,
    runner: &R,
) -> (EnsembleResult, Vec<Option<PathRecord>>) {
    run_ensemble_range(cfg, u0, 0, num_paths, digest, runner)
}

/// One row of the convergence table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub eps: f64,
    /// `E sup_t ‖u_ε − u_ref‖²_{H^{s−3/2}}`
    pub mean: f64,
    pub std_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub reference_eps: f64,
    pub rows: Vec<ConvergenceRow>,
    /// Log-log fit of the mean against ε; needs at least two rows.
    pub fit: Option<RateFit>,
    /// Per path, the gaps in the order of `rows`.
    pub per_path: Vec<Vec<f64>>,
    /// Paths on which some run stopped before the horizon (blow-up flag,
    /// divergence or the `H^s` exit radius); their suprema run up to the
    /// stop.
    pub truncated: usize,
}

fn is_dyadic_ladder(eps: &[f64]) -> bool {
    let mut sorted = eps.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted.windows(2).all(|w| {
        let r = (w[0] / w[1]).log2();
        r >= 0.5 && (r - r.round()).abs() < 1e-9
    })
}

/// Couples runs at every ε on one Brownian path per sample and measures the
/// stopped supremum of the `H^{s−3/2}` distance to the smallest ε.
pub fn convergence_study<R: PathRunner>(
    cfg: &SimConfig,
    u0: &Field,
    eps_list: &[f64],
    num_paths: usize,
    runner: &R,
) -> LabResult<ConvergenceTable> {
    if eps_list.len() < 2 {
        return Err(LabError::Config("the convergence study needs at least two mollifier scales".into()));
    }
    if eps_list.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
        return Err(LabError::Config("mollifier scales must lie in (0, 1)".into()));
    }
    if !is_dyadic_ladder(eps_list) {
        return Err(LabError::Config("mollifier scales must be distinct and differ by powers of two".into()));
    }
    if num_paths == 0 {
        return Err(LabError::Config("the convergence study needs at least one path".into()));
    }
    let mut eps = eps_list.to_vec();
    eps.sort_by(|a, b| b.total_cmp(a));
    let reference = eps.len() - 1;
    let gap_index = cfg.s.value() - 1.5;
    let outcomes = runner.map(num_paths, |i| -> LabResult<(Vec<f64>, bool)> {
        let cfgs: Vec<SimConfig> = eps
            .iter()
            .map(|&e| {
                let mut c = cfg.clone();
                c.eps_mollify = e;
                c.seed = path_seed(cfg.seed, i);
                c
            })
            .collect();
        let (gaps, recs) = lockstep_gaps(&cfgs, u0, reference, gap_index)?;
        let truncated = recs.iter().any(|r| r.status != PathStatus::Completed);
        Ok((gaps[..reference].to_vec(), truncated))
    });
    let mut per_path = Vec::with_capacity(num_paths);
    let mut truncated = 0;
    for o in outcomes {
        let (g, t) = o?;
        per_path.push(g);
        truncated += t as usize;
    }
    let rows: Vec<ConvergenceRow> = (0..reference)
        .map(|j| {
            let vals: Vec<f64> = per_path.iter().map(|p| p[j]).collect();
            let m = Moments::of(&vals).expect("at least one path");
            ConvergenceRow {
                eps: eps[j],
                mean: m.mean,
                std_err: m.std_err,
            }
        })
        .collect();
    let fit = if rows.len() >= 2 {
        RateFit::fit("sup_gap_sq_vs_eps", rows.iter().map(|r| (r.eps, r.mean)).collect()).ok()
    } else {
        None
    };
    Ok(ConvergenceTable {
        reference_eps: eps[reference],
        rows,
        fit,
        per_path,
        truncated,
    })
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Header {
        run_id: String,
        config_digest: String,
        paths: usize,
    },
    Path(PathRow),
    RateFit(RateFit),
    Summary(Summaries),
}

fn write_segment<W: Write>(out: &mut W, r: &EnsembleResult) -> LabResult<()> {
    let mut emit = |line: &Line| -> LabResult<()> {
        serde_json::to_writer(&mut *out, line)?;
        out.write_all(b"\n").map_err(|e| LabError::io("<result>", e))
    };
    emit(&Line::Header {
        run_id: r.run_id.clone(),
        config_digest: r.config_digest.clone(),
        paths: r.per_path.len(),
    })?;
    for row in &r.per_path {
        emit(&Line::Path(row.clone()))?;
    }
    for fit in &r.rate_fits {
        emit(&Line::RateFit(fit.clone()))?;
    }
    emit(&Line::Summary(r.summaries.clone()))
}

/// Writes `result` as a fresh JSON-lines file.
pub fn persist(result: &EnsembleResult, path: &Path) -> LabResult<()> {
    let file = std::fs::File::create(path).map_err(|e| LabError::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_segment(&mut w, result)?;
    w.flush().map_err(|e| LabError::io(path, e))
}

/// Appends `shard` as a new segment; the file's digest must match.
pub fn append(shard: &EnsembleResult, path: &Path) -> LabResult<()> {
    if path.exists() {
        let existing = load(path)?;
        if existing.config_digest != shard.config_digest {
            return Err(LabError::DigestMismatch {
                expected: existing.config_digest,
                found: shard.config_digest.clone(),
            });
        }
    }
    let file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| LabError::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_segment(&mut w, shard)?;
    w.flush().map_err(|e| LabError::io(path, e))
}

/// Reads a result file, merging its segments.
pub fn load(path: &Path) -> LabResult<EnsembleResult> {
    let file = std::fs::File::open(path).map_err(|e| LabError::io(path, e))?;
    let bad = |line: usize, reason: String| LabError::Format {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut segments: Vec<EnsembleResult> = Vec::new();
    let mut stored: Vec<Summaries> = Vec::new();
    for (i, text) in BufReader::new(file).lines().enumerate() {
        let no = i + 1;
        let text = text.map_err(|e| LabError::io(path, e))?;
        if text.trim().is_empty() {
            continue;
        }
        let line: Line = serde_json::from_str(&text).map_err(|e| bad(no, e.to_string()))?;
        match line {
            Line::Header {
                run_id, config_digest, ..
            } => {
                if segments.len() != stored.len() {
                    return Err(bad(no, "header before the previous segment's summary".into()));
                }
                segments.push(EnsembleResult {
                    run_id,
                    config_digest,
                    per_path: Vec::new(),
                    summaries: summarize(&[]),
                    rate_fits: Vec::new(),
                });
            }
            other => {
                if segments.len() == stored.len() {
                    return Err(bad(no, "record outside a segment".into()));
                }
                let seg = segments.last_mut().expect("open segment");
                match other {
                    Line::Path(row) => seg.per_path.push(row),
                    Line::RateFit(f) => seg.rate_fits.push(f),
                    Line::Summary(s) => {
                        let again = summarize(&seg.per_path);
                        if again != s {
                            return Err(bad(no, "summary does not match the path rows".into()));
                        }
                        stored.push(s);
                    }
                    Line::Header { .. } => unreachable!(),
                }
            }
        }
    }
    if segments.is_empty() {
        return Err(bad(0, "no segment".into()));
    }
    if segments.len() != stored.len() {
        return Err(bad(0, "truncated file: last segment has no summary".into()));
    }
    merge(segments)
}

/// Loads a result and requires it to belong to the configuration `digest`.
pub fn load_expecting(path: &Path, digest: &str) -> LabResult<EnsembleResult> {
    let r = load(path)?;
    if r.config_digest != digest {
        return Err(LabError::DigestMismatch {
            expected: digest.into(),
            found: r.config_digest,
        });
    }
    Ok(r)
}

/// Combines shards of one configuration. Path indices must be disjoint;
/// summaries are recomputed from the union of the rows.
pub fn merge(shards: Vec<EnsembleResult>) -> LabResult<EnsembleResult> {
    let mut it = shards.into_iter();
    let Some(first) = it.next() else {
        return Err(LabError::Merge("nothing to merge".into()));
    };
    let digest = first.config_digest.clone();
    let mut ids = vec![first.run_id.clone()];
    let mut rows = first.per_path;
    let mut fits = first.rate_fits;
    for s in it {
        if s.config_digest != digest {
            return Err(LabError::DigestMismatch {
                expected: digest,
                found: s.config_digest,
            });
        }
        ids.push(s.run_id);
        rows.extend(s.per_path);
        fits.extend(s.rate_fits);
    }
    rows.sort_by_key(|r| r.index);
    if let Some(w) = rows.windows(2).find(|w| w[0].index == w[1].index) {
        return Err(LabError::Merge(format!("path {} appears twice", w[0].index)));
    }
    let mut out = EnsembleResult::new(&digest, ids.join("|"), rows);
    out.rate_fits = fits;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(index: usize, status: &str, v: f64) -> PathRow {
        PathRow {
            index,
            seed: index as u64,
            status: status.into(),
            t_stop: (status != "completed").then_some(0.5),
            error: None,
            metrics: [("x".to_string(), v)].into_iter().collect(),
        }
    }

    #[test]
    fn empty_summaries_have_no_statistics() {
        let s = summarize(&[]);
        assert_eq!(s.paths, 0);
        assert!(s.blowup_fraction.is_none() && s.stop_time.is_none() && s.metrics.is_empty());
    }

    #[test]
    fn summaries_ignore_row_order() {
        let rows = vec![row(0, "completed", 1.0), row(1, "blew_up", 2.0), row(2, "failed", 4.0)];
        let mut shuffled = rows.clone();
        shuffled.reverse();
        assert_eq!(summarize(&rows), summarize(&shuffled));
        let s = summarize(&rows);
        assert_eq!((s.completed, s.blew_up, s.failed), (1, 1, 1));
        assert_eq!(s.blowup_fraction.unwrap().trials, 2);
        assert!((s.metrics["x"].mean - 7.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn dyadic_ladders() {
        assert!(is_dyadic_ladder(&[0.25, 0.125, 0.03125]));
        assert!(is_dyadic_ladder(&[0.125, 0.25]));
        assert!(!is_dyadic_ladder(&[0.25, 0.2]));
        assert!(!is_dyadic_ladder(&[0.25, 0.25]));
    }

    #[test]
    fn merge_rejects_overlap_and_mixed_digests() {
        let a = EnsembleResult::new("d", "a".into(), vec![row(0, "completed", 1.0)]);
        let b = EnsembleResult::new("d", "b".into(), vec![row(0, "completed", 1.0)]);
        assert!(matches!(merge(vec![a.clone(), b]), Err(LabError::Merge(_))));
        let c = EnsembleResult::new("e", "c".into(), vec![row(1, "completed", 1.0)]);
        assert!(matches!(merge(vec![a, c]), Err(LabError::DigestMismatch { .. })));
    }
}

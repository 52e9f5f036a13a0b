//! The experiments behind each subcommand. Every study is a pure function of
//! its configuration and returns named checks, CSV tables and, where paths
//! of the stochastic equation are run, an [`EnsembleResult`].

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use ccf_core::diagnostics::{
    drift_condition, estimate_commutator_constant, fit_k1, lyapunov_growth_check, random_band_limited,
    DriftCondition,
};
use ccf_core::exec::{path_seed, PathRunner};
use ccf_core::girsanov::{
    blowup_ensemble, blowup_probability_bound, girsanov_residual, identity_sv_residual, riccati_check,
    track_max_characteristic, GirsanovSpec, ProbabilityBound,
};
use ccf_core::identities::{cotlar_residual, lambda_product_residual};
use ccf_core::instability::{
    actual_vs_approx_gap, bump_phi, common_low_horizon, error_functional_ensemble, instability_grids,
    low_initial_norms, low_trajectory, modulated_norm_ratio, separation_experiment, InstabilityParams,
};
use ccf_core::integrator::{simulate_path, PathRecord, SimConfig};
use ccf_core::noise::{NoiseModel, TimeProfile};
use ccf_core::spectral::{derivative, frac_laplacian, hilbert, sobolev_norm};
use ccf_core::stats::{mean_and_sd, rate_fit};
use ccf_core::{Field, SpectralGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{lambda_at_max, scale_to_lambda, LabConfig};
use crate::error::{LabError, LabResult};
use crate::harness::{convergence_study, run_ensemble, EnsembleResult, PathRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    Identities,
    Simulate,
    Blowup,
    Global,
    Girsanov,
    Instability,
    Converge,
}

impl Study {
    pub fn name(self) -> &'static str {
        match self {
            Study::Identities => "identities",
            Study::Simulate => "simulate",
            Study::Blowup => "blowup",
            Study::Global => "global",
            Study::Girsanov => "girsanov",
            Study::Instability => "instability",
            Study::Converge => "converge",
        }
    }
}

/// One pass/fail comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn within(name: &str, value: f64, lower: Option<f64>, upper: Option<f64>, detail: String) -> Self {
        let pass = value.is_finite() && lower.is_none_or(|l| value >= l) && upper.is_none_or(|u| value <= u);
        Check {
            name: name.into(),
            value,
            lower,
            upper,
            pass,
            detail,
        }
    }

    pub fn at_most(name: &str, value: f64, upper: f64, detail: String) -> Self {
        Self::within(name, value, None, Some(upper), detail)
    }

    pub fn at_least(name: &str, value: f64, lower: f64, detail: String) -> Self {
        Self::within(name, value, Some(lower), None, detail)
    }

    /// A boolean outcome, recorded as value 1 (true) or 0.
    pub fn holds(name: &str, ok: bool, detail: String) -> Self {
        Self::within(name, if ok { 1.0 } else { 0.0 }, Some(1.0), None, detail)
    }
}

/// A CSV table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub file: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(file: &str, header: &[&str]) -> Self {
        Table {
            file: file.into(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, dir: &Path) -> LabResult<()> {
        let path = dir.join(&self.file);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush().map_err(|e| LabError::io(&path, e))
    }
}

/// Shortest round-trip text; non-finite values become empty cells.
fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        String::new()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub name: String,
    pub config_digest: String,
    pub pass: bool,
    pub checks: Vec<Check>,
    #[serde(skip)]
    pub tables: Vec<Table>,
    #[serde(skip)]
    pub ensemble: Option<EnsembleResult>,
}

impl StudyReport {
    fn new(study: Study, cfg: &LabConfig) -> Self {
        StudyReport {
            name: study.name().into(),
            config_digest: cfg.digest(),
            pass: true,
            checks: Vec::new(),
            tables: Vec::new(),
            ensemble: None,
        }
    }

    fn check(&mut self, c: Check) {
        self.checks.push(c);
    }

    fn finish(mut self) -> Self {
        self.pass = self.checks.iter().all(|c| c.pass);
        let mut t = Table::new(&format!("{}_checks.csv", self.name), &["check", "value", "lower", "upper", "pass", "detail"]);
        for c in &self.checks {
            t.push(vec![
                c.name.clone(),
                num(c.value),
                c.lower.map(num).unwrap_or_default(),
                c.upper.map(num).unwrap_or_default(),
                c.pass.to_string(),
                c.detail.clone(),
            ]);
        }
        self.tables.push(t);
        self
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Overrides `--tolerance` maps to, per study.
pub fn tolerance_keys(study: Study) -> &'static [&'static str] {
    match study {
        Study::Identities => &[
            "study.identities.tolerance",
            "study.identities.ratio_tolerance",
            "study.identities.sv_tolerance",
        ],
        Study::Blowup => &["study.blowup.riccati_tol"],
        Study::Girsanov => &["study.girsanov.tolerance"],
        Study::Instability => &["study.instability.decay_tolerance"],
        Study::Simulate | Study::Global | Study::Converge => &[],
    }
}

pub fn run<R: PathRunner>(study: Study, cfg: &LabConfig, runner: &R) -> LabResult<StudyReport> {
    let report = match study {
        Study::Identities => identities(cfg)?,
        Study::Simulate => simulate(cfg, runner)?,
        Study::Blowup => blowup(cfg, runner)?,
        Study::Global => global(cfg, runner)?,
        Study::Girsanov => girsanov(cfg, runner)?,
        Study::Instability => instability(cfg, runner)?,
        Study::Converge => converge(cfg, runner)?,
    };
    Ok(report.finish())
}

fn ensemble_from(cfg: &LabConfig, study: Study, records: &[PathRecord]) -> EnsembleResult {
    let rows: Vec<PathRow> = records.iter().enumerate().map(|(i, r)| PathRow::from_record(i, r)).collect();
    let digest = cfg.digest();
    let id = format!("{}-{}", crate::harness::run_id(&digest, cfg.sim.seed, 0, rows.len()), study.name());
    EnsembleResult::new(&digest, id, rows)
}

/// Operator identities, the modulated-norm limit and the maximum-point
/// identity of the transport equation.
pub fn identities(cfg: &LabConfig) -> LabResult<StudyReport> {
    let st = &cfg.study.identities;
    let mut report = StudyReport::new(Study::Identities, cfg);
    let grid = SpectralGrid::with_dealias(st.n, cfg.grid.period, cfg.grid.dealias)?;
    let mut rng = ChaCha8Rng::seed_from_u64(st.seed);
    let l = grid.period();
    let mut worst = [0.0f64; 4];
    let mut table = Table::new("identities_fields.csv", &["field", "cotlar", "lambda_product", "hilbert_square", "symbol"]);
    for i in 0..st.fields {
        let f = random_band_limited(&grid, st.band, st.decay, &mut rng);
        let l2 = sobolev_norm(&f, 0.0);
        let h1 = sobolev_norm(&f, 1.0);
        let hh = hilbert(&hilbert(&f)).add(&f);
        let sym = hilbert(&derivative(&f)).add(&frac_laplacian(&f, 1.0));
        let r = [
            cotlar_residual(&f)? / (l2 * l2),
            lambda_product_residual(&f)? / (l / PI * h1),
            sobolev_norm(&hh, 0.0) / l2,
            sobolev_norm(&sym, 0.0) / h1,
        ];
        for (w, v) in worst.iter_mut().zip(r) {
            *w = w.max(v);
        }
        table.push(vec![i.to_string(), num(r[0]), num(r[1]), num(r[2]), num(r[3])]);
    }
    let detail = format!("{} fields, N = {}, modes ≤ {}", st.fields, st.n, st.band);
    for (name, w) in ["cotlar", "lambda_product", "hilbert_square", "symbol"].iter().zip(worst) {
        report.check(Check::at_most(&format!("identity_{name}"), w, st.tolerance, detail.clone()));
    }
    report.tables.push(table);

    let mut ratios = Table::new("modulated_norm_ratio.csv", &["profile", "n", "r", "ratio"]);
    let gaussian = |x: f64| (-x * x).exp();
    type Profile<'a> = (&'a str, &'a dyn Fn(f64) -> f64, f64);
    let profiles: [Profile; 2] = [("bump", &bump_phi, 2.0), ("gaussian", &gaussian, 6.5)];
    let mut worst_ratio: f64 = 0.0;
    for (name, profile, radius) in profiles {
        for &r in &st.ratio_indices {
            let ratio = modulated_norm_ratio(profile, radius, st.ratio_n, st.ratio_delta, r, 0.0)?;
            worst_ratio = worst_ratio.max((ratio - 1.0).abs());
            ratios.push(vec![name.into(), st.ratio_n.to_string(), num(r), num(ratio)]);
        }
    }
    report.check(Check::at_most(
        "modulated_norm_ratio",
        worst_ratio,
        st.ratio_tolerance,
        format!("max |ratio − 1| at n = {}, δ = {}", st.ratio_n, st.ratio_delta),
    ));
    report.tables.push(ratios);

    let sv_grid = SpectralGrid::with_dealias(st.sv_n, cfg.grid.period, cfg.grid.dealias)?;
    let mut sv = Table::new("maximum_point_identity.csv", &["field", "z0", "lhs", "rhs", "relative"]);
    let mut worst_sv: f64 = 0.0;
    for i in 0..st.sv_fields {
        let v = gaussian_bumps(&sv_grid, &mut rng);
        let id = identity_sv_residual(&v)?;
        worst_sv = worst_sv.max(id.relative());
        sv.push(vec![i.to_string(), num(id.z0), num(id.lhs), num(id.rhs), num(id.relative())]);
    }
    report.check(Check::at_most(
        "maximum_point_identity",
        worst_sv,
        st.sv_tolerance,
        format!("{} Gaussian-bump fields, N = {}", st.sv_fields, st.sv_n),
    ));
    report.tables.push(sv);
    Ok(report)
}

/// A dominant Gaussian bump in the interior plus a smaller one, so the
/// maximum is interior and unique.
fn gaussian_bumps(grid: &Arc<SpectralGrid>, rng: &mut ChaCha8Rng) -> Field {
    let l = grid.period();
    let c1 = l * rng.random_range(0.3..0.7);
    let w1 = rng.random_range(0.4..0.9);
    let a1 = rng.random_range(0.5..2.0);
    let c2 = c1 + l * rng.random_range(0.25..0.5);
    let w2 = rng.random_range(0.3..0.6);
    let a2 = a1 * rng.random_range(0.1..0.4);
    let wrap = |x: f64, c: f64| {
        let d = (x - c).rem_euclid(l);
        d.min(l - d)
    };
    Field::from_fn(grid, |x| {
        let (d1, d2) = (wrap(x, c1), wrap(x, c2));
        a1 * (-d1 * d1 / (w1 * w1)).exp() + a2 * (-d2 * d2 / (w2 * w2)).exp()
    })
}

/// Plain ensemble of the configured equation.
pub fn simulate<R: PathRunner>(cfg: &LabConfig, runner: &R) -> LabResult<StudyReport> {
    let mut report = StudyReport::new(Study::Simulate, cfg);
    let grid = cfg.grid.build()?;
    let sim = cfg.sim_config(&grid)?;
    let u0 = cfg.initial.build(&grid)?;
    let (result, records) = run_ensemble(&sim, &u0, cfg.sim.paths, &cfg.digest(), runner);
    let mut t = Table::new(
        "simulate_paths.csv",
        &["index", "seed", "status", "t_stop", "final_hs", "max_blowup_quantity", "final_beta"],
    );
    for r in &result.per_path {
        let m = |k: &str| r.metrics.get(k).copied().map(num).unwrap_or_default();
        t.push(vec![
            r.index.to_string(),
            r.seed.to_string(),
            r.status.clone(),
            r.t_stop.map(num).unwrap_or_default(),
            m("final_hs"),
            m("max_blowup_quantity"),
            m("final_beta"),
        ]);
    }
    report.tables.push(t);
    if let Some(first) = records.first().and_then(|r| r.as_ref()) {
        let mut rows = Table::new(
            "simulate_path0.csv",
            &["t", "hs", "hs_minus_1", "hs_minus_3_2", "sup_u", "sup_ux", "sup_hux", "max_lambda", "lyapunov", "beta"],
        );
        for d in &first.rows {
            rows.push(
                [d.t, d.hs, d.hs_minus_1, d.hs_minus_3_2, d.sup_u, d.sup_ux, d.sup_hux, d.max_lambda, d.lyapunov, d.beta]
                    .into_iter()
                    .map(num)
                    .collect(),
            );
        }
        report.tables.push(rows);
    }
    report.check(Check::at_most(
        "failed_paths",
        result.summaries.failed as f64,
        0.0,
        format!("{} paths", result.summaries.paths),
    ));
    report.ensemble = Some(result);
    Ok(report)
}

fn bound_row(b: &TimeProfile, k: f64, bound: &ProbabilityBound, spde: Option<f64>) -> Vec<String> {
    let (b0, lambda) = match *b {
        TimeProfile::Exponential { amplitude, rate } => (amplitude, rate),
        TimeProfile::Constant { value } => (value, 0.0),
        _ => (f64::NAN, f64::NAN),
    };
    vec![
        num(b0),
        num(lambda),
        num(k),
        num(bound.estimate.estimate),
        num(bound.oracle),
        spde.map(num).unwrap_or_default(),
        num(bound.estimate.lo),
        num(bound.estimate.hi),
    ]
}

const BOUND_HEADER: [&str; 8] = ["b0", "lambda", "K", "bound_mc", "bound_oracle", "spde_fraction", "ci_lo", "ci_hi"];

/// Blow-up under zero or linear noise: flag time and the Riccati inequality
/// along the maximum characteristic, and the ensemble blow-up fraction
/// against the probability bound.
pub fn blowup<R: PathRunner>(cfg: &LabConfig, runner: &R) -> LabResult<StudyReport> {
    let st = &cfg.study.blowup;
    let mut report = StudyReport::new(Study::Blowup, cfg);
    let grid = cfg.grid.build()?;
    let sim = cfg.sim_config(&grid)?;
    let (b, b_star) = match cfg.noise {
        NoiseModel::Zero => (TimeProfile::constant(0.0), 0.0),
        NoiseModel::LinearB { b, b_star } => (b, b_star),
        _ => return Err(LabError::Config("the blow-up study needs noise.family = zero or linear_b".into())),
    };
    let spec = GirsanovSpec {
        b,
        b_star,
        threshold_k: st.threshold_k,
        horizon: cfg.sim.horizon,
        riccati_tol: st.riccati_tol,
    };
    spec.validate()?;
    let mut u0 = cfg.initial.build(&grid)?;
    if let (Some(ratio), false) = (st.lambda_ratio, b.is_zero()) {
        u0 = scale_to_lambda(&u0, ratio * spec.initial_threshold())?;
    }
    let f0 = lambda_at_max(&u0);

    // Characteristic of v from the maximum of u₀ (v = u without noise).
    let (record, track) = track_max_characteristic(&sim, &u0, st.resolution_tol)?;
    let half = 0.5 * sim.blowup_threshold;
    let t_half = record
        .rows
        .iter()
        .find(|r| r.blowup_quantity() >= half)
        .map_or(record.final_row().t, |r| r.t);
    let until = track.unresolved_from.map_or(t_half, |u| u.min(t_half));
    let ric = riccati_check(&track, st.riccati_tol, until);
    report.check(Check::at_least(
        "riccati",
        ric.worst,
        -st.riccati_tol,
        format!("{} steps checked up to t = {until}", ric.steps_checked),
    ));
    let mut tr = Table::new("blowup_characteristic.csv", &["t", "z0", "F", "beta", "sup_v_x", "tail_energy"]);
    for i in 0..track.len() {
        tr.push(vec![
            num(track.times[i]),
            num(track.z0[i]),
            num(track.f[i]),
            num(track.beta[i]),
            num(track.sup_v_x[i]),
            num(track.tail_energy[i]),
        ]);
    }
    report.tables.push(tr);

    let bound = blowup_probability_bound(&b, st.threshold_k, st.bound_paths, st.bound_dt, st.bound_seed)?;
    let mut table = Table::new("blowup_bound.csv", &BOUND_HEADER);
    if b.is_zero() {
        // Deterministic: the flag must come close to the Riccati time 2/F₀.
        let deadline = (1.0 + st.slack) * 2.0 / f0;
        let t_flag = match record.status {
            ccf_core::integrator::PathStatus::BlewUp { t } => t,
            _ => f64::INFINITY,
        };
        report.check(Check::at_most(
            "blowup_flag_time",
            t_flag,
            deadline,
            format!("F0 = {f0}, status {:?}", record.status),
        ));
        let fraction = if record.status.blew_up() { 1.0 } else { 0.0 };
        report.check(Check::at_least("blowup_fraction", fraction, bound.estimate.estimate, "single deterministic path".into()));
        table.push(bound_row(&b, st.threshold_k, &bound, Some(fraction)));
        report.ensemble = Some(ensemble_from(cfg, Study::Blowup, std::slice::from_ref(&record)));
    } else {
        let ens = blowup_ensemble(&sim, &spec, &u0, cfg.sim.paths, runner)?;
        let band = st.ci_multiple * ens.fraction.half_width();
        report.check(Check::at_least(
            "blowup_fraction",
            ens.fraction.estimate,
            bound.estimate.estimate - band,
            format!(
                "{}/{} flagged ({} unresolved), Λu0(x0) = {f0}, b*/K = {}, oracle {}",
                ens.blown_up,
                ens.fraction.trials,
                ens.unresolved,
                spec.initial_threshold(),
                bound.oracle
            ),
        ));
        table.push(bound_row(&b, st.threshold_k, &bound, Some(ens.fraction.estimate)));
        report.ensemble = Some(ensemble_from(cfg, Study::Blowup, &ens.records));
    }
    report.tables.push(table);
    Ok(report)
}

/// Strong noise `q(1+B(u))^θ u`: no path may blow up and the Lyapunov
/// functional must stay below `𝔊(‖u₀‖²) + K₁t`.
pub fn global<R: PathRunner>(cfg: &LabConfig, runner: &R) -> LabResult<StudyReport> {
    let st = &cfg.study.global;
    let mut report = StudyReport::new(Study::Global, cfg);
    let NoiseModel::StrongAlpha { q, theta } = cfg.noise else {
        return Err(LabError::Config("the global study needs noise.family = strong_alpha".into()));
    };
    let grid = cfg.grid.build()?;
    let mut sim = cfg.sim_config(&grid)?;
    sim.snapshot_every.get_or_insert(1);
    let u0 = cfg.initial.build(&grid)?;
    let q_grid = SpectralGrid::with_dealias(st.q_hat_n, cfg.grid.period, cfg.grid.dealias)?;
    let mut rng = ChaCha8Rng::seed_from_u64(st.q_hat_seed);
    let q_hat = estimate_commutator_constant(&q_grid, st.q_hat_samples, sim.s.value(), &mut rng)?;
    let s = sim.s.value();
    let outcomes = runner.map(cfg.sim.paths, |i| -> LabResult<(PathRecord, Vec<DriftCondition>)> {
        let mut c = sim.clone();
        c.seed = path_seed(sim.seed, i);
        let mut rec = simulate_path(&c, &u0)?;
        let conds = rec
            .snapshots
            .iter()
            .map(|sn| drift_condition(&sn.field, sn.t, &q, theta, q_hat, s))
            .collect();
        rec.snapshots = Vec::new();
        Ok((rec, conds))
    });
    let mut records = Vec::with_capacity(outcomes.len());
    let mut conds = Vec::new();
    for o in outcomes {
        let (r, c) = o?;
        records.push(r);
        conds.extend(c);
    }
    let k1 = fit_k1(&conds, st.k2);
    let not_completed = records
        .iter()
        .filter(|r| r.status != ccf_core::integrator::PathStatus::Completed)
        .count();
    let blown = records.iter().filter(|r| r.status.blew_up()).count();
    report.check(Check::at_most(
        "paths_not_completed",
        not_completed as f64,
        st.max_blowups as f64,
        format!("{blown} flagged of {} paths", records.len()),
    ));
    match lyapunov_growth_check(&records, k1) {
        Ok(g) => {
            report.check(Check::holds(
                "lyapunov_growth",
                g.pass,
                format!("Q̂ = {q_hat}, K1 = {k1}, K2 = {}, fitted slope {}", st.k2, g.slope),
            ));
            let mut t = Table::new("global_lyapunov.csv", &["t", "mean", "std_err", "bound"]);
            for i in 0..g.times.len() {
                t.push(vec![num(g.times[i]), num(g.mean[i]), num(g.std_err[i]), num(g.bound[i])]);
            }
            report.tables.push(t);
        }
        Err(e) => report.check(Check::holds("lyapunov_growth", false, e.to_string())),
    }
    report.ensemble = Some(ensemble_from(cfg, Study::Global, &records));
    Ok(report)
}

/// The coupled residual `sup|u − βv|` under step refinement, and the
/// probability bound against its reflection-principle value.
pub fn girsanov<R: PathRunner>(cfg: &LabConfig, runner: &R) -> LabResult<StudyReport> {
    let st = &cfg.study.girsanov;
    let mut report = StudyReport::new(Study::Girsanov, cfg);
    if !matches!(cfg.noise, NoiseModel::LinearB { .. }) {
        return Err(LabError::Config("the girsanov study needs noise.family = linear_b".into()));
    }
    if st.dts.len() < 2 {
        return Err(LabError::Config("study.girsanov.dts needs at least two steps".into()));
    }
    let grid = cfg.grid.build()?;
    let base = cfg.sim_config(&grid)?;
    let u0 = cfg.initial.build(&grid)?;
    let mut means = Vec::with_capacity(st.dts.len());
    let mut table = Table::new("girsanov_refinement.csv", &["dt", "mean_residual", "std_err", "ratio"]);
    for &dt in &st.dts {
        let mut c = base.clone();
        c.dt = dt;
        c.validate()?;
        let res = runner.map(cfg.sim.paths, |i| -> LabResult<f64> {
            let mut ci = c.clone();
            ci.seed = path_seed(c.seed, i);
            Ok(girsanov_residual(&ci, &u0)?.residual)
        });
        let vals = res.into_iter().collect::<LabResult<Vec<f64>>>()?;
        let (m, sd) = mean_and_sd(&vals);
        let ratio = means.last().map_or(f64::NAN, |prev: &f64| prev / m);
        table.push(vec![num(dt), num(m), num(sd / (vals.len() as f64).sqrt()), num(ratio)]);
        means.push(m);
    }
    report.tables.push(table);
    let lo = st.expected_ratio * (1.0 - st.tolerance);
    let hi = st.expected_ratio * (1.0 + st.tolerance);
    for (i, w) in means.windows(2).enumerate() {
        report.check(Check::within(
            &format!("residual_ratio_{}", i + 1),
            w[0] / w[1],
            Some(lo),
            Some(hi),
            format!("dt {} → {}", st.dts[i], st.dts[i + 1]),
        ));
    }
    let mut bounds = Table::new("girsanov_bound.csv", &BOUND_HEADER);
    for (i, p) in st.bound_points.iter().enumerate() {
        let b = TimeProfile::exponential(p.b0, p.lambda);
        let bound = blowup_probability_bound(&b, p.k, st.bound_paths, st.bound_dt, st.bound_seed)?;
        let band = st.ci_multiple * bound.estimate.half_width();
        report.check(Check::within(
            &format!("bound_vs_oracle_{i}"),
            bound.estimate.estimate,
            Some(bound.oracle - band),
            Some(bound.oracle + band),
            format!("b0 = {}, λ = {}, K = {}, oracle {}", p.b0, p.lambda, p.k, bound.oracle),
        ));
        bounds.push(bound_row(&b, p.k, &bound, None));
    }
    report.tables.push(bounds);
    Ok(report)
}

fn params(cfg: &LabConfig, n: u64) -> LabResult<InstabilityParams> {
    let st = &cfg.study.instability;
    let p = InstabilityParams {
        m: st.m,
        n,
        delta: st.delta,
        s: st.s,
        sigma0: st.sigma0,
        r0: st.r0,
    };
    p.validate()?;
    Ok(p)
}

fn slope_table(file: &str, points: &[(f64, f64)], slope: f64) -> Table {
    let mut t = Table::new(file, &["n", "value", "fitted_slope"]);
    for &(n, v) in points {
        t.push(vec![num(n), num(v), num(slope)]);
    }
    t
}

/// Approximate solutions concentrated at frequency `n`: decay of the
/// low-frequency part, decay of the error functional, the interpolation
/// between the gap norms and the separation of the `m = ±1` solutions.
pub fn instability<R: PathRunner>(cfg: &LabConfig, runner: &R) -> LabResult<StudyReport> {
    let st = &cfg.study.instability;
    let mut report = StudyReport::new(Study::Instability, cfg);
    let p0 = params(cfg, st.decay_ns.first().copied().unwrap_or(64))?;

    if st.decay_ns.len() >= 2 {
        let pts = low_initial_norms(&p0, &st.decay_ns, st.s)?;
        let fit = rate_fit(&pts)?;
        let expected = 0.5 * st.delta - 1.0;
        report.check(Check::within(
            "low_decay_slope",
            fit.slope,
            Some(expected - st.decay_tolerance),
            Some(expected + st.decay_tolerance),
            format!("‖u_l(0)‖_(H^s) vs n, expected {expected}"),
        ));
        report.tables.push(slope_table("instability_low_decay.csv", &pts, fit.slope));
        let (t_l, worst) = common_low_horizon(&p0, &st.decay_ns, st.s, st.horizon, st.low_dt)?;
        report.check(Check::at_least(
            "low_common_horizon",
            t_l,
            st.horizon * (1.0 - 1e-12),
            format!("worst ‖u_l(t)‖/‖u_l(0)‖ = {worst}"),
        ));
    }

    if !st.ns.is_empty() {
        let mut e_points = Vec::new();
        let mut gaps = Table::new(
            "instability_gaps.csv",
            &["n", "sigma0_sq", "high_sq", "hs", "interpolation_bound"],
        );
        let mut all_hold = true;
        for &n in &st.ns {
            let p = params(cfg, n)?;
            let grids = instability_grids(&p)?;
            let low = low_trajectory(&p, &grids, st.horizon, st.low_dt)?;
            let e = error_functional_ensemble(&p, &grids, &low, &cfg.noise, cfg.sim.paths, cfg.sim.seed)?;
            e_points.push((n as f64, e.mean));
            if st.gaps {
                let mut sim = SimConfig::new(grids.fine.clone(), p.s, cfg.sim.dt, st.horizon, cfg.noise)?;
                apply_sim_options(cfg, &mut sim);
                let g = actual_vs_approx_gap(&p, &grids, &low, &sim, cfg.sim.paths, runner)?;
                all_hold &= g.interpolation_holds();
                gaps.push(vec![n.to_string(), num(g.sigma0_sq), num(g.high_sq), num(g.hs), num(g.interpolation_bound())]);
            }
        }
        if e_points.len() >= 2 {
            let fit = rate_fit(&e_points)?;
            let bound = 2.0 * p0.r_s() + st.slope_slack;
            report.check(Check::at_most(
                "error_functional_slope",
                fit.slope,
                bound,
                format!("2 r_s = {}, {} paths per n", 2.0 * p0.r_s(), cfg.sim.paths),
            ));
            report.tables.push(slope_table("instability_error_functional.csv", &e_points, fit.slope));
        }
        if st.gaps {
            report.check(Check::holds(
                "gap_interpolation",
                all_hold,
                "‖·‖_(H^s) ≤ (E sup‖·‖²_σ0)^(1/4) (E sup‖·‖²_(2s−σ0))^(1/4) at every n".into(),
            ));
            report.tables.push(gaps);
        }
    }

    if let Some(n) = st.separation_n {
        let p1 = params(cfg, n)?.with_m(-1);
        let p2 = p1.with_m(1);
        let grids = instability_grids(&p1)?;
        let mut sim = SimConfig::new(grids.fine.clone(), p1.s, cfg.sim.dt, st.horizon, cfg.noise)?;
        apply_sim_options(cfg, &mut sim);
        let curve = separation_experiment((&p1, &p2), &sim, st.separation_paths, runner)?;
        let (gap, reference) = curve.at(0.5 * PI);
        report.check(Check::at_least(
            "separation_at_half_pi",
            gap,
            st.separation_fraction * reference,
            format!("reference {reference}, n = {n}"),
        ));
        report.check(Check::at_most(
            "separation_initial_gap",
            curve.initial_gap,
            st.initial_fraction * curve.amplitude,
            format!("amplitude {}", curve.amplitude),
        ));
        let mut t = Table::new("instability_separation.csv", &["t", "gap", "reference"]);
        for i in 0..curve.times.len() {
            t.push(vec![num(curve.times[i]), num(curve.gap[i]), num(curve.reference[i])]);
        }
        report.tables.push(t);
    }
    Ok(report)
}

/// Copies the integrator options of the `sim` section onto a configuration
/// built on another grid.
fn apply_sim_options(cfg: &LabConfig, c: &mut SimConfig) {
    let s = &cfg.sim;
    c.drift_scheme = s.drift_scheme;
    c.noise_scheme = s.noise_scheme;
    c.adaptive_tolerance = (s.adaptive_tolerance > 0.0).then_some(s.adaptive_tolerance);
    c.max_refinement = s.max_refinement;
    c.record_every = s.record_every;
    c.blowup_threshold = s.blowup_threshold;
    c.steepness_factor = s.steepness_factor;
    c.brownian_dt = s.brownian_dt;
    c.seed = s.seed;
}

/// `E sup‖u_ε − u_ref‖²_(H^{s−3/2})` against the mollifier scale.
pub fn converge<R: PathRunner>(cfg: &LabConfig, runner: &R) -> LabResult<StudyReport> {
    let st = &cfg.study.converge;
    let mut report = StudyReport::new(Study::Converge, cfg);
    let grid = cfg.grid.build()?;
    let sim = cfg.sim_config(&grid)?;
    let u0 = cfg.initial.build(&grid)?;
    let table = convergence_study(&sim, &u0, &st.eps, cfg.sim.paths, runner)?;
    let fit = table
        .fit
        .clone()
        .ok_or_else(|| LabError::Config("the convergence fit needs at least three scales".into()))?;
    report.check(Check::at_least(
        "convergence_slope",
        fit.slope,
        st.min_slope,
        format!(
            "reference ε = {}, {} paths, {} truncated, r² = {}",
            table.reference_eps, cfg.sim.paths, table.truncated, fit.r_squared
        ),
    ));
    let mut t = Table::new("converge.csv", &["eps", "value", "fitted_slope"]);
    for r in &table.rows {
        t.push(vec![num(r.eps), num(r.mean), num(fit.slope)]);
    }
    report.tables.push(t);
    let digest = cfg.digest();
    let rows = table
        .per_path
        .iter()
        .enumerate()
        .map(|(i, gaps)| PathRow {
            index: i,
            seed: path_seed(cfg.sim.seed, i),
            status: "completed".into(),
            t_stop: None,
            error: None,
            metrics: table
                .rows
                .iter()
                .zip(gaps)
                .map(|(r, g)| (format!("sup_gap_sq_eps_{}", r.eps), *g))
                .collect(),
        })
        .collect();
    let id = format!("{}-converge", crate::harness::run_id(&digest, cfg.sim.seed, 0, cfg.sim.paths));
    let mut ens = EnsembleResult::new(&digest, id, rows);
    ens.rate_fits.push(fit);
    report.ensemble = Some(ens);
    Ok(report)
}

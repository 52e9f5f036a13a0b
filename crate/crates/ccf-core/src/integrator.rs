//! Time stepping of the cut-off, optionally mollified stochastic equation
//!
//! ```text
//! du = −χ_R(‖u‖_{H^{s−3/2}}) J_ε[(H J_ε u) ∂x J_ε u] dt + χ_R(‖u‖_{H^{s−3/2}}) h(t,u) dW
//! ```
//!
//! and of its deterministic and random-coefficient relatives.
//!
//! Each nominal step of length `dt` may be bisected when the drift moves the
//! `H^s` norm by more than the adaptive tolerance. Bisection reads the
//! Brownian increments of the halves from a [`BrownianTree`], so refinement
//! never changes the underlying noise path.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::brownian::{BrownianTree, MAX_LEVEL};
use crate::error::{Error, Result};
use crate::noise::{strong_alpha_factor, NoiseModel};
use crate::spectral::{
    derivative, frac_laplacian, hilbert, mollify, product_of_samples, Field, NormWeights,
    SobolevIndex, SpectralGrid,
};

/// Smooth gate: 1 on `[0, R]`, 0 on `[2R, ∞)`, `exp(1 − 1/(1 − ((x−R)/R)²))`
/// in between.
pub fn cutoff_chi(x: f64, radius: f64) -> f64 {
    assert!(radius > 0.0);
    if x <= radius {
        1.0
    } else if x >= 2.0 * radius {
        0.0
    } else {
        let d = (x - radius) / radius;
        libm::exp(1.0 - 1.0 / (1.0 - d * d))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftScheme {
    /// `dt · drift(u_n)`
    Euler,
    /// Classical fourth-order Runge–Kutta increment of the drift.
    Rk4,
}

/// Treatment of the stochastic increment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseScheme {
    /// `h(t, u_n)·ΔW`
    EulerMaruyama,
    /// For scalar multiplicative noise `σ(t,u)u` only: the state after the
    /// drift increment is multiplied by `exp(σΔW − σ²h/2)`, the exact flow
    /// of the noise with `σ` frozen at the left end of the step. Stays
    /// stable when `σ√h` is not small.
    Exponential,
}

/// Everything that parameterizes one path.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub grid: Arc<SpectralGrid>,
    pub s: SobolevIndex,
    /// 0 disables mollification.
    pub eps_mollify: f64,
    /// `None` disables the cut-off.
    pub cutoff_radius: Option<f64>,
    pub dt: f64,
    pub horizon: f64,
    /// Threshold on `‖u_x‖∞ + ‖Hu_x‖∞`.
    pub blowup_threshold: f64,
    /// The steepness `(‖u_x‖∞+‖Hu_x‖∞)/‖u‖∞` must also reach this multiple
    /// of its initial value (8 = three doublings) before a path is flagged.
    pub steepness_factor: f64,
    pub noise: NoiseModel,
    pub seed: u64,
    /// Record a diagnostic row every this many nominal steps.
    pub record_every: usize,
    /// Keep a field snapshot every this many rows.
    pub snapshot_every: Option<usize>,
    pub drift_scheme: DriftScheme,
    pub noise_scheme: NoiseScheme,
    /// Relative `H^s` size of a whole step increment (drift plus noise) that
    /// triggers bisection.
    pub adaptive_tolerance: Option<f64>,
    /// Maximum number of bisections below the nominal step.
    pub max_refinement: u32,
    /// Length of the Brownian base interval; defaults to `dt`. Runs whose
    /// `dt` differ by powers of two share a path when this is shared.
    pub brownian_dt: Option<f64>,
    /// Stop with status `exited` once `‖u‖_{H^s}` exceeds this radius.
    pub exit_radius: Option<f64>,
    /// Test hook: `false` drops the transport term.
    pub transport: bool,
    /// Solve `v_t + β(t)(Hv)v_x = 0` with `β` the exponential martingale of
    /// the linear noise coefficient, instead of the stochastic equation.
    pub random_pde: bool,
}

impl SimConfig {
    /// Defaults: no mollifier, no cut-off, threshold 10³, RK4 drift,
    /// 10% adaptive tolerance, record every step.
    pub fn new(grid: Arc<SpectralGrid>, s: f64, dt: f64, horizon: f64, noise: NoiseModel) -> Result<Self> {
        let cfg = SimConfig {
            grid,
            s: SobolevIndex::for_evolution(s)?,
            eps_mollify: 0.0,
            cutoff_radius: None,
            dt,
            horizon,
            blowup_threshold: 1e3,
            steepness_factor: 8.0,
            noise,
            seed: 0,
            record_every: 1,
            snapshot_every: None,
            drift_scheme: DriftScheme::Rk4,
            noise_scheme: NoiseScheme::EulerMaruyama,
            adaptive_tolerance: Some(0.1),
            max_refinement: 20,
            brownian_dt: None,
            exit_radius: None,
            transport: true,
            random_pde: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: alloc::string::String| Err(Error::InvalidParameter(m));
        if self.s.value() <= 3.0 {
            return bad(format!("s = {} must exceed 3", self.s.value()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt = {} must be positive", self.dt));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon = {} must be positive", self.horizon));
        }
        if !(self.eps_mollify >= 0.0 && self.eps_mollify < 1.0) {
            return bad(format!("eps_mollify = {} must lie in [0, 1)", self.eps_mollify));
        }
        if let Some(r) = self.cutoff_radius {
            if !(r > 1.0) {
                return bad(format!("cutoff radius {r} must exceed 1"));
            }
        }
        if self.record_every == 0 {
            return bad("record_every must be ≥ 1".into());
        }
        if !(self.steepness_factor >= 1.0) {
            return bad("steepness_factor must be ≥ 1".into());
        }
        self.base_level()?;
        if self.noise_scheme == NoiseScheme::Exponential
            && !matches!(self.noise, NoiseModel::LinearB { .. } | NoiseModel::StrongAlpha { .. })
        {
            return bad("the exponential noise scheme needs noise of the form σ(t,u)u".into());
        }
        if self.random_pde && !matches!(self.noise, NoiseModel::LinearB { .. }) {
            return bad("random-PDE mode needs linear noise b(t)u".into());
        }
        self.noise.validate(self.horizon, None).or_else(|e| match (&self.noise, &e) {
            // θ = 1/2 needs Q̂, which is checked by the caller that owns it.
            (NoiseModel::StrongAlpha { theta, .. }, _) if *theta == 0.5 => Ok(()),
            _ => Err(e),
        })
    }

    /// Number of bisections from the Brownian base interval to `dt`.
    fn base_level(&self) -> Result<u32> {
        let base = self.brownian_dt.unwrap_or(self.dt);
        let ratio = base / self.dt;
        let level = libm::round(libm::log2(ratio));
        if !(level >= 0.0) || libm::fabs(ratio - libm::exp2(level)) > 1e-9 * ratio {
            return Err(Error::InvalidParameter(format!(
                "brownian_dt / dt = {ratio} must be a power of two ≥ 1"
            )));
        }
        if level as u32 > MAX_LEVEL {
            return Err(Error::InvalidParameter("dt too small for the Brownian tree".into()));
        }
        Ok(level as u32)
    }

    pub fn nominal_steps(&self) -> u64 {
        let n = self.horizon / self.dt;
        libm::ceil(n - 1e-9) as u64
    }
}

/// Terminal state of a path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PathStatus {
    Completed,
    BlewUp { t: f64 },
    Diverged { t: f64 },
    Exited { t: f64 },
}

impl PathStatus {
    pub fn stop_time(&self) -> Option<f64> {
        match *self {
            PathStatus::Completed => None,
            PathStatus::BlewUp { t } | PathStatus::Diverged { t } | PathStatus::Exited { t } => Some(t),
        }
    }

    pub fn blew_up(&self) -> bool {
        matches!(self, PathStatus::BlewUp { .. })
    }
}

/// Diagnostics at one recorded time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub t: f64,
    pub hs: f64,
    pub hs_minus_1: f64,
    pub hs_minus_3_2: f64,
    pub sup_u: f64,
    pub sup_ux: f64,
    pub sup_hux: f64,
    /// `max_x Λu`
    pub max_lambda: f64,
    /// `log(1 + ‖u‖²_{H^{s−1}})`
    pub lyapunov: f64,
    /// Exponential martingale of the linear noise (1 for other families).
    pub beta: f64,
    /// Cumulative Brownian path `W(t)` per component.
    pub wiener: Vec<f64>,
}

impl DiagnosticRow {
    pub fn blowup_quantity(&self) -> f64 {
        self.sup_ux + self.sup_hux
    }
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub field: Field,
}

/// Time series and outcome of one realization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathRecord {
    pub seed: u64,
    pub rows: Vec<DiagnosticRow>,
    pub status: PathStatus,
    /// First time the monitored quantity reached the threshold, flagged or not.
    pub first_threshold_crossing: Option<f64>,
    pub accepted_steps: u64,
    pub rejected_steps: u64,
    #[serde(skip)]
    pub snapshots: Vec<Snapshot>,
}

impl PartialEq for PathRecord {
    fn eq(&self, other: &Self) -> bool {
        self.seed == other.seed
            && self.rows == other.rows
            && self.status == other.status
            && self.first_threshold_crossing == other.first_threshold_crossing
            && self.accepted_steps == other.accepted_steps
            && self.rejected_steps == other.rejected_steps
    }
}

impl PathRecord {
    pub fn final_row(&self) -> &DiagnosticRow {
        self.rows.last().expect("a record always holds its initial row")
    }
}

/// `−χ_R(‖u‖_{H^{s−3/2}}) J_ε[(H J_ε u) ∂x J_ε u]`.
pub fn drift(u: &Field, cfg: &SimConfig) -> Field {
    let chi = match cfg.cutoff_radius {
        Some(r) => cutoff_chi(crate::spectral::sobolev_norm(u, cfg.s.value() - 1.5), r),
        None => 1.0,
    };
    transport_term(u, cfg.eps_mollify, chi, cfg.transport)
}

fn transport_term(u: &Field, eps: f64, chi: f64, enabled: bool) -> Field {
    if chi == 0.0 || !enabled {
        return Field::zeros(u.grid());
    }
    let w = if eps > 0.0 { mollify(u, eps) } else { u.clone() };
    let hw = hilbert(&w);
    let wx = derivative(&w);
    let p = product_of_samples(u.grid(), hw.samples(), wx.samples());
    let p = if eps > 0.0 { mollify(&p, eps) } else { p };
    p.scale(-chi)
}

/// Per-configuration caches shared by every step of a path.
struct Workspace {
    w_s: NormWeights,
    w_s1: NormWeights,
    w_s32: NormWeights,
}

impl Workspace {
    fn new(cfg: &SimConfig) -> Self {
        let s = cfg.s.value();
        Workspace {
            w_s: NormWeights::new(&cfg.grid, s),
            w_s1: NormWeights::new(&cfg.grid, s - 1.0),
            w_s32: NormWeights::new(&cfg.grid, s - 1.5),
        }
    }

    fn chi(&self, cfg: &SimConfig, u: &Field) -> f64 {
        match cfg.cutoff_radius {
            Some(r) => cutoff_chi(self.w_s32.norm(u), r),
            None => 1.0,
        }
    }

    fn drift(&self, cfg: &SimConfig, u: &Field) -> Field {
        transport_term(u, cfg.eps_mollify, self.chi(cfg, u), cfg.transport)
    }

    fn drift_increment(&self, cfg: &SimConfig, u: &Field, h: f64) -> Field {
        match cfg.drift_scheme {
            DriftScheme::Euler => self.drift(cfg, u).scale(h),
            DriftScheme::Rk4 => {
                let k1 = self.drift(cfg, u);
                let k2 = self.drift(cfg, &u.axpy(0.5 * h, &k1));
                let k3 = self.drift(cfg, &u.axpy(0.5 * h, &k2));
                let k4 = self.drift(cfg, &u.axpy(h, &k3));
                k1.axpy(2.0, &k2).axpy(2.0, &k3).add(&k4).scale(h / 6.0)
            }
        }
    }
}

/// One Euler–Maruyama step `u + drift increment + χ_R h(t,u)·ΔW` with the
/// given Brownian increments.
pub fn em_step(u: &Field, t: f64, h: f64, dw: &[f64], cfg: &SimConfig) -> Field {
    let ws = Workspace::new(cfg);
    let next = u.add(&ws.drift_increment(cfg, u, h));
    if cfg.noise.is_zero() {
        next
    } else {
        let chi = ws.chi(cfg, u);
        next.axpy(chi, &cfg.noise.increment(t, u, dw))
    }
}

/// Increment taking `u` to `(u + drift_inc)·exp(σΔW − σ²h/2)`.
fn exponential_noise(u: &Field, drift_inc: Field, sigma: f64, dw: f64, h: f64) -> Field {
    let factor = libm::exp(sigma * dw - 0.5 * sigma * sigma * h);
    u.add(&drift_inc).scale(factor).sub(u)
}

fn steepness(sup_u: f64, q: f64) -> f64 {
    if sup_u > 0.0 {
        q / sup_u
    } else {
        0.0
    }
}

/// Incremental driver of one path. Each call to [`PathStepper::step`]
/// advances one nominal step, refining internally as needed.
pub struct PathStepper<'a> {
    cfg: &'a SimConfig,
    ws: Workspace,
    tree: BrownianTree,
    u: Field,
    tick: u64,
    end_tick: u64,
    base_level: u32,
    finest_level: u32,
    level: u32,
    nominal: u64,
    log_beta: f64,
    wiener: Vec<f64>,
    status: Option<PathStatus>,
    steep0: f64,
    record: PathRecord,
}

const TICK_BITS: u32 = MAX_LEVEL;

impl<'a> PathStepper<'a> {
    pub fn new(cfg: &'a SimConfig, u0: Field) -> Result<Self> {
        cfg.validate()?;
        if !cfg.grid.same_as(u0.grid()) {
            return Err(Error::GridMismatch);
        }
        if !u0.is_finite() {
            return Err(Error::InvalidParameter("initial field is not finite".into()));
        }
        let base_level = cfg.base_level()?;
        let base_dt = cfg.brownian_dt.unwrap_or(cfg.dt);
        let ws = Workspace::new(cfg);
        let fx = derivative(&u0);
        let q0 = fx.max_abs() + hilbert(&fx).max_abs();
        if q0 >= cfg.blowup_threshold {
            return Err(Error::InvalidParameter(format!(
                "blow-up threshold {} must exceed the initial value {q0}",
                cfg.blowup_threshold
            )));
        }
        let steep0 = steepness(u0.max_abs(), q0);
        let span = 1u64 << (TICK_BITS - base_level);
        let mut stepper = PathStepper {
            cfg,
            ws,
            tree: BrownianTree::new(cfg.seed, base_dt, cfg.noise.components()),
            u: u0,
            tick: 0,
            end_tick: cfg.nominal_steps() * span,
            base_level,
            finest_level: (base_level + cfg.max_refinement).min(MAX_LEVEL),
            level: base_level,
            nominal: 0,
            log_beta: 0.0,
            wiener: vec![0.0; cfg.noise.components()],
            status: None,
            steep0,
            record: PathRecord {
                seed: cfg.seed,
                rows: Vec::new(),
                status: PathStatus::Completed,
                first_threshold_crossing: None,
                accepted_steps: 0,
                rejected_steps: 0,
                snapshots: Vec::new(),
            },
        };
        stepper.push_row();
        if let Some(r) = cfg.exit_radius {
            // The exit time is an infimum over t > 0, so a start outside the
            // ball exits immediately.
            if stepper.ws.w_s.norm(&stepper.u) > r {
                stepper.status = Some(PathStatus::Exited { t: 0.0 });
                stepper.record.status = PathStatus::Exited { t: 0.0 };
            }
        }
        Ok(stepper)
    }

    fn tick_time(&self, tick: u64) -> f64 {
        tick as f64 * self.tree.base_dt() / (1u64 << TICK_BITS) as f64
    }

    pub fn time(&self) -> f64 {
        self.tick_time(self.tick)
    }

    pub fn state(&self) -> &Field {
        &self.u
    }

    pub fn beta(&self) -> f64 {
        libm::exp(self.log_beta)
    }

    pub fn wiener(&self) -> &[f64] {
        &self.wiener
    }

    pub fn status(&self) -> Option<PathStatus> {
        self.status
    }

    pub fn is_finished(&self) -> bool {
        self.status.is_some()
    }

    pub fn record(&self) -> &PathRecord {
        &self.record
    }

    fn linear_b(&self) -> Option<crate::noise::TimeProfile> {
        match self.cfg.noise {
            NoiseModel::LinearB { b, .. } => Some(b),
            _ => None,
        }
    }

    fn push_row(&mut self) {
        let u = &self.u;
        let ux = derivative(u);
        let hux = hilbert(&ux);
        let lam = frac_laplacian(u, 1.0);
        let hs1 = self.ws.w_s1.norm(u);
        let row = DiagnosticRow {
            t: self.time(),
            hs: self.ws.w_s.norm(u),
            hs_minus_1: hs1,
            hs_minus_3_2: self.ws.w_s32.norm(u),
            sup_u: u.max_abs(),
            sup_ux: ux.max_abs(),
            sup_hux: hux.max_abs(),
            max_lambda: lam.samples().iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v)),
            lyapunov: libm::log1p(hs1 * hs1),
            beta: self.beta(),
            wiener: self.wiener.clone(),
        };
        if let Some(last) = self.record.rows.last() {
            if last.t == row.t {
                return;
            }
        }
        self.record.rows.push(row);
        if let Some(k) = self.cfg.snapshot_every {
            if (self.record.rows.len() - 1).is_multiple_of(k.max(1)) {
                self.record.snapshots.push(Snapshot {
                    t: self.time(),
                    field: self.u.clone(),
                });
            }
        }
    }

    /// Proposed state after a step of `level` from the current tick, or `None`
    /// when the adaptive rule rejects it.
    fn attempt(&self, level: u32, dw: &[f64]) -> Option<Field> {
        let cfg = self.cfg;
        let h = self.tree.base_dt() / (1u64 << level) as f64;
        let t = self.time();
        let u = &self.u;
        let scale = if cfg.random_pde { self.beta() } else { 1.0 };
        let mut inc = self.ws.drift_increment(cfg, u, h * scale);
        if !cfg.random_pde && !cfg.noise.is_zero() {
            let chi = self.ws.chi(cfg, u);
            if chi != 0.0 {
                match (cfg.noise_scheme, cfg.noise) {
                    (NoiseScheme::Exponential, NoiseModel::StrongAlpha { q, theta }) => {
                        let sigma = chi * strong_alpha_factor(&q, theta, t, u);
                        inc = exponential_noise(u, inc, sigma, dw[0], h);
                    }
                    (NoiseScheme::Exponential, NoiseModel::LinearB { b, .. }) => {
                        inc = exponential_noise(u, inc, chi * b.eval(t), dw[0], h);
                    }
                    _ => inc = inc.axpy(chi, &cfg.noise.increment(t, u, dw)),
                }
            }
        }
        if let Some(tol) = cfg.adaptive_tolerance {
            if level < self.finest_level {
                let norm = self.ws.w_s.norm(u);
                let change = self.ws.w_s.norm(&inc);
                if !(change <= tol * norm) && change > 0.0 {
                    return None;
                }
            }
        }
        Some(u.add(&inc))
    }

    /// Advances one nominal step. Returns `false` once the path has stopped.
    pub fn step(&mut self) -> bool {
        if self.status.is_some() {
            return false;
        }
        let nominal_span = 1u64 << (TICK_BITS - self.base_level);
        let target = (self.tick + nominal_span).min(self.end_tick);
        while self.tick < target && self.status.is_none() {
            let span = 1u64 << (TICK_BITS - self.level);
            let j = self.tick >> (TICK_BITS - self.level);
            let dw = self.tree.increment(self.level, j);
            let Some(next) = self.attempt(self.level, &dw) else {
                self.record.rejected_steps += 1;
                self.level += 1;
                continue;
            };
            let t0 = self.time();
            let h = self.tree.base_dt() / (1u64 << self.level) as f64;
            if let Some(b) = self.linear_b() {
                let (b0, b1) = (b.eval(t0), b.eval(t0 + h));
                self.log_beta += b0 * dw[0] - 0.25 * (b0 * b0 + b1 * b1) * h;
            }
            for (w, d) in self.wiener.iter_mut().zip(&dw) {
                *w += d;
            }
            self.tick += span;
            self.record.accepted_steps += 1;
            self.u = next;
            self.check_state();
            if self.level > self.base_level && self.tick.is_multiple_of(span << 1) {
                self.level -= 1;
            }
        }
        if self.status.is_none() {
            self.nominal += 1;
            if self.tick >= self.end_tick {
                self.status = Some(PathStatus::Completed);
            }
        }
        let at_record = self.nominal.is_multiple_of(self.cfg.record_every as u64);
        if (at_record || self.status.is_some())
            && self.u.is_finite() {
                self.push_row();
            }
        if let Some(st) = self.status {
            self.record.status = st;
        }
        self.status.is_none()
    }

    fn check_state(&mut self) {
        let t = self.time();
        if !self.u.is_finite() {
            self.status = Some(PathStatus::Diverged { t });
            return;
        }
        let ux = derivative(&self.u);
        let q = ux.max_abs() + hilbert(&ux).max_abs();
        if q >= self.cfg.blowup_threshold {
            if self.record.first_threshold_crossing.is_none() {
                self.record.first_threshold_crossing = Some(t);
            }
            let steep = steepness(self.u.max_abs(), q);
            if steep >= self.cfg.steepness_factor * self.steep0 {
                self.status = Some(PathStatus::BlewUp { t });
                return;
            }
        }
        if let Some(r) = self.cfg.exit_radius {
            if self.ws.w_s.norm(&self.u) > r {
                self.status = Some(PathStatus::Exited { t });
            }
        }
    }

    pub fn finish(mut self) -> PathRecord {
        if self.status.is_none() {
            while self.step() {}
        }
        self.record
    }

    /// Current state and record, consuming the stepper.
    pub fn into_parts(self) -> (Field, PathRecord) {
        (self.u, self.record)
    }
}

/// Runs one path to completion.
pub fn simulate_path(cfg: &SimConfig, u0: &Field) -> Result<PathRecord> {
    Ok(PathStepper::new(cfg, u0.clone())?.finish())
}

/// Runs one path, handing `(t, u, β)` to `observe` at `t = 0` and after every
/// nominal step.
pub fn simulate_path_observed(
    cfg: &SimConfig,
    u0: &Field,
    mut observe: impl FnMut(f64, &Field, f64),
) -> Result<PathRecord> {
    let mut stepper = PathStepper::new(cfg, u0.clone())?;
    observe(0.0, stepper.state(), 1.0);
    while stepper.step() {
        observe(stepper.time(), stepper.state(), stepper.beta());
    }
    if stepper.state().is_finite() && stepper.time() > 0.0 {
        observe(stepper.time(), stepper.state(), stepper.beta());
    }
    Ok(stepper.finish())
}

/// Runs several configurations sharing one initial field in lockstep and
/// returns, for each, `sup_t ‖u_i(t) − u_ref(t)‖²_{H^{gap_index}}` over the
/// nominal times before either path stops, together with the records.
pub fn lockstep_gaps(
    cfgs: &[SimConfig],
    u0: &Field,
    reference: usize,
    gap_index: f64,
) -> Result<(Vec<f64>, Vec<PathRecord>)> {
    assert!(reference < cfgs.len());
    let weights = NormWeights::new(u0.grid(), gap_index);
    let mut steppers = cfgs
        .iter()
        .map(|c| PathStepper::new(c, u0.clone()))
        .collect::<Result<Vec<_>>>()?;
    let steps = cfgs[reference].nominal_steps();
    for c in cfgs {
        if c.dt != cfgs[reference].dt || c.nominal_steps() != steps {
            return Err(Error::InvalidParameter("lockstep runs need a common time grid".into()));
        }
    }
    let mut gaps = vec![0.0f64; cfgs.len()];
    let mut live = vec![true; cfgs.len()];
    for _ in 0..steps {
        for st in steppers.iter_mut() {
            st.step();
        }
        let ref_ok = steppers[reference].status().is_none_or(|s| s == PathStatus::Completed);
        for i in 0..cfgs.len() {
            let ok = steppers[i].status().is_none_or(|s| s == PathStatus::Completed);
            live[i] = live[i] && ok && ref_ok;
            if live[i] {
                let d = weights.distance(steppers[i].state(), steppers[reference].state());
                gaps[i] = gaps[i].max(d * d);
            }
        }
    }
    Ok((gaps, steppers.into_iter().map(|s| s.finish()).collect()))
}

/// Two paths of the mollified scheme with scales `eps1`, `eps2` driven by
/// the same Brownian path.
pub struct CoupledPair {
    pub first: PathRecord,
    pub second: PathRecord,
    /// `sup_t ‖u_{ε1} − u_{ε2}‖²_{H^{s−3/2}}` up to the first stop.
    pub sup_gap_sq: f64,
}

pub fn coupled_mollified_pair(cfg: &SimConfig, u0: &Field, eps1: f64, eps2: f64) -> Result<CoupledPair> {
    let mut a = cfg.clone();
    a.eps_mollify = eps1;
    let mut b = cfg.clone();
    b.eps_mollify = eps2;
    let (gaps, mut recs) = lockstep_gaps(&[a, b], u0, 1, cfg.s.value() - 1.5)?;
    let second = recs.pop().unwrap();
    let first = recs.pop().unwrap();
    Ok(CoupledPair {
        first,
        second,
        sup_gap_sq: gaps[0],
    })
}

/// Deterministic RK4 solve of `u_t + (Hu)u_x = 0`, returning the states at
/// every `record_every`-th step (including `t = 0`). Fails if the solution
/// stops being finite.
pub fn solve_deterministic(u0: &Field, dt: f64, horizon: f64, record_every: usize) -> Result<Vec<(f64, Field)>> {
    if !(dt > 0.0) || !(horizon > 0.0) || record_every == 0 {
        return Err(Error::InvalidParameter("dt, horizon and record_every must be positive".into()));
    }
    let steps = libm::ceil(horizon / dt - 1e-9) as usize;
    let d = |u: &Field| transport_term(u, 0.0, 1.0, true);
    let mut u = u0.clone();
    let mut out = vec![(0.0, u.clone())];
    for i in 1..=steps {
        let t0 = (i - 1) as f64 * dt;
        let h = dt.min(horizon - t0);
        let k1 = d(&u);
        let k2 = d(&u.axpy(0.5 * h, &k1));
        let k3 = d(&u.axpy(0.5 * h, &k2));
        let k4 = d(&u.axpy(h, &k3));
        u = u.add(&k1.axpy(2.0, &k2).axpy(2.0, &k3).add(&k4).scale(h / 6.0));
        if !u.is_finite() {
            return Err(Error::InvalidParameter(format!("deterministic solve lost finiteness at t = {}", t0 + h)));
        }
        if i % record_every == 0 || i == steps {
            out.push((t0 + h, u.clone()));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{TimeProfile, WienerSpec};
    use crate::spectral::sobolev_norm;
    use core::f64::consts::PI;

    fn grid(n: usize) -> Arc<SpectralGrid> {
        SpectralGrid::new(n, 2.0 * PI).unwrap()
    }

    fn max_diff(a: &Field, b: &Field) -> f64 {
        a.samples()
            .iter()
            .zip(b.samples())
            .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn cutoff_profile() {
        assert_eq!(cutoff_chi(0.5, 1.0), 1.0);
        assert_eq!(cutoff_chi(3.0, 1.0), 0.0);
        let mid = cutoff_chi(1.5, 1.0);
        assert!(mid > 0.0 && mid < 1.0);
        assert!((cutoff_chi(15.0, 10.0) - mid).abs() < 1e-15);
        let mut last = 1.0;
        for i in 0..=300 {
            let v = cutoff_chi(i as f64 * 0.01, 1.0);
            assert!(v <= last);
            last = v;
        }
    }

    #[test]
    fn drift_examples() {
        let g = grid(64);
        let cfg = SimConfig::new(g.clone(), 3.5, 0.01, 1.0, NoiseModel::Zero).unwrap();
        assert_eq!(drift(&Field::zeros(&g), &cfg).max_abs(), 0.0);
        let u = Field::from_fn(&g, libm::cos);
        let want = Field::from_fn(&g, |x| -0.5 + 0.5 * libm::cos(2.0 * x));
        assert!(max_diff(&drift(&u, &cfg), &want) < 1e-14);
        let mut closed = cfg.clone();
        closed.cutoff_radius = Some(1.5);
        let big = u.scale(10.0);
        assert!(sobolev_norm(&big, 2.0) >= 3.0);
        assert_eq!(drift(&big, &closed).max_abs(), 0.0);
    }

    #[test]
    fn zero_data_stays_zero() {
        let g = grid(32);
        for noise in [
            NoiseModel::Zero,
            NoiseModel::LinearB {
                b: TimeProfile::constant(0.5),
                b_star: 1.0,
            },
            NoiseModel::GeneralH {
                q: TimeProfile::constant(1.0),
                power_k: 1,
                power_n: 2,
                wiener: WienerSpec::default(),
            },
        ] {
            let cfg = SimConfig::new(g.clone(), 3.5, 0.01, 0.2, noise).unwrap();
            let rec = simulate_path(&cfg, &Field::zeros(&g)).unwrap();
            assert_eq!(rec.status, PathStatus::Completed);
            assert!(rec.rows.iter().all(|r| r.hs == 0.0 && r.sup_ux == 0.0));
            assert_eq!(rec.rows.len(), 21);
        }
    }

    #[test]
    fn deterministic_euler_step_is_forward_euler() {
        let g = grid(64);
        let mut cfg = SimConfig::new(g.clone(), 3.5, 0.01, 1.0, NoiseModel::Zero).unwrap();
        cfg.drift_scheme = DriftScheme::Euler;
        let u = Field::from_fn(&g, |x| libm::sin(x) + 0.3 * libm::cos(2.0 * x));
        let by_hand = u.axpy(0.01, &drift(&u, &cfg));
        assert!(max_diff(&em_step(&u, 0.0, 0.01, &[], &cfg), &by_hand) < 1e-15);
    }

    #[test]
    fn linear_noise_without_transport_is_geometric() {
        // With the transport term disabled each mode solves dX = b X dW, so
        // u(T) = u0·exp(bW_T − b²T/2); EM is strong order ½ for this SDE.
        let g = grid(32);
        let u0 = Field::from_fn(&g, |x| libm::cos(x) + 0.5);
        let b = 0.4;
        let mut errs = Vec::new();
        for k in [0u32, 2, 4] {
            let mut total = 0.0;
            let paths = 200;
            for seed in 0..paths {
                let mut cfg = SimConfig::new(
                    g.clone(),
                    3.5,
                    0.0625 / (1u64 << k) as f64,
                    1.0,
                    NoiseModel::LinearB {
                        b: TimeProfile::constant(b),
                        b_star: 1.0,
                    },
                )
                .unwrap();
                cfg.transport = false;
                cfg.seed = seed;
                cfg.brownian_dt = Some(0.0625);
                cfg.record_every = usize::MAX;
                let (u, rec) = {
                    let mut st = PathStepper::new(&cfg, u0.clone()).unwrap();
                    while st.step() {}
                    st.into_parts()
                };
                let w = rec.final_row().wiener[0];
                let exact = u0.scale(libm::exp(b * w - 0.5 * b * b));
                total += sobolev_norm(&u.sub(&exact), 0.0).powi(2);
            }
            errs.push(libm::sqrt(total / paths as f64));
        }
        for pair in errs.windows(2) {
            let ratio = pair[0] / pair[1];
            assert!(ratio > 1.4 && ratio < 2.8, "{errs:?}");
        }
    }

    #[test]
    fn exponential_noise_scheme_is_exact_for_frozen_sigma() {
        let g = grid(32);
        let u0 = Field::from_fn(&g, |x| libm::cos(x) + 0.5);
        let b = 0.4;
        let linear = NoiseModel::LinearB {
            b: TimeProfile::constant(b),
            b_star: 1.0,
        };
        let mut cfg = SimConfig::new(g.clone(), 3.5, 0.01, 1.0, linear).unwrap();
        cfg.transport = false;
        cfg.noise_scheme = NoiseScheme::Exponential;
        cfg.seed = 5;
        let mut st = PathStepper::new(&cfg, u0.clone()).unwrap();
        while st.step() {}
        let (u, rec) = st.into_parts();
        let w = rec.final_row().wiener[0];
        let exact = u0.scale(libm::exp(b * w - 0.5 * b * b));
        assert!(max_diff(&u, &exact) < 1e-12 * exact.max_abs());
        assert!((rec.final_row().beta - libm::exp(b * w - 0.5 * b * b)).abs() < 1e-12);

        let strong = NoiseModel::StrongAlpha {
            q: TimeProfile::constant(1.0),
            theta: 1.0,
        };
        let mut cfg = SimConfig::new(g.clone(), 3.5, 0.01, 0.5, strong).unwrap();
        cfg.noise_scheme = NoiseScheme::Exponential;
        let rec = simulate_path(&cfg, &u0.scale(3.0)).unwrap();
        assert_eq!(rec.status, PathStatus::Completed);

        let general = NoiseModel::GeneralH {
            q: TimeProfile::constant(1.0),
            power_k: 2,
            power_n: 2,
            wiener: WienerSpec::default(),
        };
        let mut cfg = SimConfig::new(g, 3.5, 0.01, 0.5, general).unwrap();
        cfg.noise_scheme = NoiseScheme::Exponential;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn same_seed_is_bit_identical_and_seeds_differ() {
        let g = grid(64);
        let mut cfg = SimConfig::new(
            g.clone(),
            3.5,
            0.01,
            0.3,
            NoiseModel::GeneralH {
                q: TimeProfile::constant(0.5),
                power_k: 1,
                power_n: 1,
                wiener: WienerSpec::default(),
            },
        )
        .unwrap();
        cfg.seed = 42;
        let u0 = Field::from_fn(&g, |x| 0.5 * libm::sin(x));
        let a = simulate_path(&cfg, &u0).unwrap();
        let b = simulate_path(&cfg, &u0).unwrap();
        assert_eq!(a, b);
        cfg.seed = 43;
        assert_ne!(a.rows, simulate_path(&cfg, &u0).unwrap().rows);
    }

    #[test]
    fn cutoff_is_inert_when_far() {
        let g = grid(64);
        let u0 = Field::from_fn(&g, |x| 0.5 * libm::sin(x) + 0.2 * libm::cos(3.0 * x));
        let mut cfg = SimConfig::new(
            g.clone(),
            3.5,
            0.01,
            0.2,
            NoiseModel::StrongAlpha {
                q: TimeProfile::constant(1.0),
                theta: 1.0,
            },
        )
        .unwrap();
        cfg.seed = 3;
        let free = simulate_path(&cfg, &u0).unwrap();
        cfg.cutoff_radius = Some(1e3 * sobolev_norm(&u0, 3.5) + 2.0);
        assert_eq!(free.rows, simulate_path(&cfg, &u0).unwrap().rows);
    }

    #[test]
    fn deterministic_transport_preserves_range() {
        let g = grid(256);
        let u0 = Field::from_fn(&g, |x| 0.3 * libm::exp(-4.0 * (x - PI) * (x - PI)));
        let traj = solve_deterministic(&u0, 0.005, 0.5, 10).unwrap();
        let (lo0, hi0) = range(&u0);
        for (_, u) in &traj {
            let (lo, hi) = range(u);
            assert!((hi - hi0).abs() < 1e-4 && (lo - lo0).abs() < 1e-4);
        }
    }

    fn range(u: &Field) -> (f64, f64) {
        u.samples()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)))
    }

    #[test]
    fn coupled_pair_with_equal_scales_is_identical() {
        let g = grid(64);
        let mut cfg = SimConfig::new(
            g.clone(),
            3.5,
            0.01,
            0.1,
            NoiseModel::GeneralH {
                q: TimeProfile::constant(0.2),
                power_k: 1,
                power_n: 1,
                wiener: WienerSpec::default(),
            },
        )
        .unwrap();
        cfg.seed = 9;
        let u0 = Field::from_fn(&g, |x| 0.3 * libm::sin(x));
        let pair = coupled_mollified_pair(&cfg, &u0, 0.1, 0.1).unwrap();
        assert_eq!(pair.first, pair.second);
        assert_eq!(pair.sup_gap_sq, 0.0);
        let apart = coupled_mollified_pair(&cfg, &u0, 0.5, 0.05).unwrap();
        assert!(apart.sup_gap_sq > 0.0);
    }

    #[test]
    fn refinement_keeps_the_brownian_path() {
        let g = grid(32);
        let mut cfg = SimConfig::new(
            g.clone(),
            3.5,
            0.05,
            0.5,
            NoiseModel::LinearB {
                b: TimeProfile::constant(0.5),
                b_star: 1.0,
            },
        )
        .unwrap();
        cfg.seed = 5;
        cfg.brownian_dt = Some(0.05);
        let u0 = Field::from_fn(&g, |x| 0.2 * libm::cos(x));
        let coarse = simulate_path(&cfg, &u0).unwrap();
        cfg.dt = 0.05 / 8.0;
        cfg.record_every = 8;
        let fine = simulate_path(&cfg, &u0).unwrap();
        for (a, b) in coarse.rows.iter().zip(&fine.rows) {
            assert!((a.t - b.t).abs() < 1e-12);
            assert!((a.wiener[0] - b.wiener[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn random_pde_mode_matches_scaled_equation() {
        // β ≡ 1 when b ≡ 0, so the random PDE is the deterministic equation.
        let g = grid(64);
        let u0 = Field::from_fn(&g, |x| 0.4 * libm::sin(x));
        let noise = NoiseModel::LinearB {
            b: TimeProfile::constant(0.0),
            b_star: 1.0,
        };
        let mut cfg = SimConfig::new(g.clone(), 3.5, 0.01, 0.3, noise).unwrap();
        let spde = simulate_path(&cfg, &u0).unwrap();
        cfg.random_pde = true;
        let rpde = simulate_path(&cfg, &u0).unwrap();
        assert_eq!(spde.rows, rpde.rows);
    }
}

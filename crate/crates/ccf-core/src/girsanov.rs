//! Linear multiplicative noise `b(t)u dW`.
//!
//! With `β(t) = exp(∫b dW − ½∫b²)`, the process `v = u/β` solves the random
//! transport equation `v_t + β(Hv)v_x = 0`. Along the characteristic from
//! the maximum of `v`, `F = Λv` obeys `dF/dt ≥ ½βF²`, so blow-up follows on
//! the event `{exp(∫b dW) > K for all t}` when `F(0) > b*/K`. This module
//! measures each link of that chain.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{path_seed, PathRunner};
use crate::identities::antiperiodic_half_norm_sq;
use crate::integrator::{simulate_path, simulate_path_observed, PathRecord, PathStatus, PathStepper, SimConfig};
use crate::noise::{NoiseModel, TimeProfile};
use crate::spectral::{derivative, frac_laplacian, hilbert, relative_energy_above, Field, NormWeights};
use crate::stats::{normal_cdf, wilson, Proportion};

/// Parameters of a linear-noise blow-up study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GirsanovSpec {
    pub b: TimeProfile,
    /// Strict upper bound on `b(t)²`.
    pub b_star: f64,
    /// Level `K ∈ (0,1)` of the event `exp(∫b dW) > K`.
    pub threshold_k: f64,
    pub horizon: f64,
    pub riccati_tol: f64,
}

impl GirsanovSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold_k > 0.0 && self.threshold_k < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "K = {} must lie in (0, 1)",
                self.threshold_k
            )));
        }
        if !(self.horizon > 0.0) || !(self.riccati_tol >= 0.0) {
            return Err(Error::InvalidParameter("horizon and riccati_tol must be positive".into()));
        }
        if !self.b.is_zero() {
            self.noise().validate(self.horizon, None)?;
        } else if !(self.b_star >= 0.0) {
            return Err(Error::InvalidParameter("b_star must be nonnegative".into()));
        }
        Ok(())
    }

    /// The noise model driving the stochastic equation.
    pub fn noise(&self) -> NoiseModel {
        if self.b.is_zero() {
            NoiseModel::Zero
        } else {
            NoiseModel::LinearB {
                b: self.b,
                b_star: self.b_star,
            }
        }
    }

    /// `b*/K`, the level `Λu₀(x₀)` must exceed.
    pub fn initial_threshold(&self) -> f64 {
        self.b_star / self.threshold_k
    }
}

/// `β` at the nodes `t_i = i·dt`: the left-point sum of `b ΔW` minus the
/// trapezoid rule for `∫b²/2`. Starts at 1.
pub fn beta_path(b: &TimeProfile, increments: &[f64], dt: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(increments.len() + 1);
    let mut log_beta = 0.0;
    out.push(1.0);
    for (i, dw) in increments.iter().enumerate() {
        let (b0, b1) = (b.eval(i as f64 * dt), b.eval((i + 1) as f64 * dt));
        log_beta += b0 * dw - 0.25 * (b0 * b0 + b1 * b1) * dt;
        out.push(libm::exp(log_beta));
    }
    out
}

/// Outcome of running the stochastic equation and the random transport
/// equation on one Brownian path.
#[derive(Debug, Clone)]
pub struct GirsanovComparison {
    /// `sup_t ‖u − βv‖_{H^{s−1}} / (1 + ‖u‖_{H^{s−1}})`
    pub residual: f64,
    /// Last compared time.
    pub compared_until: f64,
    pub u: PathRecord,
    pub v: PathRecord,
}

/// Runs `u` (stochastic equation) and `v` (random transport equation) in
/// lockstep on the path seeded by `cfg.seed` and compares `u` with `βv` at
/// the ends of the Brownian base intervals. Either path stopping ends the
/// comparison.
pub fn girsanov_residual(cfg: &SimConfig, u0: &Field) -> Result<GirsanovComparison> {
    if !matches!(cfg.noise, NoiseModel::LinearB { .. }) {
        return Err(Error::InvalidParameter("the comparison needs linear noise b(t)u".into()));
    }
    let mut cu = cfg.clone();
    cu.random_pde = false;
    let mut cv = cfg.clone();
    cv.random_pde = true;
    let mut su = PathStepper::new(&cu, u0.clone())?;
    let mut sv = PathStepper::new(&cv, u0.clone())?;
    let stride = libm::round(cfg.brownian_dt.unwrap_or(cfg.dt) / cfg.dt).max(1.0) as u64;
    let weights = NormWeights::new(&cfg.grid, cfg.s.value() - 1.0);
    let mut residual: f64 = 0.0;
    let mut compared_until = 0.0;
    let steps = cfg.nominal_steps();
    for i in 1..=steps {
        su.step();
        sv.step();
        let ok = |s: Option<PathStatus>| s.is_none_or(|s| s == PathStatus::Completed);
        if !ok(su.status()) || !ok(sv.status()) {
            break;
        }
        if i % stride == 0 || i == steps {
            let u = su.state();
            let bv = sv.state().scale(sv.beta());
            let gap = weights.distance(u, &bv) / (1.0 + weights.norm(u));
            residual = residual.max(gap);
            compared_until = su.time();
        }
    }
    Ok(GirsanovComparison {
        residual,
        compared_until,
        u: su.finish(),
        v: sv.finish(),
    })
}

fn hilbert_symbol(xi: f64) -> Complex64 {
    if xi > 0.0 {
        Complex64::new(0.0, 1.0)
    } else {
        Complex64::new(0.0, 0.0)
    }
}

fn dx_symbol(xi: f64) -> Complex64 {
    Complex64::new(0.0, xi)
}

fn dxx_symbol(xi: f64) -> Complex64 {
    Complex64::new(-xi * xi, 0.0)
}

fn lambda_symbol(xi: f64) -> Complex64 {
    Complex64::new(xi.abs(), 0.0)
}

/// Location of the global maximum: the grid argmax, moved by a parabola
/// through the neighbouring samples and polished by Newton steps on `v_x`.
/// Falls back to the grid point when the curvature there is not negative.
pub fn refine_max(v: &Field) -> f64 {
    let g = v.grid();
    let n = g.len();
    let (j, _) = v.argmax();
    let x_grid = g.point(j);
    let s = v.samples();
    let (a, b, c) = (s[(j + n - 1) % n], s[j], s[(j + 1) % n]);
    let curv = a - 2.0 * b + c;
    if !(curv < 0.0) {
        return x_grid;
    }
    let dx = g.spacing();
    let mut x = x_grid + 0.5 * (a - c) / curv * dx;
    for _ in 0..4 {
        let vx = v.eval_symbol(x, dx_symbol);
        let vxx = v.eval_symbol(x, dxx_symbol);
        if !(vxx < 0.0) {
            break;
        }
        let step = vx / vxx;
        x -= step;
        if step.abs() < 1e-15 * g.period() {
            break;
        }
    }
    if (x - x_grid).abs() > 1.5 * dx {
        return x_grid;
    }
    x.rem_euclid(g.period())
}

/// Both sides of the identity at the maximum `z₀` of `v`:
/// `Λ(ṽΛṽ)(z₀) + ṽ(z₀)ṽ_xx(z₀) = −½(Λv(z₀))² − (1/π)‖η‖²_{Ḣ^{1/2}}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvIdentity {
    pub z0: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

impl SvIdentity {
    pub fn relative(&self) -> f64 {
        let scale = self.lhs.abs().max(self.rhs.abs());
        if scale == 0.0 {
            0.0
        } else {
            self.residual / scale
        }
    }
}

/// Evaluates the identity at the global maximum of `v` with `ṽ = Hv` and
/// the periodic difference quotient
/// `η(y) = (ṽ(z₀) − ṽ(y)) / ((L/π) sin(π(z₀−y)/L))`, `η(z₀) = ṽ_x(z₀)`.
///
/// The maximum is located to round-off and the field translated so that it
/// sits on a grid point; products are formed from samples without
/// dealiasing, which keeps the identity exact on the grid.
pub fn identity_sv_residual(v: &Field) -> Result<SvIdentity> {
    let g = v.grid();
    if v.max_abs() == 0.0 {
        return Ok(SvIdentity {
            z0: 0.0,
            lhs: 0.0,
            rhs: 0.0,
            residual: 0.0,
        });
    }
    let z0 = refine_max(v);
    let vxx = v.eval_symbol(z0, dxx_symbol);
    let vx = v.eval_symbol(z0, dx_symbol);
    let scale = derivative(v).max_abs();
    if !(vxx < 0.0) || vx.abs() > 1e-8 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NoCleanMaximum(format!(
            "v_x = {vx:e}, v_xx = {vxx:e} at the maximum"
        )));
    }
    let n = g.len();
    let j0 = n / 2;
    let w = v.translate(z0 - g.point(j0));
    let vt = hilbert(&w);
    let lam_vt = frac_laplacian(&vt, 1.0);
    let prod: Vec<f64> = vt.samples().iter().zip(lam_vt.samples()).map(|(a, b)| a * b).collect();
    let lhs_prod = frac_laplacian(&Field::from_samples(g, prod)?, 1.0);
    let vt_xx = derivative(&derivative(&vt));
    let lhs = lhs_prod.samples()[j0] + vt.samples()[j0] * vt_xx.samples()[j0];

    let l = g.period();
    let dx = g.spacing();
    let centre = vt.samples()[j0];
    let vt_x = derivative(&vt).samples()[j0];
    let eta: Vec<f64> = (0..n)
        .map(|j| {
            if j == j0 {
                vt_x
            } else {
                let d = (j0 as f64 - j as f64) * dx;
                let chord = l / core::f64::consts::PI * libm::sin(core::f64::consts::PI * d / l);
                (centre - vt.samples()[j]) / chord
            }
        })
        .collect();
    let lam_v = frac_laplacian(&w, 1.0).samples()[j0];
    let rhs = -0.5 * lam_v * lam_v - antiperiodic_half_norm_sq(g, &eta) / core::f64::consts::PI;
    Ok(SvIdentity {
        z0,
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
    })
}

/// Samples of `Λv`, `v_x` and `v` along the characteristic issued from the
/// maximum of the initial field.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicTrack {
    pub times: Vec<f64>,
    /// Position `φ(t, x₀)`, reduced to `[0, L)`.
    pub z0: Vec<f64>,
    /// `F(t) = Λv(t, φ(t))`
    pub f: Vec<f64>,
    pub beta: Vec<f64>,
    /// `|v_x(t, φ(t))|`
    pub v_x_at_z0: Vec<f64>,
    pub v_at_z0: Vec<f64>,
    /// `‖v_x(t)‖∞`, the scale for the stationarity residual.
    pub sup_v_x: Vec<f64>,
    /// Fraction of `L²` energy in the upper half of the retained band.
    pub tail_energy: Vec<f64>,
    /// First time `tail_energy` exceeded the tracker's tolerance.
    pub unresolved_from: Option<f64>,
}

impl CharacteristicTrack {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Largest `|v_x(φ)| / ‖v_x‖∞` over the resolved part of the track.
    pub fn worst_stationarity(&self) -> f64 {
        self.resolved_indices()
            .map(|i| if self.sup_v_x[i] > 0.0 { self.v_x_at_z0[i] / self.sup_v_x[i] } else { 0.0 })
            .fold(0.0, f64::max)
    }

    /// Largest `|v(φ(t)) − v(φ(0))|` over the resolved part of the track.
    pub fn worst_value_drift(&self) -> f64 {
        let Some(&v0) = self.v_at_z0.first() else {
            return 0.0;
        };
        self.resolved_indices()
            .map(|i| (self.v_at_z0[i] - v0).abs())
            .fold(0.0, f64::max)
    }

    fn resolved_indices(&self) -> impl Iterator<Item = usize> + '_ {
        let limit = self.unresolved_from.unwrap_or(f64::INFINITY);
        (0..self.len()).filter(move |&i| self.times[i] < limit)
    }
}

/// Online integrator of `dφ/dt = β(t)·Hv(t, φ)`.
///
/// Between two observed states the velocity field is interpolated linearly
/// in time and the trajectory advanced by one classical RK4 step; `Hv` is
/// evaluated off the grid by direct Fourier summation.
pub struct CharacteristicTracker {
    resolution_tol: f64,
    phi: f64,
    prev: Option<(f64, Field, f64)>,
    track: CharacteristicTrack,
}

impl CharacteristicTracker {
    /// `resolution_tol` bounds the energy fraction between half the
    /// dealiasing cutoff and the cutoff before the track is flagged.
    pub fn new(resolution_tol: f64) -> Self {
        CharacteristicTracker {
            resolution_tol,
            phi: 0.0,
            prev: None,
            track: CharacteristicTrack::default(),
        }
    }

    pub fn observe(&mut self, t: f64, v: &Field, beta: f64) {
        let l = v.grid().period();
        match self.prev.take() {
            None => self.phi = refine_max(v),
            Some((t0, v0, b0)) => {
                let h = t - t0;
                let vel = |x: f64, theta: f64| {
                    let a = if theta < 1.0 { (1.0 - theta) * b0 * v0.eval_symbol(x, hilbert_symbol) } else { 0.0 };
                    let b = if theta > 0.0 { theta * beta * v.eval_symbol(x, hilbert_symbol) } else { 0.0 };
                    a + b
                };
                let p = self.phi;
                let k1 = vel(p, 0.0);
                let k2 = vel(p + 0.5 * h * k1, 0.5);
                let k3 = vel(p + 0.5 * h * k2, 0.5);
                let k4 = vel(p + h * k3, 1.0);
                self.phi = (p + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)).rem_euclid(l);
            }
        }
        let x = self.phi;
        let tr = &mut self.track;
        tr.times.push(t);
        tr.z0.push(x);
        tr.f.push(v.eval_symbol(x, lambda_symbol));
        tr.beta.push(beta);
        tr.v_x_at_z0.push(v.eval_symbol(x, dx_symbol).abs());
        tr.v_at_z0.push(v.eval(x));
        tr.sup_v_x.push(derivative(v).max_abs());
        let tail = relative_energy_above(v, v.grid().dealias_cutoff() / 2);
        tr.tail_energy.push(tail);
        if tr.unresolved_from.is_none() && tail > self.resolution_tol {
            tr.unresolved_from = Some(t);
        }
        self.prev = Some((t, v.clone(), beta));
    }

    pub fn finish(self) -> CharacteristicTrack {
        self.track
    }
}

/// Tracks the characteristic along a stored trajectory `(t, v)` with the
/// matching `β` values.
pub fn track_trajectory(trajectory: &[(f64, Field)], beta: &[f64], resolution_tol: f64) -> Result<CharacteristicTrack> {
    if trajectory.len() != beta.len() {
        return Err(Error::InvalidParameter("one β value per trajectory state is required".into()));
    }
    let mut tracker = CharacteristicTracker::new(resolution_tol);
    for ((t, v), b) in trajectory.iter().zip(beta) {
        tracker.observe(*t, v, *b);
    }
    Ok(tracker.finish())
}

/// Solves for `v` (the random transport equation under linear noise, or the
/// deterministic equation without noise) and tracks the characteristic
/// from the maximum of `u₀` at every nominal step.
pub fn track_max_characteristic(cfg: &SimConfig, u0: &Field, resolution_tol: f64) -> Result<(PathRecord, CharacteristicTrack)> {
    let mut cfg = cfg.clone();
    match cfg.noise {
        NoiseModel::LinearB { .. } => cfg.random_pde = true,
        NoiseModel::Zero => {}
        _ => {
            return Err(Error::InvalidParameter(
                "characteristic tracking needs linear or zero noise".into(),
            ))
        }
    }
    let mut tracker = CharacteristicTracker::new(resolution_tol);
    let record = simulate_path_observed(&cfg, u0, |t, v, b| tracker.observe(t, v, b))?;
    Ok((record, tracker.finish()))
}

/// Result of checking `dF/dt ≥ ½βF²` along a track.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiccatiOutcome {
    /// Minimum over checked steps of
    /// `((F(t+dt)−F(t))/dt − ½β(t)F(t)²) / F(t)²`.
    pub worst: f64,
    pub steps_checked: usize,
    pub pass: bool,
}

/// Checks the forward-difference Riccati inequality on every step with
/// `F > 0`, `β > 0` that ends no later than `until`.
pub fn riccati_check(track: &CharacteristicTrack, tol: f64, until: f64) -> RiccatiOutcome {
    let mut worst = f64::INFINITY;
    let mut steps = 0;
    for i in 0..track.len().saturating_sub(1) {
        let (t0, t1) = (track.times[i], track.times[i + 1]);
        let (f0, f1) = (track.f[i], track.f[i + 1]);
        if t1 > until || !(f0 > 0.0) || !(track.beta[i] > 0.0) || t1 <= t0 {
            continue;
        }
        let r = ((f1 - f0) / (t1 - t0) - 0.5 * track.beta[i] * f0 * f0) / (f0 * f0);
        worst = worst.min(r);
        steps += 1;
    }
    if steps == 0 {
        worst = 0.0;
    }
    RiccatiOutcome {
        worst,
        steps_checked: steps,
        pass: worst >= -tol,
    }
}

/// Monte Carlo estimate of `P{∫₀^t b dW > ln K for all t ≥ 0}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityBound {
    pub estimate: Proportion,
    /// `1 − 2Φ(ln K / σ)`, `σ² = ∫₀^∞ b²`.
    pub oracle: f64,
    /// Monitoring horizon of the simulated part.
    pub t_mc: f64,
    /// `∫_{T_mc}^∞ b²`, handled analytically.
    pub tail_variance: f64,
}

/// First-passage probability of the time-changed Brownian motion
/// `∫b dW` through `ln K`, by the reflection principle.
pub fn reflection_oracle(b: &TimeProfile, threshold_k: f64) -> Result<f64> {
    let total = square_integral(b)?;
    if total == 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 - 2.0 * normal_cdf(libm::log(threshold_k) / libm::sqrt(total)))
}

fn square_integral(b: &TimeProfile) -> Result<f64> {
    b.total_square_integral().ok_or_else(|| {
        Error::InvalidParameter(String::from(
            "b is not square integrable on [0, ∞): the all-time event has probability 0",
        ))
    })
}

fn monitoring_horizon(b: &TimeProfile) -> f64 {
    match *b {
        TimeProfile::Exponential { rate, .. } if rate > 0.0 => 10.0 / rate,
        _ => 0.0,
    }
}

/// Simulates `X = ∫b dW` exactly at the nodes of a `dt` grid up to
/// `T_mc = 10/λ` and accounts for excursions between nodes with the
/// Brownian-bridge crossing probability `exp(−2(X_i−ℓ)(X_{i+1}−ℓ)/v_i)`,
/// `v_i = ∫ b²` over the step, and for the tail after `T_mc` with the
/// reflection principle. Each path then survives with one Bernoulli draw,
/// so the frequency is unbiased for the continuous-time probability.
pub fn blowup_probability_bound(
    b: &TimeProfile,
    threshold_k: f64,
    num_paths: u64,
    dt: f64,
    seed: u64,
) -> Result<ProbabilityBound> {
    if !(threshold_k > 0.0 && threshold_k < 1.0) {
        return Err(Error::InvalidParameter(format!("K = {threshold_k} must lie in (0, 1)")));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter("dt must be positive".into()));
    }
    let total = square_integral(b)?;
    let oracle = reflection_oracle(b, threshold_k)?;
    let level = libm::log(threshold_k);
    if total == 0.0 {
        return Ok(ProbabilityBound {
            estimate: wilson(num_paths, num_paths, 1.96),
            oracle,
            t_mc: 0.0,
            tail_variance: 0.0,
        });
    }
    let t_mc = monitoring_horizon(b);
    let steps = libm::ceil(t_mc / dt - 1e-9) as usize;
    let variances: Vec<f64> = (0..steps)
        .map(|i| b.integral_of_square(i as f64 * dt, ((i + 1) as f64 * dt).min(t_mc)))
        .collect();
    let tail_variance = (total - b.integral_of_square(0.0, t_mc)).max(0.0);
    let tail_sd = libm::sqrt(tail_variance);
    let sds: Vec<f64> = variances.iter().map(|v| libm::sqrt(*v)).collect();
    let mut survived = 0u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for path in 0..num_paths {
        rng.set_stream(path);
        rng.set_word_pos(0);
        let mut x = 0.0f64;
        let mut keep = 1.0f64;
        let mut alive = true;
        for (v, sd) in variances.iter().zip(&sds) {
            let z: f64 = rng.sample(StandardNormal);
            let next = x + sd * z;
            if next <= level {
                alive = false;
                break;
            }
            keep *= 1.0 - libm::exp(-2.0 * (x - level) * (next - level) / v);
            x = next;
        }
        if alive && tail_sd > 0.0 {
            keep *= 1.0 - 2.0 * normal_cdf((level - x) / tail_sd);
        }
        let u: f64 = rng.random();
        if alive && u < keep {
            survived += 1;
        }
    }
    Ok(ProbabilityBound {
        estimate: wilson(survived, num_paths, 1.96),
        oracle,
        t_mc,
        tail_variance,
    })
}

/// Outcome of a linear-noise blow-up ensemble.
#[derive(Debug, Clone)]
pub struct BlowupEnsemble {
    pub records: Vec<PathRecord>,
    pub blown_up: u64,
    /// Paths that diverged or exited without being flagged; excluded from
    /// the fraction.
    pub unresolved: u64,
    pub fraction: Proportion,
    pub initial_lambda_max: f64,
}

impl BlowupEnsemble {
    /// `fraction ≥ bound − 2·(half-width of the fraction's Wilson interval)`.
    pub fn meets(&self, bound: f64) -> bool {
        self.fraction.estimate >= bound - 2.0 * self.fraction.half_width()
    }
}

/// Runs `num_paths` paths of the stochastic equation with noise `b(t)u`,
/// seeding path `i` with `cfg.seed ^ i`. The initial field must satisfy
/// `Λu₀(x₀) > b*/K` at its global maximum `x₀`.
pub fn blowup_ensemble<R: PathRunner>(
    cfg: &SimConfig,
    spec: &GirsanovSpec,
    u0: &Field,
    num_paths: usize,
    runner: &R,
) -> Result<BlowupEnsemble> {
    spec.validate()?;
    let x0 = refine_max(u0);
    let f0 = u0.eval_symbol(x0, lambda_symbol);
    if !(f0 > spec.initial_threshold()) {
        return Err(Error::InvalidParameter(format!(
            "Λu₀(x₀) = {f0} must exceed b*/K = {}",
            spec.initial_threshold()
        )));
    }
    let mut base = cfg.clone();
    base.noise = spec.noise();
    base.horizon = spec.horizon;
    base.random_pde = false;
    base.validate()?;
    let records = runner.map(num_paths, |i| {
        let mut c = base.clone();
        c.seed = path_seed(base.seed, i);
        simulate_path(&c, u0)
    });
    let records = records.into_iter().collect::<Result<Vec<_>>>()?;
    let blown_up = records.iter().filter(|r| r.status.blew_up()).count() as u64;
    let unresolved = records
        .iter()
        .filter(|r| matches!(r.status, PathStatus::Diverged { .. } | PathStatus::Exited { .. }))
        .count() as u64;
    let resolved = records.len() as u64 - unresolved;
    Ok(BlowupEnsemble {
        records,
        blown_up,
        unresolved,
        fraction: wilson(blown_up, resolved, 1.96),
        initial_lambda_max: f0,
    })
}

//! Approximate solutions `u_{m,n} = u_h + u_l` built from a modulated
//! high-frequency packet and a slowly moving low-frequency background, the
//! residual they leave in the equation, and the experiments that measure
//! how far the stochastic solutions started from them drift apart.
//!
//! Everything lives on a torus of period `L = 2π·2^j ≥ 8n^δ`, so the
//! carrier frequency `n` is an exact Fourier mode. The envelopes are
//! resolved on a coarse grid and shifted to the carrier in coefficient
//! space; only products involving two packets need the fine grid.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::brownian::BrownianTree;
use crate::error::{Error, Result};
use crate::exec::{path_seed, PathRunner};
use crate::identities::modulated_norm;
use crate::integrator::{solve_deterministic, PathRecord, PathStepper, SimConfig};
use crate::noise::{damping_factor, gradient_forcing, NoiseModel};
use crate::spectral::{derivative, hilbert, product, Field, NormWeights, SpectralGrid};
use crate::stats::mean_and_sd;

/// Parameters of one approximate solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstabilityParams {
    pub m: i32,
    pub n: u64,
    pub delta: f64,
    pub s: f64,
    pub sigma0: f64,
    /// Exit radius for `‖u^{m,n}‖_{H^s}`.
    pub r0: f64,
}

impl InstabilityParams {
    /// `δ = 0.9`, `s = 3.1`, `σ₀ = 1.6`, `R₀ = 10`.
    pub fn new(m: i32, n: u64) -> Result<Self> {
        let p = InstabilityParams {
            m,
            n,
            delta: 0.9,
            s: 3.1,
            sigma0: 1.6,
            r0: 10.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: alloc::string::String| Err(Error::InvalidParameter(m));
        if self.m != 1 && self.m != -1 {
            return bad(alloc::format!("m = {} must be ±1", self.m));
        }
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if !(self.delta > 0.75 && self.delta < 1.0) {
            return bad(alloc::format!("δ = {} must lie in (3/4, 1)", self.delta));
        }
        if !(self.s > 3.0) {
            return bad(alloc::format!("s = {} must exceed 3", self.s));
        }
        if !(self.sigma0 > 1.5 && self.sigma0 < 1.75) {
            return bad(alloc::format!("σ₀ = {} must lie in (3/2, 7/4)", self.sigma0));
        }
        if !(self.r0 > 0.0) {
            return bad("R₀ must be positive".into());
        }
        if !(self.r_s() < 0.0 && self.r_prime_s() < 0.0) {
            return bad(alloc::format!(
                "rate exponents must be negative (r_s = {}, r'_s = {})",
                self.r_s(),
                self.r_prime_s()
            ));
        }
        Ok(())
    }

    /// `r_s = −s − 1 + σ₀ + δ`.
    pub fn r_s(&self) -> f64 {
        -self.s - 1.0 + self.sigma0 + self.delta
    }

    /// `r′_s = (δ − 1)/2`.
    pub fn r_prime_s(&self) -> f64 {
        0.5 * (self.delta - 1.0)
    }

    /// `n^δ`, the envelope length scale.
    pub fn scale(&self) -> f64 {
        libm::pow(self.n as f64, self.delta)
    }

    pub fn with_m(&self, m: i32) -> Self {
        InstabilityParams { m, ..*self }
    }

    pub fn with_n(&self, n: u64) -> Self {
        InstabilityParams { n, ..*self }
    }
}

/// Smooth monotone step from 0 at `τ ≤ 0` to 1 at `τ ≥ 1`, with
/// `S(τ) + S(1−τ) = 1`.
pub fn smooth_step(tau: f64) -> f64 {
    if tau <= 0.0 {
        0.0
    } else if tau >= 1.0 {
        1.0
    } else {
        let a = libm::exp(-1.0 / tau);
        let b = libm::exp(-1.0 / (1.0 - tau));
        a / (a + b)
    }
}

/// `φ`: 1 on `|x| ≤ 1`, 0 on `|x| ≥ 2`, smooth in between.
pub fn bump_phi(x: f64) -> f64 {
    1.0 - smooth_step(x.abs() - 1.0)
}

/// Depth of the negative shoulder of `φ̃`; the value that makes its
/// integral vanish.
pub const PHI_TILDE_SHOULDER: f64 = 2.25;

/// `φ̃`: 1 on `|x| ≤ 2` (so on `supp φ`), a shoulder at `−2.25` on
/// `2.5 ≤ |x| ≤ 3`, 0 on `|x| ≥ 3.5`. The shoulder makes `∫φ̃ = 0`, hence
/// `H H φ̃ = −φ̃` holds exactly on the torus.
pub fn bump_phi_tilde(x: f64) -> f64 {
    let a = x.abs();
    let d = PHI_TILDE_SHOULDER;
    if a <= 2.0 {
        1.0
    } else if a < 2.5 {
        1.0 - (1.0 + d) * smooth_step(2.0 * (a - 2.0))
    } else if a <= 3.0 {
        -d
    } else {
        -d * (1.0 - smooth_step(2.0 * (a - 3.0)))
    }
}

/// `‖ψ‖_{L²}` of a profile supported in `[−radius, radius]` by composite
/// Simpson quadrature.
pub fn profile_l2_norm(profile: impl Fn(f64) -> f64, radius: f64) -> f64 {
    let m = 20_000usize;
    let h = 2.0 * radius / m as f64;
    let mut acc = 0.0;
    for i in 0..=m {
        let x = -radius + i as f64 * h;
        let w = if i == 0 || i == m {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let v = profile(x);
        acc += w * v * v;
    }
    libm::sqrt(acc * h / 3.0)
}

fn next_pow2(x: f64) -> usize {
    let mut n = 1usize;
    while (n as f64) < x {
        n <<= 1;
    }
    n
}

/// The coupled grids of one `n`: a fine grid resolving the carrier and a
/// coarse grid for envelopes and the low-frequency part.
#[derive(Debug, Clone)]
pub struct InstabilityGrids {
    pub fine: Arc<SpectralGrid>,
    pub coarse: Arc<SpectralGrid>,
    /// Mode index of the carrier on both grids, `n·L/2π`.
    pub carrier_mode: u64,
    pub scale: f64,
}

/// Smallest `L = 2π·2^j` with `L ≥ width·n^δ`, with fine-grid size chosen
/// for at least 8 points per carrier wavelength and the coarse size for
/// 256 points per envelope unit.
pub fn instability_grids(p: &InstabilityParams) -> Result<InstabilityGrids> {
    p.validate()?;
    grids_for(p.n, p.scale(), 8.0, true)
}

fn grids_for(n: u64, scale: f64, width: f64, with_fine: bool) -> Result<InstabilityGrids> {
    let mut j = 0u32;
    while 2.0 * PI * libm::exp2(j as f64) < width * scale {
        j += 1;
    }
    let period = 2.0 * PI * libm::exp2(j as f64);
    let carrier_mode = n << j;
    let coarse_n = next_pow2(256.0 * period / scale).max(256);
    let coarse = SpectralGrid::new(coarse_n, period)?;
    let fine = if with_fine {
        let fine_n = next_pow2(8.0 * carrier_mode as f64).max(2 * coarse_n);
        SpectralGrid::new(fine_n, period)?
    } else {
        coarse.clone()
    };
    Ok(InstabilityGrids {
        fine,
        coarse,
        carrier_mode,
        scale,
    })
}

impl InstabilityGrids {
    /// `ψ(x/n^δ)` on the coarse grid, centred at `L/2`.
    pub fn envelope(&self, profile: impl Fn(f64) -> f64) -> Field {
        let sc = self.scale;
        Field::from_centered_fn(&self.coarse, |x| profile(x / sc))
    }

    /// Phase of `cos(n(x − L/2) − mt)` written as `cos(n x + θ)`.
    fn carrier_phase(&self, m: i32, t: f64) -> f64 {
        // n·L/2 = π·carrier_mode; only its parity matters.
        let parity = (self.carrier_mode % 2) as f64;
        -PI * parity - m as f64 * t
    }

    /// `env(x)·cos(ξ_M x + θ)` on the fine grid.
    pub fn modulate(&self, env: &Field, theta: f64) -> Field {
        modulate(env, &self.fine, self.carrier_mode, theta)
    }

    /// Zero-pads a coarse field onto the fine grid.
    pub fn embed(&self, f: &Field) -> Field {
        embed(f, &self.fine)
    }
}

/// Full-spectrum coefficient of a real field at signed index `j`, with the
/// Nyquist cosine split evenly between `±N/2`.
fn signed_coeff(f: &Field, j: i64) -> Complex64 {
    let half = (f.grid().len() / 2) as i64;
    let c = f.coefficients();
    if j.abs() > half {
        Complex64::new(0.0, 0.0)
    } else if j == half || j == -half {
        c[half as usize] * 0.5
    } else if j >= 0 {
        c[j as usize]
    } else {
        c[(-j) as usize].conj()
    }
}

fn embed(f: &Field, fine: &Arc<SpectralGrid>) -> Field {
    let mut coeffs = vec![Complex64::new(0.0, 0.0); fine.modes()];
    let half = (f.grid().len() / 2) as i64;
    for (k, c) in coeffs.iter_mut().enumerate().take((half as usize + 1).min(fine.modes())) {
        *c = signed_coeff(f, k as i64);
    }
    Field::from_coefficients(fine, coeffs).expect("mode count matches")
}

fn modulate(env: &Field, fine: &Arc<SpectralGrid>, carrier: u64, theta: f64) -> Field {
    let half = (env.grid().len() / 2) as i64;
    let m = carrier as i64;
    let up = Complex64::new(libm::cos(theta), libm::sin(theta)) * 0.5;
    let down = up.conj();
    let mut coeffs = vec![Complex64::new(0.0, 0.0); fine.modes()];
    let top = fine.modes() as i64 - 1;
    let lo = (m - half).max(0);
    let hi = (m + half).min(top);
    for k in lo..=hi {
        coeffs[k as usize] += up * signed_coeff(env, k - m);
    }
    // The mirrored copy reaches nonnegative modes only for carriers
    // inside the envelope band.
    for k in 0..=(half - m).min(top) {
        coeffs[k as usize] += down * signed_coeff(env, k + m);
    }
    Field::from_coefficients(fine, coeffs).expect("mode count matches")
}

/// `u_h(t) = n^{−δ/2−s} φ(x/n^δ) cos(nx − mt)` on the fine grid.
pub fn build_high_frequency(p: &InstabilityParams, grids: &InstabilityGrids, t: f64) -> Field {
    let amp = libm::pow(p.n as f64, -0.5 * p.delta - p.s);
    let env = grids.envelope(bump_phi).scale(amp);
    grids.modulate(&env, grids.carrier_phase(p.m, t))
}

/// `u_l(0) = −H(m n^{-1} φ̃(x/n^δ))` on the coarse grid.
pub fn build_low_initial(p: &InstabilityParams, grids: &InstabilityGrids) -> Field {
    let g = grids.envelope(bump_phi_tilde).scale(p.m as f64 / p.n as f64);
    hilbert(&g).scale(-1.0)
}

/// The deterministic low-frequency solution on the coarse grid, stored at
/// uniform times.
#[derive(Debug, Clone)]
pub struct LowTrajectory {
    pub dt: f64,
    pub states: Vec<Field>,
}

impl LowTrajectory {
    pub fn horizon(&self) -> f64 {
        self.dt * (self.states.len() - 1) as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.states.len()).map(|i| i as f64 * self.dt).collect()
    }

    /// State at `t`, exact at stored times and linear in between.
    pub fn at(&self, t: f64) -> Field {
        let x = (t / self.dt).max(0.0);
        let i = libm::floor(x + 1e-9) as usize;
        if i + 1 >= self.states.len() {
            return self.states[self.states.len() - 1].clone();
        }
        let w = x - i as f64;
        if w <= 1e-9 {
            return self.states[i].clone();
        }
        self.states[i].scale(1.0 - w).axpy(w, &self.states[i + 1])
    }
}

/// RK4 solve of `∂t u_l + (Hu_l)∂x u_l = 0` with `dt` and recording every
/// step up to `horizon`.
pub fn low_trajectory(p: &InstabilityParams, grids: &InstabilityGrids, horizon: f64, dt: f64) -> Result<LowTrajectory> {
    let u0 = build_low_initial(p, grids);
    let steps = libm::round(horizon / dt) as usize;
    if steps == 0 || libm::fabs(steps as f64 * dt - horizon) > 1e-9 * horizon {
        return Err(Error::InvalidParameter("horizon must be a whole number of low-frequency steps".into()));
    }
    let traj = solve_deterministic(&u0, dt, horizon, 1)?;
    Ok(LowTrajectory {
        dt,
        states: traj.into_iter().map(|(_, f)| f).collect(),
    })
}

/// `u_{m,n}(t) = u_h(t) + u_l(t)` on the fine grid.
pub fn approx_solution(p: &InstabilityParams, grids: &InstabilityGrids, t: f64, low: &LowTrajectory) -> Field {
    build_high_frequency(p, grids, t).add(&grids.embed(&low.at(t)))
}

/// The residual integrand
/// `E = [(Hu_l)(0) − (Hu_l)(t)] n^{1−δ/2−s} φ(x/n^δ) sin(nx−mt)
///    + (Hu_l)(t) n^{−3δ/2−s} φ′(x/n^δ) cos(nx−mt) + (Hu_h)(∂x u_l + ∂x u_h)`.
pub fn error_integrand_e(p: &InstabilityParams, grids: &InstabilityGrids, t: f64, low: &LowTrajectory) -> Field {
    let n = p.n as f64;
    let phi = grids.envelope(bump_phi);
    // φ′(x/n^δ) = n^δ ∂x[φ(x/n^δ)].
    let dphi = derivative(&phi).scale(grids.scale);
    let ul = low.at(t);
    let hul = hilbert(&ul);
    let hul0 = hilbert(&low.states[0]);
    let theta = grids.carrier_phase(p.m, t);
    let a1 = libm::pow(n, 1.0 - 0.5 * p.delta - p.s);
    let a2 = libm::pow(n, -1.5 * p.delta - p.s);
    let t1 = grids.modulate(&product(&hul0.sub(&hul), &phi).scale(a1), theta - 0.5 * PI);
    let t2 = grids.modulate(&product(&hul, &dphi).scale(a2), theta);
    let uh = build_high_frequency(p, grids, t);
    let slope = derivative(&grids.embed(&ul).add(&uh));
    let t3 = product(&hilbert(&uh), &slope);
    t1.add(&t2).add(&t3)
}

/// The coefficient field `g` and the per-component weights `c_j` of a noise
/// whose components are all multiples of one field, so that
/// `h(t,u)·ΔW = g·Σ c_j ΔW_j`. `None` when `g` vanishes identically.
fn collinear_noise(noise: &NoiseModel, t: f64, u: &Field) -> Result<Option<(Field, Vec<f64>)>> {
    match *noise {
        NoiseModel::Zero => Ok(None),
        NoiseModel::InstabilityH {
            q,
            power_k,
            power_n,
            sigma0,
            wiener,
        } => {
            let damp = damping_factor(crate::spectral::sobolev_norm(u, sigma0));
            let qt = q.eval(t);
            if damp == 0.0 || qt == 0.0 {
                return Ok(None);
            }
            Ok(Some((gradient_forcing(u, power_k, power_n).scale(qt * damp), wiener.coefficients())))
        }
        _ => Err(Error::InvalidParameter(
            "the error functional takes the instability noise or no noise".into(),
        )),
    }
}

/// Monte Carlo estimate of `E sup_{t≤T} ‖𝔈(t)‖²_{H^{σ₀}}` with
/// `𝔈(t) = ∫₀ᵗ E − ∫₀ᵗ h(t′, u_{m,n}) d𝕎`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorFunctional {
    pub n: u64,
    pub times: Vec<f64>,
    /// `‖E(t)‖_{H^{σ₀}}` at each time.
    pub integrand_norm: Vec<f64>,
    /// `sup_t ‖∫₀ᵗ E‖²_{H^{σ₀}}`, the noise-free part.
    pub drift_sup_sq: f64,
    /// `sup_t ‖𝔈(t)‖²_{H^{σ₀}}` per path.
    pub per_path: Vec<f64>,
    pub mean: f64,
    pub std_err: f64,
}

/// The time integral uses the trapezoid rule on the stored low-frequency
/// times; the stochastic integral is the left-point (Itô) sum with the
/// noise evaluated along the deterministic `u_{m,n}`.
pub fn error_functional_ensemble(
    p: &InstabilityParams,
    grids: &InstabilityGrids,
    low: &LowTrajectory,
    noise: &NoiseModel,
    num_paths: usize,
    seed: u64,
) -> Result<ErrorFunctional> {
    if num_paths == 0 {
        return Err(Error::InvalidParameter("num_paths must be ≥ 1".into()));
    }
    noise.validate(low.horizon(), None)?;
    let w = NormWeights::new(&grids.fine, p.sigma0);
    let dt = low.dt;
    let times = low.times();
    let trees: Vec<BrownianTree> = (0..num_paths)
        .map(|i| BrownianTree::new(path_seed(seed, i), dt, noise.components()))
        .collect();
    let mut integral = Field::zeros(&grids.fine);
    let mut stochastic: Vec<Option<Field>> = vec![None; num_paths];
    let mut per_path = vec![0.0f64; num_paths];
    let mut drift_sup_sq = 0.0f64;
    let mut integrand_norm = Vec::with_capacity(times.len());
    let mut prev_e: Option<Field> = None;
    for (k, &t) in times.iter().enumerate() {
        let e = error_integrand_e(p, grids, t, low);
        integrand_norm.push(w.norm(&e));
        if let Some(pe) = prev_e.take() {
            integral = integral.axpy(0.5 * dt, &pe).axpy(0.5 * dt, &e);
            let d = w.norm_sq(&integral);
            drift_sup_sq = drift_sup_sq.max(d);
            for (i, acc) in stochastic.iter().enumerate() {
                let v = match acc {
                    Some(s) => {
                        let dist = w.distance(&integral, s);
                        dist * dist
                    }
                    None => d,
                };
                per_path[i] = per_path[i].max(v);
            }
        }
        prev_e = Some(e);
        // Noise increment over [t_k, t_{k+1}] evaluated at t_k.
        if k + 1 < times.len() {
            let u = approx_solution(p, grids, t, low);
            if let Some((g, coeffs)) = collinear_noise(noise, t, &u)? {
                for (i, acc) in stochastic.iter_mut().enumerate() {
                    let dw = trees[i].increment(0, k as u64);
                    let scalar: f64 = coeffs.iter().zip(&dw).map(|(c, d)| c * d).sum();
                    *acc = Some(match acc.take() {
                        Some(s) => s.axpy(scalar, &g),
                        None => g.scale(scalar),
                    });
                }
            }
        }
    }
    let (mean, sd) = mean_and_sd(&per_path);
    Ok(ErrorFunctional {
        n: p.n,
        times,
        integrand_norm,
        drift_sup_sq,
        per_path,
        mean,
        std_err: sd / libm::sqrt(num_paths as f64),
    })
}

/// Ensemble estimates of the gap between the stochastic solution started at
/// `u_{m,n}(0)` and the approximate solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapEstimate {
    pub n: u64,
    /// `E sup ‖u_{m,n} − u^{m,n}‖²_{H^{σ₀}}`
    pub sigma0_sq: f64,
    /// `E sup ‖u_{m,n} − u^{m,n}‖²_{H^{2s−σ₀}}`
    pub high_sq: f64,
    /// `E sup ‖u_{m,n} − u^{m,n}‖_{H^s}`
    pub hs: f64,
    /// Per path `[sup σ₀², sup high², sup H^s]`.
    pub per_path: Vec<[f64; 3]>,
    pub records: Vec<PathRecord>,
}

impl GapEstimate {
    /// `(E sup‖·‖²_{σ₀})^{1/4} (E sup‖·‖²_{2s−σ₀})^{1/4}`.
    pub fn interpolation_bound(&self) -> f64 {
        libm::pow(self.sigma0_sq, 0.25) * libm::pow(self.high_sq, 0.25)
    }

    /// The `H^s` gap never exceeds the interpolation bound (up to rounding).
    pub fn interpolation_holds(&self) -> bool {
        self.hs <= self.interpolation_bound() * (1.0 + 1e-10) + 1e-300
    }
}

fn instability_config(p: &InstabilityParams, grids: &InstabilityGrids, cfg: &SimConfig) -> Result<SimConfig> {
    if !cfg.grid.same_as(&grids.fine) {
        return Err(Error::GridMismatch);
    }
    let mut c = cfg.clone();
    c.exit_radius = Some(p.r0);
    c.s = crate::spectral::SobolevIndex::for_evolution(p.s)?;
    Ok(c)
}

/// Runs `num_paths` paths of the equation from `u_{m,n}(0)` with `cfg`
/// (whose grid must be `grids.fine`), stopping at the horizon or when
/// `‖u‖_{H^s}` first exceeds `R₀`. The approximate solution is compared at
/// every nominal step.
pub fn actual_vs_approx_gap<R: PathRunner>(
    p: &InstabilityParams,
    grids: &InstabilityGrids,
    low: &LowTrajectory,
    cfg: &SimConfig,
    num_paths: usize,
    runner: &R,
) -> Result<GapEstimate> {
    if num_paths == 0 {
        return Err(Error::InvalidParameter("num_paths must be ≥ 1".into()));
    }
    let base = instability_config(p, grids, cfg)?;
    if base.horizon > low.horizon() * (1.0 + 1e-12) {
        return Err(Error::InvalidParameter("the low-frequency trajectory is shorter than the horizon".into()));
    }
    let u0 = approx_solution(p, grids, 0.0, low);
    let w_lo = NormWeights::new(&grids.fine, p.sigma0);
    let w_hi = NormWeights::new(&grids.fine, 2.0 * p.s - p.sigma0);
    let w_s = NormWeights::new(&grids.fine, p.s);
    let results = runner.map(num_paths, |i| -> Result<([f64; 3], PathRecord)> {
        let mut c = base.clone();
        c.seed = path_seed(cfg.seed, i);
        let mut sup = [0.0f64; 3];
        let rec = crate::integrator::simulate_path_observed(&c, &u0, |t, u, _| {
            let diff = approx_solution(p, grids, t, low).sub(u);
            sup[0] = sup[0].max(w_lo.norm_sq(&diff));
            sup[1] = sup[1].max(w_hi.norm_sq(&diff));
            sup[2] = sup[2].max(w_s.norm(&diff));
        })?;
        Ok((sup, rec))
    });
    let mut per_path = Vec::with_capacity(num_paths);
    let mut records = Vec::with_capacity(num_paths);
    for r in results {
        let (sup, rec) = r?;
        per_path.push(sup);
        records.push(rec);
    }
    let mean = |j: usize| per_path.iter().map(|v: &[f64; 3]| v[j]).sum::<f64>() / num_paths as f64;
    Ok(GapEstimate {
        n: p.n,
        sigma0_sq: mean(0),
        high_sq: mean(1),
        hs: mean(2),
        per_path,
        records,
    })
}

/// Output of the two-solution separation experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationCurve {
    pub n: u64,
    /// `‖u^{m₁,n}(0) − u^{m₂,n}(0)‖_{H^s}`
    pub initial_gap: f64,
    pub times: Vec<f64>,
    /// `E sup_{[0,t]} ‖u^{m₁,n} − u^{m₂,n}‖_{H^s}`
    pub gap: Vec<f64>,
    /// `√2‖φ‖_{L²} sup_{[0,t]} |sin t′|`
    pub reference: Vec<f64>,
    /// `√2‖φ‖_{L²}`, the amplitude of the reference curve.
    pub amplitude: f64,
}

impl SeparationCurve {
    /// Gap and reference at the stored time closest to `t`.
    pub fn at(&self, t: f64) -> (f64, f64) {
        let i = self
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        (self.gap[i], self.reference[i])
    }
}

/// `sup_{[0,t]} |sin t′|`.
pub fn sup_abs_sin(t: f64) -> f64 {
    if t >= 0.5 * PI {
        1.0
    } else {
        libm::sin(t.max(0.0))
    }
}

/// Two solutions with `m₁`, `m₂` and otherwise identical parameters and
/// Brownian paths, compared at every nominal step. Once either path stops
/// the running supremum is frozen.
pub fn separation_experiment<R: PathRunner>(
    pair: (&InstabilityParams, &InstabilityParams),
    cfg: &SimConfig,
    num_paths: usize,
    runner: &R,
) -> Result<SeparationCurve> {
    let (p1, p2) = pair;
    if p1.with_m(p2.m) != *p2 {
        return Err(Error::InvalidParameter("the pair may differ only in m".into()));
    }
    if num_paths == 0 {
        return Err(Error::InvalidParameter("num_paths must be ≥ 1".into()));
    }
    let grids = instability_grids(p1)?;
    let c1 = instability_config(p1, &grids, cfg)?;
    let steps = c1.nominal_steps() as usize;
    // The low-frequency solution needs the nominal times and nothing finer.
    let low1 = low_trajectory(p1, &grids, steps as f64 * c1.dt, c1.dt)?;
    let low2 = low_trajectory(p2, &grids, steps as f64 * c1.dt, c1.dt)?;
    let u1 = approx_solution(p1, &grids, 0.0, &low1);
    let u2 = approx_solution(p2, &grids, 0.0, &low2);
    drop((low1, low2));
    let w_s = NormWeights::new(&grids.fine, p1.s);
    let initial_gap = w_s.distance(&u1, &u2);
    let curves = runner.map(num_paths, |i| -> Result<Vec<f64>> {
        let mut c = c1.clone();
        c.seed = path_seed(cfg.seed, i);
        let mut a = PathStepper::new(&c, u1.clone())?;
        let mut b = PathStepper::new(&c, u2.clone())?;
        let mut sup = initial_gap;
        let mut curve = Vec::with_capacity(steps + 1);
        curve.push(sup);
        let mut live = true;
        for _ in 0..steps {
            if live {
                a.step();
                b.step();
                let ok = |s: Option<crate::integrator::PathStatus>| {
                    s.is_none_or(|s| s == crate::integrator::PathStatus::Completed)
                };
                if a.state().is_finite() && b.state().is_finite() {
                    sup = sup.max(w_s.distance(a.state(), b.state()));
                }
                live = ok(a.status()) && ok(b.status());
            }
            curve.push(sup);
        }
        Ok(curve)
    });
    let mut gap = vec![0.0; steps + 1];
    for c in curves {
        for (g, v) in gap.iter_mut().zip(c?) {
            *g += v / num_paths as f64;
        }
    }
    let amplitude = core::f64::consts::SQRT_2 * profile_l2_norm(bump_phi, 2.0);
    let times: Vec<f64> = (0..=steps).map(|k| k as f64 * c1.dt).collect();
    let reference = times.iter().map(|&t| amplitude * sup_abs_sin(t)).collect();
    Ok(SeparationCurve {
        n: p1.n,
        initial_gap,
        times,
        gap,
        reference,
        amplitude,
    })
}

/// `n^{−δ/2−r} ‖ψ(x/n^δ) cos(nx − α)‖_{H^r} / (‖ψ‖_{L²}/√2)`, which tends to
/// 1 as `n` grows. `radius` bounds the effective support of `ψ`.
pub fn modulated_norm_ratio(
    profile: impl Fn(f64) -> f64,
    radius: f64,
    n: u64,
    delta: f64,
    r: f64,
    alpha: f64,
) -> Result<f64> {
    if n == 0 || !(delta > 0.0) || !(r >= 0.0) || !(radius > 0.0) {
        return Err(Error::InvalidParameter("need n ≥ 1, δ > 0, r ≥ 0 and a positive radius".into()));
    }
    let scale = libm::pow(n as f64, delta);
    let grids = grids_for(n, scale, 2.0 * radius + 1.0, false)?;
    let env = grids.envelope(&profile);
    // Carrier cos(n(x − L/2) − α).
    let theta = grids.carrier_phase(0, 0.0) - alpha;
    let norm = modulated_norm(&env, grids.carrier_mode, -theta, r);
    let limit = profile_l2_norm(&profile, radius) / core::f64::consts::SQRT_2;
    Ok(libm::pow(n as f64, -0.5 * delta - r) * norm / limit)
}

/// `‖u_l(0)‖_{H^r}` for each `n`, computed on the coarse grids only.
pub fn low_initial_norms(p: &InstabilityParams, ns: &[u64], r: f64) -> Result<Vec<(f64, f64)>> {
    ns.iter()
        .map(|&n| {
            let q = p.with_n(n);
            q.validate()?;
            let g = grids_for(n, q.scale(), 8.0, false)?;
            Ok((n as f64, crate::spectral::sobolev_norm(&build_low_initial(&q, &g), r)))
        })
        .collect()
}

/// Largest `T ≤ t_max` on the `dt` lattice such that
/// `‖u_l(t)‖_{H^r} ≤ 2‖u_l(0)‖_{H^r}` on `[0, T]` for every `n` in `ns`,
/// together with the worst observed ratio.
pub fn common_low_horizon(p: &InstabilityParams, ns: &[u64], r: f64, t_max: f64, dt: f64) -> Result<(f64, f64)> {
    let mut horizon = t_max;
    let mut worst: f64 = 0.0;
    for &n in ns {
        let q = p.with_n(n);
        q.validate()?;
        let g = grids_for(n, q.scale(), 8.0, false)?;
        let traj = low_trajectory(&q, &g, t_max, dt)?;
        let n0 = crate::spectral::sobolev_norm(&traj.states[0], r);
        for (i, u) in traj.states.iter().enumerate() {
            let ratio = crate::spectral::sobolev_norm(u, r) / n0;
            if ratio > 2.0 {
                horizon = horizon.min((i.max(1) - 1) as f64 * dt);
                break;
            }
            worst = worst.max(ratio);
        }
    }
    Ok((horizon, worst))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Sequential;
    use crate::noise::{TimeProfile, WienerSpec};
    use crate::spectral::sobolev_norm;
    use crate::stats::rate_fit;

    fn small(m: i32, n: u64) -> InstabilityParams {
        InstabilityParams::new(m, n).unwrap()
    }

    #[test]
    fn rate_exponents() {
        let p = small(1, 64);
        assert!((p.r_s() + 1.6).abs() < 1e-12);
        assert!((p.r_prime_s() + 0.05).abs() < 1e-12);
        assert!(InstabilityParams { delta: 0.7, ..p }.validate().is_err());
        assert!(InstabilityParams { m: 0, ..p }.validate().is_err());
        assert!(InstabilityParams { sigma0: 1.8, ..p }.validate().is_err());
        assert!(InstabilityParams { s: 3.0, ..p }.validate().is_err());
    }

    #[test]
    fn profiles() {
        assert_eq!(bump_phi(0.3), 1.0);
        assert_eq!(bump_phi(-1.0), 1.0);
        assert_eq!(bump_phi(2.0), 0.0);
        assert!((bump_phi(1.5) - 0.5).abs() < 1e-15);
        for i in 0..=400 {
            let x = -2.0 + i as f64 * 0.01;
            if bump_phi(x) != 0.0 {
                assert_eq!(bump_phi_tilde(x), 1.0);
            }
        }
        assert_eq!(bump_phi_tilde(3.5), 0.0);
        // Zero mean by construction of the shoulder depth.
        let h = 1e-4;
        let integral: f64 = (0..80_000).map(|i| bump_phi_tilde(-4.0 + (i as f64 + 0.5) * h) * h).sum();
        assert!(integral.abs() < 1e-8, "{integral}");
        // Gaussian e^{−x²}: ‖ψ‖² = √(π/2).
        let g = profile_l2_norm(|x| libm::exp(-x * x), 8.0);
        assert!((g * g - libm::sqrt(PI / 2.0)).abs() < 1e-12);
    }

    #[test]
    fn grid_sizes() {
        let p = small(1, 64);
        let g = instability_grids(&p).unwrap();
        assert!(g.fine.period() >= 8.0 * p.scale());
        assert!(g.fine.period() / 2.0 < 8.0 * p.scale());
        let xi = g.fine.wavenumber(g.carrier_mode as usize);
        assert!((xi - 64.0).abs() < 1e-9);
        // At least 8 points per carrier wavelength.
        assert!(g.fine.len() as f64 >= 8.0 * g.carrier_mode as f64);
        assert!((g.coarse.period() - g.fine.period()).abs() == 0.0);
    }

    #[test]
    fn high_frequency_packet() {
        let p = small(1, 16);
        let g = instability_grids(&p).unwrap();
        let uh = build_high_frequency(&p, &g, 0.0);
        let l = g.fine.period();
        let amp = libm::pow(16.0, -0.45 - 3.1);
        assert!((uh.eval(0.5 * l) - amp).abs() < 1e-12 * amp);
        // Direct sampling agrees with the coefficient-space modulation.
        let sc = p.scale();
        let t = 0.7;
        let direct = Field::from_centered_fn(&g.fine, |x| amp * bump_phi(x / sc) * libm::cos(16.0 * x - t));
        let built = build_high_frequency(&p, &g, t);
        let err = NormWeights::new(&g.fine, 0.0).distance(&direct, &built);
        assert!(err < 1e-10 * sobolev_norm(&direct, 0.0), "{err}");
        // Mean value bound on the cosine.
        for &dt in &[1e-3, 1e-2, 0.1] {
            let d = build_high_frequency(&p, &g, dt).sub(&uh).max_abs();
            assert!(d <= amp * dt * (1.0 + 1e-9));
        }
    }

    #[test]
    fn low_initial_properties() {
        let p = small(1, 64);
        let g = instability_grids(&p).unwrap();
        let a = build_low_initial(&p, &g);
        let b = build_low_initial(&p.with_m(-1), &g);
        assert!(a.add(&b).max_abs() == 0.0);
        assert_eq!(a.coefficients()[0].norm(), 0.0);
        // H u_l(0) = m n^{-1} φ̃ because φ̃ has zero mean.
        let tilde = g.envelope(bump_phi_tilde).scale(1.0 / 64.0);
        let hu = hilbert(&a);
        assert!(NormWeights::new(&g.coarse, 0.0).distance(&hu, &tilde) < 1e-12 * sobolev_norm(&tilde, 0.0));
    }

    #[test]
    fn approximate_solution_at_zero() {
        let p = small(-1, 16);
        let g = instability_grids(&p).unwrap();
        let low = low_trajectory(&p, &g, 0.5, 0.125).unwrap();
        let u = approx_solution(&p, &g, 0.0, &low);
        let expect = build_high_frequency(&p, &g, 0.0).add(&g.embed(&build_low_initial(&p, &g)));
        assert_eq!(u, expect);
        assert!(low.at(0.25) == low.states[2]);
        assert!(low_trajectory(&p, &g, 0.3, 0.125).is_err());
    }

    #[test]
    fn integrand_is_the_equation_residual() {
        // E must equal ∂t u_{m,n} + (H u_{m,n}) ∂x u_{m,n}; compare with a
        // centred time difference of the approximate solution.
        let p = small(1, 16);
        let g = instability_grids(&p).unwrap();
        let h = 1e-3;
        let low = low_trajectory(&p, &g, 0.4, h).unwrap();
        let t = 0.2;
        let dudt = approx_solution(&p, &g, t + h, &low)
            .sub(&approx_solution(&p, &g, t - h, &low))
            .scale(0.5 / h);
        let u = approx_solution(&p, &g, t, &low);
        let residual = dudt.add(&product(&hilbert(&u), &derivative(&u)));
        let e = error_integrand_e(&p, &g, t, &low);
        let w = NormWeights::new(&g.fine, 1.6);
        let rel = w.distance(&residual, &e) / w.norm(&e);
        assert!(rel < 1e-3, "relative mismatch {rel}");
    }

    #[test]
    fn first_bracket_vanishes_at_zero() {
        let p = small(1, 16);
        let g = instability_grids(&p).unwrap();
        let low = low_trajectory(&p, &g, 0.25, 0.125).unwrap();
        let e0 = error_integrand_e(&p, &g, 0.0, &low);
        let uh = build_high_frequency(&p, &g, 0.0);
        let n = 16.0f64;
        let dphi = derivative(&g.envelope(bump_phi)).scale(p.scale());
        let t2 = g.modulate(
            &product(&hilbert(&low.states[0]), &dphi).scale(libm::pow(n, -1.35 - 3.1)),
            g.carrier_phase(1, 0.0),
        );
        let t3 = product(&hilbert(&uh), &derivative(&g.embed(&low.states[0]).add(&uh)));
        let w = NormWeights::new(&g.fine, 0.0);
        assert!(w.distance(&e0, &t2.add(&t3)) <= 1e-14 * w.norm(&e0));
    }

    #[test]
    fn deterministic_functional_repeatable_and_zero_noise() {
        let p = small(1, 8);
        let g = instability_grids(&p).unwrap();
        let low = low_trajectory(&p, &g, 0.5, 0.125).unwrap();
        let a = error_functional_ensemble(&p, &g, &low, &NoiseModel::Zero, 1, 3).unwrap();
        let b = error_functional_ensemble(&p, &g, &low, &NoiseModel::Zero, 1, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.mean, a.drift_sup_sq);
        assert!(a.mean > 0.0);
        // Independent check of the trapezoid integral at the final time.
        let w = NormWeights::new(&g.fine, 1.6);
        let es: Vec<Field> = low.times().iter().map(|&t| error_integrand_e(&p, &g, t, &low)).collect();
        let mut acc = Field::zeros(&g.fine);
        let mut best: f64 = 0.0;
        for k in 1..es.len() {
            acc = acc.add(&es[k - 1].add(&es[k]).scale(0.0625));
            best = best.max(w.norm_sq(&acc));
        }
        assert!((best - a.drift_sup_sq).abs() <= 1e-12 * best);
    }

    #[test]
    fn noisy_functional_adds_variance() {
        // A strong instability noise at small n: the stochastic integral
        // makes the estimate path dependent and larger on average.
        let p = small(1, 4);
        let g = instability_grids(&p).unwrap();
        let low = low_trajectory(&p, &g, 0.5, 0.125).unwrap();
        let noise = NoiseModel::InstabilityH {
            q: TimeProfile::constant(1e6),
            power_k: 1,
            power_n: 1,
            sigma0: 1.6,
            wiener: WienerSpec::default(),
        };
        let e = error_functional_ensemble(&p, &g, &low, &noise, 16, 9).unwrap();
        assert!(e.per_path.iter().any(|v| *v != e.per_path[0]));
        assert!(e.mean > e.drift_sup_sq);
        let again = error_functional_ensemble(&p, &g, &low, &noise, 16, 9).unwrap();
        assert_eq!(e, again);
        assert!(error_functional_ensemble(&p, &g, &low, &NoiseModel::StrongAlpha { q: TimeProfile::constant(1.0), theta: 1.0 }, 1, 0).is_err());
    }

    #[test]
    fn functional_decays_with_n() {
        let pts: Vec<(f64, f64)> = [8u64, 16, 32]
            .iter()
            .map(|&n| {
                let p = small(1, n);
                let g = instability_grids(&p).unwrap();
                let low = low_trajectory(&p, &g, 0.5, 0.125).unwrap();
                let e = error_functional_ensemble(&p, &g, &low, &NoiseModel::Zero, 1, 0).unwrap();
                (n as f64, e.mean)
            })
            .collect();
        let fit = rate_fit(&pts).unwrap();
        assert!(fit.slope <= 2.0 * small(1, 8).r_s() + 0.3, "slope {}", fit.slope);
    }

    #[test]
    fn gap_interpolation_and_exit_semantics() {
        let p = small(1, 8);
        let g = instability_grids(&p).unwrap();
        let low = low_trajectory(&p, &g, 0.5, 0.125).unwrap();
        let mut cfg = SimConfig::new(g.fine.clone(), p.s, 0.125, 0.5, NoiseModel::Zero).unwrap();
        cfg.adaptive_tolerance = None;
        let est = actual_vs_approx_gap(&p, &g, &low, &cfg, 2, &Sequential).unwrap();
        assert!(est.interpolation_holds());
        assert!(est.sigma0_sq > 0.0 && est.high_sq > est.sigma0_sq);
        for r in &est.records {
            assert_eq!(r.status, crate::integrator::PathStatus::Completed);
        }
        // A radius between the initial and the largest later norm stops the
        // path at the first recorded crossing; one below the start stops it
        // at once.
        let hs: Vec<f64> = est.records[0].rows.iter().map(|r| r.hs).collect();
        let top = hs.iter().cloned().fold(0.0, f64::max);
        assert!(top > hs[0], "{hs:?}");
        let r0 = 0.5 * (hs[0] + top);
        let first = est.records[0].rows.iter().find(|r| r.hs > r0).unwrap().t;
        let est = actual_vs_approx_gap(&InstabilityParams { r0, ..p }, &g, &low, &cfg, 1, &Sequential).unwrap();
        assert_eq!(est.records[0].status, crate::integrator::PathStatus::Exited { t: first });
        let est = actual_vs_approx_gap(&InstabilityParams { r0: 1e-3, ..p }, &g, &low, &cfg, 1, &Sequential).unwrap();
        assert_eq!(est.records[0].status, crate::integrator::PathStatus::Exited { t: 0.0 });
    }

    #[test]
    fn separation_basics() {
        let p = small(1, 8);
        let g = instability_grids(&p).unwrap();
        let mut cfg = SimConfig::new(g.fine.clone(), p.s, PI / 8.0, PI / 2.0, NoiseModel::Zero).unwrap();
        cfg.adaptive_tolerance = None;
        let same = separation_experiment((&p, &p), &cfg, 1, &Sequential).unwrap();
        assert!(same.gap.iter().all(|v| *v == 0.0));
        let q = p.with_m(-1);
        let sep = separation_experiment((&q, &p), &cfg, 1, &Sequential).unwrap();
        assert!(sep.initial_gap > 0.0);
        assert!(sep.gap.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(sep.reference[0], 0.0);
        assert!((sep.reference.last().unwrap() - sep.amplitude).abs() < 1e-12);
        assert!(separation_experiment((&p, &p.with_n(16)), &cfg, 1, &Sequential).is_err());
    }

    #[test]
    fn modulated_ratio_converges() {
        for &r in &[0.0, 1.0, 1.6] {
            let coarse = modulated_norm_ratio(bump_phi, 2.0, 16, 0.9, r, 0.0).unwrap();
            let fine = modulated_norm_ratio(bump_phi, 2.0, 1024, 0.9, r, 0.0).unwrap();
            assert!((fine - 1.0).abs() < 0.05, "r = {r}: {fine}");
            assert!((fine - 1.0).abs() <= (coarse - 1.0).abs() + 1e-12);
        }
        // Sampling the packet directly agrees with the shifted spectrum.
        let p = small(1, 16);
        let g = instability_grids(&p).unwrap();
        let direct = sobolev_norm(&build_high_frequency(&p, &g, 0.0), 1.0);
        let ratio = modulated_norm_ratio(bump_phi, 2.0, 16, 0.9, 1.0, 0.0).unwrap();
        let amp = libm::pow(16.0, -0.45 - 3.1);
        let via = ratio * libm::pow(16.0, 0.45 + 1.0) * profile_l2_norm(bump_phi, 2.0) / core::f64::consts::SQRT_2 * amp;
        assert!((direct - via).abs() < 1e-9 * direct, "{direct} vs {via}");
    }

    #[test]
    fn low_frequency_decay_rate() {
        let p = small(1, 64);
        let ns: Vec<u64> = (6..=10).map(|k| 1u64 << k).collect();
        let pts = low_initial_norms(&p, &ns, p.s).unwrap();
        let fit = rate_fit(&pts).unwrap();
        assert!((fit.slope - (0.5 * p.delta - 1.0)).abs() < 0.05, "slope {}", fit.slope);
        let (t, worst) = common_low_horizon(&p, &ns[..3], p.s, PI / 2.0, PI / 32.0).unwrap();
        assert_eq!(t, PI / 2.0);
        assert!(worst <= 2.0);
    }
}

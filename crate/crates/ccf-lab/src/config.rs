//! Run configuration: one TOML document with the sections `grid`, `sim`,
//! `initial`, `noise` and `study`.
//!
//! Overrides given as `dotted.key=value` are applied to the parsed document,
//! which is then deserialized again, so a misspelled key or a value of the
//! wrong type is rejected before anything runs. The configuration digest is
//! the SHA-256 of the canonical JSON rendering of the resolved tree.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use ccf_core::girsanov::refine_max;
use ccf_core::integrator::{DriftScheme, NoiseScheme, SimConfig};
use ccf_core::noise::NoiseModel;
use ccf_core::spectral::frac_laplacian;
use ccf_core::{Field, SpectralGrid};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LabError, LabResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabConfig {
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub initial: InitialData,
    #[serde(default = "zero_noise")]
    pub noise: NoiseModel,
    #[serde(default)]
    pub study: StudyConfig,
}

fn zero_noise() -> NoiseModel {
    NoiseModel::Zero
}

impl Default for LabConfig {
    fn default() -> Self {
        LabConfig {
            grid: GridConfig::default(),
            sim: SimSection::default(),
            initial: InitialData::default(),
            noise: NoiseModel::Zero,
            study: StudyConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    pub period: f64,
    pub dealias: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            n: 256,
            period: 2.0 * PI,
            dealias: 2.0 / 3.0,
        }
    }
}

impl GridConfig {
    pub fn build(&self) -> LabResult<Arc<SpectralGrid>> {
        Ok(SpectralGrid::with_dealias(self.n, self.period, self.dealias)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub s: f64,
    pub dt: f64,
    pub horizon: f64,
    pub eps_mollify: f64,
    pub cutoff_radius: Option<f64>,
    pub blowup_threshold: f64,
    pub steepness_factor: f64,
    pub drift_scheme: DriftScheme,
    pub noise_scheme: NoiseScheme,
    /// 0 disables step bisection.
    pub adaptive_tolerance: f64,
    pub max_refinement: u32,
    pub record_every: usize,
    /// 0 keeps no snapshots.
    pub snapshot_every: usize,
    pub brownian_dt: Option<f64>,
    pub exit_radius: Option<f64>,
    pub seed: u64,
    pub paths: usize,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            s: 3.5,
            dt: 1e-3,
            horizon: 1.0,
            eps_mollify: 0.0,
            cutoff_radius: None,
            blowup_threshold: 1e3,
            steepness_factor: 8.0,
            drift_scheme: DriftScheme::Rk4,
            noise_scheme: NoiseScheme::EulerMaruyama,
            adaptive_tolerance: 0.1,
            max_refinement: 20,
            record_every: 1,
            snapshot_every: 0,
            brownian_dt: None,
            exit_radius: None,
            seed: 0,
            paths: 1,
        }
    }
}

/// Initial field `u₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
#[derive(Default)]
pub enum InitialData {
    #[default]
    Zero,
    /// `A·exp(−(x−c)²/w²)`; with `lambda_at_max` the amplitude is instead
    /// chosen so that `Λu₀(x₀)` at the maximum `x₀` takes that value.
    Gaussian {
        amplitude: f64,
        center: Option<f64>,
        width: f64,
        lambda_at_max: Option<f64>,
    },
    /// `A·Σ_{k=1}^{count} k^{−decay} cos(kx + c·k²)`.
    Modes {
        amplitude: f64,
        decay: f64,
        count: usize,
        phase_quadratic: f64,
    },
    /// `Σ_k cos[k−1]·cos(kx) + sin[k−1]·sin(kx)`; either list may be absent.
    Fourier {
        #[serde(default)]
        cos: Vec<f64>,
        #[serde(default)]
        sin: Vec<f64>,
    },
}


impl InitialData {
    pub fn build(&self, grid: &Arc<SpectralGrid>) -> LabResult<Field> {
        let f = match self {
            InitialData::Zero => Field::zeros(grid),
            InitialData::Gaussian {
                amplitude,
                center,
                width,
                lambda_at_max,
            } => {
                if !(*width > 0.0) {
                    return Err(LabError::Config("initial.width must be positive".into()));
                }
                let c = center.unwrap_or(0.5 * grid.period());
                let shape = Field::from_fn(grid, |x| (-(x - c) * (x - c) / (width * width)).exp());
                match lambda_at_max {
                    Some(target) => scale_to_lambda(&shape, *target)?,
                    None => shape.scale(*amplitude),
                }
            }
            InitialData::Modes {
                amplitude,
                decay,
                count,
                phase_quadratic,
            } => Field::from_fn(grid, |x| {
                amplitude
                    * (1..=*count)
                        .map(|k| {
                            let k = k as f64;
                            k.powf(-decay) * (k * x + phase_quadratic * k * k).cos()
                        })
                        .sum::<f64>()
            }),
            InitialData::Fourier { cos, sin } => Field::from_fn(grid, |x| {
                let c: f64 = cos.iter().enumerate().map(|(i, a)| a * ((i + 1) as f64 * x).cos()).sum();
                let s: f64 = sin.iter().enumerate().map(|(i, a)| a * ((i + 1) as f64 * x).sin()).sum();
                c + s
            }),
        };
        if !f.is_finite() {
            return Err(LabError::Config("initial field is not finite".into()));
        }
        Ok(f)
    }
}

/// `Λu(x₀)` at the global maximum `x₀` of `u`.
pub fn lambda_at_max(u: &Field) -> f64 {
    frac_laplacian(u, 1.0).eval(refine_max(u))
}

/// `shape` rescaled so that `Λ(shape)(x₀) = target`.
pub fn scale_to_lambda(shape: &Field, target: f64) -> LabResult<Field> {
    let lam = lambda_at_max(shape);
    if !(lam > 0.0) {
        return Err(LabError::Config("Λu₀ is not positive at the maximum; cannot normalise".into()));
    }
    Ok(shape.scale(target / lam))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub identities: IdentitiesStudy,
    pub blowup: BlowupStudy,
    pub global: GlobalStudy,
    pub girsanov: GirsanovStudy,
    pub instability: InstabilityStudy,
    pub converge: ConvergeStudy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentitiesStudy {
    pub n: usize,
    pub fields: usize,
    /// Highest random mode; must stay within half the dealiasing cutoff.
    pub band: usize,
    pub decay: f64,
    pub seed: u64,
    /// Bound on every relative operator-identity residual.
    pub tolerance: f64,
    pub ratio_n: u64,
    pub ratio_delta: f64,
    pub ratio_indices: Vec<f64>,
    pub ratio_tolerance: f64,
    pub sv_n: usize,
    pub sv_fields: usize,
    pub sv_tolerance: f64,
}

impl Default for IdentitiesStudy {
    fn default() -> Self {
        IdentitiesStudy {
            n: 256,
            fields: 100,
            band: 40,
            decay: 1.0,
            seed: 1,
            tolerance: 1e-10,
            ratio_n: 4096,
            ratio_delta: 0.9,
            ratio_indices: vec![0.0, 1.0, 1.6],
            ratio_tolerance: 0.05,
            sv_n: 1024,
            sv_fields: 10,
            sv_tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlowupStudy {
    /// Level `K ∈ (0,1)`.
    pub threshold_k: f64,
    /// When set, `u₀` is rescaled so that `Λu₀(x₀) = ratio · b*/K`.
    pub lambda_ratio: Option<f64>,
    pub bound_paths: u64,
    pub bound_dt: f64,
    pub bound_seed: u64,
    /// Allowed relative shortfall of `dF/dt` against `½βF²`.
    pub riccati_tol: f64,
    /// Energy fraction in the upper half band beyond which a track is
    /// considered unresolved.
    pub resolution_tol: f64,
    /// Without noise the flag must come by `(1 + slack)·2/F₀`.
    pub slack: f64,
    /// Width of the acceptance band in Wilson half-widths.
    pub ci_multiple: f64,
}

impl Default for BlowupStudy {
    fn default() -> Self {
        BlowupStudy {
            threshold_k: 0.5,
            lambda_ratio: None,
            bound_paths: 100_000,
            bound_dt: 0.01,
            bound_seed: 7,
            riccati_tol: 0.05,
            resolution_tol: 1e-10,
            slack: 0.25,
            ci_multiple: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlobalStudy {
    /// Random fields used to estimate the commutator constant `Q̂`.
    pub q_hat_samples: usize,
    pub q_hat_n: usize,
    pub q_hat_seed: u64,
    pub k2: f64,
    /// Largest tolerated number of paths that fail to complete.
    pub max_blowups: usize,
}

impl Default for GlobalStudy {
    fn default() -> Self {
        GlobalStudy {
            q_hat_samples: 2000,
            q_hat_n: 256,
            q_hat_seed: 1,
            k2: 1.0,
            max_blowups: 0,
        }
    }
}

/// One `(b₀, λ, K)` point of the probability-bound table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundPoint {
    pub b0: f64,
    pub lambda: f64,
    pub k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GirsanovStudy {
    /// Step sizes of the refinement study, each a power-of-two fraction of
    /// `sim.brownian_dt`.
    pub dts: Vec<f64>,
    /// Accepted band for the residual ratio per refinement is
    /// `expected_ratio·(1 ± tolerance)`.
    pub expected_ratio: f64,
    pub tolerance: f64,
    pub bound_points: Vec<BoundPoint>,
    pub bound_paths: u64,
    pub bound_dt: f64,
    pub bound_seed: u64,
    pub ci_multiple: f64,
}

impl Default for GirsanovStudy {
    fn default() -> Self {
        GirsanovStudy {
            dts: vec![1.0 / 16.0, 1.0 / 64.0, 1.0 / 256.0, 1.0 / 1024.0],
            expected_ratio: 2.0,
            tolerance: 0.5,
            bound_points: vec![BoundPoint {
                b0: 1.0,
                lambda: 1.0,
                k: 0.5,
            }],
            bound_paths: 100_000,
            bound_dt: 0.01,
            bound_seed: 7,
            ci_multiple: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstabilityStudy {
    pub m: i32,
    pub delta: f64,
    pub s: f64,
    pub sigma0: f64,
    pub r0: f64,
    /// Sweep for the low-frequency decay and the common horizon.
    pub decay_ns: Vec<u64>,
    pub decay_tolerance: f64,
    /// Candidate horizon `T_l` and the step used to verify it.
    pub horizon: f64,
    pub low_dt: f64,
    /// Sweep for the error functional and the gap estimates (`sim.paths`
    /// paths at each point).
    pub ns: Vec<u64>,
    /// The functional's fitted slope may exceed `2 r_s` by this much.
    pub slope_slack: f64,
    /// Skip the gap estimates (the functional alone is cheap).
    pub gaps: bool,
    pub separation_n: Option<u64>,
    pub separation_paths: usize,
    /// The gap at `t = π/2` must reach this fraction of the reference.
    pub separation_fraction: f64,
    /// The initial gap may be at most this fraction of the amplitude.
    pub initial_fraction: f64,
}

impl Default for InstabilityStudy {
    fn default() -> Self {
        InstabilityStudy {
            m: 1,
            delta: 0.9,
            s: 3.1,
            sigma0: 1.6,
            r0: 10.0,
            decay_ns: (6..=12).map(|k| 1u64 << k).collect(),
            decay_tolerance: 0.05,
            horizon: 0.5 * PI,
            low_dt: PI / 32.0,
            ns: (6..=10).map(|k| 1u64 << k).collect(),
            slope_slack: 0.3,
            gaps: true,
            separation_n: Some(1024),
            separation_paths: 2,
            separation_fraction: 0.5,
            initial_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergeStudy {
    /// Dyadic mollifier scales; the smallest is the reference.
    pub eps: Vec<f64>,
    pub min_slope: f64,
}

impl Default for ConvergeStudy {
    fn default() -> Self {
        ConvergeStudy {
            eps: vec![0.25, 0.125, 0.0625, 0.03125, 0.015625, 0.0078125],
            min_slope: 0.8,
        }
    }
}

/// Every documented key with its meaning, for `--help`.
pub const DOCUMENTED_KEYS: &[(&str, &str)] = &[
    ("grid.n", "grid points N, a power of two ≥ 16"),
    ("grid.period", "period L of the computational torus (default 2π)"),
    ("grid.dealias", "retained fraction of the spectrum in products (default 2/3)"),
    ("sim.s", "Sobolev index s of the solution space, s > 3"),
    ("sim.dt", "nominal time step"),
    ("sim.horizon", "final time T"),
    ("sim.eps_mollify", "Friedrichs mollifier scale ε of the approximate problem; 0 gives the cut-off problem"),
    ("sim.cutoff_radius", "radius R of the cut-off χ_R(‖u‖_{H^{s−3/2}}); absent disables it"),
    ("sim.blowup_threshold", "threshold on ‖u_x‖∞ + ‖Hu_x‖∞ of the blow-up criterion"),
    ("sim.steepness_factor", "required growth of (‖u_x‖∞+‖Hu_x‖∞)/‖u‖∞ before a blow-up flag"),
    ("sim.drift_scheme", "rk4 | euler, time stepping of the transport term"),
    ("sim.noise_scheme", "euler_maruyama | exponential (the latter for σ(t,u)u noise only)"),
    ("sim.adaptive_tolerance", "relative H^s step increment that triggers bisection; 0 disables"),
    ("sim.max_refinement", "maximum number of bisections of a nominal step"),
    ("sim.record_every", "diagnostic row every this many nominal steps"),
    ("sim.snapshot_every", "field snapshot every this many rows; 0 keeps none"),
    ("sim.brownian_dt", "base interval of the Brownian path (coupled refinements share it)"),
    ("sim.exit_radius", "stop once ‖u‖_{H^s} exceeds this radius (exiting time / K-threshold)"),
    ("sim.seed", "base seed; path i uses seed ⊕ i"),
    ("sim.paths", "number of paths"),
    ("initial.kind", "zero | gaussian | modes | fourier"),
    ("initial.amplitude", "amplitude A (gaussian, modes)"),
    ("initial.center", "centre of the gaussian; default L/2"),
    ("initial.width", "width w of A·exp(−(x−c)²/w²)"),
    ("initial.lambda_at_max", "rescale so that Λu₀(x₀) at the maximum x₀ has this value"),
    ("initial.decay", "modes: amplitude decay k^{−decay}"),
    ("initial.count", "modes: number of cosine modes"),
    ("initial.phase_quadratic", "modes: phase c·k² of mode k"),
    ("initial.cos", "fourier: cosine coefficients of modes 1, 2, …"),
    ("initial.sin", "fourier: sine coefficients of modes 1, 2, …"),
    ("noise.family", "zero | general_h | strong_alpha | linear_b | instability_h"),
    ("noise.q", "time profile q(t) {kind = constant|exponential|oscillating, …}"),
    ("noise.b", "time profile b(t) of the linear noise b(t)u"),
    ("noise.b_star", "strict upper bound b* on b(t)²"),
    ("noise.theta", "exponent θ of the strong noise q(t)(1+‖u_x‖∞+‖Hu_x‖∞)^θ u"),
    ("noise.power_k", "power k of (u_x)^k in the gradient noise"),
    ("noise.power_n", "power n of (Hu_x)^n in the gradient noise"),
    ("noise.sigma0", "index σ₀ of the damping e^{−1/‖u‖_{H^σ₀}}"),
    ("noise.wiener", "{components, decay}: truncation of the cylindrical Wiener process"),
    ("study.identities.*", "n, fields, band, decay, seed, tolerance (relative residual bound), ratio_n, ratio_delta, ratio_indices, ratio_tolerance (modulated-norm limit), sv_n, sv_fields, sv_tolerance (maximum-point identity)"),
    ("study.blowup.*", "threshold_k (K), lambda_ratio (Λu₀(x₀) in units of b*/K), bound_paths, bound_dt, bound_seed, riccati_tol, resolution_tol, slack, ci_multiple"),
    ("study.global.*", "q_hat_samples, q_hat_n, q_hat_seed (commutator constant Q̂), k2 (K₂ of the drift condition), max_blowups"),
    ("study.girsanov.*", "dts (refinement ladder), expected_ratio, tolerance, bound_points [{b0, lambda, k}], bound_paths, bound_dt, bound_seed, ci_multiple"),
    ("study.instability.*", "m, delta (δ), s, sigma0 (σ₀), r0 (R₀), decay_ns, decay_tolerance, horizon (T_l), low_dt, ns, slope_slack, gaps, separation_n, separation_paths, separation_fraction, initial_fraction"),
    ("study.converge.*", "eps (dyadic mollifier scales, smallest is the reference), min_slope"),
];

/// Text block listing every key, used as the CLI's long help epilogue.
pub fn keys_help() -> String {
    let mut out = String::from("Configuration keys (TOML; override with --set key=value):\n");
    for (k, v) in DOCUMENTED_KEYS {
        out.push_str(&format!("  {k:<26} {v}\n"));
    }
    out
}

impl LabConfig {
    pub fn from_toml_str(text: &str) -> LabResult<Self> {
        let value: toml::Value = toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
        Self::from_value(value)
    }

    pub fn load(path: &Path) -> LabResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            LabError::Config(m) => LabError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Deserializes and verifies that no key of `value` was silently
    /// dropped (the noise families are not closed against extra keys).
    fn from_value(value: toml::Value) -> LabResult<Self> {
        let cfg: LabConfig = value.clone().try_into().map_err(|e: toml::de::Error| LabError::Config(e.to_string()))?;
        let canonical = cfg.to_value()?;
        if let Some(key) = first_unknown_key(&value, &canonical, "") {
            return Err(LabError::Config(format!("unknown key `{key}`")));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn to_value(&self) -> LabResult<toml::Value> {
        toml::Value::try_from(self).map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> LabResult<String> {
        toml::to_string(self).map_err(|e| LabError::Config(e.to_string()))
    }

    /// Applies `key=value` overrides in order. Values are parsed as TOML
    /// literals, falling back to a bare string.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> LabResult<Self> {
        let mut value = self.to_value()?;
        for item in overrides {
            let item = item.as_ref();
            let (key, raw) = item.split_once('=').ok_or_else(|| LabError::Override {
                key: item.to_string(),
                reason: "expected key=value".into(),
            })?;
            let key = key.trim();
            let parsed = parse_literal(raw.trim());
            set_dotted(&mut value, key, parsed).map_err(|reason| LabError::Override {
                key: key.to_string(),
                reason,
            })?;
        }
        // Checked once all overrides are in, so that several keys can
        // change together (switching the noise family, say).
        Self::from_value(value).map_err(|e| LabError::Override {
            key: overrides
                .iter()
                .map(|o| o.as_ref().split('=').next().unwrap_or("").trim().to_string())
                .collect::<Vec<_>>()
                .join(", "),
            reason: e.to_string(),
        })
    }

    pub fn validate(&self) -> LabResult<()> {
        self.grid.build()?;
        if self.sim.adaptive_tolerance < 0.0 {
            return Err(LabError::Config("sim.adaptive_tolerance must be ≥ 0".into()));
        }
        Ok(())
    }

    /// Canonical text: compact JSON of the resolved tree in declaration order.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("configuration serializes")
    }

    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.canonical().as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Path configuration for the `sim` section on `grid`.
    pub fn sim_config(&self, grid: &Arc<SpectralGrid>) -> LabResult<SimConfig> {
        let s = &self.sim;
        let mut c = SimConfig::new(grid.clone(), s.s, s.dt, s.horizon, self.noise)?;
        c.eps_mollify = s.eps_mollify;
        c.cutoff_radius = s.cutoff_radius;
        c.blowup_threshold = s.blowup_threshold;
        c.steepness_factor = s.steepness_factor;
        c.drift_scheme = s.drift_scheme;
        c.noise_scheme = s.noise_scheme;
        c.adaptive_tolerance = (s.adaptive_tolerance > 0.0).then_some(s.adaptive_tolerance);
        c.max_refinement = s.max_refinement;
        c.record_every = s.record_every;
        c.snapshot_every = (s.snapshot_every > 0).then_some(s.snapshot_every);
        c.brownian_dt = s.brownian_dt;
        c.exit_radius = s.exit_radius;
        c.seed = s.seed;
        c.validate()?;
        Ok(c)
    }
}

fn parse_literal(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_dotted(root: &mut toml::Value, key: &str, value: toml::Value) -> Result<(), String> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err("empty key segment".into());
    }
    let mut cur = root;
    for part in &parts[..parts.len() - 1] {
        let table = cur.as_table_mut().ok_or_else(|| format!("`{part}` is not inside a table"))?;
        cur = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    let table = cur
        .as_table_mut()
        .ok_or_else(|| "the parent of the key is not a table".to_string())?;
    let last = parts[parts.len() - 1];
    // Integers are accepted where floats are expected.
    let value = match (table.get(last), value) {
        (Some(toml::Value::Float(_)), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
        (_, v) => v,
    };
    table.insert(last.to_string(), value);
    Ok(())
}

/// A key present in `input` but absent from the re-serialized `canonical`.
fn first_unknown_key(input: &toml::Value, canonical: &toml::Value, prefix: &str) -> Option<String> {
    let (toml::Value::Table(a), toml::Value::Table(b)) = (input, canonical) else {
        return None;
    };
    for (k, v) in a {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match b.get(k) {
            None => return Some(path),
            Some(c) => {
                if let Some(bad) = first_unknown_key(v, c, &path) {
                    return Some(bad);
                }
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = LabConfig::default();
        let text = cfg.to_toml_string().unwrap();
        let back = LabConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.digest(), cfg.digest());
        assert_eq!(cfg.digest().len(), 64);
    }

    #[test]
    fn empty_document_is_the_default() {
        assert_eq!(LabConfig::from_toml_str("").unwrap(), LabConfig::default());
    }

    #[test]
    fn noise_section_parses() {
        let cfg = LabConfig::from_toml_str(
            r#"
            [noise]
            family = "linear_b"
            b_star = 0.0625
            b = { kind = "exponential", amplitude = 0.25, rate = 1.0 }
            "#,
        )
        .unwrap();
        assert!(matches!(cfg.noise, NoiseModel::LinearB { .. }));
    }

    #[test]
    fn unknown_keys_are_rejected_everywhere() {
        assert!(LabConfig::from_toml_str("[grid]\nnn = 4").is_err());
        assert!(LabConfig::from_toml_str("[bogus]\nx = 1").is_err());
        let err = LabConfig::from_toml_str(
            "[noise]\nfamily = \"strong_alpha\"\ntheta = 1.0\nextra = 2\nq = { kind = \"constant\", value = 1.0 }",
        )
        .unwrap_err();
        assert!(err.to_string().contains("noise.extra"), "{err}");
    }

    #[test]
    fn overrides_are_type_checked() {
        let cfg = LabConfig::default();
        let c = cfg.with_overrides(&["grid.n=512", "sim.dt=0.002", "sim.exit_radius=50"]).unwrap();
        assert_eq!(c.grid.n, 512);
        assert_eq!(c.sim.dt, 0.002);
        assert_eq!(c.sim.exit_radius, Some(50.0));
        assert_ne!(c.digest(), cfg.digest());
        // Integer literal for a float key.
        assert_eq!(cfg.with_overrides(&["sim.horizon=2"]).unwrap().sim.horizon, 2.0);
        assert!(cfg.with_overrides(&["grid.n=abc"]).is_err());
        assert!(cfg.with_overrides(&["grid.m=3"]).is_err());
        assert!(cfg.with_overrides(&["grid.n"]).is_err());
        // A grid that is not a power of two fails validation.
        assert!(cfg.with_overrides(&["grid.n=100"]).is_err());
        let noisy = cfg
            .with_overrides(&["noise.family=linear_b", "noise.b_star=1.0", "noise.b={kind=\"constant\", value=0.5}"])
            .unwrap();
        assert!(matches!(noisy.noise, NoiseModel::LinearB { .. }));
        assert!(cfg.with_overrides(&["noise.family=linear_b"]).is_err());
    }

    #[test]
    fn initial_data_builders() {
        let g = GridConfig::default().build().unwrap();
        let z = InitialData::Zero.build(&g).unwrap();
        assert_eq!(z.max_abs(), 0.0);
        let f = InitialData::Fourier {
            cos: vec![0.3],
            sin: vec![0.0, 0.1],
        }
        .build(&g)
        .unwrap();
        assert!((f.eval(0.0) - 0.3).abs() < 1e-12);
        assert!((f.eval(PI / 4.0) - (0.3 * (PI / 4.0).cos() + 0.1)).abs() < 1e-12);
        let gauss = InitialData::Gaussian {
            amplitude: 1.0,
            center: None,
            width: 0.5,
            lambda_at_max: Some(10.0),
        }
        .build(&g)
        .unwrap();
        assert!((lambda_at_max(&gauss) - 10.0).abs() < 1e-9);
        assert!((refine_max(&gauss) - PI).abs() < 1e-9);
    }
}

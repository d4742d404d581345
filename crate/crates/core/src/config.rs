//! Run configuration: one TOML file describes the lattice, the network, the
//! engines, and the budgets. The file is the complete provenance record of a
//! run — everything downstream (seeds, solver knobs, output cadence) resolves
//! from it, and its canonical serialization is content-hashed into output
//! manifests.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::lattice::{Field, Grid};
use crate::network::{
    validate_network, NetworkSpec, RatePolynomial, Reaction, ReactionClass, TruncationSpec,
    WeightFunction,
};
use crate::pdmp::SolverParams;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("parse error: {message}")]
    Parse { message: String },
    #[error("invalid {key}: {reason}")]
    Validation { key: String, reason: String },
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Validation {
        key: key.to_string(),
        reason: reason.into(),
    }
}

/// Closed-form initial profile for the continuous species.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    Constant { value: f64 },
    Sine {
        offset: f64,
        amplitude: f64,
        cycles: u32,
    },
    Poly { coeffs: Vec<f64> },
}

impl Profile {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Profile::Constant { value } => *value,
            Profile::Sine {
                offset,
                amplitude,
                cycles,
            } => offset + amplitude * (2.0 * std::f64::consts::PI * *cycles as f64 * x).sin(),
            Profile::Poly { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c),
        }
    }

    /// Canonical projection by exact antiderivatives.
    pub fn project(&self, grid: Grid) -> Field {
        let n = grid.n_sites();
        let vals = (0..n)
            .map(|j| {
                let a = j as f64 / n as f64;
                let b = (j + 1) as f64 / n as f64;
                n as f64 * self.integral(a, b)
            })
            .collect();
        Field::new(grid, vals)
    }

    fn integral(&self, a: f64, b: f64) -> f64 {
        match self {
            Profile::Constant { value } => value * (b - a),
            Profile::Sine {
                offset,
                amplitude,
                cycles,
            } => {
                let w = 2.0 * std::f64::consts::PI * *cycles as f64;
                offset * (b - a) + amplitude / w * ((w * a).cos() - (w * b).cos())
            }
            Profile::Poly { coeffs } => crate::lattice::poly_integral(coeffs, a, b),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineChoice {
    Ssa,
    Pdmp,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuardSection {
    /// Silence slow mixed channels whose deposit would drive a site negative.
    pub positivity: bool,
    /// Radius of the smooth rate cutoff, when bounded rates are wanted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation_n: Option<f64>,
}

impl Default for GuardSection {
    fn default() -> Self {
        Self {
            positivity: true,
            truncation_n: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetSection {
    pub max_events: u64,
    pub max_jumps: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_seconds: Option<f64>,
}

impl Default for BudgetSection {
    fn default() -> Self {
        Self {
            max_events: 10_000_000_000,
            max_jumps: 1_000_000,
            wall_seconds: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSection {
    pub replicates: usize,
    pub root_seed: u64,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self {
            replicates: 1,
            root_seed: 0,
        }
    }
}

/// Resolution ladder for the convergence study; optional — only the
/// `converge` command needs one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderSection {
    /// `(N, μ)` pairs, coarse to fine.
    pub rungs: Vec<(usize, f64)>,
    /// Comparison times; must lie on the output grid.
    pub times: Vec<f64>,
    /// Reference solver resolution.
    pub ref_m: usize,
    pub ref_h: f64,
    /// Reference replicate multiple.
    pub ref_multiple: usize,
}

/// Fully resolved, validated run description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub engine: EngineChoice,
    pub grid: GridSection,
    pub scale: ScaleSection,
    pub horizon: HorizonSection,
    pub network: NetworkSpec,
    pub initial: InitialSection,
    pub pdmp_solver: SolverParams,
    pub ensemble: EnsembleSection,
    pub guards: GuardSection,
    pub budgets: BudgetSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ladder: Option<LadderSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSection {
    pub n: usize,
    pub k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleSection {
    pub mu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonSection {
    pub t: f64,
    pub dt_out: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialSection {
    pub f0: Profile,
    pub d0: Vec<i64>,
}

// Raw mirror with optional fields so missing keys surface as validation
// errors with their full path rather than serde messages.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    grid: Option<RawGrid>,
    scale: Option<RawScale>,
    horizon: Option<RawHorizon>,
    network: Option<RawNetwork>,
    initial: Option<RawInitial>,
    engine: Option<EngineChoice>,
    pdmp_solver: Option<RawSolver>,
    ensemble: Option<RawEnsemble>,
    guards: Option<RawGuards>,
    budgets: Option<RawBudgets>,
    ladder: Option<RawLadder>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLadder {
    rungs: Option<Vec<(usize, f64)>>,
    times: Option<Vec<f64>>,
    ref_m: Option<usize>,
    ref_h: Option<f64>,
    ref_multiple: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    n: Option<usize>,
    k: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScale {
    mu: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHorizon {
    t: Option<f64>,
    dt_out: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetwork {
    preset: Option<String>,
    #[serde(default)]
    reactions: Vec<Reaction>,
    u_max: Option<f64>,
    d_max: Option<u32>,
    rho1: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    f0: Option<Profile>,
    d0: Option<Vec<i64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    m: Option<usize>,
    h: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnsemble {
    replicates: Option<usize>,
    root_seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGuards {
    positivity: Option<bool>,
    truncation_n: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBudgets {
    max_events: Option<u64>,
    max_jumps: Option<u64>,
    wall_seconds: Option<f64>,
}

/// The canonical example network: a self-limiting birth–death field with a
/// per-macrosite on/off switch. Production at 0.5, degradation at 2u, an
/// extra degradation u·d while the switch is on; the switch turns on at rate
/// 8⟨u⟩(1-d) and off at rate 2d.
pub fn toggle_field_spec() -> NetworkSpec {
    NetworkSpec {
        reactions: vec![
            Reaction {
                class: ReactionClass::FastC,
                gamma_c: 1,
                gamma_d: 0,
                rate: RatePolynomial::constant(0.5),
                a_weight: None,
                b_weight: None,
            },
            Reaction {
                class: ReactionClass::FastC,
                gamma_c: -1,
                gamma_d: 0,
                rate: RatePolynomial::new([((1, 0), 2.0)]),
                a_weight: None,
                b_weight: None,
            },
            Reaction {
                class: ReactionClass::FastMixed,
                gamma_c: -1,
                gamma_d: 0,
                rate: RatePolynomial::new([((1, 1), 1.0)]),
                a_weight: None,
                b_weight: None,
            },
            Reaction {
                class: ReactionClass::SlowMixed,
                gamma_c: 0,
                gamma_d: 1,
                rate: RatePolynomial::new([((1, 0), 8.0), ((1, 1), -8.0)]),
                a_weight: Some(WeightFunction::constant(1.0)),
                b_weight: Some(WeightFunction::constant(1.0)),
            },
            Reaction {
                class: ReactionClass::SlowD,
                gamma_c: 0,
                gamma_d: -1,
                rate: RatePolynomial::new([((0, 1), 2.0)]),
                a_weight: None,
                b_weight: None,
            },
        ],
        u_max: 2.0,
        d_max: 1,
        truncation: None,
        rho1: Some(0.26),
    }
}

pub fn toggle_field_network() -> Result<crate::ReactionNetwork, Vec<crate::network::NetworkError>> {
    validate_network(&toggle_field_spec())
}

/// Parse and validate a config from TOML text.
pub fn parse_config_str(text: &str) -> Result<Config, Vec<ConfigError>> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        vec![ConfigError::Parse {
            message: e.to_string().replace('\n', " "),
        }]
    })?;
    resolve(raw)
}

/// Parse and validate a config file.
pub fn parse_config(path: &std::path::Path) -> Result<Config, Vec<ConfigError>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        vec![ConfigError::Parse {
            message: format!("cannot read {}: {e}", path.display()),
        }]
    })?;
    parse_config_str(&text)
}

fn resolve(raw: RawConfig) -> Result<Config, Vec<ConfigError>> {
    let mut errors = Vec::new();

    let grid_n = raw.grid.as_ref().and_then(|g| g.n);
    let grid_k = raw.grid.as_ref().and_then(|g| g.k);
    if grid_n.is_none() {
        errors.push(invalid("grid.n", "missing"));
    }
    if grid_k.is_none() {
        errors.push(invalid("grid.k", "missing"));
    }
    if let (Some(n), Some(k)) = (grid_n, grid_k) {
        if k == 0 || n == 0 || n % k != 0 {
            errors.push(invalid("grid.n", format!("not a multiple of k = {k}")));
        }
    }

    let mu = raw.scale.as_ref().and_then(|s| s.mu);
    match mu {
        None => errors.push(invalid("scale.mu", "missing")),
        Some(m) if m <= 0.0 => errors.push(invalid("scale.mu", "must be positive")),
        _ => {}
    }

    let t = raw.horizon.as_ref().and_then(|h| h.t);
    let dt_out = raw.horizon.as_ref().and_then(|h| h.dt_out);
    match t {
        None => errors.push(invalid("horizon.t", "missing")),
        Some(v) if v <= 0.0 => errors.push(invalid("horizon.t", "must be positive")),
        _ => {}
    }
    match (t, dt_out) {
        (_, None) => errors.push(invalid("horizon.dt_out", "missing")),
        (Some(t), Some(d)) if d <= 0.0 || d > t => {
            errors.push(invalid("horizon.dt_out", "must lie in (0, t]"))
        }
        _ => {}
    }

    let network = match raw.network {
        None => {
            errors.push(invalid("network", "missing"));
            None
        }
        Some(rn) => match rn.preset.as_deref() {
            Some("toggle-field") => Some(toggle_field_spec()),
            Some(other) => {
                errors.push(invalid("network.preset", format!("unknown preset {other:?}")));
                None
            }
            None => {
                let mut missing = false;
                if rn.u_max.is_none() {
                    errors.push(invalid("network.u_max", "missing"));
                    missing = true;
                }
                if rn.d_max.is_none() {
                    errors.push(invalid("network.d_max", "missing"));
                    missing = true;
                }
                if missing {
                    None
                } else {
                    Some(NetworkSpec {
                        reactions: rn.reactions,
                        u_max: rn.u_max.unwrap(),
                        d_max: rn.d_max.unwrap(),
                        truncation: None,
                        rho1: rn.rho1,
                    })
                }
            }
        },
    };
    if let Some(spec) = &network {
        if let Err(errs) = validate_network(spec) {
            for e in errs {
                errors.push(invalid("network.reactions", e.to_string()));
            }
        }
    }

    let f0 = raw.initial.as_ref().and_then(|i| i.f0.clone());
    let d0 = raw.initial.as_ref().and_then(|i| i.d0.clone());
    if f0.is_none() {
        errors.push(invalid("initial.f0", "missing"));
    }
    if d0.is_none() {
        errors.push(invalid("initial.d0", "missing"));
    }
    if let (Some(d0), Some(k)) = (&d0, grid_k) {
        if d0.len() != k {
            errors.push(invalid(
                "initial.d0",
                format!("length {} != grid.k = {k}", d0.len()),
            ));
        }
        if d0.iter().any(|&d| d < 0) {
            errors.push(invalid("initial.d0", "negative count"));
        }
    }

    let solver = SolverParams {
        m: raw.pdmp_solver.as_ref().and_then(|s| s.m).unwrap_or(256),
        h: raw.pdmp_solver.as_ref().and_then(|s| s.h).unwrap_or(1e-3),
    };
    if !solver.m.is_power_of_two() {
        errors.push(invalid("pdmp_solver.m", "must be a power of two"));
    }
    if let Some(k) = grid_k {
        if k > 0 && solver.m % k != 0 {
            errors.push(invalid("pdmp_solver.m", format!("not a multiple of k = {k}")));
        }
    }
    if solver.h <= 0.0 {
        errors.push(invalid("pdmp_solver.h", "must be positive"));
    }

    let ensemble = EnsembleSection {
        replicates: raw
            .ensemble
            .as_ref()
            .and_then(|e| e.replicates)
            .unwrap_or(1),
        root_seed: raw.ensemble.as_ref().and_then(|e| e.root_seed).unwrap_or(0),
    };
    if ensemble.replicates == 0 {
        errors.push(invalid("ensemble.replicates", "must be at least 1"));
    }

    let guards = GuardSection {
        positivity: raw
            .guards
            .as_ref()
            .and_then(|g| g.positivity)
            .unwrap_or(true),
        truncation_n: raw.guards.as_ref().and_then(|g| g.truncation_n),
    };
    if let Some(n) = guards.truncation_n {
        if n <= 0.0 {
            errors.push(invalid("guards.truncation_n", "must be positive"));
        }
    }

    let budgets = BudgetSection {
        max_events: raw
            .budgets
            .as_ref()
            .and_then(|b| b.max_events)
            .unwrap_or(10_000_000_000),
        max_jumps: raw
            .budgets
            .as_ref()
            .and_then(|b| b.max_jumps)
            .unwrap_or(1_000_000),
        wall_seconds: raw.budgets.as_ref().and_then(|b| b.wall_seconds),
    };

    let ladder = match raw.ladder {
        None => None,
        Some(rl) => {
            let rungs = rl.rungs.unwrap_or_default();
            if rungs.is_empty() {
                errors.push(invalid("ladder.rungs", "missing or empty"));
            }
            Some(LadderSection {
                rungs,
                times: rl
                    .times
                    .unwrap_or_else(|| t.map(|t| vec![t / 2.0, t]).unwrap_or_default()),
                ref_m: rl.ref_m.unwrap_or(512),
                ref_h: rl.ref_h.unwrap_or(5e-4),
                ref_multiple: rl.ref_multiple.unwrap_or(4),
            })
        }
    };

    if !errors.is_empty() {
        return Err(errors);
    }

    let mut network = network.unwrap();
    network.truncation = guards.truncation_n.map(TruncationSpec::new);
    Ok(Config {
        grid: GridSection {
            n: grid_n.unwrap(),
            k: grid_k.unwrap(),
        },
        scale: ScaleSection { mu: mu.unwrap() },
        horizon: HorizonSection {
            t: t.unwrap(),
            dt_out: dt_out.unwrap(),
        },
        network,
        initial: InitialSection {
            f0: f0.unwrap(),
            d0: d0.unwrap(),
        },
        engine: raw.engine.unwrap_or(EngineChoice::Ssa),
        pdmp_solver: solver,
        ensemble,
        guards,
        budgets,
        ladder,
    })
}

impl Config {
    /// Canonical TOML serialization of the resolved form; feeding it back
    /// through the parser reproduces `self`.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical serialization.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_toml().as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn lattice_grid(&self) -> Grid {
        Grid::new(self.grid.n, self.grid.k).expect("validated grid")
    }

    pub fn validated_network(&self) -> crate::ReactionNetwork {
        validate_network(&self.network).expect("validated at parse time")
    }
}

/// The golden example config: the toggle field at desk scale.
pub fn toggle_field_config() -> Config {
    parse_config_str(
        r#"
engine = "both"

[grid]
n = 16
k = 4

[scale]
mu = 50.0

[horizon]
t = 1.0
dt_out = 0.05

[network]
preset = "toggle-field"

[initial]
f0 = { kind = "sine", offset = 0.25, amplitude = 0.1, cycles = 1 }
d0 = [0, 0, 0, 0]

[pdmp_solver]
m = 256
h = 1e-3

[ensemble]
replicates = 4
root_seed = 7
"#,
    )
    .expect("golden config parses")
}

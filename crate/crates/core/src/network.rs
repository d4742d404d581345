//! Reaction network definition, validation, and rate evaluation.
//!
//! Reactions fall into four classes that drive the two-scale dynamics:
//!
//! * `FastC` — fast onsite reactions of the continuous species only,
//!   density-dependent rate `μ λ(u_j)`;
//! * `FastMixed` — fast onsite reactions whose rate also reads the local
//!   macrosite count, `μ λ(u_j, d_ℓ)`, but which never move the discrete
//!   species;
//! * `SlowMixed` — slow reactions on a whole macrosite: the rate reads a
//!   weighted average `Σ_j a_j u_j` of the continuous species, the jump moves
//!   the discrete count and (optionally) deposits `γ_C b_j` molecules per
//!   site;
//! * `SlowD` — slow pure-discrete reactions, rate `λ(d_ℓ)`.
//!
//! Rates are sparse bivariate polynomials validated to be nonnegative on a
//! stated box `[0, u_max] × {0, …, d_max}`; an optional smooth radial cutoff
//! reproduces the bounded-rate regime.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::poly_integral;

/// Reaction class; determines which state variables the rate may read and
/// which components the jump may move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReactionClass {
    /// Fast, continuous-only. Config alias: `rc`.
    #[serde(alias = "rc")]
    FastC,
    /// Fast, reads the discrete count, moves only the continuous species.
    /// Config alias: `s1`.
    #[serde(alias = "s1")]
    FastMixed,
    /// Slow macrosite reaction moving the discrete count. Config alias:
    /// `rdc_slow`.
    #[serde(alias = "rdc_slow")]
    SlowMixed,
    /// Slow pure-discrete reaction. Config alias: `rd`.
    #[serde(alias = "rd")]
    SlowD,
}

impl ReactionClass {
    pub fn is_fast(self) -> bool {
        matches!(self, ReactionClass::FastC | ReactionClass::FastMixed)
    }
}

/// Sparse polynomial `Σ c_{ij} y1^i y2^j` in concentration `y1` and count
/// `y2`, kept as a sorted exponent→coefficient map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(u8, u8, f64)>", into = "Vec<(u8, u8, f64)>")]
pub struct RatePolynomial {
    terms: Vec<(u8, u8, f64)>,
}

impl RatePolynomial {
    pub fn new(terms: impl IntoIterator<Item = ((u8, u8), f64)>) -> Self {
        let mut map = std::collections::BTreeMap::new();
        for ((i, j), c) in terms {
            *map.entry((i, j)).or_insert(0.0) += c;
        }
        Self {
            terms: map.into_iter().map(|((i, j), c)| (i, j, c)).collect(),
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::new([((0, 0), c)])
    }

    pub fn terms(&self) -> &[(u8, u8, f64)] {
        &self.terms
    }

    /// Highest exponent in `y1` and in `y2`.
    pub fn degrees(&self) -> (u8, u8) {
        self.terms
            .iter()
            .fold((0, 0), |(a, b), &(i, j, _)| (a.max(i), b.max(j)))
    }

    #[inline]
    pub fn eval(&self, y1: f64, y2: f64) -> f64 {
        let mut acc = 0.0;
        for &(i, j, c) in &self.terms {
            acc += c * pow_small(y1, i) * pow_small(y2, j);
        }
        acc
    }

    /// Analytic `∂/∂y1`.
    pub fn d_dy1(&self) -> RatePolynomial {
        Self::new(self.terms.iter().filter(|t| t.0 > 0).map(|&(i, j, c)| {
            ((i - 1, j), c * i as f64)
        }))
    }
}

impl From<RatePolynomial> for Vec<(u8, u8, f64)> {
    fn from(p: RatePolynomial) -> Self {
        p.terms
    }
}

impl TryFrom<Vec<(u8, u8, f64)>> for RatePolynomial {
    type Error = String;
    fn try_from(v: Vec<(u8, u8, f64)>) -> Result<Self, String> {
        Ok(RatePolynomial::new(
            v.into_iter().map(|(i, j, c)| ((i, j), c)),
        ))
    }
}

#[inline]
fn pow_small(x: f64, e: u8) -> f64 {
    match e {
        0 => 1.0,
        1 => x,
        2 => x * x,
        3 => x * x * x,
        _ => x.powi(e as i32),
    }
}

/// Nonnegative polynomial weight on `[0, 1]`, stored by coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightFunction {
    pub coeffs: Vec<f64>,
}

impl WeightFunction {
    pub fn constant(c: f64) -> Self {
        Self { coeffs: vec![c] }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs
            .iter()
            .rev()
            .fold(0.0, |acc, &c| acc * x + c)
    }

    /// Exact `∫_0^1 w`.
    pub fn integral(&self) -> f64 {
        poly_integral(&self.coeffs, 0.0, 1.0)
    }

    fn min_on_unit_interval(&self) -> f64 {
        let mut min = f64::INFINITY;
        for i in 0..=256 {
            min = min.min(self.eval(i as f64 / 256.0));
        }
        min
    }
}

/// One reaction: class, jump amplitudes, rate law, and (for `SlowMixed`)
/// the averaging and deposition weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reaction {
    pub class: ReactionClass,
    #[serde(default)]
    pub gamma_c: i32,
    #[serde(default)]
    pub gamma_d: i32,
    pub rate: RatePolynomial,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_weight: Option<WeightFunction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_weight: Option<WeightFunction>,
}

/// Smooth radial rate cutoff: `η_n(y) = η(|y|²/n²)` with `η = 1` on `[0,1]`,
/// `η = 0` on `[2,∞)`, and a quintic smoothstep in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationSpec {
    pub n: f64,
}

impl TruncationSpec {
    pub fn new(n: f64) -> Self {
        assert!(n > 0.0);
        Self { n }
    }

    /// The bump profile η on the half line.
    pub fn eta(y: f64) -> f64 {
        if y <= 1.0 {
            1.0
        } else if y >= 2.0 {
            0.0
        } else {
            let t = y - 1.0;
            1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
        }
    }

    /// `η_n` at the state point `(y1, y2)`.
    pub fn eta_n(&self, y1: f64, y2: f64) -> f64 {
        Self::eta((y1 * y1 + y2 * y2) / (self.n * self.n))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("reaction {id}: rate is negative at (y1={y1}, y2={y2}): {value}")]
    NegativeRate { id: usize, y1: f64, y2: f64, value: f64 },
    #[error("reaction {id}: rate reads a variable its class must not ({detail})")]
    BadArity { id: usize, detail: String },
    #[error("reaction {id}: averaging weight integrates to {integral}, expected 1")]
    UnnormalizedWeight { id: usize, integral: f64 },
    #[error("reaction {id}: fast mixed reactions must not move the discrete species (gamma_d = {gamma_d})")]
    MixedFastWithDJump { id: usize, gamma_d: i32 },
    #[error("reaction {id}: slow reactions must move the discrete species (gamma_d = 0)")]
    SlowWithoutDJump { id: usize },
    #[error("reaction {id}: weight function is negative on [0,1] (min {min})")]
    NegativeWeight { id: usize, min: f64 },
    #[error("reaction {id}: class {class:?} must have gamma_{which} = 0, got {got}")]
    ForbiddenAmplitude {
        id: usize,
        class: ReactionClass,
        which: char,
        got: i32,
    },
    #[error("reaction {id}: class {class:?} requires an {which}_weight")]
    MissingWeight {
        id: usize,
        class: ReactionClass,
        which: char,
    },
    #[error("rate evaluated negative at runtime (reaction {id}, y1={y1}, y2={y2}, value={value}); state left the validated box")]
    NegativeRateAtRuntime { id: usize, y1: f64, y2: f64, value: f64 },
}

/// Raw, unvalidated network as it comes out of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub reactions: Vec<Reaction>,
    pub u_max: f64,
    pub d_max: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<TruncationSpec>,
    /// Optional threshold for the dissipativity warning check on the debit
    /// function: `F(y1, ·) < 0` is expected for `y1 > rho1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho1: Option<f64>,
}

/// Validated network. Reactions are regrouped per class and indexed by their
/// position in the original spec for error reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct ReactionNetwork {
    pub fast_c: Vec<(usize, Reaction)>,
    pub fast_mixed: Vec<(usize, Reaction)>,
    pub slow_mixed: Vec<(usize, Reaction)>,
    pub slow_d: Vec<(usize, Reaction)>,
    pub u_max: f64,
    pub d_max: u32,
    pub truncation: Option<TruncationSpec>,
    pub warnings: Vec<String>,
}

impl ReactionNetwork {
    pub fn n_slow(&self) -> usize {
        self.slow_mixed.len() + self.slow_d.len()
    }

    /// Net production rate of the continuous species by fast onsite
    /// reactions: `F(y1, y2) = Σ_{FastC} γ λ(y1) + Σ_{FastMixed} γ λ(y1, y2)`.
    pub fn debit_f(&self, y1: f64, y2: f64) -> f64 {
        let mut acc = 0.0;
        for (_, r) in &self.fast_c {
            acc += r.gamma_c as f64 * r.rate.eval(y1, 0.0);
        }
        for (_, r) in &self.fast_mixed {
            acc += r.gamma_c as f64 * r.rate.eval(y1, y2);
        }
        acc
    }

    /// Analytic `∂F/∂y1` at fixed `y2` (used by tests as the derivative
    /// oracle's counterpart).
    pub fn debit_f_dy1(&self, y1: f64, y2: f64) -> f64 {
        let mut acc = 0.0;
        for (_, r) in &self.fast_c {
            acc += r.gamma_c as f64 * r.rate.d_dy1().eval(y1, 0.0);
        }
        for (_, r) in &self.fast_mixed {
            acc += r.gamma_c as f64 * r.rate.d_dy1().eval(y1, y2);
        }
        acc
    }
}

/// Evaluate a reaction's rate at `(y1, y2)`, applying the cutoff when one is
/// active. Errors if the polynomial evaluates negative (beyond a `-1e-9`
/// rounding floor, below which the value is snapped to zero).
pub fn eval_rate(
    id: usize,
    r: &Reaction,
    y1: f64,
    y2: f64,
    trunc: Option<&TruncationSpec>,
) -> Result<f64, NetworkError> {
    let mut v = r.rate.eval(y1, y2);
    if v < 0.0 {
        if v >= -1e-9 {
            v = 0.0;
        } else {
            return Err(NetworkError::NegativeRateAtRuntime { id, y1, y2, value: v });
        }
    }
    if let Some(t) = trunc {
        let eta = t.eta_n(y1, y2);
        if eta < 1.0 {
            v *= eta;
        }
    }
    Ok(v)
}

const VALIDATION_GRID: usize = 64;

/// Validate a raw network: class/amplitude consistency, weight presence and
/// normalization, and rate nonnegativity on the box by dense sampling.
/// Returns either the validated network (possibly carrying warnings) or the
/// full list of violations.
pub fn validate_network(raw: &NetworkSpec) -> Result<ReactionNetwork, Vec<NetworkError>> {
    let mut errors = Vec::new();
    let mut warnings = Vec::new();
    assert!(raw.u_max > 0.0, "u_max must be positive");
    assert!(raw.d_max >= 1, "d_max must be positive");

    for (id, r) in raw.reactions.iter().enumerate() {
        // Amplitude rules per class.
        match r.class {
            ReactionClass::FastC => {
                if r.gamma_d != 0 {
                    errors.push(NetworkError::ForbiddenAmplitude {
                        id,
                        class: r.class,
                        which: 'd',
                        got: r.gamma_d,
                    });
                }
            }
            ReactionClass::FastMixed => {
                if r.gamma_d != 0 {
                    errors.push(NetworkError::MixedFastWithDJump { id, gamma_d: r.gamma_d });
                }
            }
            ReactionClass::SlowMixed => {
                if r.gamma_d == 0 {
                    errors.push(NetworkError::SlowWithoutDJump { id });
                }
            }
            ReactionClass::SlowD => {
                if r.gamma_c != 0 {
                    errors.push(NetworkError::ForbiddenAmplitude {
                        id,
                        class: r.class,
                        which: 'c',
                        got: r.gamma_c,
                    });
                }
                if r.gamma_d == 0 {
                    errors.push(NetworkError::SlowWithoutDJump { id });
                }
            }
        }

        // Arity: which variable may the rate read.
        let (deg1, deg2) = r.rate.degrees();
        match r.class {
            ReactionClass::FastC if deg2 > 0 => errors.push(NetworkError::BadArity {
                id,
                detail: format!("continuous-only rate depends on the count (degree {deg2})"),
            }),
            ReactionClass::SlowD if deg1 > 0 => errors.push(NetworkError::BadArity {
                id,
                detail: format!("discrete-only rate depends on the concentration (degree {deg1})"),
            }),
            _ => {}
        }

        // Weights.
        match r.class {
            ReactionClass::SlowMixed => {
                match &r.a_weight {
                    None => errors.push(NetworkError::MissingWeight {
                        id,
                        class: r.class,
                        which: 'a',
                    }),
                    Some(w) => {
                        let integral = w.integral();
                        if (integral - 1.0).abs() > 1e-12 {
                            errors.push(NetworkError::UnnormalizedWeight { id, integral });
                        }
                        let min = w.min_on_unit_interval();
                        if min < 0.0 {
                            errors.push(NetworkError::NegativeWeight { id, min });
                        }
                    }
                }
                match &r.b_weight {
                    None => errors.push(NetworkError::MissingWeight {
                        id,
                        class: r.class,
                        which: 'b',
                    }),
                    Some(w) => {
                        let min = w.min_on_unit_interval();
                        if min < 0.0 {
                            errors.push(NetworkError::NegativeWeight { id, min });
                        }
                    }
                }
            }
            _ => {
                if r.a_weight.is_some() || r.b_weight.is_some() {
                    warnings.push(format!(
                        "reaction {id}: weights are ignored for class {:?}",
                        r.class
                    ));
                }
            }
        }

        // Rate nonnegativity on the validated box, sampled densely in the
        // concentration and at every integer count.
        'scan: for jd in 0..=raw.d_max {
            for ic in 0..=VALIDATION_GRID {
                let y1 = raw.u_max * ic as f64 / VALIDATION_GRID as f64;
                let y2 = jd as f64;
                let v = r.rate.eval(y1, y2);
                if v < 0.0 {
                    errors.push(NetworkError::NegativeRate { id, y1, y2, value: v });
                    break 'scan;
                }
            }
        }

        // Slow reactions with a negative discrete jump must have a vanishing
        // rate where the jump would leave the count lattice.
        if !r.class.is_fast() && r.gamma_d < 0 {
            let bound = (-r.gamma_d) as u32;
            for d in 0..bound.min(raw.d_max + 1) {
                let mut worst: f64 = 0.0;
                for ic in 0..=VALIDATION_GRID {
                    let y1 = raw.u_max * ic as f64 / VALIDATION_GRID as f64;
                    worst = worst.max(r.rate.eval(y1, d as f64).abs());
                }
                if worst > 1e-12 {
                    warnings.push(format!(
                        "reaction {id}: rate does not vanish at count {d}, a jump of {} can leave the lattice",
                        r.gamma_d
                    ));
                    break;
                }
            }
        }
    }

    if !errors.is_empty() {
        return Err(errors);
    }

    let mut net = ReactionNetwork {
        fast_c: Vec::new(),
        fast_mixed: Vec::new(),
        slow_mixed: Vec::new(),
        slow_d: Vec::new(),
        u_max: raw.u_max,
        d_max: raw.d_max,
        truncation: raw.truncation,
        warnings,
    };
    for (id, r) in raw.reactions.iter().enumerate() {
        let slot = match r.class {
            ReactionClass::FastC => &mut net.fast_c,
            ReactionClass::FastMixed => &mut net.fast_mixed,
            ReactionClass::SlowMixed => &mut net.slow_mixed,
            ReactionClass::SlowD => &mut net.slow_d,
        };
        slot.push((id, r.clone()));
    }

    if net.fast_c.is_empty() && net.fast_mixed.is_empty() {
        net.warnings
            .push("no fast onsite reactions: the debit function is identically zero".into());
    }

    // Dissipativity check on F (global-existence guard): warn, never fail.
    if net.debit_f(0.0, 0.0) < 0.0
        || (1..=raw.d_max).any(|d| net.debit_f(0.0, d as f64) < 0.0)
    {
        net.warnings
            .push("debit function is negative at zero concentration".into());
    }
    if let Some(rho1) = raw.rho1 {
        'outer: for jd in 0..=raw.d_max {
            for ic in 1..=VALIDATION_GRID {
                let y1 = rho1 + (raw.u_max.max(2.0 * rho1) - rho1) * ic as f64 / VALIDATION_GRID as f64;
                if net.debit_f(y1, jd as f64) >= 0.0 {
                    net.warnings.push(format!(
                        "debit function is not negative beyond rho1={rho1} (F({y1}, {jd}) >= 0)"
                    ));
                    break 'outer;
                }
            }
        }
    }

    Ok(net)
}

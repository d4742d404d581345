//! The limiting piecewise deterministic Markov process.
//!
//! Between jumps of the discrete component, the continuous field obeys the
//! reaction–diffusion flow `∂_t v = Δv + F(v, ν)`, integrated by Strang
//! splitting: a half step of the exact spectral heat semigroup, a full
//! classical RK4 step of the pointwise reaction `v' = F(v, ν)`, another half
//! heat step. Jump times invert the survivor function
//! `H(t) = exp(−∫_0^t Λ)` against a unit exponential threshold; the hazard
//! integral is accumulated by the trapezoid rule along the flow and the
//! crossing is localized by bisection inside the step that overshoots.
//! Post-jump discrete states are drawn from the transition measure, each
//! slow channel weighted by its rate; the field does not jump.

use rand::Rng;
use thiserror::Error;

use crate::lattice::{macro_weights, Field, Grid, HeatPlan, WeightKind};
use crate::network::{NetworkError, RatePolynomial, ReactionNetwork, TruncationSpec};
use crate::rng::exp_variate;
use crate::traj::{JumpKind, JumpRecord, Snapshot, Trajectory, TruncationReason};

#[derive(Debug, Error, PartialEq)]
pub enum PdmpError {
    #[error("flow produced a non-finite field value (step {h})")]
    StepRejected { h: f64 },
    #[error("transition sampled at zero total hazard")]
    ZeroHazard,
    #[error(transparent)]
    Rate(#[from] NetworkError),
}

/// Solver resolution: `m` grid points (power of two) and nominal flow step.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SolverParams {
    pub m: usize,
    pub h: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self { m: 256, h: 1e-3 }
    }
}

/// State of the limit process: the continuous field on the solver grid, the
/// discrete counts, and the hazard bookkeeping of the current flow segment.
#[derive(Debug, Clone, PartialEq)]
pub struct PdmpState {
    pub t: f64,
    pub field: Field,
    pub nu: Vec<i64>,
    /// `∫ Λ` accumulated along the current segment; strictly below
    /// `exp_threshold` between jumps.
    pub hazard_accum: f64,
    /// The Exp(1) draw the accumulated hazard races against.
    pub exp_threshold: f64,
}

/// One slow channel compiled against the solver grid.
struct SlowChannel {
    id: usize,
    mixed: bool,
    l0: usize,
    gamma_d: i64,
    rate: RatePolynomial,
    /// For mixed channels: `∫_{I_i} a` per site of the macrosite.
    a_site: Vec<f64>,
}

/// Compiled flow + jump machinery for one network on one solver grid.
pub struct PdmpEngine {
    grid: Grid,
    net: ReactionNetwork,
    trunc: Option<TruncationSpec>,
    params: SolverParams,
    half_heat: HeatPlan,
    /// Macrosite of each grid point.
    macro_of: Vec<usize>,
    channels: Vec<SlowChannel>,
    scratch: Vec<rustfft::num_complex::Complex<f64>>,
}

impl PdmpEngine {
    pub fn new(net: &ReactionNetwork, params: SolverParams, n_macro: usize) -> Self {
        let grid = Grid::new(params.m, n_macro).expect("solver grid must be a multiple of k");
        assert!(params.m.is_power_of_two(), "solver grid must be a power of two");
        assert!(params.h > 0.0);
        let macro_of = (0..params.m).map(|i| grid.macro_of0(i)).collect();
        let mut channels = Vec::new();
        for l0 in 0..n_macro {
            for (id, r) in net.slow_mixed.iter() {
                let a = r.a_weight.as_ref().expect("validated");
                channels.push(SlowChannel {
                    id: *id,
                    mixed: true,
                    l0,
                    gamma_d: r.gamma_d as i64,
                    rate: r.rate.clone(),
                    a_site: macro_weights(&a.coeffs, grid, l0 + 1, WeightKind::A).unwrap(),
                });
            }
            for (id, r) in net.slow_d.iter() {
                channels.push(SlowChannel {
                    id: *id,
                    mixed: false,
                    l0,
                    gamma_d: r.gamma_d as i64,
                    rate: r.rate.clone(),
                    a_site: Vec::new(),
                });
            }
        }
        Self {
            grid,
            net: net.clone(),
            trunc: net.truncation,
            params,
            half_heat: HeatPlan::new(grid, params.h / 2.0),
            macro_of,
            channels,
            scratch: Vec::new(),
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn params(&self) -> SolverParams {
        self.params
    }

    /// Fresh state at `t = 0` with the first exponential threshold drawn.
    pub fn init_state<R: Rng>(&self, field: Field, nu: Vec<i64>, rng: &mut R) -> PdmpState {
        assert_eq!(field.grid(), self.grid);
        assert_eq!(nu.len(), self.grid.n_macro());
        PdmpState {
            t: 0.0,
            field,
            nu,
            hazard_accum: 0.0,
            exp_threshold: exp_variate(rng, 1.0),
        }
    }

    fn eval(&self, id: usize, poly: &RatePolynomial, y1: f64, y2: f64) -> Result<f64, PdmpError> {
        let mut v = poly.eval(y1, y2);
        if v < 0.0 {
            if v >= -1e-9 {
                v = 0.0;
            } else {
                return Err(NetworkError::NegativeRateAtRuntime { id, y1, y2, value: v }.into());
            }
        }
        if let Some(t) = &self.trunc {
            let eta = t.eta_n(y1, y2);
            if eta < 1.0 {
                v *= eta;
            }
        }
        Ok(v)
    }

    /// Rate of one slow channel at `(field, nu)`; mixed channels read the
    /// weighted site average `Σ_i a_i field_i` over their macrosite, the
    /// exact integral `∫_{J_ℓ} a v` of the step function.
    fn channel_rate(&self, ch: &SlowChannel, field: &Field, nu: &[i64]) -> Result<f64, PdmpError> {
        let d = nu[ch.l0] as f64;
        if ch.mixed {
            let mut avg = 0.0;
            for (w, j) in ch.a_site.iter().zip(self.grid.macro_sites0(ch.l0)) {
                avg += w * field.values()[j];
            }
            self.eval(ch.id, &ch.rate, avg, d)
        } else {
            self.eval(ch.id, &ch.rate, 0.0, d)
        }
    }

    /// Total jump hazard `Λ(field, nu)`.
    pub fn hazard(&self, field: &Field, nu: &[i64]) -> Result<f64, PdmpError> {
        let mut acc = 0.0;
        for ch in &self.channels {
            acc += self.channel_rate(ch, field, nu)?;
        }
        Ok(acc)
    }

    /// Per-channel `(rate, macrosite0, gamma_d)` triples at a state; the
    /// jump part of the generator sums `rate · [φ(ν + γ e_ℓ) − φ(ν)]` over
    /// these.
    pub fn slow_jump_terms(
        &self,
        field: &Field,
        nu: &[i64],
    ) -> Result<Vec<(f64, usize, i64)>, PdmpError> {
        self.channels
            .iter()
            .map(|ch| Ok((self.channel_rate(ch, field, nu)?, ch.l0, ch.gamma_d)))
            .collect()
    }

    /// One Strang splitting step of size `h`: half heat, full RK4 reaction,
    /// half heat.
    pub fn flow_step(&mut self, field: &Field, nu: &[i64], h: f64) -> Result<Field, PdmpError> {
        assert!(h > 0.0);
        let built;
        let plan = if h.to_bits() == self.params.h.to_bits() {
            &self.half_heat
        } else {
            built = HeatPlan::new(self.grid, h / 2.0);
            &built
        };
        let mut buf = std::mem::take(&mut self.scratch);
        let stage = plan.apply_into(field.values(), &mut buf);
        let reacted = self.reaction_rk4(&stage, nu, h);
        let out = plan.apply_into(reacted.values(), &mut buf);
        self.scratch = buf;
        if !out.values().iter().all(|v| v.is_finite()) {
            return Err(PdmpError::StepRejected { h });
        }
        Ok(out)
    }

    /// Classical 4-stage Runge–Kutta on the pointwise reaction
    /// `u' = F(u, ν_{ℓ(x)})`.
    fn reaction_rk4(&self, field: &Field, nu: &[i64], h: f64) -> Field {
        let n = self.grid.n_sites();
        let mut out = vec![0.0; n];
        for i in 0..n {
            let d = nu[self.macro_of[i]] as f64;
            let u = field.values()[i];
            let k1 = self.net.debit_f(u, d);
            let k2 = self.net.debit_f(u + 0.5 * h * k1, d);
            let k3 = self.net.debit_f(u + 0.5 * h * k2, d);
            let k4 = self.net.debit_f(u + h * k3, d);
            out[i] = u + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        Field::new(self.grid, out)
    }

    /// Advance the flow until the hazard crosses the threshold or the
    /// horizon arrives. Returns whether a jump occurred; on a jump the state
    /// sits at the inverted survivor time with
    /// `hazard_accum == exp_threshold`.
    pub fn advance_to_jump(
        &mut self,
        state: &mut PdmpState,
        horizon: f64,
        hazard_tol: f64,
    ) -> Result<bool, PdmpError> {
        debug_assert!(state.hazard_accum < state.exp_threshold);
        let mut lam0 = self.hazard(&state.field, &state.nu)?;
        while state.t < horizon - 1e-14 {
            let h = self.params.h.min(horizon - state.t);
            let next = self.flow_step(&state.field, &state.nu, h)?;
            let lam1 = self.hazard(&next, &state.nu)?;
            let dh = 0.5 * (lam0 + lam1) * h;
            if state.hazard_accum + dh >= state.exp_threshold {
                // Crossing inside (t, t+h): bisect the sub-step length.
                let need = state.exp_threshold - state.hazard_accum;
                let mut lo = 0.0;
                let mut hi = h;
                let mut cut = next;
                let mut lam_cut = lam1;
                let mut acc = dh;
                for _ in 0..64 {
                    if (acc - need).abs() <= hazard_tol * lam_cut.max(1.0) || hi - lo < 1e-13 {
                        break;
                    }
                    let mid = 0.5 * (lo + hi);
                    let trial = self.flow_step(&state.field, &state.nu, mid)?;
                    let lam_mid = self.hazard(&trial, &state.nu)?;
                    let acc_mid = 0.5 * (lam0 + lam_mid) * mid;
                    if acc_mid >= need {
                        hi = mid;
                        cut = trial;
                        lam_cut = lam_mid;
                        acc = acc_mid;
                    } else {
                        lo = mid;
                    }
                }
                state.t += hi;
                state.field = cut;
                state.hazard_accum = state.exp_threshold;
                return Ok(true);
            }
            state.t += h;
            state.field = next;
            state.hazard_accum += dh;
            lam0 = lam1;
        }
        state.t = horizon;
        Ok(false)
    }

    /// Draw the post-jump discrete state: channel `(ℓ, r)` with probability
    /// `λ_r/Λ`; only the counts move.
    pub fn sample_transition<R: Rng>(
        &self,
        field: &Field,
        nu: &[i64],
        rng: &mut R,
    ) -> Result<(Vec<i64>, JumpRecord), PdmpError> {
        let mut rates = Vec::with_capacity(self.channels.len());
        let mut total = 0.0;
        for ch in &self.channels {
            let r = self.channel_rate(ch, field, nu)?;
            total += r;
            rates.push(r);
        }
        if total <= 0.0 {
            return Err(PdmpError::ZeroHazard);
        }
        let target: f64 = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = self.channels.len() - 1;
        for (i, r) in rates.iter().enumerate() {
            acc += r;
            if target < acc {
                chosen = i;
                break;
            }
        }
        let ch = &self.channels[chosen];
        let mut after = nu.to_vec();
        after[ch.l0] += ch.gamma_d;
        let record = JumpRecord {
            t: 0.0, // caller stamps the time
            kind: if ch.mixed {
                JumpKind::SlowMixed
            } else {
                JumpKind::SlowD
            },
            l: ch.l0 + 1,
            r: ch.id,
            gamma_d: ch.gamma_d as i32,
            nu_before: Some(nu.to_vec()),
            nu_after: Some(after.clone()),
        };
        Ok((after, record))
    }
}

/// Budgets and output cadence for a PDMP run.
#[derive(Debug, Clone)]
pub struct PdmpRecorder {
    pub dt_out: f64,
    pub max_jumps: u64,
    /// Tolerance scale for the survivor-function inversion.
    pub hazard_tol: f64,
    pub wall_limit: Option<std::time::Duration>,
}

impl PdmpRecorder {
    pub fn new(dt_out: f64) -> Self {
        Self {
            dt_out,
            max_jumps: 1_000_000,
            hazard_tol: 1e-8,
            wall_limit: None,
        }
    }
}

/// A running simulation that can be advanced in stages; continuing from a
/// stop time with the same stream yields exactly the longer run.
pub struct PdmpSim<'a> {
    pub engine: &'a mut PdmpEngine,
    pub state: PdmpState,
    pub jumps: Vec<JumpRecord>,
    pub truncated: Option<TruncationReason>,
    min_field: f64,
    started: std::time::Instant,
}

impl<'a> PdmpSim<'a> {
    pub fn new<R: Rng>(
        engine: &'a mut PdmpEngine,
        field: Field,
        nu: Vec<i64>,
        rng: &mut R,
    ) -> Self {
        let state = engine.init_state(field, nu, rng);
        let min0 = state
            .field
            .values()
            .iter()
            .fold(f64::INFINITY, |m, &v| m.min(v));
        Self {
            engine,
            state,
            jumps: Vec::new(),
            truncated: None,
            min_field: min0,
            started: std::time::Instant::now(),
        }
    }

    /// Advance to `t_stop`, appending any jumps along the way.
    pub fn run_until<R: Rng>(
        &mut self,
        t_stop: f64,
        rec: &PdmpRecorder,
        rng: &mut R,
    ) -> Result<(), PdmpError> {
        while self.state.t < t_stop - 1e-14 {
            if self.jumps.len() as u64 >= rec.max_jumps {
                self.truncated = Some(TruncationReason::JumpBudget);
                return Ok(());
            }
            if let Some(limit) = rec.wall_limit {
                if self.started.elapsed() > limit {
                    self.truncated = Some(TruncationReason::WallClock);
                    return Ok(());
                }
            }
            let jumped =
                self.engine
                    .advance_to_jump(&mut self.state, t_stop, rec.hazard_tol)?;
            self.track_min();
            if !jumped {
                break;
            }
            let (after, mut record) =
                self.engine
                    .sample_transition(&self.state.field, &self.state.nu, rng)?;
            record.t = self.state.t;
            self.state.nu = after;
            self.jumps.push(record);
            self.state.hazard_accum = 0.0;
            self.state.exp_threshold = exp_variate(rng, 1.0);
        }
        Ok(())
    }

    fn track_min(&mut self) {
        for &v in self.state.field.values() {
            if v < self.min_field {
                self.min_field = v;
            }
        }
    }

    pub fn min_field(&self) -> f64 {
        self.min_field
    }
}

/// Full run with snapshots on the uniform output grid and the complete jump
/// log. The field is never clamped; a negative excursion is reported in the
/// trajectory warnings instead.
pub fn simulate_pdmp<R: Rng>(
    engine: &mut PdmpEngine,
    field0: Field,
    nu0: Vec<i64>,
    horizon: f64,
    rec: &PdmpRecorder,
    rng: &mut R,
) -> Result<Trajectory, PdmpError> {
    assert!(horizon > 0.0 && rec.dt_out > 0.0);
    let times = Trajectory::output_times(horizon, rec.dt_out);
    let grid = engine.grid();
    let mut sim = PdmpSim::new(engine, field0, nu0, rng);
    let mut snapshots = Vec::with_capacity(times.len());
    for &t in &times {
        if t > 0.0 {
            sim.run_until(t, rec, rng)?;
            if sim.truncated.is_some() {
                break;
            }
        }
        snapshots.push(Snapshot {
            t,
            u_c: sim.state.field.values().to_vec(),
            u_d: sim.state.nu.clone(),
        });
    }
    let mut warnings = Vec::new();
    if sim.min_field < 0.0 {
        warnings.push(format!(
            "field dipped to {:.3e}; values reported unclamped",
            sim.min_field
        ));
    }
    let truncated = sim.truncated;
    let jumps = sim.jumps;
    Ok(Trajectory {
        grid,
        mu: None,
        snapshots,
        jumps,
        truncated,
        warnings,
    })
}

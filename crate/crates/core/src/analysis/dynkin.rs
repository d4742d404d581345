//! Martingale-residual diagnostics.
//!
//! For a cylinder function `φ(u) = g(⟨u_C, f⟩₂, u_D)` the statistic
//! `M_φ(t) = φ(u(t)) − φ(u(0)) − ∫_0^t 𝒜φ(u(s)) ds` has mean zero under the
//! law generated by `𝒜`; its empirical mean over replicates, compared to its
//! standard error, certifies that a simulator and a generator describe the
//! same process. The generator is summed channel by channel — for the jump
//! engine using exactly the rates and quantized jumps the engine fires, for
//! the limit engine using the drift term `⟨f·g', Δu + F⟩₂` plus the slow
//! jump sum.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{discrete_laplacian, inner, Field, Grid};
use crate::network::ReactionNetwork;
use crate::pdmp::{PdmpEngine, PdmpError, SolverParams};
use crate::ssa::{Event, MicroState, Observer, SsaEngine, SsaError};
use crate::traj::Trajectory;

#[derive(Debug, Error)]
pub enum DynkinError {
    #[error("snapshot spacing {spacing} too coarse for time quadrature (need <= {need})")]
    QuadratureTooCoarse { spacing: f64, need: f64 },
    #[error("requested time {t} is not on the snapshot grid")]
    TimeNotOnGrid { t: f64 },
    #[error("trajectory has no snapshots")]
    Empty,
    #[error(transparent)]
    Ssa(#[from] SsaError),
    #[error(transparent)]
    Pdmp(#[from] PdmpError),
}

/// Scalar profile `g(s)`: bounded, smooth, with an analytic derivative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarShape {
    /// `g ≡ 1`.
    Flat,
    /// `tanh(c s)`.
    Tanh { c: f64 },
    /// `exp(−((s − center)/width)²)`.
    Gaussian { center: f64, width: f64 },
}

impl ScalarShape {
    pub fn eval(&self, s: f64) -> f64 {
        match self {
            ScalarShape::Flat => 1.0,
            ScalarShape::Tanh { c } => (c * s).tanh(),
            ScalarShape::Gaussian { center, width } => {
                let z = (s - center) / width;
                (-z * z).exp()
            }
        }
    }

    pub fn derivative(&self, s: f64) -> f64 {
        match self {
            ScalarShape::Flat => 0.0,
            ScalarShape::Tanh { c } => {
                let t = (c * s).tanh();
                c * (1.0 - t * t)
            }
            ScalarShape::Gaussian { center, width } => {
                let z = (s - center) / width;
                -2.0 * z / width * (-z * z).exp()
            }
        }
    }
}

/// Discrete profile `h(d)`, bounded on all of `ℕ^k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DiscreteShape {
    One,
    /// `cos(θ Σ_ℓ d_ℓ)`.
    CosSum { theta: f64 },
}

impl DiscreteShape {
    pub fn eval(&self, d: &[i64]) -> f64 {
        match self {
            DiscreteShape::One => 1.0,
            DiscreteShape::CosSum { theta } => (theta * d.iter().sum::<i64>() as f64).cos(),
        }
    }
}

/// Spatial test function paired with the field through `⟨u, P f⟩₂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    Constant,
    Sine { cycles: u32 },
    Cosine { cycles: u32 },
}

impl TestFunction {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            TestFunction::Constant => 1.0,
            TestFunction::Sine { cycles } => {
                (2.0 * std::f64::consts::PI * *cycles as f64 * x).sin()
            }
            TestFunction::Cosine { cycles } => {
                (2.0 * std::f64::consts::PI * *cycles as f64 * x).cos()
            }
        }
    }

    /// Exact projection onto a lattice (closed-form antiderivatives).
    pub fn project(&self, grid: Grid) -> Field {
        match self {
            TestFunction::Constant => Field::constant(grid, 1.0),
            TestFunction::Sine { cycles } => crate::config::Profile::Sine {
                offset: 0.0,
                amplitude: 1.0,
                cycles: *cycles,
            }
            .project(grid),
            TestFunction::Cosine { cycles } => {
                let n = grid.n_sites();
                let w = 2.0 * std::f64::consts::PI * *cycles as f64;
                let vals = (0..n)
                    .map(|j| {
                        let a = j as f64 / n as f64;
                        let b = (j + 1) as f64 / n as f64;
                        n as f64 * ((w * b).sin() - (w * a).sin()) / w
                    })
                    .collect();
                Field::new(grid, vals)
            }
        }
    }
}

/// `φ(u) = g(⟨u_C, P f⟩₂, u_D) = g(s) · h(u_D)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CylinderTestFn {
    pub scalar: ScalarShape,
    pub discrete: DiscreteShape,
    pub f: TestFunction,
}

/// The default catalog used by the residual checks.
pub fn catalog() -> Vec<CylinderTestFn> {
    vec![
        CylinderTestFn {
            scalar: ScalarShape::Tanh { c: 2.0 },
            discrete: DiscreteShape::One,
            f: TestFunction::Constant,
        },
        CylinderTestFn {
            scalar: ScalarShape::Gaussian {
                center: 0.2,
                width: 0.5,
            },
            discrete: DiscreteShape::CosSum { theta: 1.0 },
            f: TestFunction::Constant,
        },
        CylinderTestFn {
            scalar: ScalarShape::Tanh { c: 3.0 },
            discrete: DiscreteShape::CosSum { theta: 0.6 },
            f: TestFunction::Sine { cycles: 1 },
        },
    ]
}

/// A cylinder function compiled against one lattice.
pub struct PhiContext {
    pub phi: CylinderTestFn,
    grid: Grid,
    f_proj: Field,
    lap_f: Field,
}

impl PhiContext {
    pub fn new(phi: CylinderTestFn, grid: Grid) -> Self {
        let f_proj = phi.f.project(grid);
        let lap_f = discrete_laplacian(&f_proj);
        Self {
            phi,
            grid,
            f_proj,
            lap_f,
        }
    }

    pub fn s_of(&self, u: &[f64]) -> f64 {
        let n = self.grid.n_sites() as f64;
        self.f_proj
            .values()
            .iter()
            .zip(u)
            .map(|(f, u)| f * u)
            .sum::<f64>()
            / n
    }

    pub fn eval(&self, u: &[f64], d: &[i64]) -> f64 {
        self.phi.scalar.eval(self.s_of(u)) * self.phi.discrete.eval(d)
    }
}

/// `𝒜φ` for the jump engine at the engine's current state, summed over all
/// channels with the exact indexed rates (cutoff and guard included).
pub fn micro_generator_phi(engine: &SsaEngine, ctx: &PhiContext) -> f64 {
    let state = engine.state();
    let grid = state.grid();
    let n = grid.n_sites();
    let inv_mu_n = 1.0 / (state.mu() * n as f64);
    let f = ctx.f_proj.values();
    let d = state.u_d();
    let u = state.u_c_field();
    let s = ctx.s_of(u.values());
    let g = ctx.phi.scalar;
    let h = ctx.phi.discrete.eval(d);
    let phi_here = g.eval(s) * h;

    let mut acc = 0.0;
    for ch in 0..engine.index().len() {
        let rate = engine.index().rate(ch);
        if rate == 0.0 {
            continue;
        }
        let diff = match engine.decode(ch) {
            Event::FastOnsite { j, r } => {
                let ds = engine.fast_c_gamma(r) as f64 * f[j] * inv_mu_n;
                (g.eval(s + ds) - g.eval(s)) * h
            }
            Event::FastMixed { j, r } => {
                let ds = engine.fast_mixed_gamma(r) as f64 * f[j] * inv_mu_n;
                (g.eval(s + ds) - g.eval(s)) * h
            }
            Event::DiffLeft { j } => {
                let dst = (j + n - 1) % n;
                let ds = (f[dst] - f[j]) * inv_mu_n;
                (g.eval(s + ds) - g.eval(s)) * h
            }
            Event::DiffRight { j } => {
                let dst = (j + 1) % n;
                let ds = (f[dst] - f[j]) * inv_mu_n;
                (g.eval(s + ds) - g.eval(s)) * h
            }
            Event::SlowMixed { l, r } => {
                let quanta = engine.slow_mixed_quanta(r);
                let mut ds = 0.0;
                for j in grid.macro_sites0(l) {
                    ds += quanta[j] as f64 * f[j];
                }
                ds *= inv_mu_n;
                let mut d2 = d.to_vec();
                d2[l] += engine.slow_mixed_gamma_d(r);
                g.eval(s + ds) * ctx.phi.discrete.eval(&d2) - phi_here
            }
            Event::SlowPure { l, r } => {
                let mut d2 = d.to_vec();
                d2[l] += engine.slow_d_gamma_d(r);
                g.eval(s) * ctx.phi.discrete.eval(&d2) - phi_here
            }
        };
        acc += rate * diff;
    }
    acc
}

/// `𝒜^∞ φ` at a limit-process state: the drift pairing
/// `g'(s) h(ν) (⟨Δf, u⟩₂ + ⟨f, F(u, ν)⟩₂)` plus the slow jump sum.
pub fn limit_generator_phi(
    engine: &PdmpEngine,
    net: &ReactionNetwork,
    ctx: &PhiContext,
    field: &Field,
    nu: &[i64],
) -> Result<f64, PdmpError> {
    let grid = field.grid();
    let n = grid.n_sites() as f64;
    let s = ctx.s_of(field.values());
    let g = ctx.phi.scalar;
    let h = ctx.phi.discrete.eval(nu);

    // ⟨Δ_M f, u⟩₂ equals ⟨f, Δ_M u⟩₂ by self-adjointness.
    let lap_term = inner(&ctx.lap_f, field);
    let mut f_term = 0.0;
    for (i, (&fv, &uv)) in ctx.f_proj.values().iter().zip(field.values()).enumerate() {
        let d = nu[grid.macro_of0(i)] as f64;
        f_term += fv * net.debit_f(uv, d);
    }
    f_term /= n;
    let mut acc = g.derivative(s) * h * (lap_term + f_term);

    let phi_here = g.eval(s) * h;
    for (rate, l0, gamma_d) in engine.slow_jump_terms(field, nu)? {
        if rate == 0.0 {
            continue;
        }
        let mut d2 = nu.to_vec();
        d2[l0] += gamma_d;
        acc += rate * (g.eval(s) * ctx.phi.discrete.eval(&d2) - phi_here);
    }
    Ok(acc)
}

/// Which generator a residual is computed against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorKind {
    /// The jump engine's generator at scale `(N, μ)`.
    Micro,
    /// The limit generator on the solver grid.
    Limit,
}

/// Mean and standard error of the residual at one time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualStat {
    pub t: f64,
    pub mean: f64,
    pub std_error: f64,
}

/// Empirical Dynkin residual over an ensemble of recorded trajectories:
/// `𝒜φ` is evaluated at every snapshot and integrated by the trapezoid
/// rule; the residual mean ± SE is reported at each requested time.
///
/// Snapshots must resolve the horizon to 1% or better.
pub fn dynkin_residual(
    trajectories: &[Trajectory],
    net: &ReactionNetwork,
    generator: GeneratorKind,
    phi: &CylinderTestFn,
    times: &[f64],
) -> Result<Vec<ResidualStat>, DynkinError> {
    let residuals = dynkin_residual_samples(trajectories, net, generator, phi, times)?;
    Ok(times
        .iter()
        .zip(residuals)
        .map(|(&t, rs)| {
            let n = rs.len() as f64;
            let mean = rs.iter().sum::<f64>() / n;
            let var = rs.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1.0);
            ResidualStat {
                t,
                mean,
                std_error: (var / n).sqrt(),
            }
        })
        .collect())
}

/// Per-(time, replicate) residual samples `M_φ(t)`; callers needing
/// mean ± SE can use [`dynkin_residual`], callers merging batches use this.
pub fn dynkin_residual_samples(
    trajectories: &[Trajectory],
    net: &ReactionNetwork,
    generator: GeneratorKind,
    phi: &CylinderTestFn,
    times: &[f64],
) -> Result<Vec<Vec<f64>>, DynkinError> {
    let first = trajectories.first().ok_or(DynkinError::Empty)?;
    let snaps = &first.snapshots;
    if snaps.len() < 2 {
        return Err(DynkinError::Empty);
    }
    let spacing = snaps[1].t - snaps[0].t;
    let t_max = snaps.last().unwrap().t;
    if spacing > 0.01 * t_max + 1e-12 {
        return Err(DynkinError::QuadratureTooCoarse {
            spacing,
            need: 0.01 * t_max,
        });
    }
    let grid = first.grid;
    let ctx = PhiContext::new(*phi, grid);

    // Map requested times onto snapshot indices.
    let mut idx = Vec::with_capacity(times.len());
    for &t in times {
        let i = snaps
            .iter()
            .position(|s| (s.t - t).abs() <= 1e-9 * t.max(1.0))
            .ok_or(DynkinError::TimeNotOnGrid { t })?;
        idx.push(i);
    }

    // One engine scaffold reused across snapshots for the micro generator.
    let mut micro_scaffold = match generator {
        GeneratorKind::Micro => {
            let mu = first.mu.expect("micro trajectories carry mu");
            let state = MicroState::from_snapshot(grid, mu, &snaps[0]);
            Some(SsaEngine::new(net, state, true)?)
        }
        GeneratorKind::Limit => None,
    };
    let limit_scaffold = match generator {
        GeneratorKind::Limit => Some(PdmpEngine::new(
            net,
            SolverParams {
                m: grid.n_sites(),
                h: 1e-3,
            },
            grid.n_macro(),
        )),
        GeneratorKind::Micro => None,
    };

    let mut residuals: Vec<Vec<f64>> = vec![Vec::with_capacity(trajectories.len()); times.len()];
    for traj in trajectories {
        assert_eq!(traj.snapshots.len(), snaps.len(), "uneven output grids");
        let mut a_vals = Vec::with_capacity(traj.snapshots.len());
        for snap in &traj.snapshots {
            let a = match generator {
                GeneratorKind::Micro => {
                    let engine = micro_scaffold.as_mut().unwrap();
                    let mu = traj.mu.expect("micro trajectories carry mu");
                    engine.set_state(MicroState::from_snapshot(grid, mu, snap))?;
                    micro_generator_phi(engine, &ctx)
                }
                GeneratorKind::Limit => {
                    let engine = limit_scaffold.as_ref().unwrap();
                    let field = Field::new(grid, snap.u_c.clone());
                    limit_generator_phi(engine, net, &ctx, &field, &snap.u_d)?
                }
            };
            a_vals.push(a);
        }
        let phi0 = ctx.eval(&traj.snapshots[0].u_c, &traj.snapshots[0].u_d);
        let mut integral = 0.0;
        let mut cum = vec![0.0; a_vals.len()];
        for i in 1..a_vals.len() {
            let dt = traj.snapshots[i].t - traj.snapshots[i - 1].t;
            integral += 0.5 * (a_vals[i] + a_vals[i - 1]) * dt;
            cum[i] = integral;
        }
        for (slot, &i) in idx.iter().enumerate() {
            let snap = &traj.snapshots[i];
            let phi_t = ctx.eval(&snap.u_c, &snap.u_d);
            residuals[slot].push(phi_t - phi0 - cum[i]);
        }
    }

    Ok(residuals)
}

/// Exact path accumulator: hooks the jump engine and integrates `𝒜φ` over
/// every holding interval, which reproduces the martingale statistic without
/// snapshot quadrature error.
pub struct DynkinAccumulator {
    ctxs: Vec<PhiContext>,
    integrals: Vec<f64>,
    phi0: Option<Vec<f64>>,
}

impl DynkinAccumulator {
    pub fn new(phis: &[CylinderTestFn], grid: Grid) -> Self {
        Self {
            ctxs: phis.iter().map(|p| PhiContext::new(*p, grid)).collect(),
            integrals: vec![0.0; phis.len()],
            phi0: None,
        }
    }

    /// `M_φ(T)` per test function, given the engine in its final state.
    pub fn residuals(&self, engine: &SsaEngine) -> Vec<f64> {
        let u = engine.state().u_c_field();
        let d = engine.state().u_d();
        let phi0 = self.phi0.as_ref().expect("run before reading residuals");
        self.ctxs
            .iter()
            .zip(&self.integrals)
            .zip(phi0)
            .map(|((ctx, integral), p0)| ctx.eval(u.values(), d) - p0 - integral)
            .collect()
    }
}

impl Observer for DynkinAccumulator {
    fn on_hold(&mut self, engine: &SsaEngine, hold: f64) {
        if self.phi0.is_none() {
            let u = engine.state().u_c_field();
            let d = engine.state().u_d();
            self.phi0 = Some(self.ctxs.iter().map(|c| c.eval(u.values(), d)).collect());
        }
        for (ctx, integral) in self.ctxs.iter().zip(self.integrals.iter_mut()) {
            *integral += micro_generator_phi(engine, ctx) * hold;
        }
    }
}

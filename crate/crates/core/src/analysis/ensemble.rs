//! Ensemble orchestration: many independent replicates of one engine, run in
//! parallel, reduced to per-(observable, time) summaries.
//!
//! Replicate `i` draws its stream from `(root_seed, i)`, so results are
//! independent of scheduling order and bit-reproducible for a fixed root
//! seed on one platform.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::dynkin::TestFunction;
use super::stats::SampleSummary;
use crate::lattice::{inner, Field, Grid};
use crate::network::ReactionNetwork;
use crate::pdmp::{simulate_pdmp, PdmpEngine, PdmpRecorder, SolverParams};
use crate::ssa::{init_state, simulate, RecorderSpec, SsaEngine};
use crate::traj::Trajectory;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("{failed} of {total} replicates failed (first: {first})")]
    TooManyFailures {
        failed: usize,
        total: usize,
        first: String,
    },
    #[error("need at least 2 replicates, got {got}")]
    TooFewReplicates { got: usize },
}

/// Which simulator drives the replicates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Engine {
    Ssa { grid: Grid, mu: f64 },
    Pdmp { params: SolverParams },
}

/// Scalar path functionals extracted at every output time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Observable {
    /// `⟨u_C, P f⟩₂` — resolution-independent spatial pairing.
    InnerProduct { f: TestFunction },
    /// Field value at the site containing `x0`.
    PointValue { x0: f64 },
    /// Discrete count of macrosite `l` (1-based).
    MacroCount { l: usize },
    /// Number of discrete jumps up to the output time.
    JumpCount,
}

impl Observable {
    pub fn label(&self) -> String {
        match self {
            Observable::InnerProduct { f } => match f {
                TestFunction::Constant => "ip_const".into(),
                TestFunction::Sine { cycles } => format!("ip_sin{cycles}"),
                TestFunction::Cosine { cycles } => format!("ip_cos{cycles}"),
            },
            Observable::PointValue { x0 } => format!("point_{x0}"),
            Observable::MacroCount { l } => format!("macro_{l}"),
            Observable::JumpCount => "jumps".into(),
        }
    }

    /// Discrete observables are compared by total variation rather than by
    /// Wasserstein distance.
    pub fn is_discrete(&self) -> bool {
        matches!(self, Observable::MacroCount { .. } | Observable::JumpCount)
    }

    fn extract(&self, traj: &Trajectory, f_proj: Option<&Field>) -> Vec<f64> {
        traj.snapshots
            .iter()
            .map(|snap| match self {
                Observable::InnerProduct { .. } => {
                    let f = f_proj.expect("projection prepared");
                    let u = Field::new(traj.grid, snap.u_c.clone());
                    inner(f, &u)
                }
                Observable::PointValue { x0 } => {
                    Field::new(traj.grid, snap.u_c.clone()).at(*x0)
                }
                Observable::MacroCount { l } => snap.u_d[*l - 1] as f64,
                Observable::JumpCount => {
                    traj.jumps.iter().filter(|j| j.t <= snap.t + 1e-12).count() as f64
                }
            })
            .collect()
    }
}

/// Everything a reproducible ensemble needs.
#[derive(Debug, Clone)]
pub struct EnsembleSpec {
    pub engine: Engine,
    pub horizon: f64,
    pub dt_out: f64,
    pub replicates: usize,
    pub root_seed: u64,
    pub observables: Vec<Observable>,
    pub guard: bool,
    pub max_events: u64,
    pub max_jumps: u64,
    pub wall_seconds: Option<f64>,
}

impl EnsembleSpec {
    pub fn new(engine: Engine, horizon: f64, dt_out: f64, replicates: usize, root_seed: u64) -> Self {
        Self {
            engine,
            horizon,
            dt_out,
            replicates,
            root_seed,
            observables: Vec::new(),
            guard: true,
            max_events: 10_000_000_000,
            max_jumps: 1_000_000,
            wall_seconds: None,
        }
    }
}

pub use crate::config::InitialSection as InitialCondition;

/// Per-(observable, time) summaries plus the failure ledger.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub labels: Vec<String>,
    pub times: Vec<f64>,
    /// `cells[obs][time]`.
    pub cells: Vec<Vec<SampleSummary>>,
    pub failures: Vec<(usize, String)>,
    pub replicates: usize,
}

impl EnsembleStats {
    pub fn cell(&self, obs: usize, time: usize) -> &SampleSummary {
        &self.cells[obs][time]
    }

    /// Build the summaries from per-replicate observable matrices.
    fn reduce(
        labels: Vec<String>,
        times: Vec<f64>,
        per_rep: Vec<Vec<Vec<f64>>>,
        failures: Vec<(usize, String)>,
        replicates: usize,
    ) -> Self {
        let n_obs = labels.len();
        let n_t = times.len();
        let mut cells = Vec::with_capacity(n_obs);
        for o in 0..n_obs {
            let mut row = Vec::with_capacity(n_t);
            for t in 0..n_t {
                let samples: Vec<f64> = per_rep.iter().map(|rep| rep[o][t]).collect();
                row.push(SampleSummary::from_samples(samples));
            }
            cells.push(row);
        }
        Self {
            labels,
            times,
            cells,
            failures,
            replicates,
        }
    }
}

fn run_one(
    spec: &EnsembleSpec,
    net: &ReactionNetwork,
    init: &InitialCondition,
    rep: u64,
) -> Result<Trajectory, String> {
    let mut rng = crate::rng::stream(spec.root_seed, rep);
    match spec.engine {
        Engine::Ssa { grid, mu } => {
            let f0 = init.f0.project(grid);
            let state = init_state(&f0, &init.d0, mu).map_err(|e| e.to_string())?;
            let mut engine = SsaEngine::new(net, state, spec.guard).map_err(|e| e.to_string())?;
            let mut rec = RecorderSpec::new(spec.dt_out);
            rec.max_events = spec.max_events;
            rec.wall_limit = spec
                .wall_seconds
                .map(std::time::Duration::from_secs_f64);
            simulate(&mut engine, spec.horizon, &rec, &mut rng).map_err(|e| e.to_string())
        }
        Engine::Pdmp { params } => {
            let mut engine = PdmpEngine::new(net, params, init.d0.len());
            let f0 = init.f0.project(engine.grid());
            let mut rec = PdmpRecorder::new(spec.dt_out);
            rec.max_jumps = spec.max_jumps;
            rec.wall_limit = spec
                .wall_seconds
                .map(std::time::Duration::from_secs_f64);
            simulate_pdmp(
                &mut engine,
                f0,
                init.d0.clone(),
                spec.horizon,
                &rec,
                &mut rng,
            )
            .map_err(|e| e.to_string())
        }
    }
}

/// Run all replicates of one engine and keep the full trajectories.
/// Replicates run in parallel; failures are recorded per replicate and the
/// whole ensemble aborts if more than 1% fail.
pub fn run_trajectories(
    spec: &EnsembleSpec,
    net: &ReactionNetwork,
    init: &InitialCondition,
) -> Result<Vec<Trajectory>, EnsembleError> {
    let results: Vec<(u64, Result<Trajectory, String>)> = (0..spec.replicates as u64)
        .into_par_iter()
        .map(|rep| (rep, run_one(spec, net, init, rep)))
        .collect();
    let mut ok = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (rep, r) in results {
        match r {
            Ok(t) => ok.push(t),
            Err(e) => failures.push((rep as usize, e)),
        }
    }
    if !failures.is_empty() && failures.len() * 100 > spec.replicates {
        return Err(EnsembleError::TooManyFailures {
            failed: failures.len(),
            total: spec.replicates,
            first: failures[0].1.clone(),
        });
    }
    if !failures.is_empty() {
        // Tolerated failures are surfaced through run_ensemble's ledger; a
        // plain trajectory list has nowhere to put them.
        eprintln!(
            "warning: {} of {} replicates failed: {}",
            failures.len(),
            spec.replicates,
            failures[0].1
        );
    }
    Ok(ok)
}

/// Run the ensemble and reduce to per-(observable, time) statistics.
pub fn run_ensemble(
    spec: &EnsembleSpec,
    net: &ReactionNetwork,
    init: &InitialCondition,
) -> Result<EnsembleStats, EnsembleError> {
    if spec.replicates < 2 {
        return Err(EnsembleError::TooFewReplicates {
            got: spec.replicates,
        });
    }
    // Projections of inner-product test functions are engine-grid wide and
    // shared across replicates.
    let obs_grid = match spec.engine {
        Engine::Ssa { grid, .. } => grid,
        Engine::Pdmp { params } => Grid::new(params.m, init.d0.len()).unwrap(),
    };
    let projections: Vec<Option<Field>> = spec
        .observables
        .iter()
        .map(|o| match o {
            Observable::InnerProduct { f } => Some(f.project(obs_grid)),
            _ => None,
        })
        .collect();

    let results: Vec<(u64, Result<Vec<Vec<f64>>, String>)> = (0..spec.replicates as u64)
        .into_par_iter()
        .map(|rep| {
            let traj = match run_one(spec, net, init, rep) {
                Ok(t) => t,
                Err(e) => return (rep, Err(e)),
            };
            if traj.truncated.is_some() {
                return (rep, Err("trajectory truncated by budget".into()));
            }
            let rows = spec
                .observables
                .iter()
                .zip(&projections)
                .map(|(o, p)| o.extract(&traj, p.as_ref()))
                .collect();
            (rep, Ok(rows))
        })
        .collect();

    let times = crate::traj::Trajectory::output_times(spec.horizon, spec.dt_out);
    let mut per_rep = Vec::with_capacity(spec.replicates);
    let mut failures = Vec::new();
    for (rep, r) in results {
        match r {
            Ok(rows) => per_rep.push(rows),
            Err(e) => failures.push((rep as usize, e)),
        }
    }
    if !failures.is_empty() && failures.len() * 100 > spec.replicates {
        return Err(EnsembleError::TooManyFailures {
            failed: failures.len(),
            total: spec.replicates,
            first: failures[0].1.clone(),
        });
    }
    let labels = spec.observables.iter().map(|o| o.label()).collect();
    Ok(EnsembleStats::reduce(
        labels,
        times,
        per_rep,
        failures,
        spec.replicates,
    ))
}

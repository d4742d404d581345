//! The resolution ladder: does the jump process approach the limit process
//! as the lattice refines and the population grows?
//!
//! For each rung `(N, μ)` an SSA ensemble is compared against one fixed
//! high-resolution PDMP reference ensemble: continuous observables by the
//! Wasserstein-1 distance of their one-dimensional marginals, discrete
//! marginals by total variation. A split-half distance inside the reference
//! ensemble estimates the Monte Carlo noise floor; the verdict asks the
//! floor-corrected distances to shrink from the first rung to the last for
//! a stated fraction of (observable, time) pairs.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::ensemble::{run_ensemble, Engine, EnsembleError, EnsembleSpec, EnsembleStats, Observable};
use super::stats::{empirical_pmf, tv_distance, wasserstein1_flagged, StatsError};
use crate::config::InitialSection;
use crate::lattice::Grid;
use crate::network::{validate_network, NetworkSpec};
use crate::pdmp::SolverParams;

#[derive(Debug, Error)]
pub enum LadderError {
    #[error("ladder not admissible: {reason}")]
    LadderNotAdmissible { reason: String },
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("invalid network: {0:?}")]
    Network(Vec<crate::network::NetworkError>),
}

/// Study description. The reference ensemble runs `ref_multiple` times the
/// rung replicate count at the stated solver resolution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LadderSpec {
    pub rungs: Vec<(usize, f64)>,
    pub replicates: usize,
    pub root_seed: u64,
    pub horizon: f64,
    pub dt_out: f64,
    /// Comparison times; must lie on the output grid.
    pub times: Vec<f64>,
    pub observables: Vec<Observable>,
    pub reference: SolverParams,
    pub ref_multiple: usize,
    /// Fraction of (observable, time) pairs that must improve.
    pub pass_fraction: f64,
}

impl LadderSpec {
    pub fn desk_default(rungs: Vec<(usize, f64)>, replicates: usize, root_seed: u64) -> Self {
        Self {
            rungs,
            replicates,
            root_seed,
            horizon: 1.0,
            dt_out: 0.05,
            times: vec![0.5, 1.0],
            observables: Vec::new(),
            reference: SolverParams { m: 512, h: 5e-4 },
            ref_multiple: 4,
            pass_fraction: 0.8,
        }
    }
}

/// Distances of one rung against the reference, per observable and time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RungReport {
    pub n: usize,
    pub mu: f64,
    pub log_ratio: f64,
    /// `distance[obs][time]`; W1 for continuous observables, TV for
    /// discrete ones.
    pub distance: Vec<Vec<f64>>,
    pub resampled: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerdictReport {
    pub pairs_total: usize,
    pub pairs_improved: usize,
    pub fraction: f64,
    pub pass: bool,
    /// Worst last-rung TV over the discrete observables.
    pub last_rung_max_tv: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LadderReport {
    pub labels: Vec<String>,
    pub times: Vec<f64>,
    pub rungs: Vec<RungReport>,
    /// `floor[obs][time]` from the split reference ensemble.
    pub se_floor: Vec<Vec<f64>>,
    pub verdict: VerdictReport,
    pub root_seed: u64,
    pub config_hash: String,
    pub version: String,
}

fn admissible(rungs: &[(usize, f64)], k: usize) -> Result<(), LadderError> {
    if rungs.is_empty() {
        return Err(LadderError::LadderNotAdmissible {
            reason: "empty ladder".into(),
        });
    }
    let mut prev: Option<(usize, f64)> = None;
    for &(n, mu) in rungs {
        if mu <= 0.0 {
            return Err(LadderError::LadderNotAdmissible {
                reason: format!("mu = {mu} must be positive"),
            });
        }
        if n % k != 0 {
            return Err(LadderError::LadderNotAdmissible {
                reason: format!("N = {n} is not a multiple of k = {k}"),
            });
        }
        let ratio = (n as f64).ln() / mu;
        if let Some((pn, pratio)) = prev {
            if n <= pn {
                return Err(LadderError::LadderNotAdmissible {
                    reason: format!("N must increase ({pn} then {n})"),
                });
            }
            if ratio >= pratio {
                return Err(LadderError::LadderNotAdmissible {
                    reason: format!(
                        "log(N)/mu must decrease ({pratio:.4} then {ratio:.4})"
                    ),
                });
            }
        }
        prev = Some((n, (n as f64).ln() / mu));
    }
    Ok(())
}

fn time_indices(stats: &EnsembleStats, times: &[f64]) -> Vec<usize> {
    times
        .iter()
        .map(|&t| {
            stats
                .times
                .iter()
                .position(|&s| (s - t).abs() <= 1e-9 * t.max(1.0))
                .unwrap_or_else(|| panic!("time {t} not on the output grid"))
        })
        .collect()
}

/// Distance matrix `[obs][time]` between two ensembles over shared
/// observables; W1 on continuous, TV on integer-valued.
pub fn compare_ensembles(
    a: &EnsembleStats,
    b: &EnsembleStats,
    observables: &[Observable],
    times: &[f64],
    resample_seed: u64,
) -> Result<(Vec<Vec<f64>>, bool), StatsError> {
    let ia = time_indices(a, times);
    let ib = time_indices(b, times);
    let mut out = Vec::with_capacity(observables.len());
    let mut any_resampled = false;
    for (o, obs) in observables.iter().enumerate() {
        let mut row = Vec::with_capacity(times.len());
        for (ti, (&sa, &sb)) in ia.iter().zip(&ib).enumerate() {
            let xa = &a.cells[o][sa].sorted;
            let xb = &b.cells[o][sb].sorted;
            let d = if obs.is_discrete() {
                let pa = empirical_pmf(&xa.iter().map(|&v| v.round() as i64).collect::<Vec<_>>());
                let pb = empirical_pmf(&xb.iter().map(|&v| v.round() as i64).collect::<Vec<_>>());
                tv_distance(&pa, &pb)
            } else {
                let (d, flagged) =
                    wasserstein1_flagged(xa, xb, resample_seed ^ ((o as u64) << 32 | ti as u64))?;
                any_resampled |= flagged;
                d
            };
            row.push(d);
        }
        out.push(row);
    }
    Ok((out, any_resampled))
}

/// Split an ensemble's samples in half and measure the distance between the
/// halves: the Monte Carlo noise floor of the comparison.
fn split_half_floor(
    reference: &EnsembleStats,
    observables: &[Observable],
    times: &[f64],
) -> Vec<Vec<f64>> {
    let idx = time_indices(reference, times);
    observables
        .iter()
        .enumerate()
        .map(|(o, obs)| {
            idx.iter()
                .map(|&ti| {
                    // First half of the replicates against the second: two
                    // independent ensembles from the same law.
                    let raw = &reference.cells[o][ti].raw;
                    let half = raw.len() / 2;
                    let a: Vec<f64> = raw[..half].to_vec();
                    let b: Vec<f64> = raw[half..].to_vec();
                    if obs.is_discrete() {
                        let pa = empirical_pmf(&a.iter().map(|&v| v.round() as i64).collect::<Vec<_>>());
                        let pb = empirical_pmf(&b.iter().map(|&v| v.round() as i64).collect::<Vec<_>>());
                        tv_distance(&pa, &pb)
                    } else {
                        wasserstein1_flagged(&a, &b, 0).map(|(d, _)| d).unwrap_or(0.0)
                    }
                })
                .collect()
        })
        .collect()
}

fn cache_key(spec: &LadderSpec, net: &NetworkSpec, init: &InitialSection, k: usize) -> String {
    #[derive(Serialize)]
    struct Key<'a> {
        net: &'a NetworkSpec,
        init: &'a InitialSection,
        horizon: f64,
        dt_out: f64,
        reference: SolverParams,
        replicates: usize,
        root_seed: u64,
        observables: &'a [Observable],
        k: usize,
    }
    let key = Key {
        net,
        init,
        horizon: spec.horizon,
        dt_out: spec.dt_out,
        reference: spec.reference,
        replicates: spec.replicates * spec.ref_multiple,
        root_seed: spec.root_seed,
        observables: &spec.observables,
        k,
    };
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(&key).expect("key serializes"));
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Run the full study. The PDMP reference is computed once (and cached in
/// `cache_dir` when given, keyed by a content hash of everything that shapes
/// it); each rung is then compared against it.
pub fn convergence_ladder(
    spec: &LadderSpec,
    net_spec: &NetworkSpec,
    init: &InitialSection,
    cache_dir: Option<&std::path::Path>,
) -> Result<LadderReport, LadderError> {
    let k = init.d0.len();
    admissible(&spec.rungs, k)?;
    let grid_times = crate::traj::Trajectory::output_times(spec.horizon, spec.dt_out);
    for &t in &spec.times {
        if !grid_times.iter().any(|&g| (g - t).abs() <= 1e-9 * t.max(1.0)) {
            return Err(LadderError::LadderNotAdmissible {
                reason: format!("comparison time {t} is not on the output grid"),
            });
        }
    }
    let net = validate_network(net_spec).map_err(LadderError::Network)?;

    // Seed layout: reference uses rung index 0, rungs use 1.., all split
    // through the same root.
    let mut seed_state = spec.root_seed;
    let ref_seed = crate::rng::splitmix64(&mut seed_state);
    let rung_seeds: Vec<u64> = (0..spec.rungs.len())
        .map(|_| crate::rng::splitmix64(&mut seed_state))
        .collect();

    let key = cache_key(spec, net_spec, init, k);
    let cache_path = cache_dir.map(|d| d.join(format!("pdmp_ref_{key}.json")));
    let reference: EnsembleStats = match cache_path
        .as_ref()
        .filter(|p| p.exists())
        .and_then(|p| std::fs::read_to_string(p).ok())
        .and_then(|text| serde_json::from_str(&text).ok())
    {
        Some(cached) => cached,
        None => {
            let mut ref_spec = EnsembleSpec::new(
                Engine::Pdmp {
                    params: spec.reference,
                },
                spec.horizon,
                spec.dt_out,
                spec.replicates * spec.ref_multiple,
                ref_seed,
            );
            ref_spec.observables = spec.observables.clone();
            let stats = run_ensemble(&ref_spec, &net, init)?;
            if let Some(p) = &cache_path {
                let _ = std::fs::create_dir_all(p.parent().unwrap());
                let _ = std::fs::write(p, serde_json::to_string(&stats).expect("serializes"));
            }
            stats
        }
    };

    let se_floor = split_half_floor(&reference, &spec.observables, &spec.times);

    let mut rung_reports = Vec::with_capacity(spec.rungs.len());
    for (ri, &(n, mu)) in spec.rungs.iter().enumerate() {
        let grid = Grid::new(n, k).expect("admissibility checked");
        let mut rung_spec = EnsembleSpec::new(
            Engine::Ssa { grid, mu },
            spec.horizon,
            spec.dt_out,
            spec.replicates,
            rung_seeds[ri],
        );
        rung_spec.observables = spec.observables.clone();
        let stats = run_ensemble(&rung_spec, &net, init)?;
        let (distance, resampled) = compare_ensembles(
            &stats,
            &reference,
            &spec.observables,
            &spec.times,
            rung_seeds[ri],
        )?;
        rung_reports.push(RungReport {
            n,
            mu,
            log_ratio: (n as f64).ln() / mu,
            distance,
            resampled,
        });
    }

    // Verdict: floor-corrected distances must shrink from the first rung to
    // the last (reaching the floor counts as improvement).
    let first = &rung_reports.first().expect("nonempty").distance;
    let last = &rung_reports.last().expect("nonempty").distance;
    let mut pairs_total = 0;
    let mut pairs_improved = 0;
    let mut last_rung_max_tv: f64 = 0.0;
    for (o, obs) in spec.observables.iter().enumerate() {
        for ti in 0..spec.times.len() {
            let floor = se_floor[o][ti];
            let d0 = (first[o][ti] - floor).max(0.0);
            let d1 = (last[o][ti] - floor).max(0.0);
            pairs_total += 1;
            if d1 < d0 || d1 == 0.0 {
                pairs_improved += 1;
            }
            if obs.is_discrete() {
                last_rung_max_tv = last_rung_max_tv.max(last[o][ti]);
            }
        }
    }
    let fraction = pairs_improved as f64 / pairs_total.max(1) as f64;
    let verdict = VerdictReport {
        pairs_total,
        pairs_improved,
        fraction,
        pass: fraction >= spec.pass_fraction,
        last_rung_max_tv,
    };

    Ok(LadderReport {
        labels: spec.observables.iter().map(|o| o.label()).collect(),
        times: spec.times.clone(),
        rungs: rung_reports,
        se_floor,
        verdict,
        root_seed: spec.root_seed,
        config_hash: key,
        version: env!("CARGO_PKG_VERSION").to_string(),
    })
}

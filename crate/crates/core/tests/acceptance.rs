//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line with its measured runtime. Criteria run serially so the
//! timings mean something; run with `--nocapture` to see the lines.

use std::sync::Mutex;
use std::time::Instant;

use multiscale::analysis::{
    convergence_ladder, dynkin_residual, ks_pvalue, ks_statistic, run_trajectories, Engine,
    EnsembleSpec, GeneratorKind, LadderSpec, Observable, TestFunction,
};
use multiscale::config::{toggle_field_spec, InitialSection, Profile};
use multiscale::lattice::{
    beta, discrete_laplacian, eigenpairs, heat_semigroup, project_fn, Field, Grid,
};
use multiscale::network::{
    validate_network, NetworkSpec, RatePolynomial, Reaction, ReactionClass, WeightFunction,
};
use multiscale::pdmp::{PdmpEngine, SolverParams};
use multiscale::rng::stream;
use multiscale::ssa::{init_state, SsaEngine};
use multiscale::traj::Trajectory;
use rayon::prelude::*;

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(name: &str, pass: bool, detail: &str, started: Instant) -> bool {
    println!(
        "{name}: {} — {detail} (runtime {:.2} s)",
        if pass { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
    pass
}

#[test]
fn criterion_1_spectral_exactness() {
    let _guard = serial();
    let started = Instant::now();
    let mut worst_eig: f64 = 0.0;
    let mut worst_resid: f64 = 0.0;
    for n in [4usize, 8, 16, 32] {
        let grid = Grid::new(n, 1).unwrap();
        let pairs = eigenpairs(grid);
        assert_eq!(pairs.len(), n);
        for p in pairs {
            let formula = beta(p.m, n);
            if formula > 0.0 {
                worst_eig = worst_eig.max((p.eigenvalue - formula).abs() / formula);
            } else {
                assert_eq!(p.eigenvalue, 0.0);
            }
            let lap = discrete_laplacian(&p.eigenvector);
            let resid = lap
                .values()
                .iter()
                .zip(p.eigenvector.values())
                .fold(0.0f64, |m, (l, e)| m.max((l + p.eigenvalue * e).abs()));
            if p.eigenvalue > 0.0 {
                worst_resid = worst_resid.max(resid / p.eigenvalue);
                assert!(resid <= 1e-8 * p.eigenvalue, "N={n} m={} resid {resid}", p.m);
            } else {
                assert_eq!(resid, 0.0);
            }
        }
    }
    let pass = worst_eig <= 1e-12;
    let elapsed_ok = started.elapsed().as_secs_f64() < 1.0;
    assert!(report(
        "criterion 1 (spectral exactness)",
        pass && elapsed_ok,
        &format!("max eigenvalue rel err {worst_eig:.2e}, max relative stencil residual {worst_resid:.2e}"),
        started
    ));
}

#[test]
fn criterion_2_semigroup_contraction_and_law() {
    let _guard = serial();
    let started = Instant::now();
    use rand::Rng;
    let mut rng = stream(0xC2, 0);
    let mut worst_contract: f64 = 0.0;
    let mut worst_law: f64 = 0.0;
    for trial in 0..1000 {
        let n = if trial % 2 == 0 { 32 } else { 24 };
        let grid = Grid::new(n, 1).unwrap();
        let f = Field::new(grid, (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect());
        let s: f64 = rng.gen_range(0.0..1.0);
        let t: f64 = rng.gen_range(0.0..1.0);
        let tf = heat_semigroup(&f, t);
        worst_contract = worst_contract.max(tf.sup_norm() - f.sup_norm());
        let combined = heat_semigroup(&heat_semigroup(&f, s), t);
        let direct = heat_semigroup(&f, s + t);
        let gap = combined
            .values()
            .iter()
            .zip(direct.values())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        worst_law = worst_law.max(gap);
    }
    let pass = worst_contract <= 1e-10 && worst_law <= 1e-10;
    assert!(report(
        "criterion 2 (semigroup contraction and law)",
        pass && started.elapsed().as_secs_f64() < 5.0,
        &format!("max contraction excess {worst_contract:.2e}, max composition gap {worst_law:.2e}"),
        started
    ));
}

#[test]
fn criterion_3_ssa_conservation() {
    let _guard = serial();
    let started = Instant::now();
    let net = validate_network(&NetworkSpec {
        reactions: vec![],
        u_max: 1.0,
        d_max: 1,
        truncation: None,
        rho1: None,
    })
    .unwrap();
    let grid = Grid::new(64, 4).unwrap();
    let f0 = project_fn(|x| 0.08 + 0.04 * (2.0 * std::f64::consts::PI * x).sin(), grid);
    let events: u64 = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let state = init_state(&f0, &[0; 4], 100.0).unwrap();
            let total0 = state.total_molecules();
            let mut engine = SsaEngine::new(&net, state, true).unwrap();
            let mut rng = stream(0xC3, seed);
            let mut n_ev = 0u64;
            while engine.t() < 1.0 {
                engine.step(&mut rng).unwrap();
                n_ev += 1;
                // Exact conservation, checked at every single event.
                assert_eq!(
                    engine.state().total_molecules(),
                    total0,
                    "seed {seed} event {n_ev}"
                );
            }
            n_ev
        })
        .sum();
    let elapsed = started.elapsed().as_secs_f64();
    assert!(report(
        "criterion 3 (SSA conservation)",
        elapsed < 60.0,
        &format!("{events} events across 100 seeds, all exactly conservative"),
        started
    ));
}

/// Linear birth–death network: production `a`, degradation `b·u`.
fn linear_net(a: f64, b: f64) -> multiscale::ReactionNetwork {
    validate_network(&NetworkSpec {
        reactions: vec![
            Reaction {
                class: ReactionClass::FastC,
                gamma_c: 1,
                gamma_d: 0,
                rate: RatePolynomial::constant(a),
                a_weight: None,
                b_weight: None,
            },
            Reaction {
                class: ReactionClass::FastC,
                gamma_c: -1,
                gamma_d: 0,
                rate: RatePolynomial::new([((1, 0), b)]),
                a_weight: None,
                b_weight: None,
            },
        ],
        u_max: 6.0,
        d_max: 1,
        truncation: None,
        rho1: None,
    })
    .unwrap()
}

fn criterion_4_trajectories(seed_salt: u64) -> Vec<Trajectory> {
    let net = linear_net(2.0, 1.0);
    let grid = Grid::new(32, 4).unwrap();
    let init = InitialSection {
        f0: Profile::Sine {
            offset: 0.05,
            amplitude: 0.05,
            cycles: 1,
        },
        d0: vec![0; 4],
    };
    let spec = EnsembleSpec::new(
        Engine::Ssa { grid, mu: 100.0 },
        1.0,
        0.05,
        500,
        0xC4 ^ seed_salt,
    );
    run_trajectories(&spec, &net, &init).unwrap()
}

#[test]
fn criterion_4_mean_field_oracle() {
    let _guard = serial();
    let started = Instant::now();
    let (a, b) = (2.0, 1.0);
    let grid = Grid::new(32, 4).unwrap();
    let trajs = criterion_4_trajectories(0);
    let reps = trajs.len();
    // The exact mean: d/dt E[u] = Δ_N E[u] + a − b E[u] from the rounded
    // initial state, solved by the spectral semigroup and the scalar linear
    // factor.
    let u0 = Field::new(grid, trajs[0].snapshots[0].u_c.clone());
    let mut cells = 0usize;
    let mut passed = 0usize;
    for (ti, snap0) in trajs[0].snapshots.iter().enumerate().skip(1) {
        let t = snap0.t;
        let decayed = heat_semigroup(&u0, t);
        let scale = (-b * t).exp();
        let offset = (a / b) * (1.0 - (-b * t).exp());
        for j in 0..grid.n_sites() {
            let oracle = decayed.values()[j] * scale + offset;
            let samples: Vec<f64> = trajs.iter().map(|tr| tr.snapshots[ti].u_c[j]).collect();
            let mean = samples.iter().sum::<f64>() / reps as f64;
            let var = samples
                .iter()
                .map(|s| (s - mean) * (s - mean))
                .sum::<f64>()
                / (reps - 1) as f64;
            let se = (var / reps as f64).sqrt();
            cells += 1;
            if (mean - oracle).abs() <= 3.0 * se.max(1e-12) {
                passed += 1;
            }
        }
    }
    let frac = passed as f64 / cells as f64;
    let pass = frac >= 0.95;
    let elapsed_ok = started.elapsed().as_secs_f64() < 300.0;
    assert!(report(
        "criterion 4 (mean-field oracle)",
        pass && elapsed_ok,
        &format!("{passed}/{cells} (site, time) cells within 3 SE ({:.1}%)", 100.0 * frac),
        started
    ));
}

fn constant_hazard_net(c: f64) -> multiscale::ReactionNetwork {
    validate_network(&NetworkSpec {
        reactions: vec![Reaction {
            class: ReactionClass::SlowD,
            gamma_c: 0,
            gamma_d: 1,
            rate: RatePolynomial::constant(c),
            a_weight: None,
            b_weight: None,
        }],
        u_max: 1.0,
        d_max: 1,
        truncation: None,
        rho1: None,
    })
    .unwrap()
}

#[test]
fn criterion_5_jump_time_law() {
    let _guard = serial();
    let started = Instant::now();
    let mut details = Vec::new();
    let mut pass = true;
    let n_samples = 10_000;

    for c in [0.5, 2.0] {
        let net = constant_hazard_net(c);
        let mut engine = PdmpEngine::new(&net, SolverParams { m: 8, h: 1e-3 }, 1);
        let mut rng = stream(0xC5, c.to_bits());
        let mut times = Vec::with_capacity(n_samples);
        for _ in 0..n_samples {
            let f = Field::constant(engine.grid(), 0.0);
            let mut state = engine.init_state(f, vec![0], &mut rng);
            assert!(engine.advance_to_jump(&mut state, 80.0 / c, 1e-8).unwrap());
            times.push(state.t);
        }
        let d = ks_statistic(&times, |x| 1.0 - (-c * x).exp());
        let p = ks_pvalue(d, n_samples);
        details.push(format!("Λ={c}: p={p:.3}"));
        pass &= p > 0.01;
    }

    // Engineered linear hazard: F ≡ 1 grows a flat field from zero, the
    // averaged mixed rate reads it, so Λ(t) = t.
    let net = validate_network(&NetworkSpec {
        reactions: vec![
            Reaction {
                class: ReactionClass::FastC,
                gamma_c: 1,
                gamma_d: 0,
                rate: RatePolynomial::constant(1.0),
                a_weight: None,
                b_weight: None,
            },
            Reaction {
                class: ReactionClass::SlowMixed,
                gamma_c: 0,
                gamma_d: 1,
                rate: RatePolynomial::new([((1, 0), 1.0)]),
                a_weight: Some(WeightFunction::constant(1.0)),
                b_weight: Some(WeightFunction::constant(1.0)),
            },
        ],
        u_max: 20.0,
        d_max: 1,
        truncation: None,
        rho1: None,
    })
    .unwrap();
    let mut engine = PdmpEngine::new(&net, SolverParams { m: 8, h: 1e-3 }, 1);
    let mut rng = stream(0xC5, 3);
    let mut times = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let f = Field::constant(engine.grid(), 0.0);
        let mut state = engine.init_state(f, vec![0], &mut rng);
        assert!(engine.advance_to_jump(&mut state, 12.0, 1e-8).unwrap());
        times.push(state.t);
    }
    let d = ks_statistic(&times, |x| 1.0 - (-x * x / 2.0).exp());
    let p = ks_pvalue(d, n_samples);
    details.push(format!("Λ(t)=t: p={p:.3}"));
    pass &= p > 0.01;

    let elapsed_ok = started.elapsed().as_secs_f64() < 30.0;
    assert!(report(
        "criterion 5 (jump-time law)",
        pass && elapsed_ok,
        &details.join(", "),
        started
    ));
}

#[test]
fn criterion_6_transition_measure_frequencies() {
    let _guard = serial();
    let started = Instant::now();
    let net = validate_network(&NetworkSpec {
        reactions: vec![
            Reaction {
                class: ReactionClass::SlowD,
                gamma_c: 0,
                gamma_d: 1,
                rate: RatePolynomial::constant(1.0),
                a_weight: None,
                b_weight: None,
            },
            Reaction {
                class: ReactionClass::SlowD,
                gamma_c: 0,
                gamma_d: 2,
                rate: RatePolynomial::constant(3.0),
                a_weight: None,
                b_weight: None,
            },
        ],
        u_max: 1.0,
        d_max: 4,
        truncation: None,
        rho1: None,
    })
    .unwrap();
    let engine = PdmpEngine::new(&net, SolverParams { m: 8, h: 1e-3 }, 1);
    let f = Field::constant(engine.grid(), 0.0);
    let mut rng = stream(0xC6, 0);
    let n = 10_000;
    let mut heavy = 0usize;
    for _ in 0..n {
        let (_, record) = engine.sample_transition(&f, &[0], &mut rng).unwrap();
        if record.r == 1 {
            heavy += 1;
        }
    }
    let freq = heavy as f64 / n as f64;
    let se = (0.75 * 0.25 / n as f64).sqrt();
    let pass = (freq - 0.75).abs() <= 3.0 * se;
    let elapsed_ok = started.elapsed().as_secs_f64() < 10.0;
    assert!(report(
        "criterion 6 (transition-measure frequencies)",
        pass && elapsed_ok,
        &format!("rate-3 channel frequency {freq:.4} vs 0.75 ± {:.4}", 3.0 * se),
        started
    ));
}

#[test]
fn criterion_7_dynkin_residuals() {
    let _guard = serial();
    let started = Instant::now();
    let net = validate_network(&toggle_field_spec()).unwrap();
    // Half the switches start on: the discrete component jumps from the
    // first instants, so the martingale statistic carries real variance at
    // every requested time.
    let init = InitialSection {
        f0: Profile::Sine {
            offset: 0.25,
            amplitude: 0.1,
            cycles: 1,
        },
        d0: vec![0, 1, 0, 1],
    };
    let times = [0.25, 0.5, 1.0];
    let phis = multiscale::analysis::catalog();
    let mut pass = true;
    let mut worst_ratio: f64 = 0.0;

    // Jump engine at (N, μ) = (16, 50).
    let grid = Grid::new(16, 4).unwrap();
    let micro_spec = EnsembleSpec::new(Engine::Ssa { grid, mu: 50.0 }, 1.0, 0.01, 500, 0xC7);
    let micro_trajs = run_trajectories(&micro_spec, &net, &init).unwrap();
    for (pi, phi) in phis.iter().enumerate() {
        let stats =
            dynkin_residual(&micro_trajs, &net, GeneratorKind::Micro, phi, &times).unwrap();
        for s in &stats {
            let ratio = s.mean.abs() / s.std_error.max(1e-15);
            worst_ratio = worst_ratio.max(ratio);
            if ratio > 3.0 {
                pass = false;
                println!("  micro phi#{pi} t={}: |mean|/SE = {ratio:.2}", s.t);
            }
        }
    }
    drop(micro_trajs);

    // Limit engine. Its paths carry almost no randomness, so the residual
    // SE is tiny and the snapshot grid must over-resolve the 1% ceiling for
    // the trapezoid quadrature to sit below 3 SE. Batches keep memory flat.
    let mut limit_samples: Vec<Vec<Vec<f64>>> =
        vec![vec![Vec::with_capacity(500); times.len()]; phis.len()];
    let batch = 50usize;
    for b in 0..(500 / batch) {
        let mut limit_spec = EnsembleSpec::new(
            Engine::Pdmp {
                params: SolverParams { m: 128, h: 5e-4 },
            },
            1.0,
            0.002,
            batch,
            0xC7 + 1 + b as u64,
        );
        limit_spec.max_jumps = 1_000_000;
        let trajs = run_trajectories(&limit_spec, &net, &init).unwrap();
        for (pi, phi) in phis.iter().enumerate() {
            let samples = multiscale::analysis::dynkin::dynkin_residual_samples(
                &trajs,
                &net,
                GeneratorKind::Limit,
                phi,
                &times,
            )
            .unwrap();
            for (ti, mut s) in samples.into_iter().enumerate() {
                limit_samples[pi][ti].append(&mut s);
            }
        }
    }
    for (pi, per_time) in limit_samples.iter().enumerate() {
        for (ti, rs) in per_time.iter().enumerate() {
            let n = rs.len() as f64;
            let mean = rs.iter().sum::<f64>() / n;
            let var = rs.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1.0);
            let se = (var / n).sqrt();
            let ratio = mean.abs() / se.max(1e-15);
            worst_ratio = worst_ratio.max(ratio);
            println!(
                "  limit phi#{pi} t={}: mean {mean:+.3e} se {se:.3e} ratio {ratio:.2}",
                times[ti]
            );
            if ratio > 3.0 {
                pass = false;
            }
        }
    }

    let elapsed_ok = started.elapsed().as_secs_f64() < 600.0;
    assert!(report(
        "criterion 7 (Dynkin residuals)",
        pass && elapsed_ok,
        &format!("18 (generator, phi, t) residuals, worst |mean|/SE = {worst_ratio:.2}"),
        started
    ));
}

#[test]
fn criterion_8_convergence_ladder() {
    let _guard = serial();
    let started = Instant::now();
    let init = InitialSection {
        f0: Profile::Sine {
            offset: 0.25,
            amplitude: 0.1,
            cycles: 1,
        },
        d0: vec![0; 4],
    };
    let mut observables = vec![
        Observable::InnerProduct {
            f: TestFunction::Constant,
        },
        Observable::InnerProduct {
            f: TestFunction::Sine { cycles: 1 },
        },
    ];
    for l in 1..=4 {
        observables.push(Observable::MacroCount { l });
    }
    let spec = LadderSpec {
        rungs: vec![(16, 50.0), (32, 100.0), (64, 200.0)],
        replicates: 300,
        root_seed: 0xC8,
        horizon: 1.0,
        dt_out: 0.05,
        times: vec![0.5, 1.0],
        observables,
        reference: SolverParams { m: 512, h: 5e-4 },
        ref_multiple: 4,
        pass_fraction: 0.8,
    };
    let cache = tempfile::tempdir().unwrap();
    let report_data =
        convergence_ladder(&spec, &toggle_field_spec(), &init, Some(cache.path())).unwrap();
    for rung in &report_data.rungs {
        println!(
            "  rung (N={}, mu={}): log(N)/mu = {:.3}, distances {:?}",
            rung.n, rung.mu, rung.log_ratio, rung.distance
        );
    }
    println!("  noise floor: {:?}", report_data.se_floor);
    let v = &report_data.verdict;
    let pass = v.pass && v.last_rung_max_tv <= 0.1;
    let elapsed_ok = started.elapsed().as_secs_f64() < 1800.0;
    assert!(report(
        "criterion 8 (convergence ladder)",
        pass && elapsed_ok,
        &format!(
            "{}/{} pairs improved ({:.0}%), last-rung max TV {:.4}",
            v.pairs_improved,
            v.pairs_total,
            100.0 * v.fraction,
            v.last_rung_max_tv
        ),
        started
    ));
}

#[test]
fn criterion_9_determinism() {
    let _guard = serial();
    let started = Instant::now();
    use sha2::{Digest, Sha256};
    let hash_run = |salt: u64| -> Vec<[u8; 32]> {
        criterion_4_trajectories(salt)
            .iter()
            .map(|t| {
                let mut h = Sha256::new();
                h.update(t.to_csv().as_bytes());
                h.finalize().into()
            })
            .collect()
    };
    let first = hash_run(0);
    let second = hash_run(0);
    let pass = first == second && first.len() == 500;
    assert!(report(
        "criterion 9 (determinism)",
        pass,
        &format!(
            "{} replicate trajectory CSVs byte-identical across two runs",
            first.len()
        ),
        started
    ));
}

//! `multiscale` — command-line front end for the lattice simulators.
//!
//! Subcommands: `ssa` and `pdmp` run replicate trajectories and write
//! CSV/JSONL/summary artifacts; `converge` runs the resolution-ladder study;
//! `dynkin` writes the martingale-residual table; `spectrum` dumps the
//! discrete Laplacian eigensystem; `validate` checks the network and exits.
//!
//! Exit codes: 0 success, 1 validation failure, 2 budget exhaustion,
//! 3 internal error. Errors are also emitted as JSON on stderr.

mod outputs;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use multiscale::analysis::{
    catalog, convergence_ladder, dynkin_residual, run_trajectories, Engine, EnsembleSpec,
    GeneratorKind, LadderSpec, Observable, TestFunction,
};
use multiscale::config::{parse_config, Config, EngineChoice};
use multiscale::lattice::{eigenpairs, inner};
use multiscale::pdmp::SolverParams;
use multiscale::traj::Trajectory;
use outputs::OutputWriter;

#[derive(Parser)]
#[command(name = "multiscale", version, about = "Multiscale lattice kinetics simulator")]
struct Cli {
    /// Run description (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Override the config's root seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the config's replicate count.
    #[arg(long, global = true)]
    replicates: Option<usize>,
    /// Suppress progress chatter on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Cmd {
    /// Simulate the exact jump process.
    Ssa,
    /// Simulate the limiting piecewise deterministic process.
    Pdmp,
    /// Run the (N, mu) resolution ladder against a PDMP reference.
    Converge,
    /// Tabulate martingale residuals for the catalog test functions.
    Dynkin,
    /// Write the discrete Laplacian eigensystem for the configured N.
    Spectrum,
    /// Validate the configured network and report.
    Validate,
}

const EXIT_OK: i32 = 0;
const EXIT_VALIDATION: i32 = 1;
const EXIT_BUDGET: i32 = 2;
const EXIT_INTERNAL: i32 = 3;

fn fail(kind: &str, detail: String) -> i32 {
    let payload = serde_json::json!({ "error": kind, "detail": detail });
    eprintln!("{payload}");
    match kind {
        "validation" => EXIT_VALIDATION,
        "budget" => EXIT_BUDGET,
        _ => EXIT_INTERNAL,
    }
}

fn main() {
    std::process::exit(dispatch(Cli::parse()));
}

fn load_config(cli: &Cli) -> Result<Config, i32> {
    let path = cli.config.as_ref().ok_or_else(|| {
        fail("validation", "--config is required for this command".into())
    })?;
    let mut cfg = match parse_config(path) {
        Ok(c) => c,
        Err(errs) => {
            let detail = errs
                .iter()
                .map(|e| e.to_string())
                .collect::<Vec<_>>()
                .join("; ");
            return Err(fail("validation", detail));
        }
    };
    if let Some(seed) = cli.seed {
        cfg.ensemble.root_seed = seed;
    }
    if let Some(r) = cli.replicates {
        cfg.ensemble.replicates = r;
    }
    Ok(cfg)
}

fn dispatch(cli: Cli) -> i32 {
    match cli.cmd {
        Cmd::Spectrum => run_spectrum(&cli),
        Cmd::Validate => run_validate(&cli),
        Cmd::Ssa => run_trajectory_cmd(&cli, EngineChoice::Ssa),
        Cmd::Pdmp => run_trajectory_cmd(&cli, EngineChoice::Pdmp),
        Cmd::Converge => run_converge(&cli),
        Cmd::Dynkin => run_dynkin(&cli),
    }
}

fn run_spectrum(cli: &Cli) -> i32 {
    let cfg = match load_config(cli) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let grid = cfg.lattice_grid();
    let pairs = eigenpairs(grid);
    let mut csv = String::from("m,kind,beta,beta_formula,orthonormality_residual\n");
    for (i, p) in pairs.iter().enumerate() {
        // Worst Gram defect of this eigenvector against the whole basis.
        let mut resid: f64 = (inner(&p.eigenvector, &p.eigenvector) - 1.0).abs();
        for (j, q) in pairs.iter().enumerate() {
            if i != j {
                resid = resid.max(inner(&p.eigenvector, &q.eigenvector).abs());
            }
        }
        let formula = multiscale::lattice::beta(p.m, grid.n_sites());
        csv.push_str(&format!(
            "{},{:?},{},{},{:e}\n",
            p.m, p.kind, p.eigenvalue, formula, resid
        ));
    }
    match write_artifacts(cli, &cfg, "spectrum", vec![("spectrum.csv", csv.into_bytes())]) {
        Ok(()) => EXIT_OK,
        Err(code) => code,
    }
}

fn run_validate(cli: &Cli) -> i32 {
    let cfg = match load_config(cli) {
        Ok(c) => c,
        Err(code) => return code,
    };
    // parse_config already validated; report the warnings and summary.
    let net = cfg.validated_network();
    let report = serde_json::json!({
        "reactions": cfg.network.reactions.len(),
        "fast_c": net.fast_c.len(),
        "fast_mixed": net.fast_mixed.len(),
        "slow_mixed": net.slow_mixed.len(),
        "slow_d": net.slow_d.len(),
        "warnings": net.warnings,
        "config_hash": cfg.content_hash(),
    });
    let body = serde_json::to_string_pretty(&report).expect("serializes");
    if !cli.quiet {
        println!("{body}");
    }
    match write_artifacts(
        cli,
        &cfg,
        "validate",
        vec![("validation.json", body.into_bytes())],
    ) {
        Ok(()) => EXIT_OK,
        Err(code) => code,
    }
}

fn summary_json(cfg: &Config, trajs: &[(usize, Trajectory)]) -> serde_json::Value {
    let truncated: Vec<usize> = trajs
        .iter()
        .filter(|(_, t)| t.truncated.is_some())
        .map(|(i, _)| *i)
        .collect();
    serde_json::json!({
        "config_hash": cfg.content_hash(),
        "root_seed": cfg.ensemble.root_seed,
        "replicates": trajs.len(),
        "snapshots_per_replicate": trajs.first().map(|(_, t)| t.snapshots.len()).unwrap_or(0),
        "total_jumps": trajs.iter().map(|(_, t)| t.jumps.len()).sum::<usize>(),
        "truncated_replicates": truncated,
        "warnings": trajs
            .iter()
            .flat_map(|(i, t)| t.warnings.iter().map(move |w| format!("replicate {i}: {w}")))
            .collect::<Vec<_>>(),
    })
}

fn run_trajectory_cmd(cli: &Cli, which: EngineChoice) -> i32 {
    let cfg = match load_config(cli) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let net = cfg.validated_network();
    let engine = match which {
        EngineChoice::Ssa => Engine::Ssa {
            grid: cfg.lattice_grid(),
            mu: cfg.scale.mu,
        },
        EngineChoice::Pdmp => Engine::Pdmp {
            params: cfg.pdmp_solver,
        },
        EngineChoice::Both => unreachable!("subcommands pick one engine"),
    };
    let mut spec = EnsembleSpec::new(
        engine,
        cfg.horizon.t,
        cfg.horizon.dt_out,
        cfg.ensemble.replicates,
        cfg.ensemble.root_seed,
    );
    spec.guard = cfg.guards.positivity;
    spec.max_events = cfg.budgets.max_events;
    spec.max_jumps = cfg.budgets.max_jumps;
    spec.wall_seconds = cfg.budgets.wall_seconds;
    let trajs = match run_trajectories(&spec, &net, &cfg.initial) {
        Ok(t) => t,
        Err(e) => return fail("internal", e.to_string()),
    };
    // The limit engine runs on its own solver grid; its CSVs resample to the
    // configured lattice by midpoint evaluation.
    let out_grid = cfg.lattice_grid();
    let trajs: Vec<Trajectory> = trajs
        .into_iter()
        .map(|t| {
            if t.grid == out_grid {
                t
            } else {
                resample_trajectory(t, out_grid)
            }
        })
        .collect();
    let indexed: Vec<(usize, Trajectory)> = trajs.into_iter().enumerate().collect();
    let any_truncated = indexed.iter().any(|(_, t)| t.truncated.is_some());

    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    for (i, t) in &indexed {
        files.push((format!("trajectory_{i:03}.csv"), t.to_csv().into_bytes()));
        // The jump-engine log schema carries only the jump identity; the
        // limit engine's log also records the counts around each jump.
        let jsonl = if matches!(which, EngineChoice::Ssa) {
            let mut stripped = t.clone();
            for j in &mut stripped.jumps {
                j.nu_before = None;
                j.nu_after = None;
            }
            stripped.jumps_to_jsonl()
        } else {
            t.jumps_to_jsonl()
        };
        files.push((format!("jumps_{i:03}.jsonl"), jsonl.into_bytes()));
    }
    files.push((
        "summary.json".to_string(),
        serde_json::to_string_pretty(&summary_json(&cfg, &indexed))
            .expect("serializes")
            .into_bytes(),
    ));
    let named: Vec<(&str, Vec<u8>)> = files
        .iter()
        .map(|(n, b)| (n.as_str(), b.clone()))
        .collect();
    let label = match which {
        EngineChoice::Ssa => "ssa",
        _ => "pdmp",
    };
    match write_artifacts(cli, &cfg, label, named) {
        Ok(()) if any_truncated => fail("budget", "one or more replicates hit a budget".into()),
        Ok(()) => EXIT_OK,
        Err(code) => code,
    }
}

fn run_converge(cli: &Cli) -> i32 {
    let cfg = match load_config(cli) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let Some(ladder) = cfg.ladder.clone() else {
        return fail("validation", "config has no [ladder] section".into());
    };
    let k = cfg.grid.k;
    let mut observables: Vec<Observable> = vec![
        Observable::InnerProduct {
            f: TestFunction::Constant,
        },
        Observable::InnerProduct {
            f: TestFunction::Sine { cycles: 1 },
        },
    ];
    for l in 1..=k {
        observables.push(Observable::MacroCount { l });
    }
    let spec = LadderSpec {
        rungs: ladder.rungs,
        replicates: cfg.ensemble.replicates,
        root_seed: cfg.ensemble.root_seed,
        horizon: cfg.horizon.t,
        dt_out: cfg.horizon.dt_out,
        times: ladder.times,
        observables,
        reference: SolverParams {
            m: ladder.ref_m,
            h: ladder.ref_h,
        },
        ref_multiple: ladder.ref_multiple,
        pass_fraction: 0.8,
    };
    let cache_dir = cli.out.join("cache");
    let report = match convergence_ladder(&spec, &cfg.network, &cfg.initial, Some(&cache_dir)) {
        Ok(r) => r,
        Err(multiscale::analysis::ladder::LadderError::LadderNotAdmissible { reason }) => {
            return fail("validation", format!("ladder not admissible: {reason}"))
        }
        Err(e) => return fail("internal", e.to_string()),
    };
    if !cli.quiet {
        eprintln!(
            "verdict: {} ({}/{} pairs improved, last-rung max TV {:.4})",
            if report.verdict.pass { "PASS" } else { "FAIL" },
            report.verdict.pairs_improved,
            report.verdict.pairs_total,
            report.verdict.last_rung_max_tv
        );
    }
    let body = serde_json::to_string_pretty(&report).expect("serializes");
    match write_artifacts(cli, &cfg, "converge", vec![("ladder_report.json", body.into_bytes())]) {
        Ok(()) => EXIT_OK,
        Err(code) => code,
    }
}

fn run_dynkin(cli: &Cli) -> i32 {
    let cfg = match load_config(cli) {
        Ok(c) => c,
        Err(code) => return code,
    };
    if cfg.horizon.dt_out > 0.01 * cfg.horizon.t + 1e-12 {
        return fail(
            "validation",
            format!(
                "dynkin needs horizon.dt_out <= 0.01 * horizon.t (= {})",
                0.01 * cfg.horizon.t
            ),
        );
    }
    let net = cfg.validated_network();
    let times: Vec<f64> = [0.25, 0.5, 1.0]
        .iter()
        .map(|f| f * cfg.horizon.t)
        .collect();
    let mut csv = String::from("generator,phi,t,mean,std_error,within_3se\n");
    let mut engines: Vec<(GeneratorKind, Engine)> = Vec::new();
    if matches!(cfg.engine, EngineChoice::Ssa | EngineChoice::Both) {
        engines.push((
            GeneratorKind::Micro,
            Engine::Ssa {
                grid: cfg.lattice_grid(),
                mu: cfg.scale.mu,
            },
        ));
    }
    if matches!(cfg.engine, EngineChoice::Pdmp | EngineChoice::Both) {
        engines.push((
            GeneratorKind::Limit,
            Engine::Pdmp {
                params: cfg.pdmp_solver,
            },
        ));
    }
    for (gen, engine) in engines {
        let mut spec = EnsembleSpec::new(
            engine,
            cfg.horizon.t,
            cfg.horizon.dt_out,
            cfg.ensemble.replicates,
            cfg.ensemble.root_seed,
        );
        spec.guard = cfg.guards.positivity;
        spec.max_events = cfg.budgets.max_events;
        spec.max_jumps = cfg.budgets.max_jumps;
        let trajs = match run_trajectories(&spec, &net, &cfg.initial) {
            Ok(t) => t,
            Err(e) => return fail("internal", e.to_string()),
        };
        let label = match gen {
            GeneratorKind::Micro => "micro",
            GeneratorKind::Limit => "limit",
        };
        for (pi, phi) in catalog().iter().enumerate() {
            let stats = match dynkin_residual(&trajs, &net, gen, phi, &times) {
                Ok(s) => s,
                Err(e) => return fail("internal", e.to_string()),
            };
            for s in stats {
                csv.push_str(&format!(
                    "{label},{pi},{},{},{},{}\n",
                    s.t,
                    s.mean,
                    s.std_error,
                    s.mean.abs() <= 3.0 * s.std_error.max(1e-15)
                ));
            }
        }
    }
    match write_artifacts(cli, &cfg, "dynkin", vec![("dynkin_residuals.csv", csv.into_bytes())]) {
        Ok(()) => EXIT_OK,
        Err(code) => code,
    }
}

fn resample_trajectory(t: Trajectory, grid: multiscale::lattice::Grid) -> Trajectory {
    use multiscale::lattice::Field;
    let snapshots = t
        .snapshots
        .into_iter()
        .map(|s| multiscale::traj::Snapshot {
            t: s.t,
            u_c: Field::new(t.grid, s.u_c)
                .resample_midpoint(grid)
                .values()
                .to_vec(),
            u_d: s.u_d,
        })
        .collect();
    Trajectory {
        grid,
        snapshots,
        ..t
    }
}

fn write_artifacts(
    cli: &Cli,
    cfg: &Config,
    command: &str,
    files: Vec<(&str, Vec<u8>)>,
) -> Result<(), i32> {
    let mut writer = OutputWriter::new(&cli.out, command)
        .map_err(|e| fail("internal", format!("cannot open output dir: {e}")))?;
    for (name, bytes) in files {
        let path = writer
            .write(name, &bytes)
            .map_err(|e| fail("internal", format!("cannot write {name}: {e}")))?;
        if !cli.quiet {
            eprintln!("wrote {}", path.display());
        }
    }
    writer
        .finish(cfg)
        .map_err(|e| fail("internal", format!("cannot write manifest: {e}")))?;
    Ok(())
}

//! End-to-end checks of the command-line surface.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_multiscale"))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, body).unwrap();
    p
}

const SMALL_SSA: &str = r#"
engine = "ssa"

[grid]
n = 8
k = 2

[scale]
mu = 20.0

[horizon]
t = 0.5
dt_out = 0.1

[network]
preset = "toggle-field"

[initial]
f0 = { kind = "constant", value = 0.25 }
d0 = [0, 0]

[ensemble]
replicates = 2
root_seed = 9
"#;

#[test]
fn spectrum_emits_the_eigenvalue_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
[grid]
n = 4
k = 2
[scale]
mu = 10.0
[horizon]
t = 1.0
dt_out = 0.5
[network]
preset = "toggle-field"
[initial]
f0 = { kind = "constant", value = 0.25 }
d0 = [0, 0]
"#,
    );
    let out = bin()
        .args(["spectrum", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .arg("--quiet")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out/spectrum.csv")).unwrap();
    let mut rows = csv.lines();
    assert_eq!(
        rows.next().unwrap(),
        "m,kind,beta,beta_formula,orthonormality_residual"
    );
    // N = 4 has the constant mode, the cos/sin pair at m = 2 (beta = 32),
    // and the alternating mode at m = 4.
    let cells: Vec<Vec<&str>> = rows.map(|r| r.split(',').collect()).collect();
    assert_eq!(cells.len(), 4);
    let m2: Vec<_> = cells.iter().filter(|c| c[0] == "2").collect();
    assert_eq!(m2.len(), 2);
    for row in m2 {
        let beta: f64 = row[2].parse().unwrap();
        assert!((beta - 32.0).abs() <= 1e-12 * 32.0);
        let resid: f64 = row[4].parse().unwrap();
        assert!(resid < 1e-12);
    }
}

#[test]
fn validate_rejects_a_bad_network_with_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
[grid]
n = 8
k = 2
[scale]
mu = 10.0
[horizon]
t = 1.0
dt_out = 0.5
[network]
u_max = 2.0
d_max = 1
[[network.reactions]]
class = "fast_mixed"
gamma_c = 1
gamma_d = 1
rate = [[1, 1, 1.0]]
[initial]
f0 = { kind = "constant", value = 0.25 }
d0 = [0, 0]
"#,
    );
    let out = bin()
        .args(["validate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("\"error\":\"validation\""), "stderr: {err}");
}

#[test]
fn validate_accepts_the_golden_preset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_SSA);
    let out = bin()
        .args(["validate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .arg("--quiet")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("out/validation.json").exists());
    assert!(dir.path().join("out/manifest.json").exists());
}

#[test]
fn budget_exhaustion_exits_2_and_flags_truncation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &SMALL_SSA.replace(
            "[ensemble]",
            "[budgets]\nmax_events = 10\n\n[ensemble]",
        ),
    );
    let out = bin()
        .args(["ssa", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .arg("--quiet")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("out/summary.json")).unwrap(),
    )
    .unwrap();
    let truncated = summary["truncated_replicates"].as_array().unwrap();
    assert!(!truncated.is_empty());
}

#[test]
fn same_seed_gives_byte_identical_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_SSA);
    for sub in ["a", "b"] {
        let out = bin()
            .args(["ssa", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(dir.path().join(sub))
            .arg("--quiet")
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["trajectory_000.csv", "trajectory_001.csv", "jumps_000.jsonl"] {
        let a = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs");
    }
    // Seed override changes the bytes.
    let out = bin()
        .args(["ssa", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("c"))
        .args(["--seed", "12345", "--quiet"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let a = std::fs::read(dir.path().join("a/trajectory_000.csv")).unwrap();
    let c = std::fs::read(dir.path().join("c/trajectory_000.csv")).unwrap();
    assert_ne!(a, c);
}

#[test]
fn pdmp_subcommand_writes_jump_logs_with_nu() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &SMALL_SSA
            .replace("engine = \"ssa\"", "engine = \"pdmp\"")
            .replace("replicates = 2", "replicates = 1")
            .replace("t = 0.5", "t = 2.0"),
    );
    let out = bin()
        .args(["pdmp", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .arg("--quiet")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let jumps = std::fs::read_to_string(dir.path().join("out/jumps_000.jsonl")).unwrap();
    assert!(!jumps.trim().is_empty(), "expected at least one jump in T = 2");
    for line in jumps.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["nu_before"].is_array());
        assert!(v["nu_after"].is_array());
        assert!(v["gamma_d"].as_i64().unwrap() != 0);
    }
}

#[test]
fn dynkin_requires_fine_output_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_SSA);
    let out = bin()
        .args(["dynkin", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .arg("--quiet")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn dynkin_writes_residual_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &SMALL_SSA
            .replace("dt_out = 0.1", "dt_out = 0.005")
            .replace("replicates = 2", "replicates = 8"),
    );
    let out = bin()
        .args(["dynkin", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .arg("--quiet")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out/dynkin_residuals.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "generator,phi,t,mean,std_error,within_3se");
    // 3 catalog functions x 3 times for the micro generator.
    assert_eq!(lines.len(), 1 + 9);
}

#[test]
fn converge_needs_a_ladder_section() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_SSA);
    let out = bin()
        .args(["converge", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .arg("--quiet")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn converge_runs_a_tiny_ladder() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!(
            "{SMALL_SSA}\n[ladder]\nrungs = [[8, 20.0], [16, 60.0]]\ntimes = [0.3, 0.5]\nref_m = 64\nref_h = 1e-3\nref_multiple = 2\n"
        ),
    );
    let out = bin()
        .args(["converge", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .args(["--replicates", "8", "--quiet"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("out/ladder_report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["rungs"].as_array().unwrap().len(), 2);
    assert!(report["verdict"]["pairs_total"].as_u64().unwrap() > 0);
    // The reference cache landed next to the outputs.
    assert!(dir.path().join("out/cache").read_dir().unwrap().count() == 1);
}

#[test]
fn inadmissible_ladder_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!(
            "{SMALL_SSA}\n[ladder]\nrungs = [[8, 10.0], [16, 10.0]]\ntimes = [0.3, 0.5]\nref_m = 64\nref_h = 1e-3\nref_multiple = 2\n"
        ),
    );
    let out = bin()
        .args(["converge", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .args(["--replicates", "4", "--quiet"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_config_is_a_validation_failure() {
    let out = bin().arg("ssa").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

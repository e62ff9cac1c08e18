use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn solsplit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_solsplit")).args(args).output().unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

#[test]
fn validate_family_on_direct_sum_manifest() {
    let cfg = configs().join("family.json");
    let out = solsplit(&["validate-family", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let stdout = text(&out.stdout);
    assert!(stdout.contains("p = 2"));
    assert!(stdout.contains("direct sum: true"));
}

#[test]
fn converge_writes_four_step_sizes_with_orders() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("cn.toml");
    let out = solsplit(&["converge", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    let mut reader = csv::Reader::from_reader(csv.as_bytes());
    let header = reader.headers().unwrap().clone();
    let order = header.iter().position(|h| h == "order").unwrap();
    let family = header.iter().position(|h| h == "family").unwrap();
    let rows: Vec<_> = reader
        .records()
        .map(|r| r.unwrap())
        .filter(|r| &r[family] == "family.json")
        .collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0][order].is_empty());
    for r in &rows[1..] {
        let o: f64 = r[order].parse().unwrap();
        assert!((o - 2.0).abs() < 0.25, "order {o}");
    }
    let summary = std::fs::read_to_string(dir.path().join("convergence_summary.json")).unwrap();
    assert!(summary.contains("\"passed\": true"));
}

#[test]
fn missing_config_exits_2_naming_the_path() {
    let out = solsplit(&["sweep", "--config", "/no/such/experiment.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("/no/such/experiment.toml"));
    let out = solsplit(&["validate-family", "--config", "/no/such/family.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("/no/such/family.json"));
}

#[test]
fn unknown_flag_prints_usage_and_exits_2() {
    let out = solsplit(&["run", "--config", "x.toml", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).to_lowercase().contains("usage"));
    let out = solsplit(&["explode"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "families = []\n[[schemes]]\nscheme = \"implicit_scalar\"\n").unwrap();
    let out = solsplit(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("no families"));
}

#[test]
fn failed_verdict_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("strict.toml");
    // No observed order equals its formal order exactly.
    std::fs::write(
        &path,
        "families = [\"strips-2\"]\n[problem]\nm = 16\n[convergence]\nrefinements = 2\norder_tolerance = 0.0\n\
         [[schemes]]\nscheme = \"implicit_vector\"\ntau = 0.05\n",
    )
    .unwrap();
    let out = solsplit(&["converge", "--config", path.to_str().unwrap()]);
    let stdout = text(&out.stdout);
    assert!(stdout.contains("FAIL"), "{stdout}");
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn run_writes_trajectories_and_is_seed_deterministic() {
    let cfg = configs().join("run.toml");
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for (d, threads) in dirs.iter().zip(["1", "2"]) {
        let out = solsplit(&[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            d.path().to_str().unwrap(),
            "--seed",
            "42",
            "--threads",
            threads,
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    }
    let read = |d: &Path, f: &str| std::fs::read(d.join(f)).unwrap();
    assert_eq!(read(dirs[0].path(), "energy_audit.csv"), read(dirs[1].path(), "energy_audit.csv"));
    let traj = dirs[0].path().join("trajectories");
    let files: Vec<_> = std::fs::read_dir(&traj).unwrap().collect();
    assert!(!files.is_empty());
    let first = std::fs::read_to_string(traj.join("000_implicit_scalar_boxes-2x2.csv")).unwrap();
    assert!(first.starts_with("n,t,norm_a,energy_bound,flag\n"));
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use solsplit::decomposition::{validate_family, DecompositionFamily};
use solsplit::harness::{run_study, ExperimentConfig, StudyKind, StudyReport};
use solsplit::Error;

/// Solution-decomposition splitting schemes for du/dt + Au = f.
#[derive(Parser, Debug)]
#[command(name = "solsplit", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run each configured scheme and audit its energy estimates.
    Run(Common),
    /// Observed convergence orders under step halving.
    Converge(Common),
    /// Energy-bound violations over a (tau, mu, sigma) grid.
    Sweep(Common),
    /// Amplification spectra and stability certificates over a grid.
    Thresholds(Common),
    /// Per-step wall time of monolithic and split solves.
    Timing(Common),
    /// Check a JSON family manifest.
    ValidateFamily(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment config (TOML, or JSON by extension).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Random seed; overrides the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for sweeps and concurrent block solves.
    #[arg(long)]
    threads: Option<usize>,
}

const EXIT_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn is_config_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Config(_) | Error::Io { .. } | Error::Parse { .. } | Error::InvalidPartition(_) | Error::InvalidCover(_) | Error::InvalidWeights(_)
    )
}

fn fail(e: &Error, config_stage: bool) -> ExitCode {
    eprintln!("error: {e}");
    if config_stage || is_config_error(e) {
        ExitCode::from(EXIT_CONFIG)
    } else {
        ExitCode::from(EXIT_FAILED)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (kind, common) = match cli.command {
        Command::Run(c) => (Some(StudyKind::EnergyAudit), c),
        Command::Converge(c) => (Some(StudyKind::Convergence), c),
        Command::Sweep(c) => (Some(StudyKind::StabilitySweep), c),
        Command::Thresholds(c) => (Some(StudyKind::ThresholdMap), c),
        Command::Timing(c) => (Some(StudyKind::Timing), c),
        Command::ValidateFamily(c) => (None, c),
    };
    if let Some(threads) = common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: cannot start {threads} threads: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    match kind {
        Some(kind) => study(kind, &common),
        None => validate(&common.config),
    }
}

fn study(kind: StudyKind, common: &Common) -> ExitCode {
    let mut cfg = match ExperimentConfig::load(&common.config) {
        Ok(cfg) => cfg,
        Err(e) => return fail(&e, true),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out = Some(out.clone());
    }
    if let Some(declared) = cfg.study {
        if declared != kind {
            log::warn!("config declares study `{declared}`, running `{kind}`");
        }
    }
    let report = match run_study(&cfg, kind) {
        Ok(r) => r,
        Err(e) => return fail(&e, false),
    };
    if let Err(e) = emit(&report, cfg.out.as_deref()) {
        return fail(&e, false);
    }
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAILED)
    }
}

fn emit(report: &StudyReport, out: Option<&Path>) -> solsplit::Result<()> {
    match out {
        Some(dir) => {
            let (csv, json) = report.write(dir)?;
            println!("wrote {} and {}", csv.display(), json.display());
        }
        None => print!("{}", report.to_csv_string()?),
    }
    for v in &report.verdicts {
        let tag = match (v.passed, v.informational) {
            (true, _) => "PASS",
            (false, true) => "NOTE",
            (false, false) => "FAIL",
        };
        println!("{tag} {}: {}", v.name, v.detail);
    }
    println!("{} rows in {:.2} s", report.rows.len(), report.elapsed_s);
    Ok(())
}

fn validate(path: &Path) -> ExitCode {
    if !path.is_file() {
        eprintln!("error: family manifest not found: {}", path.display());
        return ExitCode::from(EXIT_CONFIG);
    }
    let family = match DecompositionFamily::load_manifest(path) {
        Ok(f) => f,
        Err(e) => return fail(&e, true),
    };
    let report = validate_family(&family);
    println!("n = {}, p = {}, kind = {:?}", family.n(), family.p(), family.kind());
    println!("complete: {} (min eig of stacked Gram {:.3e})", report.complete, report.min_eig_stacked_gram);
    println!("component Grams positive: {} (min eig {:.3e})", report.each_gram_pd, report.min_eig_component_gram);
    println!("direct sum: {} (max deviation {:.3e})", report.direct_sum, report.max_direct_sum_deviation);
    if report.is_valid() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAILED)
    }
}

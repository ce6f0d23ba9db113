mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use commands::{Context, Failure, Outcome};
use config::{ExperimentConfig, Tolerances};

#[derive(Parser)]
#[command(
    name = "harmap",
    version,
    about = "Harmonic maps from holomorphic potentials"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "harmap-out")]
    out: PathBuf,
    /// Replaces every threshold in the config.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Samples per grid side.
    #[arg(long, global = true)]
    grid: Option<usize>,
    #[arg(long, global = true)]
    trunc: Option<usize>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Ψ, Φ, b and φ for a potential.
    Run,
    /// Uniton addition against the gauged potential.
    Uniton,
    /// Gauss bundles of a finite-type Grassmannian map.
    Gauss,
    /// Plus-gauge and simple-factor dressing.
    Dress,
    /// Simple factors approaching a uniton gauge.
    Complete,
    /// Re-verify a stored Φ field.
    Verify,
}

const EXIT_THRESHOLDS: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn load(cli: &Cli) -> Result<ExperimentConfig, String> {
    let path = cli.config.as_ref().ok_or("--config is required")?;
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    if let Some(x) = cli.tol {
        cfg.tolerances = Tolerances::uniform(x);
    }
    if let Some(n) = cli.grid {
        cfg.grid.samples = n;
    }
    if let Some(m) = cli.trunc {
        cfg.trunc = m;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: &Cli, cfg: &ExperimentConfig) -> Result<Outcome, Failure> {
    let base_dir = cli
        .config
        .as_deref()
        .and_then(Path::parent)
        .unwrap_or(Path::new("."));
    let ctx = Context {
        cfg,
        seed: cli.seed,
        base_dir,
    };
    match cli.command {
        Command::Run => commands::run(&ctx),
        Command::Uniton => commands::uniton(&ctx),
        Command::Gauss => commands::gauss(&ctx),
        Command::Dress => commands::dress(&ctx),
        Command::Complete => commands::complete(&ctx),
        Command::Verify => commands::verify(&ctx),
    }
}

fn diagnose(kind: &str, message: &str, code: u8) -> ExitCode {
    eprintln!("{}", json!({ "error": kind, "message": message }));
    ExitCode::from(code)
}

fn write_all(out: &Path, files: &[(String, String)]) -> std::io::Result<()> {
    std::fs::create_dir_all(out)?;
    for (name, text) in files {
        std::fs::write(out.join(name), text)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load(&cli) {
        Ok(cfg) => cfg,
        Err(e) => return diagnose("config", &e, EXIT_CONFIG),
    };
    let outcome = match execute(&cli, &cfg) {
        Ok(o) => o,
        Err(Failure::Config(e)) => return diagnose("config", &e, EXIT_CONFIG),
        Err(Failure::Numerical(e)) => return diagnose("numerical", &e.to_string(), EXIT_NUMERICAL),
    };
    if let Err(e) = write_all(&cli.out, &outcome.files) {
        return diagnose("io", &format!("{}: {e}", cli.out.display()), EXIT_CONFIG);
    }
    if outcome.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_THRESHOLDS)
    }
}

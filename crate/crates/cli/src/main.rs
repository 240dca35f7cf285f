use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tcclock::harness::{run, verify_manifest, Mode, RunConfig};
use tcclock::{ClockParams, Error};

#[derive(Parser, Debug)]
#[command(name = "tcclock", version, about = "Time-crystal clock simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Trajectories, mean counts and count spectrum over a fixed horizon.
    Simulate(Flags),
    /// Resolution/accuracy tradeoff over thresholds and the optimal threshold.
    SweepThreshold(Flags),
    /// Optimal-threshold merit across drive strengths, with fits.
    SweepLambda(Flags),
    /// Accuracy and entropy per tick across spin sizes, with power-law fits.
    SweepSpin(Flags),
    /// Stopping-time fluctuation theorem estimates.
    FtCheck(Flags),
    /// Accuracy against the thermodynamic and kinetic bounds.
    Turkur(Flags),
    /// Fano factors under drive noise against the Rabi benchmark.
    Noise(Flags),
    /// Trajectory-averaged count spectrum and its dominant peak.
    Spectrum(Flags),
    /// Check an output directory against its manifest.
    Verify { dir: PathBuf },
}

#[derive(Args, Debug, Default)]
struct Flags {
    /// JSON configuration; flags given here override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Twice the total spin.
    #[arg(long)]
    spin2: Option<u32>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    gamma0: Option<f64>,
    /// Inverse temperature in units of the clock splitting; `inf` for zero temperature.
    #[arg(long)]
    beta: Option<f64>,
    /// emissions, activity, heat, or `a_minus,a_plus`.
    #[arg(long, allow_hyphen_values = true)]
    observable: Option<String>,
    #[arg(long, conflicts_with = "m_grid")]
    threshold: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    m_grid: Option<Vec<u64>>,
    #[arg(long)]
    trajectories: Option<u64>,
    #[arg(long)]
    horizon_min_ticks: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    noise_sigma_rel: Option<Vec<f64>>,
    #[arg(long)]
    noise_dt: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    spins2: Option<Vec<u32>>,
    /// Record length for simulate and spectrum.
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    workers: Option<usize>,
}

fn build_config(mode: Mode, f: Flags) -> tcclock::Result<RunConfig> {
    let mut cfg = match &f.config {
        Some(path) => {
            let mut c = RunConfig::load(path)?;
            c.mode = mode;
            c
        }
        None => {
            let (Some(spin2), Some(lambda)) = (f.spin2, f.lambda) else {
                return Err(Error::Config("--spin2 and --lambda are required without --config".into()));
            };
            let params = ClockParams { spin2, lambda, gamma0: f.gamma0.unwrap_or(1e-3), beta: f.beta.unwrap_or(2.0) };
            RunConfig::new(mode, params)
        }
    };
    if let Some(v) = f.spin2 {
        cfg.params.spin2 = v;
    }
    if let Some(v) = f.lambda {
        cfg.params.lambda = v;
    }
    if let Some(v) = f.gamma0 {
        cfg.params.gamma0 = v;
    }
    if let Some(v) = f.beta {
        cfg.params.beta = v;
    }
    if let Some(v) = f.observable {
        cfg.observable = v;
    }
    if let Some(v) = f.threshold {
        cfg.threshold = Some(v);
        cfg.m_grid = None;
    }
    if let Some(v) = f.m_grid {
        cfg.m_grid = Some(v);
        cfg.threshold = None;
    }
    if let Some(v) = f.trajectories {
        cfg.trajectories = v;
    }
    if let Some(v) = f.horizon_min_ticks {
        cfg.horizon_min_ticks = v;
    }
    if let Some(v) = f.seed {
        cfg.seed = v;
    }
    if let Some(v) = f.out {
        cfg.out = v;
    }
    if let Some(v) = f.noise_sigma_rel {
        cfg.noise_sigma_rel = Some(v);
    }
    if let Some(v) = f.noise_dt {
        cfg.noise_dt = Some(v);
    }
    if let Some(v) = f.lambdas {
        cfg.lambdas = Some(v);
    }
    if let Some(v) = f.spins2 {
        cfg.spins2 = Some(v);
    }
    if let Some(v) = f.horizon {
        cfg.horizon = Some(v);
    }
    if let Some(v) = f.workers {
        cfg.workers = Some(v);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: Cli) -> tcclock::Result<()> {
    let (mode, flags) = match cli.command {
        Command::Verify { dir } => {
            let bad = verify_manifest(&dir)?;
            if bad.is_empty() {
                println!("ok: all files match {}", dir.join("manifest.json").display());
                return Ok(());
            }
            for b in &bad {
                eprintln!("mismatch: {b}");
            }
            return Err(Error::Config(format!("{} file(s) do not match the manifest", bad.len())));
        }
        Command::Simulate(f) => (Mode::Simulate, f),
        Command::SweepThreshold(f) => (Mode::SweepThreshold, f),
        Command::SweepLambda(f) => (Mode::SweepLambda, f),
        Command::SweepSpin(f) => (Mode::SweepSpin, f),
        Command::FtCheck(f) => (Mode::FtCheck, f),
        Command::Turkur(f) => (Mode::Turkur, f),
        Command::Noise(f) => (Mode::Noise, f),
        Command::Spectrum(f) => (Mode::Spectrum, f),
    };
    let cfg = build_config(mode, flags)?;
    let m = run(&cfg)?;
    println!("{}: wrote {} files to {} in {:.2} s", mode.as_str(), m.files.len(), cfg.out.display(), m.wall_time_s);
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

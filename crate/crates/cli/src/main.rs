//! `qaoa-noise`: reproducible noisy-QAOA experiments writing CSV and JSON.

mod commands;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qaoa_noise::engine::NoiseModel;
use qaoa_noise::Ensemble;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "qaoa-noise", version, about = "Noisy QAOA simulation experiments")]
struct Cli {
    /// Worker threads; does not affect results.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a random Ising instance.
    Gen(GenArgs),
    /// Compute f_m and c_m curves and fit the closed-form models.
    Mlevel(MlevelArgs),
    /// Cost and fidelity versus noise rate for several depths.
    Sweep(SweepArgs),
    /// Cross-check the simulation engines against each other.
    Verify(VerifyArgs),
    /// Optimise QAOA angles.
    Optimize(OptimizeArgs),
}

/// Comma-separated list parsed as one argument.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct List<T>(pub Vec<T>);

impl<T> std::ops::Deref for List<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.0
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GenSpec {
    pub n: usize,
    pub ensemble: Ensemble,
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct GenArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, value_parser = parse_ensemble)]
    pub ensemble: Ensemble,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
#[group(required = true, multiple = false)]
pub struct InstanceSource {
    /// Instance JSON file.
    #[arg(long)]
    pub instance: Option<PathBuf>,
    /// Generate an instance: `n,ensemble,seed`.
    #[arg(long = "gen", value_parser = parse_gen_spec)]
    pub generate: Option<GenSpec>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseArg {
    Depolarizing,
    Dephasing,
}

impl NoiseArg {
    pub fn model(self, p: f64) -> qaoa_noise::Result<NoiseModel> {
        match self {
            NoiseArg::Depolarizing => NoiseModel::depolarizing(p),
            NoiseArg::Dephasing => NoiseModel::dephasing(p),
        }
    }
}

#[derive(Debug, Args, Serialize)]
#[group(multiple = false)]
pub struct AngleSource {
    /// Inline angles `γ_1,…,γ_d,β_1,…,β_d`.
    #[arg(long, value_parser = parse_floats)]
    pub angles: Option<List<f64>>,
    /// Angle schedule JSON file.
    #[arg(long)]
    pub angles_file: Option<PathBuf>,
    /// Optimise noiseless angles (the default).
    #[arg(long)]
    pub optimize: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct MlevelArgs {
    #[command(flatten)]
    pub source: InstanceSource,
    #[arg(long, default_value_t = 1)]
    pub depth: usize,
    #[command(flatten)]
    pub angles: AngleSource,
    #[arg(long, value_enum, default_value_t = NoiseArg::Depolarizing)]
    pub noise: NoiseArg,
    /// Noise rates at which to report reconstructed and modelled values.
    #[arg(long, value_parser = parse_floats)]
    pub p: Option<List<f64>>,
    /// Patterns evaluated per m before switching to sampling.
    #[arg(long, default_value_t = 2000)]
    pub budget: u64,
    #[arg(long, default_value_t = 20)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub source: InstanceSource,
    /// Depths, e.g. `1,2,3` or `1-5`.
    #[arg(long, value_parser = parse_depths, default_value = "1-5")]
    pub depths: List<usize>,
    #[arg(long, value_enum, default_value_t = NoiseArg::Depolarizing)]
    pub noise: NoiseArg,
    /// Explicit noise rates.
    #[arg(long, value_parser = parse_floats, conflicts_with = "p_grid")]
    pub p: Option<List<f64>>,
    /// Uniform grid `a:b:steps` with `steps + 1` points.
    #[arg(long, value_parser = parse_p_grid)]
    pub p_grid: Option<List<f64>>,
    /// JSON map from depth to angle schedule; optimised when absent.
    #[arg(long)]
    pub angles_file: Option<PathBuf>,
    /// Re-optimise angles under noise at every grid point.
    #[arg(long)]
    pub reoptimize: bool,
    /// Fit closed-form models per depth and add model columns.
    #[arg(long)]
    pub fit: bool,
    #[arg(long, default_value_t = 2000)]
    pub budget: u64,
    #[arg(long, default_value_t = 20)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Fast,
    Full,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    ChannelSign,
}

#[derive(Debug, Args, Serialize)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = Level::Fast)]
    pub level: Level,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for the JSON report; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, hide = true)]
    pub inject_fault: Option<Fault>,
}

#[derive(Debug, Args, Serialize)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub source: InstanceSource,
    #[arg(long, value_parser = parse_depths, default_value = "1")]
    pub depths: List<usize>,
    #[arg(long, value_enum, default_value_t = NoiseArg::Depolarizing)]
    pub noise: NoiseArg,
    /// Optimise under noise at this rate; noiseless when absent.
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long, default_value_t = 20)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_ensemble(s: &str) -> Result<Ensemble, String> {
    s.parse().map_err(|e: qaoa_noise::Error| e.to_string())
}

fn parse_gen_spec(s: &str) -> Result<GenSpec, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [n, ensemble, seed] = parts[..] else {
        return Err("expected n,ensemble,seed".into());
    };
    Ok(GenSpec {
        n: n.parse().map_err(|_| format!("invalid qubit count '{n}'"))?,
        ensemble: parse_ensemble(ensemble)?,
        seed: seed.parse().map_err(|_| format!("invalid seed '{seed}'"))?,
    })
}

fn parse_floats(s: &str) -> Result<List<f64>, String> {
    s.split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("invalid number '{t}'"))
        })
        .collect::<Result<_, _>>()
        .map(List)
}

fn parse_depths(s: &str) -> Result<List<usize>, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim) {
        let bad = || format!("invalid depth '{part}'");
        match part.split_once('-') {
            Some((a, b)) => {
                let a: usize = a.trim().parse().map_err(|_| bad())?;
                let b: usize = b.trim().parse().map_err(|_| bad())?;
                if a > b {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    if out.contains(&0) {
        return Err("depths must be at least 1".into());
    }
    out.sort_unstable();
    out.dedup();
    Ok(List(out))
}

fn parse_p_grid(s: &str) -> Result<List<f64>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, steps] = parts[..] else {
        return Err("expected a:b:steps".into());
    };
    let a: f64 = a.parse().map_err(|_| format!("invalid grid start '{a}'"))?;
    let b: f64 = b.parse().map_err(|_| format!("invalid grid end '{b}'"))?;
    let steps: usize = steps.parse().map_err(|_| format!("invalid step count '{steps}'"))?;
    if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) || a > b {
        return Err("grid bounds must satisfy 0 <= a <= b <= 1".into());
    }
    if steps == 0 {
        return Ok(List(vec![a]));
    }
    Ok(List((0..=steps).map(|i| a + (b - a) * i as f64 / steps as f64).collect()))
}

/// Command failure mapped onto the process exit code.
#[derive(Debug)]
pub enum Failure {
    Core(qaoa_noise::Error),
    Verification(Vec<String>),
}

impl From<qaoa_noise::Error> for Failure {
    fn from(e: qaoa_noise::Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Core(qaoa_noise::Error::Resource(_)) => 2,
            Failure::Core(_) => 1,
            Failure::Verification(_) => 3,
        }
    }
}

fn usage_for(subcommand: Option<&str>) -> String {
    use clap::CommandFactory;
    let mut cmd = Cli::command();
    match subcommand.and_then(|name| cmd.find_subcommand_mut(name)) {
        Some(sub) => sub.render_usage().to_string(),
        None => cmd.render_usage().to_string(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            if !e.use_stderr() {
                return ExitCode::SUCCESS;
            }
            if !e.to_string().contains("Usage:") {
                eprintln!("\n{}", usage_for(std::env::args().nth(1).as_deref()));
            }
            return ExitCode::from(1);
        }
    };
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: could not configure thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match &cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Mlevel(a) => commands::mlevel(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Optimize(a) => commands::optimize(a),
        Command::Verify(a) => verify::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            match &failure {
                Failure::Core(e) => eprintln!("error: {e}"),
                Failure::Verification(names) => {
                    eprintln!("verification failed: {}", names.join(", "))
                }
            }
            ExitCode::from(failure.exit_code())
        }
    }
}

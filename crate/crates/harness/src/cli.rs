//! Command-line front end. Usage errors exit with 2, runtime errors with 1.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use tunamh::kernels::{suggest_chi, ChiSuggestion};
use tunamh::proposal::GaussianRandomWalk;

use crate::bias::{bias_demo, write_rows, BiasKernel, BiasOptions};
use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::experiment::{output_dir, run_experiment, RunOptions};
use crate::task::{build, Built};
use crate::tune::{tune_acceptance, TuneOptions};
use crate::verify::{run_spectral, write_pairs, Fixture};

#[derive(Debug, Parser)]
#[command(name = "tunamh", version, about = "Minibatch Metropolis-Hastings experiments")]
pub struct Cli {
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for repeats and spectral estimation.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Directory holding the MNIST IDX files (else `MNIST_DIR`).
    #[arg(long, global = true)]
    pub mnist_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment config.
    Run { config: PathBuf },
    /// Tune the proposal step size to a target acceptance rate.
    Tune(TuneArgs),
    /// Verify the gap-ratio bound on a finite fixture.
    Spectral(SpectralArgs),
    /// TV error versus number of states on the discrete line.
    BiasDemo(BiasArgs),
    /// Suggest χ from a full-MH pilot run.
    SuggestChi {
        config: PathBuf,
        #[arg(long, default_value_t = 2000)]
        pilot_steps: usize,
    },
    /// List the shipped presets, or write them as config files.
    Presets {
        /// Write `<name>.json` for every preset into this directory.
        #[arg(long)]
        write: Option<PathBuf>,
        /// Write the shortened desk-scale variants instead.
        #[arg(long)]
        desk: bool,
    },
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    pub config: PathBuf,
    #[arg(long)]
    pub target: f64,
    #[arg(long, default_value_t = 0.02)]
    pub tol: f64,
    #[arg(long, default_value_t = 24)]
    pub max_rounds: usize,
    #[arg(long, default_value_t = 2000)]
    pub pilot_steps: usize,
}

#[derive(Debug, Args)]
pub struct SpectralArgs {
    #[arg(long)]
    pub fixture: Fixture,
    #[arg(long, value_delimiter = ',', required = true)]
    pub chi: Vec<f64>,
    #[arg(long, default_value_t = 100_000)]
    pub trials: usize,
}

#[derive(Debug, Args)]
pub struct BiasArgs {
    #[arg(long = "K", value_delimiter = ',', required = true)]
    pub states: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "tunamh,austeremh")]
    pub kernels: Vec<String>,
    #[arg(long, default_value_t = 10_000_000)]
    pub steps: usize,
    #[arg(long, default_value_t = 100_000)]
    pub burnin: usize,
}

fn parse_kernel(s: &str) -> Result<BiasKernel> {
    match s {
        "mh" => Ok(BiasKernel::Mh),
        "tunamh" => Ok(BiasKernel::Tunamh),
        "austeremh" | "austere" => Ok(BiasKernel::Austeremh),
        other => Err(HarnessError::Usage(format!("unknown bias-demo kernel {other:?}"))),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).map_err(|e| HarnessError::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

fn load(cli: &Cli, path: &Path) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = Some(o.clone());
    }
    Ok(cfg)
}

/// Full-MH pilot on the config's task, from its initial state.
pub fn suggest_for_config(cfg: &ExperimentConfig, pilot_steps: usize, mnist: Option<&PathBuf>) -> Result<ChiSuggestion> {
    let (built, _) = build(cfg, mnist)?;
    let mut rng = crate::experiment::repeat_stream(cfg.seed, 0);
    let walk = GaussianRandomWalk::new(cfg.step_size);
    let s = match &built {
        Built::Rlr(t, _) => suggest_chi(&t.model, &walk, t.init.clone(), pilot_steps, &mut rng),
        Built::Tgm(t, _) => suggest_chi(&t.model, &walk, t.init.clone(), pilot_steps, &mut rng),
        Built::Logreg(t, _) => suggest_chi(&t.model, &walk, t.init.clone(), pilot_steps, &mut rng),
        Built::Line(t) => suggest_chi(&t.model, &t.proposal, t.init, pilot_steps, &mut rng),
        Built::Uniform(t) => suggest_chi(&t.model, &t.proposal, t.init, pilot_steps, &mut rng),
        Built::TwoState(t) => suggest_chi(&t.model, &t.proposal, t.init, pilot_steps, &mut rng),
    };
    Ok(s?)
}

fn dispatch(cli: &Cli) -> Result<String> {
    let opts = RunOptions { mnist_dir: cli.mnist_dir.clone(), threads: cli.threads };
    let seed = cli.seed.unwrap_or(1);
    let out_or = |name: &str| cli.out.clone().unwrap_or_else(|| PathBuf::from("results").join(name));
    match &cli.command {
        Command::Run { config } => {
            let cfg = load(cli, config)?;
            let m = run_experiment(&cfg, &opts)?;
            let acc = m.aggregate.get("acceptance_rate").map_or(f64::NAN, |v| v.mean);
            let batch = m.aggregate.get("mean_batch").map_or(f64::NAN, |v| v.mean);
            Ok(format!(
                "run {}: {} on {}, {} repeats, acceptance {acc:.3}, mean batch {batch:.2} -> {}",
                cfg.name,
                m.kernel_id,
                m.model_id,
                m.repeats.len(),
                output_dir(&cfg).display()
            ))
        }
        Command::Tune(a) => {
            let cfg = load(cli, &a.config)?;
            let t = TuneOptions { target: a.target, tol: a.tol, max_rounds: a.max_rounds, pilot_steps: a.pilot_steps };
            let r = tune_acceptance(&cfg, &t, &opts)?;
            let dir = output_dir(&cfg);
            ensure_dir(&dir)?;
            write_json(&dir.join("tune.json"), &r)?;
            Ok(format!(
                "tune {}: step {:.4e} gives acceptance {:.3} after {} pilots{}",
                cfg.name,
                r.step_size,
                r.achieved_rate,
                r.history.len(),
                r.warning.as_deref().map(|w| format!(" ({w})")).unwrap_or_default()
            ))
        }
        Command::Spectral(a) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.threads.unwrap_or(0)).build();
            let pool = pool.map_err(|e| HarnessError::Config(e.to_string()))?;
            let rep = pool.install(|| run_spectral(a.fixture, &a.chi, a.trials, seed))?;
            let dir = out_or("spectral");
            ensure_dir(&dir)?;
            write_json(&dir.join(format!("{}.json", rep.fixture)), &rep)?;
            write_pairs(&dir.join(format!("{}-pairs.csv", rep.fixture)), &rep)?;
            let ratios: Vec<String> = rep.reports.iter().map(|r| format!("χ={}: {:.3}≥{:.3}", r.chi, r.ratio, r.kappa)).collect();
            Ok(format!("spectral {}: pass={} [{}]", rep.fixture, rep.all_pass, ratios.join(", ")))
        }
        Command::BiasDemo(a) => {
            let kernels = a.kernels.iter().map(|k| parse_kernel(k)).collect::<Result<Vec<_>>>()?;
            let bo = BiasOptions {
                states: a.states.clone(),
                kernels,
                steps: a.steps,
                burnin: a.burnin,
                seed,
                ..BiasOptions::default()
            };
            let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.threads.unwrap_or(0)).build();
            let rows = pool.map_err(|e| HarnessError::Config(e.to_string()))?.install(|| bias_demo(&bo))?;
            let dir = out_or("bias-demo");
            ensure_dir(&dir)?;
            write_rows(&dir.join("bias.csv"), &rows)?;
            let cells: Vec<String> = rows.iter().map(|r| format!("K={} {} tv={:.3}", r.k, r.kernel, r.tv)).collect();
            Ok(format!("bias-demo: {}", cells.join("; ")))
        }
        Command::SuggestChi { config, pilot_steps } => {
            let cfg = load(cli, config)?;
            let s = suggest_for_config(&cfg, *pilot_steps, cli.mnist_dir.as_ref())?;
            let dir = output_dir(&cfg);
            ensure_dir(&dir)?;
            write_json(&dir.join("chi.json"), &s)?;
            Ok(format!(
                "suggest-chi {}: heuristic {:.3e}, theoretical {:.3e} (C = {:.4}, M90 = {:.4e})",
                cfg.name, s.chi_heuristic, s.chi_theoretical, s.total_bound, s.percentile_metric
            ))
        }
        Command::Presets { write, desk } => {
            let presets = crate::presets::all();
            if let Some(dir) = write {
                ensure_dir(dir)?;
                for p in &presets {
                    let cfg = if *desk { p.desk() } else { p.config.clone() };
                    fs::write(dir.join(format!("{}.json", p.name)), cfg.to_json()?).map_err(|e| HarnessError::io(dir, e))?;
                }
                return Ok(format!("wrote {} presets to {}", presets.len(), dir.display()));
            }
            Ok(presets.iter().map(|p| format!("{:<28} {}", p.name, p.description)).collect::<Vec<_>>().join("\n"))
        }
    }
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    message: String,
    exit_code: i32,
}

fn kind(e: &HarnessError) -> &'static str {
    match e {
        HarnessError::Usage(_) => "usage",
        HarnessError::Config(_) => "config",
        HarnessError::Data(_) => "data",
        HarnessError::Step { .. } => "kernel",
        HarnessError::Core(_) => "core",
        HarnessError::Io { .. } => "io",
        HarnessError::Json(_) => "json",
        HarnessError::Csv(_) => "csv",
    }
}

/// Parses `args` (including the program name), runs, and returns the exit
/// code. Errors go to stderr as one JSON object.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(line) => {
            println!("{line}");
            0
        }
        Err(e) => {
            let report = ErrorReport { error: kind(&e), message: e.to_string(), exit_code: e.exit_code() };
            eprintln!("{}", serde_json::to_string(&report).unwrap_or_else(|_| e.to_string()));
            e.exit_code()
        }
    }
}

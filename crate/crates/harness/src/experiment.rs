//! Runs configured experiments and persists their results.
//!
//! Output layout under the run directory:
//! `manifest.json` and one `repeat-<r>.csv` per repeat. CSV rows are long
//! format, `step,wall_ms,metric,value`; only `wall_ms` depends on the machine.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tunamh::diagnostics::{
    ess, normalise_counts, symmetric_kl, test_accuracy, tv_discrete, BatchAccumulator, BatchStats, GridHistogram,
};
use tunamh::models::TruncGaussMix;
use tunamh::proposal::GaussianRandomWalk;
use tunamh::spectral::stationary_distribution;
use tunamh::{EnergyModel, RngStream};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::task::{build, Built, ContinuousTask, DataInfo, FiniteTask, Reference, StepKernel};

pub const CSV_SCHEMA_VERSION: u32 = 1;
pub const CSV_COLUMNS: [&str; 4] = ["step", "wall_ms", "metric", "value"];

/// Settings that do not belong in the config file.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub mnist_dir: Option<PathBuf>,
    /// Worker threads for repeats; `None` uses rayon's default.
    pub threads: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub step: usize,
    pub wall_ms: f64,
    pub metric: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepeatSummary {
    pub repeat: usize,
    pub seed: u64,
    pub substream: u64,
    pub csv: Option<String>,
    pub batch: BatchStats,
    /// Task metric values at the final checkpoint.
    pub metrics: BTreeMap<String, f64>,
    /// Mean per-coordinate ESS of the kept samples.
    pub ess: f64,
    pub ess_min: f64,
    pub samples: usize,
    /// Time spent in the step loop.
    pub wall_ms: f64,
    pub ess_per_sec: f64,
}

#[derive(Clone, Debug)]
pub struct RepeatOutput {
    pub rows: Vec<Row>,
    pub summary: RepeatSummary,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

impl MeanSe {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        if xs.is_empty() {
            return Self { mean: f64::NAN, se: f64::NAN };
        }
        let mean = xs.iter().sum::<f64>() / n;
        let se = if xs.len() > 1 { (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt() } else { 0.0 };
        Self { mean, se }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultManifest {
    pub csv_schema_version: u32,
    pub csv_columns: Vec<String>,
    pub code_version: String,
    pub config: ExperimentConfig,
    pub kernel_id: String,
    pub model_id: String,
    pub data: DataInfo,
    pub repeats: Vec<RepeatSummary>,
    /// Across-repeat mean and standard error of every summary number.
    pub aggregate: BTreeMap<String, MeanSe>,
}

/// Consumes post-burnin samples and reports task metrics.
trait Tracker<S> {
    fn record(&mut self, state: &S);
    fn samples(&self) -> usize;
    fn metrics(&self) -> Vec<(&'static str, f64)>;
    /// `(mean, min)` per-coordinate ESS.
    fn ess(&self) -> tunamh::Result<(f64, f64)>;
}

struct VecTracker<'a> {
    reference: &'a Reference,
    sum: Vec<f64>,
    series: Vec<Vec<f64>>,
    grid: Option<GridHistogram>,
    mode_hits: [usize; 2],
}

impl<'a> VecTracker<'a> {
    fn new(reference: &'a Reference, dim: usize) -> Self {
        let grid = match reference {
            Reference::Grid(g) => Some(GridHistogram::new(g)),
            _ => None,
        };
        Self { reference, sum: vec![0.0; dim], series: vec![Vec::new(); dim], grid, mode_hits: [0, 0] }
    }

    fn mean(&self) -> Vec<f64> {
        let n = self.samples().max(1) as f64;
        self.sum.iter().map(|s| s / n).collect()
    }
}

impl Tracker<Vec<f64>> for VecTracker<'_> {
    fn record(&mut self, s: &Vec<f64>) {
        for ((acc, ser), v) in self.sum.iter_mut().zip(&mut self.series).zip(s) {
            *acc += v;
            ser.push(*v);
        }
        if let (Some(h), Reference::Grid(g)) = (&mut self.grid, self.reference) {
            h.add(g, s[0], s[1]);
            let [a, b] = TruncGaussMix::modes();
            let da = (s[0] - a[0]).powi(2) + (s[1] - a[1]).powi(2);
            let db = (s[0] - b[0]).powi(2) + (s[1] - b[1]).powi(2);
            self.mode_hits[(db < da) as usize] += 1;
        }
    }

    fn samples(&self) -> usize {
        self.series.first().map_or(0, Vec::len)
    }

    fn metrics(&self) -> Vec<(&'static str, f64)> {
        let n = self.samples() as f64;
        match self.reference {
            Reference::Truth(t) => vec![("mse", tunamh::diagnostics::mse(&self.mean(), t))],
            Reference::Test(test) => test_accuracy(&self.mean(), test).map(|a| vec![("test_accuracy", a)]).unwrap_or_default(),
            Reference::Grid(g) => {
                let h = self.grid.as_ref().expect("grid tracker");
                let kl = g.with_counts(&h.counts).and_then(|p| symmetric_kl(&p, g)).unwrap_or(f64::NAN);
                vec![("sym_kl", kl), ("mode_mass_0", self.mode_hits[0] as f64 / n), ("mode_mass_1", self.mode_hits[1] as f64 / n)]
            }
            Reference::None => vec![],
        }
    }

    fn ess(&self) -> tunamh::Result<(f64, f64)> {
        let mut vals = Vec::with_capacity(self.series.len());
        for s in &self.series {
            vals.push(ess(s)?.ess);
        }
        let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        Ok((vals.iter().sum::<f64>() / vals.len().max(1) as f64, min))
    }
}

struct FiniteTracker {
    counts: Vec<u64>,
    exact: Vec<f64>,
    series: Vec<f64>,
}

impl Tracker<usize> for FiniteTracker {
    fn record(&mut self, s: &usize) {
        self.counts[*s] += 1;
        self.series.push(*s as f64);
    }

    fn samples(&self) -> usize {
        self.series.len()
    }

    fn metrics(&self) -> Vec<(&'static str, f64)> {
        vec![("tv", tv_discrete(&normalise_counts(&self.counts), &self.exact).unwrap_or(f64::NAN))]
    }

    fn ess(&self) -> tunamh::Result<(f64, f64)> {
        let e = ess(&self.series)?.ess;
        Ok((e, e))
    }
}

fn batch_rows(step: usize, wall_ms: f64, b: &BatchStats, rows: &mut Vec<Row>) {
    for (name, v) in [
        ("acceptance_rate", b.acceptance_rate),
        ("mean_batch", b.mean_batch),
        ("mean_expected_batch", b.mean_expected_batch),
        ("mean_oracle_calls", b.mean_oracle_calls),
        ("fallback_fraction", b.fallback_fraction),
    ] {
        rows.push(Row { step, wall_ms, metric: name.into(), value: v });
    }
}

/// Runs one chain. Checkpoints fall on multiples of the cadence after burnin
/// and on the last step.
#[allow(clippy::too_many_arguments)]
fn run_repeat<M, P, T>(
    cfg: &ExperimentConfig,
    repeat: usize,
    kernel: &dyn StepKernel<M, P>,
    model: &M,
    proposal: &P,
    init: M::State,
    mut rng: RngStream,
    tracker: &mut T,
) -> Result<RepeatOutput>
where
    M: EnergyModel,
    T: Tracker<M::State>,
{
    let every = cfg.checkpoint_every();
    let seed = rng.seed();
    let substream = rng.substream_id();
    let mut acc = BatchAccumulator::default();
    let mut rows = Vec::new();
    let mut state = init;
    let mut wall_ms = 0.0;
    let mut segment = Instant::now();
    let mut last = Vec::new();
    for t in 1..=cfg.steps {
        let (next, rec) = kernel.step_once(model, proposal, &state, &mut rng).map_err(|source| HarnessError::Step {
            repeat,
            step: t,
            source,
        })?;
        state = next;
        acc.push(&rec);
        if t > cfg.burnin && (t - cfg.burnin).is_multiple_of(cfg.thin) {
            tracker.record(&state);
        }
        if t > cfg.burnin && (t % every == 0 || t == cfg.steps) {
            wall_ms += segment.elapsed().as_secs_f64() * 1e3;
            batch_rows(t, wall_ms, &acc.stats(), &mut rows);
            if tracker.samples() > 0 {
                last = tracker.metrics();
                rows.extend(last.iter().map(|&(m, v)| Row { step: t, wall_ms, metric: m.into(), value: v }));
            }
            segment = Instant::now();
        }
    }
    let (ess_mean, ess_min) = if tracker.samples() >= 4 { tracker.ess()? } else { (f64::NAN, f64::NAN) };
    for (m, v) in [("ess", ess_mean), ("ess_min", ess_min)] {
        rows.push(Row { step: cfg.steps, wall_ms, metric: m.into(), value: v });
    }
    let summary = RepeatSummary {
        repeat,
        seed,
        substream,
        csv: None,
        batch: acc.stats(),
        metrics: last.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        ess: ess_mean,
        ess_min,
        samples: tracker.samples(),
        wall_ms,
        ess_per_sec: ess_mean / (wall_ms / 1e3),
    };
    Ok(RepeatOutput { rows, summary })
}

/// Substream for repeat `r`.
pub fn repeat_stream(seed: u64, r: usize) -> RngStream {
    RngStream::new(seed, 0).split(r as u64 + 1)
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        b = b.num_threads(t.max(1));
    }
    b.build().map_err(|e| HarnessError::Config(format!("thread pool: {e}")))
}

fn run_continuous<M>(
    cfg: &ExperimentConfig,
    t: &ContinuousTask<M>,
    reference: &Reference,
    threads: Option<usize>,
) -> Result<Vec<RepeatOutput>>
where
    M: EnergyModel<State = Vec<f64>> + Sync,
{
    let proposal = GaussianRandomWalk::new(cfg.step_size);
    pool(threads)?.install(|| {
        (0..cfg.repeats)
            .into_par_iter()
            .map(|r| {
                let mut tracker = VecTracker::new(reference, t.init.len());
                run_repeat(
                    cfg,
                    r,
                    t.kernel.as_ref(),
                    &t.model,
                    &proposal,
                    t.init.clone(),
                    repeat_stream(cfg.seed, r),
                    &mut tracker,
                )
            })
            .collect()
    })
}

fn run_finite<M, P>(cfg: &ExperimentConfig, t: &FiniteTask<M, P>, threads: Option<usize>) -> Result<Vec<RepeatOutput>>
where
    M: EnergyModel<State = usize> + Sync,
    P: Sync,
{
    let exact = stationary_distribution(&t.model, t.states);
    pool(threads)?.install(|| {
        (0..cfg.repeats)
            .into_par_iter()
            .map(|r| {
                let mut tracker = FiniteTracker { counts: vec![0; t.states], exact: exact.clone(), series: Vec::new() };
                run_repeat(cfg, r, t.kernel.as_ref(), &t.model, &t.proposal, t.init, repeat_stream(cfg.seed, r), &mut tracker)
            })
            .collect()
    })
}

/// Result of running every repeat, before anything is written.
pub struct Executed {
    pub outputs: Vec<RepeatOutput>,
    pub data: DataInfo,
    pub kernel_id: String,
    pub model_id: String,
}

/// Builds the task and runs all repeats in memory.
pub fn execute(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Executed> {
    cfg.validate()?;
    let (built, data) = build(cfg, opts.mnist_dir.as_ref())?;
    let (outputs, kernel_id, model_id) = match &built {
        Built::Rlr(t, r) => (run_continuous(cfg, t, r, opts.threads)?, t.kernel.id(), t.model.id()),
        Built::Tgm(t, r) => (run_continuous(cfg, t, r, opts.threads)?, t.kernel.id(), t.model.id()),
        Built::Logreg(t, r) => (run_continuous(cfg, t, r, opts.threads)?, t.kernel.id(), t.model.id()),
        Built::Line(t) => (run_finite(cfg, t, opts.threads)?, t.kernel.id(), t.model.id()),
        Built::Uniform(t) => (run_finite(cfg, t, opts.threads)?, t.kernel.id(), t.model.id()),
        Built::TwoState(t) => (run_finite(cfg, t, opts.threads)?, t.kernel.id(), t.model.id()),
    };
    Ok(Executed { outputs, data, kernel_id: kernel_id.to_string(), model_id })
}

fn aggregate(summaries: &[RepeatSummary]) -> BTreeMap<String, MeanSe> {
    let mut cols: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for s in summaries {
        let b = &s.batch;
        for (k, v) in [
            ("acceptance_rate", b.acceptance_rate),
            ("mean_batch", b.mean_batch),
            ("mean_expected_batch", b.mean_expected_batch),
            ("mean_oracle_calls", b.mean_oracle_calls),
            ("fallback_fraction", b.fallback_fraction),
            ("ess", s.ess),
            ("ess_per_sec", s.ess_per_sec),
            ("wall_ms", s.wall_ms),
        ] {
            cols.entry(k.into()).or_default().push(v);
        }
        for (k, v) in &s.metrics {
            cols.entry(k.clone()).or_default().push(*v);
        }
    }
    cols.into_iter().map(|(k, v)| (k, MeanSe::of(&v))).collect()
}

fn write_csv(path: &Path, rows: &[Row]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_COLUMNS)?;
    for r in rows {
        w.write_record([r.step.to_string(), format!("{:.3}", r.wall_ms), r.metric.clone(), r.value.to_string()])?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}

/// Reads back a CSV written by [`run_experiment`].
pub fn read_csv(path: &Path) -> Result<Vec<Row>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

/// Output directory: the config's `out`, else `results/<name>`.
pub fn output_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| PathBuf::from("results").join(&cfg.name))
}

/// Runs the experiment and writes CSVs plus `manifest.json` into
/// [`output_dir`]. Nothing is written if any repeat fails.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ResultManifest> {
    let ex = execute(cfg, opts)?;
    let dir = output_dir(cfg);
    fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    let mut repeats = Vec::with_capacity(ex.outputs.len());
    for out in ex.outputs {
        let name = format!("repeat-{}.csv", out.summary.repeat);
        write_csv(&dir.join(&name), &out.rows)?;
        repeats.push(RepeatSummary { csv: Some(name), ..out.summary });
    }
    let manifest = ResultManifest {
        csv_schema_version: CSV_SCHEMA_VERSION,
        csv_columns: CSV_COLUMNS.iter().map(|s| s.to_string()).collect(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        kernel_id: ex.kernel_id,
        model_id: ex.model_id,
        data: ex.data,
        aggregate: aggregate(&repeats),
        repeats,
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| HarnessError::io(&path, e))?;
    Ok(manifest)
}

//! Stationary-distribution error of exact and approximate kernels on the
//! discrete line, as the number of states grows.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tunamh::diagnostics::{normalise_counts, tv_discrete, BatchAccumulator};
use tunamh::kernels::{AustereConfig, AustereMh, FullMh, TunaConfig, TunaMh};
use tunamh::models::DiscreteLine;
use tunamh::trace::run_chain_with;
use tunamh::RngStream;

use crate::error::{HarnessError, Result};
use crate::presets::LINE_CHI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BiasKernel {
    Mh,
    Tunamh,
    Austeremh,
}

impl BiasKernel {
    pub fn id(self) -> &'static str {
        match self {
            BiasKernel::Mh => "mh",
            BiasKernel::Tunamh => "tunamh",
            BiasKernel::Austeremh => "austeremh",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasOptions {
    pub states: Vec<usize>,
    pub kernels: Vec<BiasKernel>,
    pub steps: usize,
    pub burnin: usize,
    pub seed: u64,
    pub chi: f64,
    pub austere: AustereConfig,
}

impl Default for BiasOptions {
    fn default() -> Self {
        Self {
            states: vec![200, 500, 1000],
            kernels: vec![BiasKernel::Tunamh, BiasKernel::Austeremh],
            steps: 10_000_000,
            burnin: 100_000,
            seed: 1,
            chi: LINE_CHI,
            austere: AustereConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasRow {
    #[serde(rename = "K")]
    pub k: usize,
    pub kernel: String,
    pub tv: f64,
    pub mean_batch: f64,
    pub acceptance_rate: f64,
    pub steps: usize,
}

fn one(k: usize, kernel: BiasKernel, opts: &BiasOptions, cell: u64) -> tunamh::Result<BiasRow> {
    let model = DiscreteLine::new(k)?;
    let proposal = model.proposal();
    let mut rng = RngStream::new(opts.seed, 0).split(cell);
    let mut counts = vec![0u64; k];
    let mut acc = BatchAccumulator::default();
    let burnin = opts.burnin;
    let mut visit = |t: usize, s: &usize, r: &tunamh::StepRecord| {
        acc.push(r);
        if t >= burnin {
            counts[*s] += 1;
        }
    };
    match kernel {
        BiasKernel::Mh => run_chain_with(&FullMh, &model, &proposal, 0, opts.steps, &mut rng, &mut visit)?,
        BiasKernel::Tunamh => {
            run_chain_with(&TunaMh::new(TunaConfig::new(opts.chi)?)?, &model, &proposal, 0, opts.steps, &mut rng, &mut visit)?
        }
        BiasKernel::Austeremh => {
            run_chain_with(&AustereMh::new(opts.austere)?, &model, &proposal, 0, opts.steps, &mut rng, &mut visit)?
        }
    };
    let stats = acc.stats();
    Ok(BiasRow {
        k,
        kernel: kernel.id().into(),
        tv: tv_discrete(&normalise_counts(&counts), &model.exact_distribution())?,
        mean_batch: stats.mean_batch,
        acceptance_rate: stats.acceptance_rate,
        steps: opts.steps,
    })
}

/// One row per `(K, kernel)`, each chain on its own substream.
pub fn bias_demo(opts: &BiasOptions) -> Result<Vec<BiasRow>> {
    if opts.steps <= opts.burnin {
        return Err(HarnessError::Config("steps must exceed burnin".into()));
    }
    let cells: Vec<(usize, BiasKernel, u64)> = opts
        .states
        .iter()
        .enumerate()
        .flat_map(|(i, &k)| opts.kernels.iter().enumerate().map(move |(j, &kern)| (k, kern, (i * 16 + j) as u64 + 1)))
        .collect();
    let rows: tunamh::Result<Vec<BiasRow>> = cells.par_iter().map(|&(k, kern, cell)| one(k, kern, opts, cell)).collect();
    Ok(rows?)
}

pub fn write_rows(path: &Path, rows: &[BiasRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}

//! Step-size tuning towards a target acceptance rate.

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::experiment::{execute, RunOptions};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneOptions {
    pub target: f64,
    pub tol: f64,
    pub max_rounds: usize,
    /// Steps per pilot run.
    pub pilot_steps: usize,
}

impl Default for TuneOptions {
    fn default() -> Self {
        Self { target: 0.25, tol: 0.02, max_rounds: 24, pilot_steps: 2000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub step_size: f64,
    pub achieved_rate: f64,
    pub converged: bool,
    /// `(step size, acceptance)` of every pilot, in order.
    pub history: Vec<(f64, f64)>,
    /// Set when no step size brackets the target.
    pub warning: Option<String>,
}

/// Bisects `log(step)` against the measured acceptance of short pilot runs.
///
/// Every pilot reuses the config seed, so neighbouring step sizes see the
/// same random numbers and the measured curve stays close to monotone.
pub fn tune_acceptance(cfg: &ExperimentConfig, opts: &TuneOptions, run: &RunOptions) -> Result<TuneResult> {
    if !(opts.target > 0.0 && opts.target < 1.0) {
        return Err(HarnessError::Config(format!("target rate must lie in (0, 1), got {}", opts.target)));
    }
    if cfg.task.is_finite() {
        return Err(HarnessError::Config("finite tasks have a fixed proposal; nothing to tune".into()));
    }
    let pilot = ExperimentConfig { steps: opts.pilot_steps.max(2), burnin: 0, repeats: 1, thin: 1, ..cfg.clone() };
    let mut history = Vec::new();
    let mut measure = |step: f64| -> Result<f64> {
        let c = ExperimentConfig { step_size: step, ..pilot.clone() };
        let rate = execute(&c, run)?.outputs[0].summary.batch.acceptance_rate;
        log::debug!("pilot step {step:.4e} -> acceptance {rate:.3}");
        history.push((step, rate));
        Ok(rate)
    };

    let mut best = (cfg.step_size, measure(cfg.step_size)?);
    let mut rounds = 1;
    let close = |r: f64| (r - opts.target).abs() <= opts.tol;
    let mut lo: Option<f64> = None; // accepts too often
    let mut hi: Option<f64> = None; // accepts too rarely
    let mut step = cfg.step_size;
    let mut rate = best.1;
    while !close(rate) && rounds < opts.max_rounds {
        if rate > opts.target {
            lo = Some(step);
        } else {
            hi = Some(step);
        }
        step = match (lo, hi) {
            (Some(a), Some(b)) => (a * b).sqrt(),
            (Some(a), None) => a * 4.0,
            (None, Some(b)) => b / 4.0,
            (None, None) => unreachable!(),
        };
        rate = measure(step)?;
        rounds += 1;
        if (rate - opts.target).abs() < (best.1 - opts.target).abs() {
            best = (step, rate);
        }
    }
    let converged = close(best.1);
    let warning = (!converged && (lo.is_none() || hi.is_none())).then(|| {
        let w = format!("NonMonotone: acceptance never crossed {} (best {:.3} at step {:.4e})", opts.target, best.1, best.0);
        log::warn!("{w}");
        w
    });
    Ok(TuneResult { step_size: best.0, achieved_rate: best.1, converged, history, warning })
}

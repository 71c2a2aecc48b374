use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{accept_log, check_bound, FullMh, Kernel};
use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::sampling::poisson;
use crate::trace::StepRecord;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TunaConfig {
    pub chi: f64,
    /// Run a full-batch MH step whenever the expected batch exceeds `N`.
    #[serde(default = "default_true")]
    pub fallback_enabled: bool,
}

fn default_true() -> bool {
    true
}

impl TunaConfig {
    pub fn new(chi: f64) -> Result<Self> {
        let cfg = Self { chi, fallback_enabled: true };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn without_fallback(mut self) -> Self {
        self.fallback_enabled = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.chi > 0.0) || !self.chi.is_finite() {
            return Err(Error::Config(format!("chi must be a positive finite number, got {}", self.chi)));
        }
        Ok(())
    }

    /// `E[B] = χC²M² + CM`.
    pub fn expected_batch(&self, total_bound: f64, metric: f64) -> f64 {
        let cm = total_bound * metric;
        self.chi * cm * cm + cm
    }
}

/// TunaMH with thinning-based minibatch formation: draw
/// `B ~ Poisson(χC²M² + CM)` indices with `P(i) = c_i / C`, eject each with a
/// probability that depends on its energy difference, and accept using an
/// artanh-transformed sum over the survivors.
#[derive(Clone, Copy, Debug)]
pub struct TunaMh {
    pub cfg: TunaConfig,
}

impl TunaMh {
    pub fn new(cfg: TunaConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg })
    }
}

/// Probability that a sampled index with bound `c` and energy difference
/// `delta = U(θ) - U(θ')` stays in the minibatch.
#[inline]
pub fn keep_probability(chi: f64, c: f64, total: f64, metric: f64, delta: f64) -> f64 {
    let base = chi * c * total * metric * metric;
    let num = base + 0.5 * (-delta + c * metric);
    let den = base + c * metric;
    (num / den).clamp(0.0, 1.0)
}

/// Argument of the artanh in the acceptance ratio.
#[inline]
pub fn artanh_argument(chi: f64, c: f64, total: f64, metric: f64, delta: f64) -> f64 {
    delta / (c * metric * (1.0 + 2.0 * chi * total * metric))
}

impl<M: EnergyModel> Kernel<M> for TunaMh {
    fn id(&self) -> &'static str {
        "tunamh"
    }

    fn decide<R: Rng + ?Sized>(
        &self,
        model: &M,
        from: &M::State,
        to: &M::State,
        log_q_ratio: f64,
        rng: &mut R,
    ) -> Result<StepRecord> {
        let bounds = model.bounds();
        let total = bounds.total();
        let metric = model.metric(from, to);
        let chi = self.cfg.chi;
        let mean = self.cfg.expected_batch(total, metric);

        if self.cfg.fallback_enabled && mean > model.len() as f64 {
            let mut rec = FullMh.decide(model, from, to, log_q_ratio, rng)?;
            rec.fell_back_to_full = true;
            rec.expected_batch = mean;
            return Ok(rec);
        }

        let batch = poisson(rng, mean);
        let mut log_r = log_q_ratio;
        for _ in 0..batch {
            let i = bounds.sample_index(rng);
            let c = bounds.get(i);
            let delta = model.energy_diff(i, from, to);
            check_bound(i, delta, c * metric)?;
            let keep = keep_probability(chi, c, total, metric, delta);
            if rng.random::<f64>() < keep {
                log_r += 2.0 * artanh_argument(chi, c, total, metric, delta).atanh();
            }
        }
        let accepted = accept_log(log_r, rng)?;
        Ok(StepRecord {
            accepted,
            batch_size: batch,
            oracle_calls: batch,
            metric_value: metric,
            fell_back_to_full: false,
            expected_batch: mean,
        })
    }
}

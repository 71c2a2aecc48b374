use std::cell::RefCell;
use std::sync::RwLock;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{accept_with_u, FullMh, Kernel};
use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::trace::StepRecord;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AustereConfig {
    /// Per-step error tolerance of the sequential test.
    pub epsilon: f64,
    /// Batch increment.
    pub m: usize,
}

impl AustereConfig {
    pub fn new(epsilon: f64, m: usize) -> Result<Self> {
        let cfg = Self { epsilon, m };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Config(format!("AustereMH epsilon must lie in (0, 1), got {}", self.epsilon)));
        }
        if self.m == 0 {
            return Err(Error::Config("AustereMH batch increment must be positive".into()));
        }
        Ok(())
    }
}

impl Default for AustereConfig {
    fn default() -> Self {
        Self { epsilon: 0.01, m: 30 }
    }
}

/// Approximate MH with a sequential t-test on the mean energy difference.
///
/// With `l_i = U_i(θ) - U_i(θ')` and `μ₀ = (ln u - log q-ratio) / N`, exact MH
/// accepts iff `mean(l) > μ₀`. The test draws data without replacement in
/// increments of `m` until the finite-population t statistic rejects
/// `mean(l) = μ₀` at level `ε`, or the data run out.
#[derive(Debug)]
pub struct AustereMh {
    pub cfg: AustereConfig,
    /// Critical `|t|` values by round: entry `r` is for `(r + 1) m` samples.
    critical: RwLock<Vec<f64>>,
}

impl Clone for AustereMh {
    fn clone(&self) -> Self {
        Self { cfg: self.cfg, critical: RwLock::new(self.critical.read().map(|c| c.clone()).unwrap_or_default()) }
    }
}

thread_local! {
    /// Reusable identity permutation for drawing without replacement.
    static SCRATCH: RefCell<PartialShuffle> = RefCell::new(PartialShuffle::default());
}

impl AustereMh {
    pub fn new(cfg: AustereConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, critical: RwLock::new(Vec::new()) })
    }

    /// `t` with `P(T_{k-1} > t) = ε` for `k = (round + 1) m` samples.
    fn critical_t(&self, round: usize) -> Result<f64> {
        if let Some(&t) = self.critical.read().expect("critical table lock").get(round) {
            return Ok(t);
        }
        let mut table = self.critical.write().expect("critical table lock");
        while table.len() <= round {
            let dof = ((table.len() + 1) * self.cfg.m) as f64 - 1.0;
            let dist = StudentsT::new(0.0, 1.0, dof).map_err(|e| Error::Domain(e.to_string()))?;
            table.push(dist.inverse_cdf(1.0 - self.cfg.epsilon));
        }
        Ok(table[round])
    }

    /// The decision for a given uniform `u`. Draws the subsample order from `rng`.
    pub fn decide_with_u<M: EnergyModel, R: Rng + ?Sized>(
        &self,
        model: &M,
        from: &M::State,
        to: &M::State,
        log_q_ratio: f64,
        u: f64,
        rng: &mut R,
    ) -> Result<StepRecord> {
        let n = model.len();
        let metric = model.metric(from, to);
        if n == 0 {
            return FullMh::decide_with_u(model, from, to, log_q_ratio, u);
        }
        let mu0 = (u.ln() - log_q_ratio) / n as f64;
        let decided = SCRATCH.with(|cell| -> Result<Option<(bool, usize)>> {
            let mut perm = cell.borrow_mut();
            perm.reset(n);
            let (mut sum, mut sum_sq) = (0.0f64, 0.0f64);
            let mut used = 0usize;
            let mut round = 0usize;
            let out = loop {
                if used >= n {
                    break None;
                }
                let target = (used + self.cfg.m).min(n);
                while used < target {
                    let i = perm.draw(used, n, rng);
                    let l = model.energy_diff(i, from, to);
                    sum += l;
                    sum_sq += l * l;
                    used += 1;
                }
                round += 1;
                if used == n || used < 2 {
                    continue;
                }
                let k = used as f64;
                let mean = sum / k;
                let var = ((sum_sq - k * mean * mean) / (k - 1.0)).max(0.0);
                let fpc = (1.0 - (k - 1.0) / (n as f64 - 1.0)).max(0.0);
                let se = (var / k).sqrt() * fpc.sqrt();
                // 1 - F(|t|) < ε  <=>  |t| > F⁻¹(1 - ε)
                let reject = if se == 0.0 {
                    mean != mu0
                } else {
                    // Every test before exhaustion sees exactly `round · m` samples.
                    ((mean - mu0) / se).abs() > self.critical_t(round - 1)?
                };
                if reject {
                    break Some((mean > mu0, used));
                }
            };
            perm.undo();
            Ok(out)
        })?;
        if let Some((accepted, used)) = decided {
            return Ok(StepRecord {
                accepted,
                batch_size: used as u64,
                oracle_calls: used as u64,
                metric_value: metric,
                fell_back_to_full: false,
                expected_batch: 0.0,
            });
        }

        // Exhausted: the exact test for this u.
        let accepted = accept_with_u(FullMh::log_accept_ratio(model, from, to, log_q_ratio), u)?;
        Ok(StepRecord {
            accepted,
            batch_size: n as u64,
            oracle_calls: n as u64,
            metric_value: metric,
            fell_back_to_full: false,
            expected_batch: 0.0,
        })
    }
}

impl<M: EnergyModel> Kernel<M> for AustereMh {
    fn id(&self) -> &'static str {
        "austeremh"
    }

    fn decide<R: Rng + ?Sized>(
        &self,
        model: &M,
        from: &M::State,
        to: &M::State,
        log_q_ratio: f64,
        rng: &mut R,
    ) -> Result<StepRecord> {
        let u: f64 = rng.random();
        self.decide_with_u(model, from, to, log_q_ratio, u, rng)
    }
}

/// Fisher-Yates over a persistent identity array. Swaps are logged and
/// undone afterwards, so a draw of `k` items costs `O(k)` regardless of `n`.
#[derive(Default)]
struct PartialShuffle {
    perm: Vec<usize>,
    swaps: Vec<(usize, usize)>,
}

impl PartialShuffle {
    fn reset(&mut self, n: usize) {
        if self.perm.len() != n {
            self.perm = (0..n).collect();
        }
        self.swaps.clear();
    }

    /// Swaps a uniform pick from `pos..n` into `pos` and returns it.
    fn draw<R: Rng + ?Sized>(&mut self, pos: usize, n: usize, rng: &mut R) -> usize {
        let j = rng.random_range(pos..n);
        self.perm.swap(pos, j);
        self.swaps.push((pos, j));
        self.perm[pos]
    }

    fn undo(&mut self) {
        while let Some((a, b)) = self.swaps.pop() {
            self.perm.swap(a, b);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::testing::LinearChain;
    use crate::rng::RngStream;

    #[test]
    fn partial_shuffle_draws_a_permutation_and_restores() {
        let mut p = PartialShuffle::default();
        let mut rng = RngStream::from_seed(1);
        p.reset(50);
        let mut seen: Vec<usize> = (0..50).map(|k| p.draw(k, 50, &mut rng)).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..50).collect::<Vec<_>>());
        p.undo();
        assert_eq!(p.perm, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn critical_values_match_cdf_form() {
        let k = AustereMh::new(AustereConfig::default()).unwrap();
        for round in [0usize, 3, 10] {
            let t = k.critical_t(round).unwrap();
            let dof = ((round + 1) * 30) as f64 - 1.0;
            let d = StudentsT::new(0.0, 1.0, dof).unwrap();
            assert!((1.0 - d.cdf(t) - 0.01).abs() < 1e-9);
        }
    }

    #[test]
    fn exhaustion_matches_mh_for_same_u() {
        // Tiny N with m ≥ N always exhausts.
        let m = LinearChain::new(vec![0.3, -0.2, 0.5, 0.1], 3);
        let k = AustereMh::new(AustereConfig::new(0.01, 10).unwrap()).unwrap();
        let mut rng = RngStream::from_seed(4);
        for step in 0..200 {
            let u = (step as f64 + 0.5) / 200.0;
            let a = k.decide_with_u(&m, &0, &2, 0.0, u, &mut rng).unwrap();
            let b = FullMh::decide_with_u(&m, &0, &2, 0.0, u).unwrap();
            assert_eq!(a.accepted, b.accepted);
            assert_eq!(a.oracle_calls, 4);
        }
    }

    #[test]
    fn clear_cases_stop_early() {
        // Every l_i = 1: mean far above any μ₀ once sd is 0.
        let m = LinearChain::new(vec![-1.0; 1000], 2);
        let k = AustereMh::new(AustereConfig::default()).unwrap();
        let mut rng = RngStream::from_seed(2);
        let rec = k.decide(&m, &0, &1, 0.0, &mut rng).unwrap();
        assert!(rec.accepted);
        assert_eq!(rec.batch_size, 30);
    }

    #[test]
    fn validates_config() {
        assert!(AustereConfig::new(0.0, 30).is_err());
        assert!(AustereConfig::new(1.0, 30).is_err());
        assert!(AustereConfig::new(0.05, 0).is_err());
    }
}

use rand::Rng;

use super::{accept_with_u, Kernel};
use crate::energy::EnergyModel;
use crate::error::Result;
use crate::trace::StepRecord;

/// Standard full-batch Metropolis-Hastings.
#[derive(Clone, Copy, Debug, Default)]
pub struct FullMh;

impl FullMh {
    /// `log a = Σ_i (U_i(from) - U_i(to)) + log q-ratio`, before the `min(1, ·)`.
    pub fn log_accept_ratio<M: EnergyModel>(model: &M, from: &M::State, to: &M::State, log_q_ratio: f64) -> f64 {
        model.total_energy_diff(from, to) + log_q_ratio
    }

    /// Closed-form acceptance probability.
    pub fn accept_prob<M: EnergyModel>(model: &M, from: &M::State, to: &M::State, log_q_ratio: f64) -> f64 {
        Self::log_accept_ratio(model, from, to, log_q_ratio).exp().min(1.0)
    }

    /// The decision for a given uniform `u`.
    pub fn decide_with_u<M: EnergyModel>(
        model: &M,
        from: &M::State,
        to: &M::State,
        log_q_ratio: f64,
        u: f64,
    ) -> Result<StepRecord> {
        let n = model.len() as u64;
        let accepted = accept_with_u(Self::log_accept_ratio(model, from, to, log_q_ratio), u)?;
        Ok(StepRecord {
            accepted,
            batch_size: n,
            oracle_calls: n,
            metric_value: model.metric(from, to),
            fell_back_to_full: false,
            expected_batch: 0.0,
        })
    }
}

impl<M: EnergyModel> Kernel<M> for FullMh {
    fn id(&self) -> &'static str {
        "mh"
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
        Self::decide_with_u(model, from, to, log_q_ratio, u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::testing::LinearChain;
    use crate::proposal::TabulatedProposal;
    use crate::rng::RngStream;

    #[test]
    fn flat_target_always_accepts() {
        let m = LinearChain::new(vec![0.0; 4], 3);
        let q = TabulatedProposal::new(vec![vec![1.0 / 3.0; 3]; 3]).unwrap();
        let mut rng = RngStream::from_seed(0);
        let mut s = 0usize;
        for _ in 0..1000 {
            let (next, rec) = FullMh.step(&m, &q, &s, &mut rng).unwrap();
            assert!(rec.accepted);
            assert_eq!(rec.oracle_calls, 4);
            s = next;
        }
    }

    #[test]
    fn uphill_two_state_closed_form() {
        // One unit of energy gap: exp(-1) uphill.
        let m = LinearChain::new(vec![0.25; 4], 2);
        let p = FullMh::accept_prob(&m, &0, &1, 0.0);
        assert!((p - 0.367_879_441_171_442_3).abs() < 1e-15);
        assert_eq!(FullMh::accept_prob(&m, &1, &0, 0.0), 1.0);
    }

    #[test]
    fn empirical_uphill_rate() {
        let m = LinearChain::new(vec![0.25; 4], 2);
        let mut rng = RngStream::from_seed(4);
        let n = 100_000;
        let acc = (0..n).filter(|_| FullMh.decide(&m, &0, &1, 0.0, &mut rng).unwrap().accepted).count();
        let p = (-1.0f64).exp();
        let phat = acc as f64 / n as f64;
        assert!((phat - p).abs() < 3.0 * (p * (1.0 - p) / n as f64).sqrt() + 1e-3);
    }
}

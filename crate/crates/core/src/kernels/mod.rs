//! Metropolis-Hastings transition kernels.
//!
//! Every kernel follows the same shape: propose `θ'`, reject outright if it
//! leaves the support, otherwise hand the pair to a randomized accept/reject
//! routine that only sees energy differences and the per-term bounds.
//! [`Kernel::decide`] is that routine; the spectral tools call it directly on
//! fixed pairs.

mod austere;
mod chi;
mod mh;
mod poisson_mh;
mod tfmh;
mod tuna;
mod tuna_aux;

pub use austere::{AustereConfig, AustereMh};
pub use chi::{chi_for_kappa, kappa_for_chi, suggest_chi, ChiSuggestion, HEURISTIC_PERCENTILE};
pub use mh::FullMh;
pub use poisson_mh::{GlobalFactors, MinibatchMode, PoissonMh, PoissonMhConfig};
pub use tfmh::{ControlVariate, Smh1, Tfmh, TfmhConfig};
pub use tuna::{artanh_argument, keep_probability, TunaConfig, TunaMh};
pub use tuna_aux::TunaMhAux;

use rand::Rng;

use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::proposal::Proposal;
use crate::trace::StepRecord;

pub trait Kernel<M: EnergyModel>: Send + Sync {
    fn id(&self) -> &'static str;

    /// Accept/reject a proposed move `from -> to`, both in the support.
    /// `log_q_ratio` is `log(q(from | to) / q(to | from))`.
    fn decide<R: Rng + ?Sized>(
        &self,
        model: &M,
        from: &M::State,
        to: &M::State,
        log_q_ratio: f64,
        rng: &mut R,
    ) -> Result<StepRecord>;

    /// One full transition. Out-of-support proposals are rejected with `B = 0`.
    fn step<P, R>(&self, model: &M, proposal: &P, from: &M::State, rng: &mut R) -> Result<(M::State, StepRecord)>
    where
        P: Proposal<M::State>,
        R: Rng + ?Sized,
    {
        let to = proposal.propose(from, rng);
        if !model.in_support(&to) {
            return Ok((from.clone(), StepRecord::rejected(model.metric(from, &to))));
        }
        let log_q = proposal.log_ratio(from, &to);
        let rec = self.decide(model, from, &to, log_q, rng)?;
        let next = if rec.accepted { to } else { from.clone() };
        Ok((next, rec))
    }
}

/// Draws `u ~ U(0,1)` and accepts when `u < min(1, exp(log_r))`. Always
/// consumes exactly one uniform.
pub(crate) fn accept_log<R: Rng + ?Sized>(log_r: f64, rng: &mut R) -> Result<bool> {
    let u: f64 = rng.random();
    accept_with_u(log_r, u)
}

pub(crate) fn accept_with_u(log_r: f64, u: f64) -> Result<bool> {
    if log_r.is_nan() {
        return Err(Error::NonFinite("log acceptance ratio".into()));
    }
    Ok(log_r >= 0.0 || u < log_r.exp())
}

/// Fails with `BoundViolation` when `|ΔU_i|` exceeds `c_i M` beyond rounding.
#[inline]
pub(crate) fn check_bound(index: usize, delta: f64, bound: f64) -> Result<()> {
    if delta.abs() > bound * (1.0 + crate::energy::BOUND_SLACK) && delta != 0.0 {
        return Err(Error::BoundViolation { index, ratio: delta.abs() / bound });
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod testing {
    //! Small models shared by the kernel unit tests.
    use crate::energy::{BoundConsts, Dimension, EnergyModel};

    /// `U_i(θ) = w_i θ` on `{0, .., K-1}` with `c_i = |w_i|`, `M = |θ - θ'|`.
    pub struct LinearChain {
        pub weights: Vec<f64>,
        pub states: usize,
        pub bounds: BoundConsts,
    }

    impl LinearChain {
        pub fn new(weights: Vec<f64>, states: usize) -> Self {
            let bounds = BoundConsts::new(weights.iter().map(|w| w.abs()).collect()).unwrap();
            Self { weights, states, bounds }
        }
    }

    impl EnergyModel for LinearChain {
        type State = usize;
        fn id(&self) -> String {
            "linear-chain".into()
        }
        fn len(&self) -> usize {
            self.weights.len()
        }
        fn dim(&self) -> Dimension {
            Dimension::Discrete(self.states)
        }
        fn energy_term(&self, i: usize, s: &usize) -> f64 {
            self.weights[i] * *s as f64
        }
        fn bounds(&self) -> &BoundConsts {
            &self.bounds
        }
        fn metric(&self, a: &usize, b: &usize) -> f64 {
            a.abs_diff(*b) as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accept_rules() {
        assert!(accept_with_u(0.0, 0.999).unwrap());
        assert!(accept_with_u(f64::INFINITY, 0.5).unwrap());
        assert!(!accept_with_u(f64::NEG_INFINITY, 0.0).unwrap());
        assert!(accept_with_u((0.5f64).ln(), 0.49).unwrap());
        assert!(!accept_with_u((0.5f64).ln(), 0.51).unwrap());
        assert!(accept_with_u(f64::NAN, 0.1).is_err());
    }

    #[test]
    fn bound_check_tolerates_rounding_only() {
        assert!(check_bound(0, 1.0, 1.0).is_ok());
        assert!(check_bound(0, 1.0 + 1e-14, 1.0).is_ok());
        assert!(check_bound(0, 0.0, 0.0).is_ok());
        assert!(matches!(check_bound(3, -2.0, 1.0), Err(Error::BoundViolation { index: 3, .. })));
    }
}

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{accept_log, Kernel};
use crate::energy::{BoundConsts, EnergyModel};
use crate::error::{Error, Result};
use crate::sampling::poisson;
use crate::trace::StepRecord;

/// A target written as `π(θ) ∝ exp(Σ_i φ_i(θ))` with global bounds
/// `0 ≤ φ_i(θ) ≤ M_i` on the whole support.
pub trait GlobalFactors<S> {
    fn num_factors(&self) -> usize;

    /// `φ_i(state)`.
    fn factor(&self, i: usize, state: &S) -> f64;

    /// The constants `M_i` and their total `L`.
    fn factor_bounds(&self) -> &BoundConsts;
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MinibatchMode {
    /// Draw `Poisson(λ + L)` events with `P(i) = M_i / L` and thin them.
    #[default]
    Thinning,
    /// Draw every `s_i` explicitly. Cheap only for a handful of factors.
    PerFactor,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoissonMhConfig {
    pub lambda: f64,
    #[serde(default)]
    pub mode: MinibatchMode,
}

impl PoissonMhConfig {
    pub fn new(lambda: f64) -> Result<Self> {
        let cfg = Self { lambda, mode: MinibatchMode::Thinning };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config(format!("PoissonMH lambda must be positive, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// Poisson-minibatching MH over global factors: `s_i ~ Poisson(λM_i/L + φ_i(θ))`,
/// `r = Π_i ((λM_i/L + φ_i(θ')) / (λM_i/L + φ_i(θ)))^{s_i}`.
#[derive(Clone, Copy, Debug)]
pub struct PoissonMh {
    pub cfg: PoissonMhConfig,
}

impl PoissonMh {
    pub fn new(cfg: PoissonMhConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg })
    }
}

const FACTOR_SLACK: f64 = 1e-12;

fn checked_factor<S, G: GlobalFactors<S> + ?Sized>(g: &G, i: usize, s: &S, bound: f64) -> Result<f64> {
    let v = g.factor(i, s);
    let tol = FACTOR_SLACK * bound.max(1.0);
    if !(v >= -tol && v <= bound + tol) {
        return Err(Error::GlobalBoundViolation { index: i, value: v, bound });
    }
    Ok(v.clamp(0.0, bound))
}

impl<M> Kernel<M> for PoissonMh
where
    M: EnergyModel + GlobalFactors<<M as EnergyModel>::State>,
{
    fn id(&self) -> &'static str {
        "poissonmh"
    }

    fn decide<R: Rng + ?Sized>(
        &self,
        model: &M,
        from: &M::State,
        to: &M::State,
        log_q_ratio: f64,
        rng: &mut R,
    ) -> Result<StepRecord> {
        let bounds = model.factor_bounds();
        let total = bounds.total();
        let lambda = self.cfg.lambda;
        let mut log_r = log_q_ratio;
        let mut rec = StepRecord { metric_value: model.metric(from, to), expected_batch: lambda + total, ..Default::default() };

        match self.cfg.mode {
            MinibatchMode::Thinning => {
                let events = if total > 0.0 { poisson(rng, lambda + total) } else { 0 };
                for _ in 0..events {
                    let i = bounds.sample_index(rng);
                    let mi = bounds.get(i);
                    let base = lambda * mi / total;
                    let phi = checked_factor(model, i, from, mi)?;
                    if rng.random::<f64>() * (base + mi) < base + phi {
                        let phi_to = checked_factor(model, i, to, mi)?;
                        log_r += (base + phi_to).ln() - (base + phi).ln();
                    }
                }
                rec.batch_size = events;
                rec.oracle_calls = events;
            }
            MinibatchMode::PerFactor => {
                let n = model.num_factors();
                for i in 0..n {
                    let mi = bounds.get(i);
                    let base = if total > 0.0 { lambda * mi / total } else { 0.0 };
                    let phi = checked_factor(model, i, from, mi)?;
                    let s = poisson(rng, base + phi);
                    if s > 0 {
                        let phi_to = checked_factor(model, i, to, mi)?;
                        log_r += s as f64 * ((base + phi_to).ln() - (base + phi).ln());
                        rec.batch_size += 1;
                    }
                }
                rec.oracle_calls = n as u64;
            }
        }
        rec.accepted = accept_log(log_r, rng)?;
        Ok(rec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::Dimension;
    use crate::proposal::TabulatedProposal;
    use crate::rng::RngStream;
    use crate::trace::run_chain_with;

    /// Three states, two factors with hand-set values.
    struct Toy {
        phi: [[f64; 3]; 2],
        factor_bounds: BoundConsts,
        energy_bounds: BoundConsts,
    }

    impl Toy {
        fn new() -> Self {
            Self {
                phi: [[0.2, 1.5, 0.9], [0.0, 0.4, 1.0]],
                factor_bounds: BoundConsts::new(vec![1.5, 1.0]).unwrap(),
                energy_bounds: BoundConsts::new(vec![1.5, 1.0]).unwrap(),
            }
        }

        fn exact(&self) -> Vec<f64> {
            let w: Vec<f64> = (0..3).map(|s| (self.phi[0][s] + self.phi[1][s]).exp()).collect();
            let z: f64 = w.iter().sum();
            w.into_iter().map(|x| x / z).collect()
        }
    }

    impl EnergyModel for Toy {
        type State = usize;
        fn id(&self) -> String {
            "toy".into()
        }
        fn len(&self) -> usize {
            2
        }
        fn dim(&self) -> Dimension {
            Dimension::Discrete(3)
        }
        fn energy_term(&self, i: usize, s: &usize) -> f64 {
            -self.phi[i][*s]
        }
        fn bounds(&self) -> &BoundConsts {
            &self.energy_bounds
        }
        fn metric(&self, a: &usize, b: &usize) -> f64 {
            (a != b) as u8 as f64
        }
    }

    impl GlobalFactors<usize> for Toy {
        fn num_factors(&self) -> usize {
            2
        }
        fn factor(&self, i: usize, s: &usize) -> f64 {
            self.phi[i][*s]
        }
        fn factor_bounds(&self) -> &BoundConsts {
            &self.factor_bounds
        }
    }

    fn histogram(mode: MinibatchMode, seed: u64) -> Vec<f64> {
        let m = Toy::new();
        let q = TabulatedProposal::new(vec![vec![1.0 / 3.0; 3]; 3]).unwrap();
        let k = PoissonMh::new(PoissonMhConfig { lambda: 2.0, mode }).unwrap();
        let mut rng = RngStream::from_seed(seed);
        let mut counts = [0u64; 3];
        let steps = 400_000;
        run_chain_with(&k, &m, &q, 0, steps, &mut rng, |_, s, _| counts[*s] += 1).unwrap();
        counts.iter().map(|&c| c as f64 / steps as f64).collect()
    }

    #[test]
    fn stationary_on_three_state_toy() {
        let exact = Toy::new().exact();
        for mode in [MinibatchMode::Thinning, MinibatchMode::PerFactor] {
            let h = histogram(mode, 21);
            let tv: f64 = 0.5 * h.iter().zip(&exact).map(|(a, b)| (a - b).abs()).sum::<f64>();
            assert!(tv < 0.01, "{mode:?}: tv {tv}");
        }
    }

    #[test]
    fn equal_factors_accept() {
        let m = Toy::new();
        let k = PoissonMh::new(PoissonMhConfig::new(1.0).unwrap()).unwrap();
        let mut rng = RngStream::from_seed(2);
        for _ in 0..100 {
            assert!(k.decide(&m, &1, &1, 0.0, &mut rng).unwrap().accepted);
        }
    }

    #[test]
    fn out_of_range_factor_is_reported() {
        let mut m = Toy::new();
        m.phi[1][2] = 1.5;
        let k = PoissonMh::new(PoissonMhConfig { lambda: 1.0, mode: MinibatchMode::PerFactor }).unwrap();
        let mut rng = RngStream::from_seed(2);
        let err = k.decide(&m, &2, &0, 0.0, &mut rng).unwrap_err();
        assert!(matches!(err, Error::GlobalBoundViolation { index: 1, .. }));
    }

    #[test]
    fn rejects_bad_lambda() {
        assert!(PoissonMhConfig::new(0.0).is_err());
        assert!(PoissonMhConfig::new(f64::INFINITY).is_err());
    }
}

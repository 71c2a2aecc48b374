use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_bound, FullMh, Kernel};
use crate::energy::{BoundConsts, CurvatureBounded, EnergyModel};
use crate::error::{Error, Result};
use crate::sampling::{compensated_sum, poisson};
use crate::trace::StepRecord;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ControlVariate {
    #[default]
    None,
    /// First-order Taylor expansion of every term around `theta_map`.
    Smh1 { theta_map: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TfmhConfig {
    /// Truncation threshold `R`: fall back to full MH when the bound on the
    /// factorized log-rejection mass exceeds `2R`.
    pub trunc_threshold: f64,
    #[serde(default)]
    pub control_variate: ControlVariate,
}

impl TfmhConfig {
    pub fn new(trunc_threshold: f64) -> Result<Self> {
        let cfg = Self { trunc_threshold, control_variate: ControlVariate::None };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.trunc_threshold > 0.0) {
            return Err(Error::Config(format!("TFMH threshold R must be positive, got {}", self.trunc_threshold)));
        }
        Ok(())
    }
}

/// Truncated factorised MH. Each datum is its own factor, accepted with
/// probability `min(1, exp(ΔU_i))`.
///
/// Rejecting factors are found by thinning a Poisson process with rate
/// `c_i M` per factor: an event on factor `i` is a true rejection with
/// probability `max(0, -ΔU_i) / (c_i M)`, so the chance that factor `i` has no
/// true rejection is exactly `exp(min(0, ΔU_i))`.
#[derive(Clone, Debug)]
pub struct Tfmh {
    pub trunc_threshold: f64,
}

impl Tfmh {
    pub fn new(cfg: &TfmhConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.control_variate != ControlVariate::None {
            return Err(Error::Config("use Smh1::new for the control-variate variant".into()));
        }
        Ok(Self { trunc_threshold: cfg.trunc_threshold })
    }
}

/// Shared thinning loop. `delta(i)` returns the factor's log-acceptance
/// contribution and `bound(i)` its Lipschitz-style bound for this move.
/// Returns `(accepted, events, evaluated)`.
fn thin_factors<R, D>(rng: &mut R, bounds: &BoundConsts, scale: f64, mut delta: D) -> Result<(bool, u64, u64)>
where
    R: Rng + ?Sized,
    D: FnMut(usize) -> f64,
{
    let events = poisson(rng, bounds.total() * scale);
    let mut evaluated = 0;
    for _ in 0..events {
        let i = bounds.sample_index(rng);
        let limit = bounds.get(i) * scale;
        let d = delta(i);
        evaluated += 1;
        check_bound(i, d, limit)?;
        if d < 0.0 && rng.random::<f64>() * limit < -d {
            return Ok((false, events, evaluated));
        }
    }
    Ok((true, events, evaluated))
}

impl<M: EnergyModel> Kernel<M> for Tfmh {
    fn id(&self) -> &'static str {
        "tfmh"
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
        let metric = model.metric(from, to);
        if bounds.total() * metric > 2.0 * self.trunc_threshold {
            let mut rec = FullMh.decide(model, from, to, log_q_ratio, rng)?;
            rec.fell_back_to_full = true;
            return Ok(rec);
        }

        let mut rec = StepRecord { metric_value: metric, expected_batch: bounds.total() * metric, ..Default::default() };
        if rng.random::<f64>() >= log_q_ratio.exp().min(1.0) {
            return Ok(rec);
        }
        let (accepted, events, evaluated) = thin_factors(rng, bounds, metric, |i| model.energy_diff(i, from, to))?;
        rec.accepted = accepted;
        rec.batch_size = events;
        rec.oracle_calls = evaluated;
        Ok(rec)
    }
}

/// TFMH with first-order control variates around `θ̂`.
///
/// Factor `i` becomes the Taylor residual `Ũ_i(θ) = U_i(θ) - U_i(θ̂) - g_iᵀ(θ - θ̂)`,
/// bounded by `|Ũ_i(θ) - Ũ_i(θ')| ≤ Ū₂,ᵢ · ½(‖θ-θ̂‖₁² + ‖θ'-θ̂‖₁²)`. The linear
/// part sums to `Gᵀ(θ - θ')` with `G = Σ g_i` and is accepted in closed form.
#[derive(Clone, Debug)]
pub struct Smh1 {
    trunc_threshold: f64,
    theta_map: Vec<f64>,
    /// Row-major `N × d` per-term gradients at `θ̂`.
    grads: Vec<f64>,
    grad_total: Vec<f64>,
    curvature: BoundConsts,
}

impl Smh1 {
    pub fn new<M: CurvatureBounded>(model: &M, cfg: &TfmhConfig) -> Result<Self> {
        cfg.validate()?;
        let ControlVariate::Smh1 { theta_map } = &cfg.control_variate else {
            return Err(Error::Config("SMH-1 requires control_variate = smh1 with a MAP point".into()));
        };
        let d = theta_map.len();
        let n = model.len();
        let mut grads = vec![0.0; n * d];
        for (i, row) in grads.chunks_exact_mut(d.max(1)).enumerate().take(n) {
            model.grad_term(i, theta_map, row);
        }
        let grad_total = (0..d).map(|j| compensated_sum((0..n).map(|i| grads[i * d + j]))).collect();
        let curvature = BoundConsts::new((0..n).map(|i| model.curvature_bound(i)).collect())?;
        Ok(Self { trunc_threshold: cfg.trunc_threshold, theta_map: theta_map.clone(), grads, grad_total, curvature })
    }

    pub fn theta_map(&self) -> &[f64] {
        &self.theta_map
    }

    fn spread(&self, a: &[f64], b: &[f64]) -> f64 {
        let l1 = |x: &[f64]| x.iter().zip(&self.theta_map).map(|(p, q)| (p - q).abs()).sum::<f64>();
        0.5 * (l1(a).powi(2) + l1(b).powi(2))
    }
}

impl<M: EnergyModel<State = Vec<f64>>> Kernel<M> for Smh1 {
    fn id(&self) -> &'static str {
        "smh1"
    }

    fn decide<R: Rng + ?Sized>(
        &self,
        model: &M,
        from: &Vec<f64>,
        to: &Vec<f64>,
        log_q_ratio: f64,
        rng: &mut R,
    ) -> Result<StepRecord> {
        if from.len() != self.theta_map.len() {
            return Err(Error::DimMismatch { expected: self.theta_map.len(), got: from.len() });
        }
        let metric = model.metric(from, to);
        let scale = self.spread(from, to);
        if self.curvature.total() * scale > 2.0 * self.trunc_threshold {
            let mut rec = FullMh.decide(model, from, to, log_q_ratio, rng)?;
            rec.fell_back_to_full = true;
            return Ok(rec);
        }

        let mut rec = StepRecord { metric_value: metric, expected_batch: self.curvature.total() * scale, ..Default::default() };
        let step: Vec<f64> = from.iter().zip(to).map(|(a, b)| a - b).collect();
        let linear: f64 = self.grad_total.iter().zip(&step).map(|(g, s)| g * s).sum();
        if rng.random::<f64>() >= (linear + log_q_ratio).exp().min(1.0) {
            return Ok(rec);
        }
        let d = step.len();
        let (accepted, events, evaluated) = thin_factors(rng, &self.curvature, scale, |i| {
            let g = &self.grads[i * d..(i + 1) * d];
            model.energy_diff(i, from, to) - g.iter().zip(&step).map(|(a, b)| a * b).sum::<f64>()
        })?;
        rec.accepted = accepted;
        rec.batch_size = events;
        rec.oracle_calls = evaluated;
        Ok(rec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{Differentiable, Dimension};
    use crate::kernels::testing::LinearChain;
    use crate::rng::RngStream;

    #[test]
    fn zero_differences_always_accept() {
        let m = LinearChain::new(vec![0.0; 3], 4);
        let k = Tfmh::new(&TfmhConfig::new(10.0).unwrap()).unwrap();
        let mut rng = RngStream::from_seed(5);
        for _ in 0..200 {
            let rec = k.decide(&m, &0, &3, 0.0, &mut rng).unwrap();
            assert!(rec.accepted);
            assert_eq!(rec.oracle_calls, 0);
        }
    }

    #[test]
    fn factor_product_matches_closed_form() {
        // Opposite-signed weights: MH accepts 0 -> 1 surely, TFMH only if the
        // positive-weight factors all accept: exp(-(0.2 + 0.3)).
        let m = LinearChain::new(vec![0.2, 0.3, -0.25, -0.25], 2);
        let k = Tfmh::new(&TfmhConfig::new(100.0).unwrap()).unwrap();
        let mut rng = RngStream::from_seed(6);
        let n = 200_000;
        let acc = (0..n).filter(|_| k.decide(&m, &0, &1, 0.0, &mut rng).unwrap().accepted).count() as f64 / n as f64;
        let p = (-0.5f64).exp();
        assert!((acc - p).abs() < 4.0 * (p * (1.0 - p) / n as f64).sqrt(), "{acc} vs {p}");
    }

    #[test]
    fn truncation_falls_back() {
        let m = LinearChain::new(vec![0.2, 0.3, -0.25, -0.25], 2);
        // C M = 1 > 2R
        let k = Tfmh::new(&TfmhConfig::new(0.4).unwrap()).unwrap();
        let mut rng = RngStream::from_seed(7);
        let rec = k.decide(&m, &0, &1, 0.0, &mut rng).unwrap();
        assert!(rec.fell_back_to_full);
        assert!(rec.accepted);
        assert_eq!(rec.oracle_calls, 4);
    }

    #[test]
    fn fallback_consumes_rng_like_mh() {
        let m = LinearChain::new(vec![0.4, 0.1], 3);
        let k = Tfmh::new(&TfmhConfig::new(0.01).unwrap()).unwrap();
        let mut a = RngStream::from_seed(9);
        let mut b = RngStream::from_seed(9);
        for _ in 0..100 {
            let x = k.decide(&m, &0, &2, 0.0, &mut a).unwrap();
            let y = FullMh.decide(&m, &0, &2, 0.0, &mut b).unwrap();
            assert_eq!(x.accepted, y.accepted);
        }
    }

    /// `U_i(θ) = a_i θ₀ + ½ b_i θ₁²` on ℝ².
    struct Quad {
        a: Vec<f64>,
        b: Vec<f64>,
        bounds: BoundConsts,
    }

    impl Quad {
        fn new(a: Vec<f64>, b: Vec<f64>) -> Self {
            // Lipschitz on |θ₁| ≤ 10
            let bounds = BoundConsts::new(a.iter().zip(&b).map(|(x, y)| x.abs() + 10.0 * y.abs()).collect()).unwrap();
            Self { a, b, bounds }
        }
    }

    impl EnergyModel for Quad {
        type State = Vec<f64>;
        fn id(&self) -> String {
            "quad".into()
        }
        fn len(&self) -> usize {
            self.a.len()
        }
        fn dim(&self) -> Dimension {
            Dimension::Continuous(2)
        }
        fn energy_term(&self, i: usize, s: &Vec<f64>) -> f64 {
            self.a[i] * s[0] + 0.5 * self.b[i] * s[1] * s[1]
        }
        fn bounds(&self) -> &BoundConsts {
            &self.bounds
        }
        fn metric(&self, x: &Vec<f64>, y: &Vec<f64>) -> f64 {
            crate::energy::euclidean(x, y)
        }
    }

    impl Differentiable for Quad {
        fn grad_term(&self, i: usize, t: &[f64], out: &mut [f64]) {
            out[0] = self.a[i];
            out[1] = self.b[i] * t[1];
        }
    }

    impl CurvatureBounded for Quad {
        fn curvature_bound(&self, i: usize) -> f64 {
            self.b[i].abs()
        }
    }

    #[test]
    fn smh1_linear_part_is_exact() {
        // Purely linear terms leave zero residual: acceptance equals MH.
        let m = Quad::new(vec![0.3, -0.1, 0.5], vec![0.0; 3]);
        let cfg = TfmhConfig { trunc_threshold: 10.0, control_variate: ControlVariate::Smh1 { theta_map: vec![0.0, 0.0] } };
        let k = Smh1::new(&m, &cfg).unwrap();
        let from = vec![0.0, 0.0];
        let to = vec![1.0, 0.0];
        let mut rng = RngStream::from_seed(3);
        let n = 100_000;
        let acc = (0..n).filter(|_| k.decide(&m, &from, &to, 0.0, &mut rng).unwrap().accepted).count() as f64 / n as f64;
        let p = FullMh::accept_prob(&m, &from, &to, 0.0);
        assert!((acc - p).abs() < 4.0 * (p * (1.0 - p) / n as f64).sqrt());
    }

    #[test]
    fn smh1_residual_factors_match_product() {
        let m = Quad::new(vec![0.0, 0.0], vec![0.4, -0.2]);
        let cfg = TfmhConfig { trunc_threshold: 10.0, control_variate: ControlVariate::Smh1 { theta_map: vec![0.0, 0.0] } };
        let k = Smh1::new(&m, &cfg).unwrap();
        let from = vec![0.0, 0.0];
        let to = vec![0.0, 1.0];
        // Residual ΔŨ_i = -½ b_i; linear part is zero at θ̂ = 0.
        let p = (-0.2f64).exp();
        let mut rng = RngStream::from_seed(11);
        let n = 100_000;
        let acc = (0..n).filter(|_| k.decide(&m, &from, &to, 0.0, &mut rng).unwrap().accepted).count() as f64 / n as f64;
        assert!((acc - p).abs() < 4.0 * (p * (1.0 - p) / n as f64).sqrt(), "{acc} vs {p}");
    }

    #[test]
    fn smh1_requires_map_point() {
        let m = Quad::new(vec![1.0], vec![1.0]);
        assert!(Smh1::new(&m, &TfmhConfig::new(1.0).unwrap()).is_err());
        let cfg = TfmhConfig { trunc_threshold: 1.0, control_variate: ControlVariate::Smh1 { theta_map: vec![0.0, 0.0] } };
        assert!(Tfmh::new(&cfg).is_err());
    }
}

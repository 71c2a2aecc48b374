//! Target distributions written as sums of component energies.
//!
//! A target is `π(θ) ∝ exp(-Σ_i U_i(θ))`. Minibatch kernels additionally need
//! per-datum constants `c_i` and a symmetric distance `M` such that
//! `|U_i(θ) - U_i(θ')| ≤ c_i · M(θ, θ')`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::{compensated_sum, IndexSampler};

/// Shape of the parameter space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dimension {
    Continuous(usize),
    /// A finite state space `{0, .., states - 1}`.
    Discrete(usize),
}

/// Per-datum bound constants `c_i`, their total `C`, and an alias table for
/// drawing `i` with probability `c_i / C`.
#[derive(Clone, Debug)]
pub struct BoundConsts {
    consts: Vec<f64>,
    total: f64,
    sampler: IndexSampler,
}

impl BoundConsts {
    pub fn new(consts: Vec<f64>) -> Result<Self> {
        let sampler = IndexSampler::new(&consts)?;
        let total = compensated_sum(consts.iter().copied());
        Ok(Self { consts, total, sampler })
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.consts[i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.consts
    }

    /// `C = Σ c_i`.
    pub fn total(&self) -> f64 {
        self.total
    }

    /// Draws `i` with probability `c_i / C`. Requires `C > 0`.
    #[inline]
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.sampler.sample(rng)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.consts.iter().map(|c| c * factor).collect())
    }
}

pub trait EnergyModel: Send + Sync {
    type State: Clone + std::fmt::Debug + Send + Sync;

    /// Short identifier recorded in traces.
    fn id(&self) -> String;

    /// Number of energy terms `N`.
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn dim(&self) -> Dimension;

    /// `U_i(state)`.
    fn energy_term(&self, i: usize, state: &Self::State) -> f64;

    /// `U_i(from) - U_i(to)`.
    fn energy_diff(&self, i: usize, from: &Self::State, to: &Self::State) -> f64 {
        self.energy_term(i, from) - self.energy_term(i, to)
    }

    /// `Σ_i (U_i(from) - U_i(to))`, compensated. Models with a closed form
    /// may override this; kernels still account `N` oracle calls for it.
    fn total_energy_diff(&self, from: &Self::State, to: &Self::State) -> f64 {
        compensated_sum((0..self.len()).map(|i| self.energy_diff(i, from, to)))
    }

    fn bounds(&self) -> &BoundConsts;

    /// `M(a, b)`: symmetric, nonnegative, zero on the diagonal.
    fn metric(&self, a: &Self::State, b: &Self::State) -> f64;

    fn in_support(&self, _state: &Self::State) -> bool {
        true
    }

    /// Inverse temperature applied to every term and bound constant.
    fn temper(&self) -> f64 {
        1.0
    }
}

/// Models that can generate random probe points for bound checking.
pub trait Probe: EnergyModel {
    /// A point in the support.
    fn probe_state<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::State;

    /// A point in the support within distance `radius` of `state`.
    fn probe_neighbor<R: Rng + ?Sized>(&self, state: &Self::State, radius: f64, rng: &mut R) -> Self::State;
}

/// Models with analytic per-term gradients.
pub trait Differentiable: EnergyModel<State = Vec<f64>> {
    /// Writes `∇U_i(θ)` into `out`.
    fn grad_term(&self, i: usize, theta: &[f64], out: &mut [f64]);

    /// `∇ Σ_i U_i(θ)`.
    fn grad_total(&self, theta: &[f64]) -> Vec<f64> {
        let d = theta.len();
        let mut total = vec![0.0; d];
        let mut g = vec![0.0; d];
        for i in 0..self.len() {
            self.grad_term(i, theta, &mut g);
            for (t, gi) in total.iter_mut().zip(&g) {
                *t += gi;
            }
        }
        total
    }
}

/// Models with an entrywise Hessian bound `Ū_{2,i} ≥ max_{j,k} |∂²U_i/∂θ_j∂θ_k|`
/// valid over the whole support, used by first-order control variates.
pub trait CurvatureBounded: Differentiable {
    fn curvature_bound(&self, i: usize) -> f64;
}

/// `Σ_i U_i(θ)`.
pub fn total_energy<M: EnergyModel + ?Sized>(model: &M, state: &M::State) -> Result<f64> {
    if !model.in_support(state) {
        return Err(Error::OutOfSupport);
    }
    Ok(compensated_sum((0..model.len()).map(|i| model.energy_term(i, state))))
}

/// Outcome of [`check_local_bounds`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalBoundReport {
    pub trials: usize,
    /// Largest observed `|ΔU_i| / (c_i · M)`.
    pub max_ratio: f64,
    pub worst_index: Option<usize>,
}

/// Tolerance on the observed bound ratio before a violation is reported.
pub const BOUND_SLACK: f64 = 1e-12;

/// Samples `trials` triples `(i, θ, θ')` with `M(θ, θ') ≤ radius` and checks
/// `|U_i(θ) - U_i(θ')| ≤ c_i M(θ, θ')`.
pub fn check_local_bounds<M, R>(model: &M, trials: usize, radius: f64, rng: &mut R) -> Result<LocalBoundReport>
where
    M: Probe + ?Sized,
    R: Rng + ?Sized,
{
    if !(radius > 0.0) {
        return Err(Error::Domain(format!("radius must be positive, got {radius}")));
    }
    let n = model.len();
    let mut report = LocalBoundReport { trials, max_ratio: 0.0, worst_index: None };
    for _ in 0..trials {
        let a = model.probe_state(rng);
        let b = model.probe_neighbor(&a, radius, rng);
        let i = rng.random_range(0..n);
        let ratio = bound_ratio(model, i, &a, &b);
        if !ratio.is_finite() {
            return Err(Error::NonFinite(format!("bound ratio for datum {i}")));
        }
        if ratio > report.max_ratio {
            report.max_ratio = ratio;
            report.worst_index = Some(i);
        }
        if ratio > 1.0 + BOUND_SLACK {
            return Err(Error::BoundViolation { index: i, ratio });
        }
    }
    Ok(report)
}

/// `|ΔU_i| / (c_i M)`, defined as 0 when both numerator and denominator vanish.
pub fn bound_ratio<M: EnergyModel + ?Sized>(model: &M, i: usize, a: &M::State, b: &M::State) -> f64 {
    let du = model.energy_diff(i, a, b).abs();
    let denom = model.bounds().get(i) * model.metric(a, b);
    if du == 0.0 {
        0.0
    } else {
        du / denom
    }
}

/// A model with every energy term and bound constant multiplied by `β`.
#[derive(Clone, Debug)]
pub struct Tempered<M> {
    inner: M,
    beta: f64,
    bounds: BoundConsts,
}

impl<M: EnergyModel> Tempered<M> {
    pub fn new(inner: M, beta: f64) -> Result<Self> {
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(Error::Domain(format!("inverse temperature must be finite and ≥ 0, got {beta}")));
        }
        let bounds = inner.bounds().scaled(beta)?;
        Ok(Self { inner, beta, bounds })
    }

    pub fn inner(&self) -> &M {
        &self.inner
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

impl<M: EnergyModel> EnergyModel for Tempered<M> {
    type State = M::State;

    fn id(&self) -> String {
        format!("{}@beta={}", self.inner.id(), self.beta)
    }

    fn len(&self) -> usize {
        self.inner.len()
    }

    fn dim(&self) -> Dimension {
        self.inner.dim()
    }

    fn energy_term(&self, i: usize, state: &Self::State) -> f64 {
        self.beta * self.inner.energy_term(i, state)
    }

    fn energy_diff(&self, i: usize, from: &Self::State, to: &Self::State) -> f64 {
        self.beta * self.inner.energy_diff(i, from, to)
    }

    fn total_energy_diff(&self, from: &Self::State, to: &Self::State) -> f64 {
        self.beta * self.inner.total_energy_diff(from, to)
    }

    fn bounds(&self) -> &BoundConsts {
        &self.bounds
    }

    fn metric(&self, a: &Self::State, b: &Self::State) -> f64 {
        self.inner.metric(a, b)
    }

    fn in_support(&self, state: &Self::State) -> bool {
        self.inner.in_support(state)
    }

    fn temper(&self) -> f64 {
        self.beta * self.inner.temper()
    }
}

impl<M: Probe> Probe for Tempered<M> {
    fn probe_state<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::State {
        self.inner.probe_state(rng)
    }

    fn probe_neighbor<R: Rng + ?Sized>(&self, state: &Self::State, radius: f64, rng: &mut R) -> Self::State {
        self.inner.probe_neighbor(state, radius, rng)
    }
}

impl<M: Differentiable> Differentiable for Tempered<M> {
    fn grad_term(&self, i: usize, theta: &[f64], out: &mut [f64]) {
        self.inner.grad_term(i, theta, out);
        for g in out.iter_mut() {
            *g *= self.beta;
        }
    }
}

impl<M: CurvatureBounded> CurvatureBounded for Tempered<M> {
    fn curvature_bound(&self, i: usize) -> f64 {
        self.beta * self.inner.curvature_bound(i)
    }
}

/// Euclidean distance.
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Dot product with four accumulators; the hot loop of every regression model.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let j = 4 * k;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for j in 4 * chunks..a.len() {
        s += a[j] * b[j];
    }
    s
}

/// Uniform draw from the Euclidean ball of the given radius around `center`.
pub fn ball_neighbor<R: Rng + ?Sized>(center: &[f64], radius: f64, rng: &mut R) -> Vec<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let d = center.len();
    let dir: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
    let r = radius * rng.random::<f64>().powf(1.0 / d as f64);
    center.iter().zip(&dir).map(|(c, u)| c + r * u / norm).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_consts_total_and_scaling() {
        let b = BoundConsts::new(vec![0.5, 1.5, 2.0]).unwrap();
        assert_eq!(b.total(), 4.0);
        let s = b.scaled(0.25).unwrap();
        assert_eq!(s.as_slice(), &[0.125, 0.375, 0.5]);
        assert_eq!(s.total(), 1.0);
    }

    #[test]
    fn bound_consts_reject_negative() {
        assert!(BoundConsts::new(vec![1.0, -1.0]).is_err());
    }

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..103).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..103).map(|i| (i as f64 * 0.11).cos()).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }

    #[test]
    fn ball_neighbor_stays_in_ball() {
        let mut rng = crate::rng::RngStream::from_seed(9);
        let c = vec![1.0, -2.0, 0.5];
        for _ in 0..1000 {
            let p = ball_neighbor(&c, 0.3, &mut rng);
            assert!(euclidean(&c, &p) <= 0.3 + 1e-12);
        }
    }
}

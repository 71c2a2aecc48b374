//! Finite-state fixtures with known stationary distributions.

use serde::{Deserialize, Serialize};

use crate::energy::{BoundConsts, Dimension, EnergyModel};
use crate::error::{Error, Result};
use crate::kernels::GlobalFactors;
use crate::proposal::{LineProposal, TabulatedProposal};

/// `π(θ) ∝ exp(-(1/N) Σ_i θ x_i)` on `{0, .., K-1}` with data at two levels.
///
/// The default data (5000 at `-1`, 1000 at `+5`) sum to zero, so the exact
/// marginal is uniform.
#[derive(Clone, Debug)]
pub struct DiscreteLine {
    k: usize,
    xs: Vec<f64>,
    sum_x: f64,
    bounds: BoundConsts,
    /// Two aggregated global factors, one per data level, for PoissonMH.
    factor_slope: [f64; 2],
    factor_bounds: BoundConsts,
    spec: DiscreteLineSpec,
}

/// Generator parameters, recorded next to persisted results.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteLineSpec {
    pub states: usize,
    pub n_low: usize,
    pub low: f64,
    pub n_high: usize,
    pub high: f64,
}

impl Default for DiscreteLineSpec {
    fn default() -> Self {
        Self { states: 200, n_low: 5000, low: -1.0, n_high: 1000, high: 5.0 }
    }
}

impl DiscreteLine {
    pub fn new(states: usize) -> Result<Self> {
        Self::from_spec(DiscreteLineSpec { states, ..Default::default() })
    }

    pub fn from_spec(spec: DiscreteLineSpec) -> Result<Self> {
        if spec.states < 2 {
            return Err(Error::Config("DiscreteLine needs at least two states".into()));
        }
        let n = spec.n_low + spec.n_high;
        if n == 0 {
            return Err(Error::Config("DiscreteLine needs data".into()));
        }
        let nf = n as f64;
        let mut xs = vec![spec.low; spec.n_low];
        xs.resize(n, spec.high);
        let bounds = BoundConsts::new(xs.iter().map(|x| x.abs() / nf).collect())?;
        let sum_x = spec.n_low as f64 * spec.low + spec.n_high as f64 * spec.high;
        // φ_g(θ) = -θ S_g / N shifted into [0, (K-1)|S_g|/N].
        let s = [spec.n_low as f64 * spec.low / nf, spec.n_high as f64 * spec.high / nf];
        let span = (spec.states - 1) as f64;
        let factor_bounds = BoundConsts::new(s.iter().map(|v| v.abs() * span).collect())?;
        Ok(Self { k: spec.states, xs, sum_x, bounds, factor_slope: s, factor_bounds, spec })
    }

    pub fn states(&self) -> usize {
        self.k
    }

    pub fn spec(&self) -> DiscreteLineSpec {
        self.spec
    }

    pub fn proposal(&self) -> LineProposal {
        LineProposal::new(self.k).expect("at least two states")
    }

    /// Exact normalised stationary distribution.
    pub fn exact_distribution(&self) -> Vec<f64> {
        let a = -self.sum_x / self.xs.len() as f64;
        normalise_log_weights((0..self.k).map(|t| a * t as f64).collect())
    }
}

impl EnergyModel for DiscreteLine {
    type State = usize;

    fn id(&self) -> String {
        format!("discrete-line-k{}", self.k)
    }

    fn len(&self) -> usize {
        self.xs.len()
    }

    fn dim(&self) -> Dimension {
        Dimension::Discrete(self.k)
    }

    fn energy_term(&self, i: usize, s: &usize) -> f64 {
        *s as f64 * self.xs[i] / self.xs.len() as f64
    }

    fn energy_diff(&self, i: usize, from: &usize, to: &usize) -> f64 {
        (*from as f64 - *to as f64) * self.xs[i] / self.xs.len() as f64
    }

    fn total_energy_diff(&self, from: &usize, to: &usize) -> f64 {
        (*from as f64 - *to as f64) * self.sum_x / self.xs.len() as f64
    }

    fn bounds(&self) -> &BoundConsts {
        &self.bounds
    }

    fn metric(&self, a: &usize, b: &usize) -> f64 {
        a.abs_diff(*b) as f64
    }

    fn in_support(&self, s: &usize) -> bool {
        *s < self.k
    }
}

impl GlobalFactors<usize> for DiscreteLine {
    fn num_factors(&self) -> usize {
        2
    }

    fn factor(&self, g: usize, s: &usize) -> f64 {
        let slope = self.factor_slope[g];
        let span = (self.k - 1) as f64;
        if slope <= 0.0 {
            -slope * *s as f64
        } else {
            slope * (span - *s as f64)
        }
    }

    fn factor_bounds(&self) -> &BoundConsts {
        &self.factor_bounds
    }
}

/// A line whose data split evenly between `±M̃/N`, with `U_i(θ) = -θ x_i`.
///
/// The exact target is uniform and full MH accepts every move, yet each
/// factor on its own is tilted by `M̃/N` per unit step.
#[derive(Clone, Debug)]
pub struct UniformLine {
    k: usize,
    m_tilde: f64,
    xs: Vec<f64>,
    bounds: BoundConsts,
}

impl UniformLine {
    pub fn new(states: usize, n: usize, m_tilde: f64) -> Result<Self> {
        if states < 2 || n < 2 || !n.is_multiple_of(2) {
            return Err(Error::Config("UniformLine needs ≥ 2 states and an even, positive N".into()));
        }
        if !(m_tilde > 0.0) {
            return Err(Error::Config(format!("UniformLine scale must be positive, got {m_tilde}")));
        }
        let x = m_tilde / n as f64;
        let xs: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { x } else { -x }).collect();
        let bounds = BoundConsts::new(vec![x; n])?;
        Ok(Self { k: states, m_tilde, xs, bounds })
    }

    pub fn m_tilde(&self) -> f64 {
        self.m_tilde
    }

    pub fn proposal(&self) -> LineProposal {
        LineProposal::new(self.k).expect("at least two states")
    }

    pub fn exact_distribution(&self) -> Vec<f64> {
        vec![1.0 / self.k as f64; self.k]
    }
}

impl EnergyModel for UniformLine {
    type State = usize;

    fn id(&self) -> String {
        format!("uniform-line-k{}-m{}", self.k, self.m_tilde)
    }

    fn len(&self) -> usize {
        self.xs.len()
    }

    fn dim(&self) -> Dimension {
        Dimension::Discrete(self.k)
    }

    fn energy_term(&self, i: usize, s: &usize) -> f64 {
        -(*s as f64) * self.xs[i]
    }

    fn energy_diff(&self, i: usize, from: &usize, to: &usize) -> f64 {
        (*to as f64 - *from as f64) * self.xs[i]
    }

    fn total_energy_diff(&self, _from: &usize, _to: &usize) -> f64 {
        0.0
    }

    fn bounds(&self) -> &BoundConsts {
        &self.bounds
    }

    fn metric(&self, a: &usize, b: &usize) -> f64 {
        a.abs_diff(*b) as f64
    }

    fn in_support(&self, s: &usize) -> bool {
        *s < self.k
    }
}

/// Two states at `∓M̃/2` with `U_i(θ) = (C/N) θ x_i`, `x_i ∈ {±1}` averaging
/// `q̃`, so the energy gap between the states is `C M̃ q̃`. State 0 is the low
/// energy one.
#[derive(Clone, Debug)]
pub struct TwoStateFixture {
    total: f64,
    m_tilde: f64,
    q_tilde: f64,
    xs: Vec<f64>,
    sum_x: f64,
    bounds: BoundConsts,
}

impl TwoStateFixture {
    /// `n` data with `round(n (1 + q̃) / 2)` of them at `+1`.
    pub fn new(n: usize, total: f64, m_tilde: f64, q_tilde: f64) -> Result<Self> {
        if n == 0 || !(total > 0.0) || !(m_tilde > 0.0) || !(q_tilde > 0.0 && q_tilde < 1.0) {
            return Err(Error::Config("TwoStateFixture needs n ≥ 1, C > 0, M̃ > 0 and q̃ in (0, 1)".into()));
        }
        let n_plus = (n as f64 * (1.0 + q_tilde) / 2.0).round() as usize;
        let xs: Vec<f64> = (0..n).map(|i| if i < n_plus { 1.0 } else { -1.0 }).collect();
        let sum_x = xs.iter().sum::<f64>();
        let bounds = BoundConsts::new(vec![total / n as f64; n])?;
        Ok(Self { total, m_tilde, q_tilde: sum_x / n as f64, xs, sum_x, bounds })
    }

    /// `N = 100`, `C = 2`, `M̃ = 1`, `q̃ = ½`: energy gap `C M̃ q̃ = 1`.
    pub fn standard() -> Self {
        Self::new(100, 2.0, 1.0, 0.5).expect("valid constants")
    }

    pub fn position(&self, s: usize) -> f64 {
        (s as f64 - 0.5) * self.m_tilde
    }

    /// Realised `q̃` after rounding the data counts.
    pub fn q_tilde(&self) -> f64 {
        self.q_tilde
    }

    /// `C M̃ q̃`.
    pub fn energy_gap(&self) -> f64 {
        self.total * self.m_tilde * self.q_tilde
    }

    pub fn proposal(&self) -> TabulatedProposal {
        TabulatedProposal::flip()
    }

    pub fn exact_distribution(&self) -> Vec<f64> {
        let c = self.total / self.xs.len() as f64;
        normalise_log_weights((0..2).map(|s| -c * self.position(s) * self.sum_x).collect())
    }
}

impl EnergyModel for TwoStateFixture {
    type State = usize;

    fn id(&self) -> String {
        format!("two-state-gap{}", self.energy_gap())
    }

    fn len(&self) -> usize {
        self.xs.len()
    }

    fn dim(&self) -> Dimension {
        Dimension::Discrete(2)
    }

    fn energy_term(&self, i: usize, s: &usize) -> f64 {
        self.total / self.xs.len() as f64 * self.position(*s) * self.xs[i]
    }

    fn energy_diff(&self, i: usize, from: &usize, to: &usize) -> f64 {
        self.total / self.xs.len() as f64 * (self.position(*from) - self.position(*to)) * self.xs[i]
    }

    fn total_energy_diff(&self, from: &usize, to: &usize) -> f64 {
        self.total / self.xs.len() as f64 * (self.position(*from) - self.position(*to)) * self.sum_x
    }

    fn bounds(&self) -> &BoundConsts {
        &self.bounds
    }

    fn metric(&self, a: &usize, b: &usize) -> f64 {
        (self.position(*a) - self.position(*b)).abs()
    }

    fn in_support(&self, s: &usize) -> bool {
        *s < 2
    }
}

pub(crate) fn normalise_log_weights(logw: Vec<f64>) -> Vec<f64> {
    let m = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::total_energy;
    use crate::kernels::FullMh;

    #[test]
    fn discrete_line_total_energy_is_zero() {
        let m = DiscreteLine::new(10).unwrap();
        for s in 0..10 {
            assert!(total_energy(&m, &s).unwrap().abs() < 1e-9);
        }
        assert!(m.exact_distribution().iter().all(|p| (p - 0.1).abs() < 1e-15));
    }

    #[test]
    fn discrete_line_closed_form_matches_sum() {
        let m = DiscreteLine::from_spec(DiscreteLineSpec { states: 7, n_low: 30, low: -1.0, n_high: 4, high: 5.0 }).unwrap();
        let naive: f64 = (0..m.len()).map(|i| m.energy_diff(i, &2, &5)).sum();
        assert!((naive - m.total_energy_diff(&2, &5)).abs() < 1e-12);
        // Factors reproduce the energy up to a constant.
        let f = |s: usize| m.factor(0, &s) + m.factor(1, &s);
        let e = |s: usize| total_energy(&m, &s).unwrap();
        assert!(((f(5) - f(2)) + (e(5) - e(2))).abs() < 1e-12);
    }

    #[test]
    fn uniform_line_mh_accepts_everything() {
        let m = UniformLine::new(10, 100, 4.0).unwrap();
        assert_eq!(FullMh::accept_prob(&m, &3, &4, 0.0), 1.0);
        assert!((m.bounds().total() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn two_state_gap() {
        let m = TwoStateFixture::standard();
        assert!((m.energy_gap() - 1.0).abs() < 1e-12);
        let up = FullMh::accept_prob(&m, &0, &1, 0.0);
        assert!((up - (-1.0f64).exp()).abs() < 1e-12);
        let pi = m.exact_distribution();
        assert!((pi[1] / pi[0] - (-1.0f64).exp()).abs() < 1e-12);
    }
}

//! Sample-quality metrics.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::energy::dot;
use crate::error::{Error, Result};
use crate::models::Dataset;
use crate::trace::StepRecord;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EssEstimate {
    pub ess: f64,
    /// Set for zero-variance series, where `ess` is 1 by convention.
    pub degenerate: bool,
}

/// Effective sample size `n / (1 + 2 Σ ρ_k)` with Geyer's initial positive
/// sequence truncation. Autocorrelations come from a zero-padded FFT.
pub fn ess(series: &[f64]) -> Result<EssEstimate> {
    let n = series.len();
    if n < 100 {
        return Err(Error::Domain(format!("ESS needs at least 100 points, got {n}")));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let var = series.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    if !(var > 0.0) || var < 1e-300 {
        return Ok(EssEstimate { ess: 1.0, degenerate: true });
    }
    let rho = autocorrelation(series, mean, var);

    // Γ_m = ρ_{2m} + ρ_{2m+1}, summed while positive and forced monotone.
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut m = 0;
    while 2 * m + 1 < n {
        let mut gamma = rho[2 * m] + rho[2 * m + 1];
        if gamma <= 0.0 {
            break;
        }
        gamma = gamma.min(prev);
        prev = gamma;
        sum += gamma;
        m += 1;
    }
    let tau = (2.0 * sum - 1.0).max(1.0 / n as f64);
    Ok(EssEstimate { ess: n as f64 / tau, degenerate: false })
}

fn autocorrelation(series: &[f64], mean: f64, var: f64) -> Vec<f64> {
    let n = series.len();
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = series.iter().map(|x| Complex::new(x - mean, 0.0)).collect();
    buf.resize(size, Complex::new(0.0, 0.0));
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for c in &mut buf {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    let scale = size as f64 * n as f64 * var;
    buf[..n].iter().map(|c| c.re / scale).collect()
}

/// `½ Σ |p_k - q_k|`.
pub fn tv_discrete(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch { left: p.len(), right: q.len() });
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Normalises visit counts.
pub fn normalise_counts(counts: &[u64]) -> Vec<f64> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return vec![0.0; counts.len()];
    }
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

pub const GRID_SIZE: usize = 60;
pub const GRID_FLOOR: f64 = 1e-8;

/// Cell probabilities on a `g × g` grid over a box, mixed with a uniform floor:
/// `p = (1 - ε) p_raw + ε / g²`. Cells are indexed `row * g + col` with rows
/// along the first coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridDensity {
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    pub g: usize,
    pub floor: f64,
    pub probs: Vec<f64>,
}

impl GridDensity {
    pub fn from_probs(x_range: [f64; 2], y_range: [f64; 2], g: usize, raw: Vec<f64>, floor: f64) -> Result<Self> {
        if g == 0 || raw.len() != g * g {
            return Err(Error::LengthMismatch { left: raw.len(), right: g * g });
        }
        if !(0.0..1.0).contains(&floor) {
            return Err(Error::Domain(format!("floor must lie in [0, 1), got {floor}")));
        }
        let total: f64 = raw.iter().sum();
        if !(total > 0.0) {
            return Err(Error::EmptyBox);
        }
        let u = floor / (g * g) as f64;
        let probs = raw.iter().map(|p| (1.0 - floor) * p / total + u).collect();
        Ok(Self { x_range, y_range, g, floor, probs })
    }

    pub fn cell(&self, x: f64, y: f64) -> Option<usize> {
        let fx = (x - self.x_range[0]) / (self.x_range[1] - self.x_range[0]);
        let fy = (y - self.y_range[0]) / (self.y_range[1] - self.y_range[0]);
        if !(0.0..=1.0).contains(&fx) || !(0.0..=1.0).contains(&fy) {
            return None;
        }
        let r = ((fx * self.g as f64) as usize).min(self.g - 1);
        let c = ((fy * self.g as f64) as usize).min(self.g - 1);
        Some(r * self.g + c)
    }

    /// Cell midpoint.
    pub fn center(&self, idx: usize) -> [f64; 2] {
        let (r, c) = (idx / self.g, idx % self.g);
        let wx = (self.x_range[1] - self.x_range[0]) / self.g as f64;
        let wy = (self.y_range[1] - self.y_range[0]) / self.g as f64;
        [self.x_range[0] + (r as f64 + 0.5) * wx, self.y_range[0] + (c as f64 + 0.5) * wy]
    }

    /// Histogram of `counts` on this grid with the same floor.
    pub fn with_counts(&self, counts: &[u64]) -> Result<Self> {
        Self::from_probs(self.x_range, self.y_range, self.g, counts.iter().map(|&c| c as f64).collect(), self.floor)
    }
}

/// Streaming cell counts over a [`GridDensity`]'s layout.
#[derive(Clone, Debug)]
pub struct GridHistogram {
    pub counts: Vec<u64>,
    pub outside: u64,
}

impl GridHistogram {
    pub fn new(grid: &GridDensity) -> Self {
        Self { counts: vec![0; grid.g * grid.g], outside: 0 }
    }

    pub fn add(&mut self, grid: &GridDensity, x: f64, y: f64) {
        match grid.cell(x, y) {
            Some(i) => self.counts[i] += 1,
            None => self.outside += 1,
        }
    }
}

/// `KL(p ‖ q) + KL(q ‖ p)` over matching grids.
pub fn symmetric_kl(p: &GridDensity, q: &GridDensity) -> Result<f64> {
    if p.probs.len() != q.probs.len() {
        return Err(Error::LengthMismatch { left: p.probs.len(), right: q.probs.len() });
    }
    Ok(p.probs.iter().zip(&q.probs).map(|(a, b)| (a - b) * (a.ln() - b.ln())).sum())
}

/// Histograms `samples` on `truth`'s grid and returns the symmetric KL.
pub fn symmetric_kl_2d<I, P>(samples: I, truth: &GridDensity) -> Result<f64>
where
    I: IntoIterator<Item = P>,
    P: AsRef<[f64]>,
{
    let mut h = GridHistogram::new(truth);
    for s in samples {
        let s = s.as_ref();
        h.add(truth, s[0], s[1]);
    }
    if h.counts.iter().all(|&c| c == 0) {
        return Err(Error::EmptyBox);
    }
    symmetric_kl(&truth.with_counts(&h.counts)?, truth)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchStats {
    pub steps: usize,
    pub mean_batch: f64,
    pub se_batch: f64,
    pub mean_oracle_calls: f64,
    pub fallback_fraction: f64,
    pub acceptance_rate: f64,
    pub mean_expected_batch: f64,
}

/// Streaming accumulator behind [`batch_stats`].
#[derive(Clone, Debug, Default)]
pub struct BatchAccumulator {
    n: usize,
    sum_b: f64,
    sum_b2: f64,
    sum_calls: f64,
    fallbacks: usize,
    accepted: usize,
    sum_expected: f64,
}

impl BatchAccumulator {
    pub fn push(&mut self, r: &StepRecord) {
        let b = r.batch_size as f64;
        self.n += 1;
        self.sum_b += b;
        self.sum_b2 += b * b;
        self.sum_calls += r.oracle_calls as f64;
        self.fallbacks += r.fell_back_to_full as usize;
        self.accepted += r.accepted as usize;
        self.sum_expected += r.expected_batch;
    }

    pub fn stats(&self) -> BatchStats {
        if self.n == 0 {
            return BatchStats::default();
        }
        let n = self.n as f64;
        let mean = self.sum_b / n;
        let var = if self.n > 1 { ((self.sum_b2 - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
        BatchStats {
            steps: self.n,
            mean_batch: mean,
            se_batch: (var / n).sqrt(),
            mean_oracle_calls: self.sum_calls / n,
            fallback_fraction: self.fallbacks as f64 / n,
            acceptance_rate: self.accepted as f64 / n,
            mean_expected_batch: self.sum_expected / n,
        }
    }
}

pub fn batch_stats(records: &[StepRecord]) -> BatchStats {
    let mut acc = BatchAccumulator::default();
    records.iter().for_each(|r| acc.push(r));
    acc.stats()
}

/// Mean squared error between the post-burnin average state and `truth`,
/// averaged over coordinates.
pub fn posterior_mean_mse(states: &[Vec<f64>], truth: &[f64], burnin: usize) -> Result<f64> {
    if burnin >= states.len() {
        return Err(Error::Domain(format!("burnin {burnin} leaves no samples out of {}", states.len())));
    }
    let mut mean = vec![0.0; truth.len()];
    for s in &states[burnin..] {
        if s.len() != truth.len() {
            return Err(Error::DimMismatch { expected: truth.len(), got: s.len() });
        }
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    let k = (states.len() - burnin) as f64;
    Ok(mse(&mean.iter().map(|m| m / k).collect::<Vec<_>>(), truth))
}

pub fn mse(estimate: &[f64], truth: &[f64]) -> f64 {
    estimate.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / truth.len().max(1) as f64
}

/// Fraction of labels matching `1[h(θᵀx) > ½]`.
pub fn test_accuracy(theta: &[f64], test: &Dataset) -> Result<f64> {
    if theta.len() != test.dim() {
        return Err(Error::DimMismatch { expected: test.dim(), got: theta.len() });
    }
    if test.is_empty() {
        return Ok(0.0);
    }
    let hits = (0..test.len())
        .filter(|&i| {
            let pred = if dot(test.row(i), theta) > 0.0 { 1.0 } else { 0.0 };
            pred == test.target(i)
        })
        .count();
    Ok(hits as f64 / test.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn ess_of_iid_noise() {
        let mut rng = RngStream::from_seed(1);
        let n = 10_000;
        let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let e = ess(&x).unwrap();
        assert!(e.ess > 0.9 * n as f64 && e.ess < 1.1 * n as f64, "{}", e.ess);
    }

    #[test]
    fn ess_of_ar1() {
        let mut rng = RngStream::from_seed(2);
        let n = 100_000;
        let rho = 0.9;
        let mut x = vec![0.0; n];
        let s = (1.0f64 - rho * rho).sqrt();
        let z: f64 = StandardNormal.sample(&mut rng);
        x[0] = z;
        for t in 1..n {
            let z: f64 = StandardNormal.sample(&mut rng);
            x[t] = rho * x[t - 1] + s * z;
        }
        let want = n as f64 * (1.0 - rho) / (1.0 + rho);
        let got = ess(&x).unwrap().ess;
        assert!((got / want - 1.0).abs() < 0.15, "{got} vs {want}");
        // affine invariance
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 7.0).collect();
        assert!((ess(&y).unwrap().ess / got - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ess_constant_series() {
        let e = ess(&[2.5; 200]).unwrap();
        assert!(e.degenerate);
        assert_eq!(e.ess, 1.0);
    }

    #[test]
    fn tv_cases() {
        assert_eq!(tv_discrete(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.0);
        assert_eq!(tv_discrete(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(tv_discrete(&[0.5, 0.5], &[0.75, 0.25]).unwrap(), 0.25);
        assert!(tv_discrete(&[1.0], &[0.5, 0.5]).is_err());
    }

    fn bumpy_truth() -> GridDensity {
        let g = 20;
        let raw: Vec<f64> = (0..g * g).map(|k| 1.0 + ((k % 7) as f64)).collect();
        GridDensity::from_probs([-3.0, 3.0], [-3.0, 3.0], g, raw, GRID_FLOOR).unwrap()
    }

    #[test]
    fn grid_floor_and_normalisation() {
        let t = bumpy_truth();
        assert!((t.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(t.probs.iter().all(|&p| p >= GRID_FLOOR / 400.0));
    }

    #[test]
    fn kl_of_exact_samples_is_small() {
        let t = bumpy_truth();
        let table = rand_distr::weighted::WeightedAliasIndex::new(t.probs.clone()).unwrap();
        let mut rng = RngStream::from_seed(3);
        let pts: Vec<[f64; 2]> = (0..1_000_000).map(|_| t.center(table.sample(&mut rng))).collect();
        let kl = symmetric_kl_2d(pts.iter(), &t).unwrap();
        assert!(kl < 0.02, "{kl}");
    }

    #[test]
    fn kl_of_corner_mass_is_large_but_finite() {
        let t = bumpy_truth();
        let pts = vec![[-2.99, -2.99]; 1000];
        let kl = symmetric_kl_2d(pts.iter(), &t).unwrap();
        assert!(kl.is_finite() && kl > 5.0);
        let outside = [[10.0, 10.0]; 10];
        assert!(matches!(symmetric_kl_2d(outside.iter(), &t), Err(Error::EmptyBox)));
    }

    #[test]
    fn batch_stats_zero_records() {
        let s = batch_stats(&vec![StepRecord::default(); 10]);
        assert_eq!((s.mean_batch, s.se_batch, s.mean_oracle_calls, s.fallback_fraction), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn mse_and_accuracy() {
        let truth = vec![1.0, 1.0];
        let states = vec![vec![1.0, 1.0]; 10];
        assert_eq!(posterior_mean_mse(&states, &truth, 3).unwrap(), 0.0);

        let mut rng = RngStream::from_seed(4);
        let n = 301;
        let x: Vec<f64> = (0..n * 2).map(|_| StandardNormal.sample(&mut rng)).collect();
        let y: Vec<f64> = (0..n).map(|_| if rng.random::<f64>() < 0.3 { 1.0 } else { 0.0 }).collect();
        let data = Dataset::new(x.clone(), y.clone(), 2).unwrap();
        let zeros = y.iter().filter(|&&v| v == 0.0).count() as f64 / n as f64;
        assert_eq!(test_accuracy(&[0.0, 0.0], &data).unwrap(), zeros);
        let theta = [0.7, -0.4];
        let flipped = Dataset::new(x, y.iter().map(|v| 1.0 - v).collect(), 2).unwrap();
        assert_eq!(test_accuracy(&theta, &data).unwrap(), test_accuracy(&[-0.7, 0.4], &flipped).unwrap());
        assert!(test_accuracy(&[1.0], &data).is_err());
    }
}

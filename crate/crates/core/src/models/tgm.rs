use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::diagnostics::GridDensity;
use crate::energy::{euclidean, BoundConsts, CurvatureBounded, Differentiable, Dimension, EnergyModel, Probe};
use crate::error::{Error, Result};
use crate::kernels::GlobalFactors;

pub const SIGMA2: f64 = 2.0;
pub const BOX: f64 = 3.0;
pub const DEFAULT_BETA: f64 = 1e-4;
pub const TRUE_THETA: [f64; 2] = [0.0, 1.0];

/// Two-component Gaussian mixture in `θ = (θ₁, θ₂)`, truncated to `[-3, 3]²`:
/// `x_i ~ ½N(θ₁, σ²) + ½N(θ₁ + θ₂, σ²)` with `σ² = 2`, tempered by `β`.
#[derive(Clone, Debug)]
pub struct TruncGaussMix {
    xs: Vec<f64>,
    beta: f64,
    bounds: BoundConsts,
    curvature: Vec<f64>,
    /// `β U_i(0) + β c_i · 3√2`: the shift that makes `φ_i ≥ 0` on the box.
    factor_shift: Vec<f64>,
    factor_bounds: BoundConsts,
}

/// `x_i` draws with `(θ₁, θ₂) = (0, 1)`.
pub fn generate_tgm_data<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Config("TGM data needs n ≥ 1".into()));
    }
    let sd = SIGMA2.sqrt();
    let a = Normal::new(TRUE_THETA[0], sd).map_err(|e| Error::Domain(e.to_string()))?;
    let b = Normal::new(TRUE_THETA[0] + TRUE_THETA[1], sd).map_err(|e| Error::Domain(e.to_string()))?;
    Ok((0..n).map(|_| if rng.random::<bool>() { a.sample(rng) } else { b.sample(rng) }).collect())
}

/// Untempered `U_i(θ)` for a single datum.
#[inline]
pub fn tgm_energy(x: f64, t1: f64, t2: f64) -> f64 {
    let a = -(x - t1).powi(2) / (2.0 * SIGMA2);
    let b = -(x - t1 - t2).powi(2) / (2.0 * SIGMA2);
    let m = a.max(b);
    let norm = (2.0 * (2.0 * std::f64::consts::PI).sqrt() * SIGMA2.sqrt()).ln();
    norm - (m + ((a - m).exp() + (b - m).exp()).ln())
}

/// Lipschitz constant of `U_i` on the box w.r.t. the Euclidean norm.
pub fn tgm_bound(x: f64) -> f64 {
    let ax = x.abs();
    (((2.0 * ax + 9.0) / SIGMA2).powi(2) + ((ax + 6.0) / SIGMA2).powi(2)).sqrt()
}

/// Entrywise Hessian bound on the box.
pub fn tgm_curvature(x: f64) -> f64 {
    let ax = x.abs();
    ((2.0 * ax + 9.0) / SIGMA2).powi(2) + ((ax + 3.0) / SIGMA2).powi(2) + ((ax + 6.0) / SIGMA2).powi(2) + 2.0 / SIGMA2
}

const BOX_RADIUS: f64 = BOX * std::f64::consts::SQRT_2;

impl TruncGaussMix {
    pub fn new(xs: Vec<f64>, beta: f64) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::Config("TGM needs data".into()));
        }
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(Error::Domain(format!("inverse temperature must be finite and ≥ 0, got {beta}")));
        }
        let raw: Vec<f64> = xs.iter().map(|&x| tgm_bound(x)).collect();
        let bounds = BoundConsts::new(raw.iter().map(|c| beta * c).collect())?;
        let curvature = xs.iter().map(|&x| beta * tgm_curvature(x)).collect();
        let factor_shift = xs.iter().zip(&raw).map(|(&x, c)| beta * tgm_energy(x, 0.0, 0.0) + beta * c * BOX_RADIUS).collect();
        let factor_bounds = BoundConsts::new(raw.iter().map(|c| 2.0 * beta * c * BOX_RADIUS).collect())?;
        Ok(Self { xs, beta, bounds, curvature, factor_shift, factor_bounds })
    }

    pub fn data(&self) -> &[f64] {
        &self.xs
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn modes() -> [[f64; 2]; 2] {
        [[0.0, 1.0], [1.0, -1.0]]
    }

    /// Normalised `exp(-β Σ U_i)` at the midpoints of a `g × g` grid over the
    /// box. Data are compressed into `bins` equal-width bins represented by
    /// their mean; the error is second order in the bin width.
    pub fn truth_grid(&self, g: usize, bins: usize, floor: f64) -> Result<GridDensity> {
        let (lo, hi) = self.xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        let bins = bins.max(1);
        let width = ((hi - lo) / bins as f64).max(f64::MIN_POSITIVE);
        let mut sum = vec![0.0; bins];
        let mut count = vec![0u64; bins];
        for &x in &self.xs {
            let b = (((x - lo) / width) as usize).min(bins - 1);
            sum[b] += x;
            count[b] += 1;
        }
        let reps: Vec<(f64, f64)> =
            sum.iter().zip(&count).filter(|(_, &c)| c > 0).map(|(s, &c)| (s / c as f64, c as f64)).collect();
        let cell = 2.0 * BOX / g as f64;
        let mut logp = Vec::with_capacity(g * g);
        for r in 0..g {
            let t1 = -BOX + (r as f64 + 0.5) * cell;
            for c in 0..g {
                let t2 = -BOX + (c as f64 + 0.5) * cell;
                let e: f64 = reps.iter().map(|&(x, w)| w * tgm_energy(x, t1, t2)).sum();
                logp.push(-self.beta * e);
            }
        }
        let probs = crate::models::discrete::normalise_log_weights(logp);
        GridDensity::from_probs([-BOX, BOX], [-BOX, BOX], g, probs, floor)
    }
}

impl EnergyModel for TruncGaussMix {
    type State = Vec<f64>;

    fn id(&self) -> String {
        format!("tgm-n{}-beta{}", self.xs.len(), self.beta)
    }

    fn len(&self) -> usize {
        self.xs.len()
    }

    fn dim(&self) -> Dimension {
        Dimension::Continuous(2)
    }

    fn energy_term(&self, i: usize, s: &Vec<f64>) -> f64 {
        self.beta * tgm_energy(self.xs[i], s[0], s[1])
    }

    fn energy_diff(&self, i: usize, from: &Vec<f64>, to: &Vec<f64>) -> f64 {
        let x = self.xs[i];
        self.beta * (tgm_energy(x, from[0], from[1]) - tgm_energy(x, to[0], to[1]))
    }

    fn bounds(&self) -> &BoundConsts {
        &self.bounds
    }

    fn metric(&self, a: &Vec<f64>, b: &Vec<f64>) -> f64 {
        euclidean(a, b)
    }

    fn in_support(&self, s: &Vec<f64>) -> bool {
        s.len() == 2 && s.iter().all(|v| (-BOX..=BOX).contains(v))
    }

    fn temper(&self) -> f64 {
        self.beta
    }
}

impl Differentiable for TruncGaussMix {
    fn grad_term(&self, i: usize, t: &[f64], out: &mut [f64]) {
        let x = self.xs[i];
        let r1 = (x - t[0]) / SIGMA2;
        let r2 = (x - t[0] - t[1]) / SIGMA2;
        let a = -(x - t[0]).powi(2) / (2.0 * SIGMA2);
        let b = -(x - t[0] - t[1]).powi(2) / (2.0 * SIGMA2);
        let m = a.max(b);
        let (e1, e2) = ((a - m).exp(), (b - m).exp());
        let z = e1 + e2;
        out[0] = -self.beta * (e1 * r1 + e2 * r2) / z;
        out[1] = -self.beta * (e2 * r2) / z;
    }
}

impl CurvatureBounded for TruncGaussMix {
    fn curvature_bound(&self, i: usize) -> f64 {
        self.curvature[i]
    }
}

impl GlobalFactors<Vec<f64>> for TruncGaussMix {
    fn num_factors(&self) -> usize {
        self.xs.len()
    }

    fn factor(&self, i: usize, s: &Vec<f64>) -> f64 {
        self.factor_shift[i] - self.energy_term(i, s)
    }

    fn factor_bounds(&self) -> &BoundConsts {
        &self.factor_bounds
    }
}

impl Probe for TruncGaussMix {
    fn probe_state<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        vec![rng.random_range(-BOX..=BOX), rng.random_range(-BOX..=BOX)]
    }

    fn probe_neighbor<R: Rng + ?Sized>(&self, state: &Vec<f64>, radius: f64, rng: &mut R) -> Vec<f64> {
        let p = crate::energy::ball_neighbor(state, radius, rng);
        // Clamping only moves the point closer.
        p.into_iter().map(|v| v.clamp(-BOX, BOX)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::check_local_bounds;
    use crate::rng::RngStream;

    fn model(beta: f64) -> TruncGaussMix {
        let mut rng = RngStream::from_seed(1);
        TruncGaussMix::new(generate_tgm_data(500, &mut rng).unwrap(), beta).unwrap()
    }

    #[test]
    fn tempering_scales_exactly() {
        let a = model(1.0);
        let b = model(1e-4);
        let s = vec![0.3, -1.2];
        for i in 0..a.len() {
            assert_eq!(b.energy_term(i, &s), 1e-4 * a.energy_term(i, &s));
            assert_eq!(b.bounds().get(i), 1e-4 * a.bounds().get(i));
        }
    }

    #[test]
    fn local_and_factor_bounds_hold() {
        let m = model(1.0);
        let mut rng = RngStream::from_seed(2);
        check_local_bounds(&m, 20_000, 1.0, &mut rng).unwrap();
        for _ in 0..2000 {
            let s = m.probe_state(&mut rng);
            let i = rng.random_range(0..m.len());
            let phi = m.factor(i, &s);
            assert!(phi >= -1e-12 && phi <= m.factor_bounds().get(i) + 1e-12);
        }
    }

    #[test]
    fn gradient_and_curvature() {
        let m = model(1.0);
        let mut rng = RngStream::from_seed(3);
        let mut g = vec![0.0; 2];
        for _ in 0..200 {
            let s = m.probe_state(&mut rng);
            let i = rng.random_range(0..m.len());
            m.grad_term(i, &s, &mut g);
            let h = 1e-5;
            for j in 0..2 {
                let mut a = s.clone();
                let mut b = s.clone();
                a[j] += h;
                b[j] -= h;
                let fd = (m.energy_term(i, &a) - m.energy_term(i, &b)) / (2.0 * h);
                assert!((fd - g[j]).abs() < 1e-6);
                // second derivative along j
                let second = (m.energy_term(i, &a) - 2.0 * m.energy_term(i, &s) + m.energy_term(i, &b)) / (h * h);
                assert!(second.abs() <= m.curvature_bound(i) + 1e-3);
            }
        }
    }

    #[test]
    fn data_mean() {
        let mut rng = RngStream::from_seed(9);
        let n = 200_000;
        let xs = generate_tgm_data(n, &mut rng).unwrap();
        let mean = xs.iter().sum::<f64>() / n as f64;
        // Var = σ² + ¼
        let sd = (SIGMA2 + 0.25f64).sqrt();
        assert!((mean - 0.5).abs() < 5.0 * sd / (n as f64).sqrt());
    }
}

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::energy::{ball_neighbor, dot, euclidean, BoundConsts, Differentiable, Dimension, EnergyModel, Probe};
use crate::error::{Error, Result};
use crate::models::Dataset;
use crate::sampling::compensated_sum;

pub const DEFAULT_DOF: f64 = 4.0;

/// Robust linear regression with Student-t residuals and a flat prior:
/// `U_i(θ) = ((v+1)/2) log(1 + (y_i - θᵀx_i)² / v)`.
#[derive(Clone, Debug)]
pub struct RobustLinReg {
    data: Dataset,
    dof: f64,
    bounds: BoundConsts,
}

impl RobustLinReg {
    pub fn new(data: Dataset, dof: f64) -> Result<Self> {
        if !(dof > 0.0) {
            return Err(Error::Config(format!("degrees of freedom must be positive, got {dof}")));
        }
        // sup_θ ‖∇U_i‖ = ((v+1) / (2√v)) ‖x_i‖, attained at |r| = √v.
        let k = (dof + 1.0) / (2.0 * dof.sqrt());
        let bounds = BoundConsts::new((0..data.len()).map(|i| k * dot(data.row(i), data.row(i)).sqrt()).collect())?;
        Ok(Self { data, dof, bounds })
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn dof(&self) -> f64 {
        self.dof
    }

    #[inline]
    fn loss(&self, r: f64) -> f64 {
        0.5 * (self.dof + 1.0) * (r * r / self.dof).ln_1p()
    }
}

/// `x_ij ~ N(0, 1)`, `y_i = Σ_j x_ij + ε_i`, `ε_i ~ N(0, 1)`. The true
/// parameter is the all-ones vector.
pub fn generate_rlr_data<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Result<Dataset> {
    if n == 0 || d == 0 {
        return Err(Error::Config("RLR data needs n ≥ 1 and d ≥ 1".into()));
    }
    let mut x = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let mut s = 0.0;
        for _ in 0..d {
            let v: f64 = StandardNormal.sample(rng);
            s += v;
            x.push(v);
        }
        let eps: f64 = StandardNormal.sample(rng);
        y.push(s + eps);
    }
    Dataset::new(x, y, d)
}

impl EnergyModel for RobustLinReg {
    type State = Vec<f64>;

    fn id(&self) -> String {
        format!("rlr-n{}-d{}", self.data.len(), self.data.dim())
    }

    fn len(&self) -> usize {
        self.data.len()
    }

    fn dim(&self) -> Dimension {
        Dimension::Continuous(self.data.dim())
    }

    fn energy_term(&self, i: usize, theta: &Vec<f64>) -> f64 {
        self.loss(self.data.target(i) - dot(self.data.row(i), theta))
    }

    fn energy_diff(&self, i: usize, from: &Vec<f64>, to: &Vec<f64>) -> f64 {
        let row = self.data.row(i);
        let y = self.data.target(i);
        self.loss(y - dot(row, from)) - self.loss(y - dot(row, to))
    }

    fn total_energy_diff(&self, from: &Vec<f64>, to: &Vec<f64>) -> f64 {
        compensated_sum((0..self.len()).map(|i| self.energy_diff(i, from, to)))
    }

    fn bounds(&self) -> &BoundConsts {
        &self.bounds
    }

    fn metric(&self, a: &Vec<f64>, b: &Vec<f64>) -> f64 {
        euclidean(a, b)
    }
}

impl Differentiable for RobustLinReg {
    fn grad_term(&self, i: usize, theta: &[f64], out: &mut [f64]) {
        let row = self.data.row(i);
        let r = self.data.target(i) - dot(row, theta);
        let s = -(self.dof + 1.0) * r / (self.dof + r * r);
        for (o, x) in out.iter_mut().zip(row) {
            *o = s * x;
        }
    }
}

impl Probe for RobustLinReg {
    fn probe_state<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.data.dim()).map(|_| 1.0 + 0.5 * Distribution::<f64>::sample(&StandardNormal, rng)).collect()
    }

    fn probe_neighbor<R: Rng + ?Sized>(&self, state: &Vec<f64>, radius: f64, rng: &mut R) -> Vec<f64> {
        ball_neighbor(state, radius, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{check_local_bounds, total_energy};
    use crate::rng::RngStream;

    fn small() -> RobustLinReg {
        let x = vec![1.0, 2.0, -0.5, 0.0, 3.0, 1.5];
        let y = vec![0.3, -1.0, 2.0];
        RobustLinReg::new(Dataset::new(x, y, 2).unwrap(), 4.0).unwrap()
    }

    #[test]
    fn total_energy_matches_naive_sum() {
        let m = small();
        let theta = vec![0.4, -0.2];
        let mut naive = 0.0;
        for (i, row) in [[1.0, 2.0], [-0.5, 0.0], [3.0, 1.5]].iter().enumerate() {
            let r: f64 = m.data().target(i) - (row[0] * theta[0] + row[1] * theta[1]);
            naive += 2.5 * (1.0 + r * r / 4.0).ln();
        }
        let got = total_energy(&m, &theta).unwrap();
        assert!((got - naive).abs() <= 1e-10 * naive.abs());
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let m = small();
        let theta = vec![0.7, -1.1];
        let mut g = vec![0.0; 2];
        for i in 0..3 {
            m.grad_term(i, &theta, &mut g);
            for j in 0..2 {
                let mut a = theta.clone();
                let mut b = theta.clone();
                a[j] += 1e-6;
                b[j] -= 1e-6;
                let fd = (m.energy_term(i, &a) - m.energy_term(i, &b)) / 2e-6;
                assert!((fd - g[j]).abs() < 1e-6, "{fd} vs {}", g[j]);
            }
        }
    }

    #[test]
    fn bound_holds_on_generated_data() {
        let mut rng = RngStream::from_seed(3);
        let m = RobustLinReg::new(generate_rlr_data(200, 5, &mut rng).unwrap(), DEFAULT_DOF).unwrap();
        let rep = check_local_bounds(&m, 5000, 2.0, &mut rng).unwrap();
        assert!(rep.max_ratio <= 1.0);
    }

    #[test]
    fn halved_bounds_are_caught() {
        let mut rng = RngStream::from_seed(4);
        let data = generate_rlr_data(50, 3, &mut rng).unwrap();
        let m = RobustLinReg::new(data, DEFAULT_DOF).unwrap();
        let halved = crate::models::Rebound::new(m, 0.5).unwrap();
        let err = check_local_bounds(&halved, 20_000, 5.0, &mut rng).unwrap_err();
        match err {
            Error::BoundViolation { ratio, .. } => assert!(ratio > 1.0 && ratio <= 2.0 + 1e-9),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn zero_feature_row_gives_noise_target() {
        let mut rng = RngStream::from_seed(5);
        let d = generate_rlr_data(1, 1, &mut rng).unwrap();
        assert_eq!(d.len(), 1);
        assert!(d.target(0).is_finite());
    }
}

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::energy::{ball_neighbor, dot, euclidean, BoundConsts, Differentiable, Dimension, EnergyModel, Probe};
use crate::error::{Error, Result};
use crate::models::Dataset;

/// Logistic regression with labels in `{0, 1}` and a flat prior:
/// `U_i(θ) = -y_i log h(θᵀx_i) - (1 - y_i) log h(-θᵀx_i)`, `c_i = ‖x_i‖₂`.
#[derive(Clone, Debug)]
pub struct LogisticReg {
    data: Dataset,
    bounds: BoundConsts,
}

/// `log(1 + e^t)` without overflow.
#[inline]
pub fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl LogisticReg {
    pub fn new(data: Dataset) -> Result<Self> {
        if let Some(bad) = data.targets().iter().find(|&&y| y != 0.0 && y != 1.0) {
            return Err(Error::Domain(format!("logistic labels must be 0 or 1, got {bad}")));
        }
        let bounds = BoundConsts::new((0..data.len()).map(|i| dot(data.row(i), data.row(i)).sqrt()).collect())?;
        Ok(Self { data, bounds })
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    #[inline]
    fn loss(y: f64, z: f64) -> f64 {
        if y == 1.0 {
            softplus(-z)
        } else {
            softplus(z)
        }
    }
}

impl EnergyModel for LogisticReg {
    type State = Vec<f64>;

    fn id(&self) -> String {
        format!("logreg-n{}-d{}", self.data.len(), self.data.dim())
    }

    fn len(&self) -> usize {
        self.data.len()
    }

    fn dim(&self) -> Dimension {
        Dimension::Continuous(self.data.dim())
    }

    fn energy_term(&self, i: usize, theta: &Vec<f64>) -> f64 {
        Self::loss(self.data.target(i), dot(self.data.row(i), theta))
    }

    fn energy_diff(&self, i: usize, from: &Vec<f64>, to: &Vec<f64>) -> f64 {
        let row = self.data.row(i);
        let y = self.data.target(i);
        Self::loss(y, dot(row, from)) - Self::loss(y, dot(row, to))
    }

    fn bounds(&self) -> &BoundConsts {
        &self.bounds
    }

    fn metric(&self, a: &Vec<f64>, b: &Vec<f64>) -> f64 {
        euclidean(a, b)
    }
}

impl Differentiable for LogisticReg {
    fn grad_term(&self, i: usize, theta: &[f64], out: &mut [f64]) {
        let row = self.data.row(i);
        let s = sigmoid(dot(row, theta)) - self.data.target(i);
        for (o, x) in out.iter_mut().zip(row) {
            *o = s * x;
        }
    }
}

impl Probe for LogisticReg {
    fn probe_state<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.data.dim()).map(|_| StandardNormal.sample(rng)).collect()
    }

    fn probe_neighbor<R: Rng + ?Sized>(&self, state: &Vec<f64>, radius: f64, rng: &mut R) -> Vec<f64> {
        ball_neighbor(state, radius, rng)
    }
}

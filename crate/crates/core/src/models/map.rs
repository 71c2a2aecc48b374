use serde::{Deserialize, Serialize};

use crate::energy::{total_energy, Differentiable};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapOptions {
    pub max_iters: usize,
    /// Stop once the gradient norm drops below this.
    pub tol: f64,
    /// Keep iterates inside `‖θ‖₂ ≤ cap`.
    pub norm_cap: Option<f64>,
}

impl Default for MapOptions {
    fn default() -> Self {
        Self { max_iters: 2000, tol: 1e-6, norm_cap: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapResult {
    pub theta: Vec<f64>,
    pub energy: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn project(theta: &mut [f64], cap: Option<f64>) {
    if let Some(cap) = cap {
        let n = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > cap {
            theta.iter_mut().for_each(|v| *v *= cap / n);
        }
    }
}

/// Projected gradient descent on the total energy with Armijo backtracking.
/// Returns the best iterate seen.
pub fn map_estimate<M: Differentiable>(model: &M, init: Vec<f64>, opts: MapOptions) -> Result<MapResult> {
    let mut theta = init;
    project(&mut theta, opts.norm_cap);
    let mut energy = total_energy(model, &theta)?;
    let mut step = 1.0;
    let mut iterations = 0;
    let mut grad_norm = f64::INFINITY;
    while iterations < opts.max_iters {
        let g = model.grad_total(&theta);
        grad_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !energy.is_finite() || !grad_norm.is_finite() {
            return Err(Error::NonFinite(format!("energy or gradient at iteration {iterations}")));
        }
        if grad_norm < opts.tol {
            return Ok(MapResult { theta, energy, grad_norm, iterations, converged: true });
        }
        iterations += 1;
        let mut moved = false;
        for _ in 0..60 {
            let mut cand: Vec<f64> = theta.iter().zip(&g).map(|(t, gi)| t - step * gi).collect();
            project(&mut cand, opts.norm_cap);
            let decrease: f64 = theta.iter().zip(&cand).zip(&g).map(|((t, c), gi)| gi * (t - c)).sum();
            let e = total_energy(model, &cand)?;
            if e.is_finite() && e <= energy - 1e-4 * decrease {
                moved = e < energy;
                theta = cand;
                energy = e;
                step *= 2.0;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            // No further descent: at the cap boundary or at numerical precision.
            break;
        }
    }
    Ok(MapResult { theta, energy, grad_norm, iterations, converged: grad_norm < opts.tol })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{BoundConsts, Dimension, EnergyModel};
    use crate::models::{Dataset, LogisticReg};

    /// `½‖θ - a‖²` split into one term per coordinate.
    struct Quadratic {
        a: Vec<f64>,
        bounds: BoundConsts,
    }

    impl EnergyModel for Quadratic {
        type State = Vec<f64>;
        fn id(&self) -> String {
            "quadratic".into()
        }
        fn len(&self) -> usize {
            self.a.len()
        }
        fn dim(&self) -> Dimension {
            Dimension::Continuous(self.a.len())
        }
        fn energy_term(&self, i: usize, t: &Vec<f64>) -> f64 {
            0.5 * (t[i] - self.a[i]).powi(2)
        }
        fn bounds(&self) -> &BoundConsts {
            &self.bounds
        }
        fn metric(&self, x: &Vec<f64>, y: &Vec<f64>) -> f64 {
            crate::energy::euclidean(x, y)
        }
    }

    impl Differentiable for Quadratic {
        fn grad_term(&self, i: usize, t: &[f64], out: &mut [f64]) {
            out.iter_mut().for_each(|o| *o = 0.0);
            out[i] = t[i] - self.a[i];
        }
    }

    #[test]
    fn quadratic_optimum() {
        let m = Quadratic { a: vec![1.5, -2.0, 0.25], bounds: BoundConsts::new(vec![1.0; 3]).unwrap() };
        let r = map_estimate(&m, vec![0.0; 3], MapOptions { tol: 1e-9, ..Default::default() }).unwrap();
        assert!(r.converged);
        for (t, a) in r.theta.iter().zip(&m.a) {
            assert!((t - a).abs() < 1e-9);
        }
    }

    #[test]
    fn separable_logistic_hits_cap() {
        let x = vec![1.0, 2.0, -1.0, -3.0];
        let y = vec![1.0, 1.0, 0.0, 0.0];
        let m = LogisticReg::new(Dataset::new(x, y, 1).unwrap()).unwrap();
        let r = map_estimate(&m, vec![0.0], MapOptions { max_iters: 500, tol: 1e-12, norm_cap: Some(5.0) }).unwrap();
        assert!((r.theta[0] - 5.0).abs() < 1e-9);
    }
}

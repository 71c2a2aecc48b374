//! Benchmark targets and fixtures.

mod dataset;
pub mod discrete;
mod logreg;
mod map;
pub mod mnist;
mod pca;
mod rlr;
pub mod tgm;

pub use dataset::{load_dataset, save_dataset, sidecar_path, Dataset, DatasetMeta};
pub use discrete::{DiscreteLine, DiscreteLineSpec, TwoStateFixture, UniformLine};
pub use logreg::{sigmoid, softplus, LogisticReg};
pub use map::{map_estimate, MapOptions, MapResult};
pub use mnist::{load_mnist_79, MnistFiles, MnistTask};
pub use pca::Pca;
pub use rlr::{generate_rlr_data, RobustLinReg, DEFAULT_DOF};
pub use tgm::{generate_tgm_data, TruncGaussMix};

use rand::Rng;

use crate::energy::{BoundConsts, Dimension, EnergyModel, Probe};
use crate::error::Result;

/// Wraps a model with its bound constants multiplied by `factor` and nothing
/// else changed. With `factor < 1` it deliberately breaks the bound, which is
/// how the checkers are exercised.
#[derive(Clone, Debug)]
pub struct Rebound<M> {
    inner: M,
    bounds: BoundConsts,
}

impl<M: EnergyModel> Rebound<M> {
    pub fn new(inner: M, factor: f64) -> Result<Self> {
        let bounds = inner.bounds().scaled(factor)?;
        Ok(Self { inner, bounds })
    }
}

impl<M: EnergyModel> EnergyModel for Rebound<M> {
    type State = M::State;

    fn id(&self) -> String {
        format!("{}-rebound", self.inner.id())
    }

    fn len(&self) -> usize {
        self.inner.len()
    }

    fn dim(&self) -> Dimension {
        self.inner.dim()
    }

    fn energy_term(&self, i: usize, s: &Self::State) -> f64 {
        self.inner.energy_term(i, s)
    }

    fn energy_diff(&self, i: usize, a: &Self::State, b: &Self::State) -> f64 {
        self.inner.energy_diff(i, a, b)
    }

    fn total_energy_diff(&self, a: &Self::State, b: &Self::State) -> f64 {
        self.inner.total_energy_diff(a, b)
    }

    fn bounds(&self) -> &BoundConsts {
        &self.bounds
    }

    fn metric(&self, a: &Self::State, b: &Self::State) -> f64 {
        self.inner.metric(a, b)
    }

    fn in_support(&self, s: &Self::State) -> bool {
        self.inner.in_support(s)
    }
}

impl<M: Probe> Probe for Rebound<M> {
    fn probe_state<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::State {
        self.inner.probe_state(rng)
    }

    fn probe_neighbor<R: Rng + ?Sized>(&self, s: &Self::State, radius: f64, rng: &mut R) -> Self::State {
        self.inner.probe_neighbor(s, radius, rng)
    }
}

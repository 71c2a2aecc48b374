//! Per-step telemetry and chain drivers.

use serde::{Deserialize, Serialize};

use crate::energy::EnergyModel;
use crate::error::Result;
use crate::kernels::Kernel;
use crate::proposal::Proposal;
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub accepted: bool,
    /// Minibatch size `B` the kernel drew for this step (N for a full-batch step).
    pub batch_size: u64,
    /// Energy-difference oracle evaluations.
    pub oracle_calls: u64,
    /// `M(θ, θ')`.
    pub metric_value: f64,
    pub fell_back_to_full: bool,
    /// Mean of the batch-size distribution when the kernel draws one
    /// (`χC²M² + CM` for TunaMH), zero otherwise.
    pub expected_batch: f64,
}

impl StepRecord {
    pub fn rejected(metric_value: f64) -> Self {
        Self { metric_value, ..Self::default() }
    }
}

/// A recorded chain: `states.len() == records.len() + 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainTrace<S> {
    pub states: Vec<S>,
    pub records: Vec<StepRecord>,
    pub kernel_id: String,
    pub model_id: String,
    pub seed: u64,
    pub substream: u64,
}

impl<S> ChainTrace<S> {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().filter(|r| r.accepted).count() as f64 / self.records.len() as f64
    }
}

/// Runs `steps` transitions, handing each new state and its record to `visit`.
/// Returns the final state.
pub fn run_chain_with<M, P, K, F>(
    kernel: &K,
    model: &M,
    proposal: &P,
    init: M::State,
    steps: usize,
    rng: &mut RngStream,
    mut visit: F,
) -> Result<M::State>
where
    M: EnergyModel,
    P: Proposal<M::State>,
    K: Kernel<M>,
    F: FnMut(usize, &M::State, &StepRecord),
{
    let mut state = init;
    for t in 0..steps {
        let (next, rec) = kernel.step(model, proposal, &state, rng)?;
        state = next;
        visit(t, &state, &rec);
    }
    Ok(state)
}

/// Runs a chain and keeps every state and record.
pub fn run_chain<M, P, K>(
    kernel: &K,
    model: &M,
    proposal: &P,
    init: M::State,
    steps: usize,
    rng: &mut RngStream,
) -> Result<ChainTrace<M::State>>
where
    M: EnergyModel,
    P: Proposal<M::State>,
    K: Kernel<M>,
{
    let mut states = Vec::with_capacity(steps + 1);
    let mut records = Vec::with_capacity(steps);
    states.push(init.clone());
    run_chain_with(kernel, model, proposal, init, steps, rng, |_, s, r| {
        states.push(s.clone());
        records.push(*r);
    })?;
    Ok(ChainTrace {
        states,
        records,
        kernel_id: kernel.id().to_string(),
        model_id: model.id(),
        seed: rng.seed(),
        substream: rng.substream_id(),
    })
}

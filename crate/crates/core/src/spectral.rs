//! Transition matrices and spectral gaps on finite state spaces.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::kernels::{kappa_for_chi, FullMh, Kernel, TunaConfig, TunaMh};
use crate::models::discrete::normalise_log_weights;
use crate::proposal::FiniteProposal;
use crate::rng::RngStream;

pub const MIN_TRIALS: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcceptEstimate {
    pub p: f64,
    /// Binomial standard error `sqrt(p(1-p)/trials)`.
    pub se: f64,
    pub trials: usize,
}

/// Monte-Carlo acceptance probability of `kernel` for the fixed move
/// `from -> to`, marginalising over the kernel's internal randomness.
pub fn estimate_accept_prob<M, K>(
    kernel: &K,
    model: &M,
    from: &M::State,
    to: &M::State,
    log_q_ratio: f64,
    trials: usize,
    rng: &mut RngStream,
) -> Result<AcceptEstimate>
where
    M: EnergyModel,
    K: Kernel<M>,
{
    if trials < MIN_TRIALS {
        return Err(Error::Config(format!("need at least {MIN_TRIALS} trials, got {trials}")));
    }
    let mut hits = 0usize;
    for _ in 0..trials {
        hits += kernel.decide(model, from, to, log_q_ratio, rng)?.accepted as usize;
    }
    let p = hits as f64 / trials as f64;
    Ok(AcceptEstimate { p, se: (p * (1.0 - p) / trials as f64).sqrt(), trials })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairEstimate {
    pub from: usize,
    pub to: usize,
    pub proposal_prob: f64,
    pub accept: f64,
    pub accept_se: f64,
}

/// Row-stochastic `K × K` matrix with per-entry standard errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub k: usize,
    pub entries: Vec<f64>,
    pub se: Vec<f64>,
    pub pairs: Vec<PairEstimate>,
    /// Number of trials behind each estimated entry; 0 for analytic matrices.
    pub trials: usize,
}

impl TransitionMatrix {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.k + j]
    }

    #[inline]
    pub fn se_of(&self, i: usize, j: usize) -> f64 {
        self.se[i * self.k + j]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.entries.chunks_exact(self.k).map(|r| r.iter().sum()).collect()
    }

    fn assemble(k: usize, pairs: Vec<PairEstimate>, trials: usize) -> Result<Self> {
        let mut entries = vec![0.0; k * k];
        let mut se = vec![0.0; k * k];
        for p in &pairs {
            entries[p.from * k + p.to] = p.proposal_prob * p.accept;
            se[p.from * k + p.to] = p.proposal_prob * p.accept_se;
        }
        for i in 0..k {
            let off: f64 = (0..k).filter(|&j| j != i).map(|j| entries[i * k + j]).sum();
            let var: f64 = (0..k).filter(|&j| j != i).map(|j| se[i * k + j].powi(2)).sum();
            let diag = 1.0 - off;
            if diag < -3.0 * var.sqrt() - 1e-12 {
                return Err(Error::NegativeDiagonal { index: i, value: diag, se: var.sqrt() });
            }
            entries[i * k + i] = diag;
            se[i * k + i] = var.sqrt();
        }
        Ok(Self { k, entries, se, pairs, trials })
    }
}

/// Exact full-MH matrix from the closed-form acceptance probability.
pub fn mh_transition_matrix<M, P>(model: &M, proposal: &P) -> Result<TransitionMatrix>
where
    M: EnergyModel<State = usize>,
    P: FiniteProposal,
{
    let k = proposal.num_states();
    let mut pairs = Vec::new();
    for i in 0..k {
        for (j, q) in proposal.moves(i) {
            let a = if model.in_support(&j) { FullMh::accept_prob(model, &i, &j, proposal.log_ratio(&i, &j)) } else { 0.0 };
            pairs.push(PairEstimate { from: i, to: j, proposal_prob: q, accept: a, accept_se: 0.0 });
        }
    }
    TransitionMatrix::assemble(k, pairs, 0)
}

/// Estimated matrix for any kernel: `T(i, j) = q(j | i) · p̂(i → j)`. Each
/// pair draws from its own substream of `rng`.
pub fn build_transition_matrix<M, K, P>(
    kernel: &K,
    model: &M,
    proposal: &P,
    trials_per_pair: usize,
    rng: &RngStream,
) -> Result<TransitionMatrix>
where
    M: EnergyModel<State = usize>,
    K: Kernel<M>,
    P: FiniteProposal,
{
    let k = proposal.num_states();
    let mut pairs = Vec::new();
    let mut id = 0u64;
    for i in 0..k {
        for (j, q) in proposal.moves(i) {
            id += 1;
            let est = if model.in_support(&j) {
                let mut sub = rng.split(id);
                estimate_accept_prob(kernel, model, &i, &j, proposal.log_ratio(&i, &j), trials_per_pair, &mut sub)?
            } else {
                AcceptEstimate { p: 0.0, se: 0.0, trials: trials_per_pair }
            };
            pairs.push(PairEstimate { from: i, to: j, proposal_prob: q, accept: est.p, accept_se: est.se });
        }
    }
    TransitionMatrix::assemble(k, pairs, trials_per_pair)
}

/// Exact normalised `π` on `{0, .., K-1}`.
pub fn stationary_distribution<M: EnergyModel<State = usize>>(model: &M, k: usize) -> Vec<f64> {
    // log π_j - log π_0 = U(0) - U(j)
    normalise_log_weights((0..k).map(|j| model.total_energy_diff(&0, &j)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapEstimate {
    pub gap: f64,
    pub lambda2: f64,
    /// Delta-method standard error of the gap.
    pub se: f64,
    /// Largest detailed-balance residual in units of its combined SE.
    pub max_residual_z: f64,
}

/// `1 - λ₂` of `T`, computed on the symmetrised `D^{1/2} T D^{-1/2}`.
///
/// Fails with `NonReversible` if some `|π_i T_ij - π_j T_ji|` exceeds five
/// combined standard errors.
pub fn spectral_gap(t: &TransitionMatrix, pi: &[f64]) -> Result<GapEstimate> {
    let k = t.k;
    if pi.len() != k {
        return Err(Error::LengthMismatch { left: pi.len(), right: k });
    }
    let se_floor = if t.trials > 0 { 1.0 / t.trials as f64 } else { 0.0 };
    let mut max_z = 0.0f64;
    for i in 0..k {
        for j in (i + 1)..k {
            let r = (pi[i] * t.get(i, j) - pi[j] * t.get(j, i)).abs();
            let s = ((pi[i] * t.se_of(i, j).max(se_floor * (t.get(i, j) > 0.0) as u8 as f64)).powi(2)
                + (pi[j] * t.se_of(j, i).max(se_floor * (t.get(j, i) > 0.0) as u8 as f64)).powi(2))
            .sqrt();
            let limit = 5.0 * s + 1e-12;
            if r > limit {
                return Err(Error::NonReversible { from: i, to: j, residual: r, limit });
            }
            if s > 0.0 {
                max_z = max_z.max(r / s);
            }
        }
    }
    if k == 1 {
        return Ok(GapEstimate { gap: 1.0, lambda2: 0.0, se: 0.0, max_residual_z: 0.0 });
    }

    let sq: Vec<f64> = pi.iter().map(|p| p.sqrt()).collect();
    let s = DMatrix::from_fn(k, k, |i, j| 0.5 * (sq[i] * t.get(i, j) / sq[j] + sq[j] * t.get(j, i) / sq[i]));
    let eig = SymmetricEigen::new(s);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let l2 = eig.eigenvalues[order[1]];
    let v = eig.eigenvectors.column(order[1]);

    let mut var = 0.0;
    for i in 0..k {
        for j in 0..k {
            if i != j && t.se_of(i, j) > 0.0 {
                let d = v[i] * v[j] * sq[i] / sq[j] - v[i] * v[i];
                var += (d * t.se_of(i, j)).powi(2);
            }
        }
    }
    Ok(GapEstimate { gap: 1.0 - l2, lambda2: l2, se: var.sqrt(), max_residual_z: max_z })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapBoundReport {
    pub chi: f64,
    pub kappa: f64,
    pub gap_mh: f64,
    pub gap_tuna: f64,
    pub gap_tuna_se: f64,
    pub ratio: f64,
    pub ratio_se: f64,
    pub pass: bool,
    pub trials_per_pair: usize,
    pub tuna_pairs: Vec<PairEstimate>,
}

/// Checks `γ̄ ≥ κ(χ) γ` with `γ` from the exact MH matrix and `γ̄` from an
/// estimated TunaMH matrix, allowing three propagated standard errors.
pub fn verify_gap_bound<M, P>(
    model: &M,
    proposal: &P,
    chi: f64,
    trials_per_pair: usize,
    rng: &RngStream,
) -> Result<GapBoundReport>
where
    M: EnergyModel<State = usize>,
    P: FiniteProposal,
{
    let k = proposal.num_states();
    let pi = stationary_distribution(model, k);
    let kappa = kappa_for_chi(chi)?;
    let mh = spectral_gap(&mh_transition_matrix(model, proposal)?, &pi)?;
    let kernel = TunaMh::new(TunaConfig::new(chi)?)?;
    let tm = build_transition_matrix(&kernel, model, proposal, trials_per_pair, rng)?;
    let tuna = spectral_gap(&tm, &pi)?;
    let ratio = tuna.gap / mh.gap;
    Ok(GapBoundReport {
        chi,
        kappa,
        gap_mh: mh.gap,
        gap_tuna: tuna.gap,
        gap_tuna_se: tuna.se,
        ratio,
        ratio_se: tuna.se / mh.gap,
        pass: tuna.gap >= kappa * mh.gap - 3.0 * tuna.se,
        trials_per_pair,
        tuna_pairs: tm.pairs,
    })
}

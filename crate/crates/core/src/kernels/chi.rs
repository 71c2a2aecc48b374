use serde::{Deserialize, Serialize};

use super::{FullMh, Kernel};
use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::proposal::Proposal;
use crate::rng::RngStream;

/// Percentile of pilot `M` values that the heuristic χ keeps `χC²M² ≤ 1` for.
pub const HEURISTIC_PERCENTILE: f64 = 0.9;

/// `χ = 4 / ((1 - κ) ln(1/κ))`: the χ whose average batch size targets a
/// spectral-gap ratio of `κ`.
pub fn chi_for_kappa(kappa: f64) -> Result<f64> {
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::Domain(format!("kappa must lie in (0, 1), got {kappa}")));
    }
    Ok(4.0 / ((1.0 - kappa) * (-kappa.ln())))
}

/// Guaranteed spectral-gap ratio `exp(-1/χ - 2 sqrt(ln 2 / χ))`.
pub fn kappa_for_chi(chi: f64) -> Result<f64> {
    if !(chi > 0.0) {
        return Err(Error::Domain(format!("chi must be positive, got {chi}")));
    }
    if chi.is_infinite() {
        return Ok(1.0);
    }
    Ok((-1.0 / chi - 2.0 * (std::f64::consts::LN_2 / chi).sqrt()).exp())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSuggestion {
    /// Solves `χC²m² = 1` at the 90th percentile `m` of pilot distances.
    pub chi_heuristic: f64,
    /// `1 / sqrt(C · mean M)`.
    pub chi_theoretical: f64,
    pub total_bound: f64,
    pub mean_metric: f64,
    pub percentile_metric: f64,
    pub pilot_acceptance: f64,
    pub pilot_steps: usize,
}

impl ChiSuggestion {
    pub fn from_metrics(total_bound: f64, metrics: &[f64], pilot_acceptance: f64) -> Result<Self> {
        if metrics.is_empty() {
            return Err(Error::DegeneratePilot);
        }
        let mut sorted = metrics.to_vec();
        sorted.sort_by(f64::total_cmp);
        // nearest-rank percentile
        let rank = ((HEURISTIC_PERCENTILE * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
        let p = sorted[rank - 1];
        let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
        if !(p > 0.0 && mean > 0.0 && total_bound > 0.0) {
            return Err(Error::DegeneratePilot);
        }
        Ok(Self {
            chi_heuristic: 1.0 / (total_bound * p).powi(2),
            chi_theoretical: 1.0 / (total_bound * mean).sqrt(),
            total_bound,
            mean_metric: mean,
            percentile_metric: p,
            pilot_acceptance,
            pilot_steps: metrics.len(),
        })
    }
}

/// Runs a full-MH pilot from `init` and derives both χ suggestions from the
/// distances of all proposed moves.
pub fn suggest_chi<M, P>(
    model: &M,
    proposal: &P,
    init: M::State,
    pilot_steps: usize,
    rng: &mut RngStream,
) -> Result<ChiSuggestion>
where
    M: EnergyModel,
    P: Proposal<M::State>,
{
    if pilot_steps < 100 {
        return Err(Error::Config(format!("pilot needs at least 100 steps, got {pilot_steps}")));
    }
    let mut metrics = Vec::with_capacity(pilot_steps);
    let mut accepted = 0usize;
    let mut state = init;
    for _ in 0..pilot_steps {
        let (next, rec) = FullMh.step(model, proposal, &state, rng)?;
        metrics.push(rec.metric_value);
        accepted += rec.accepted as usize;
        state = next;
    }
    if accepted == 0 {
        return Err(Error::DegeneratePilot);
    }
    ChiSuggestion::from_metrics(model.bounds().total(), &metrics, accepted as f64 / pilot_steps as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn chi_kappa_values() {
        assert_relative_eq!(chi_for_kappa(0.5).unwrap(), 4.0 / (0.5 * 2f64.ln()), max_relative = 1e-14);
        assert!(chi_for_kappa(0.0).is_err());
        assert!(chi_for_kappa(1.0).is_err());
        assert!(kappa_for_chi(0.0).is_err());
        assert_eq!(kappa_for_chi(f64::INFINITY).unwrap(), 1.0);
    }

    #[test]
    fn constant_pilot() {
        let s = ChiSuggestion::from_metrics(100.0, &[0.01; 200], 0.5).unwrap();
        assert_relative_eq!(s.chi_heuristic, 1.0, max_relative = 1e-12);
        assert_relative_eq!(s.chi_theoretical, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn percentile_is_nearest_rank() {
        let m: Vec<f64> = (1..=10).map(f64::from).collect();
        let s = ChiSuggestion::from_metrics(1.0, &m, 1.0).unwrap();
        assert_eq!(s.percentile_metric, 9.0);
    }
}

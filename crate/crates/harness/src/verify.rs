//! Gap-ratio verification on the finite fixtures.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tunamh::models::{DiscreteLine, DiscreteLineSpec, TwoStateFixture};
use tunamh::spectral::{verify_gap_bound, GapBoundReport};
use tunamh::RngStream;

use crate::error::{HarnessError, Result};

/// The 5-state line used for spectral checks: the standard 5:1 data split at
/// one tenth of the size, so estimating a matrix stays cheap.
pub fn small_line() -> DiscreteLineSpec {
    DiscreteLineSpec { states: 5, n_low: 500, low: -1.0, n_high: 100, high: 5.0 }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fixture {
    TwoState,
    DiscreteLine,
}

impl std::str::FromStr for Fixture {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "two-state" => Ok(Fixture::TwoState),
            "discrete-line" | "discrete-line-5" => Ok(Fixture::DiscreteLine),
            other => Err(format!("unknown fixture {other:?}; expected two-state or discrete-line")),
        }
    }
}

impl Fixture {
    pub fn id(self) -> &'static str {
        match self {
            Fixture::TwoState => "two-state",
            Fixture::DiscreteLine => "discrete-line-5",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub fixture: String,
    pub seed: u64,
    pub trials_per_pair: usize,
    pub reports: Vec<GapBoundReport>,
    pub all_pass: bool,
}

/// One χ per worker; each χ gets its own substream.
pub fn run_spectral(fixture: Fixture, chis: &[f64], trials: usize, seed: u64) -> Result<SpectralReport> {
    if chis.is_empty() {
        return Err(HarnessError::Usage("--chi needs at least one value".into()));
    }
    let base = RngStream::new(seed, 0);
    let reports: tunamh::Result<Vec<GapBoundReport>> = chis
        .par_iter()
        .enumerate()
        .map(|(i, &chi)| {
            let rng = base.split(i as u64 + 1);
            match fixture {
                Fixture::TwoState => {
                    let m = TwoStateFixture::standard();
                    verify_gap_bound(&m, &m.proposal(), chi, trials, &rng)
                }
                Fixture::DiscreteLine => {
                    let m = DiscreteLine::from_spec(small_line())?;
                    verify_gap_bound(&m, &m.proposal(), chi, trials, &rng)
                }
            }
        })
        .collect();
    let reports = reports?;
    let all_pass = reports.iter().all(|r| r.pass);
    Ok(SpectralReport { fixture: fixture.id().into(), seed, trials_per_pair: trials, reports, all_pass })
}

/// Per-pair acceptance estimates, one row per `(χ, from, to)`.
pub fn write_pairs(path: &Path, report: &SpectralReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["chi", "from", "to", "proposal_prob", "accept", "accept_se"])?;
    for r in &report.reports {
        for p in &r.tuna_pairs {
            w.write_record([
                r.chi.to_string(),
                p.from.to_string(),
                p.to.to_string(),
                p.proposal_prob.to_string(),
                p.accept.to_string(),
                p.accept_se.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}

//! Proposal distributions `q(θ' | θ)`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub trait Proposal<S>: Send + Sync {
    fn propose<R: Rng + ?Sized>(&self, from: &S, rng: &mut R) -> S;

    /// `log(q(from | to) / q(to | from))`, the factor entering the MH ratio.
    fn log_ratio(&self, from: &S, to: &S) -> f64;
}

/// Isotropic Gaussian random walk `θ' = θ + step · z`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianRandomWalk {
    pub step: f64,
}

impl GaussianRandomWalk {
    pub fn new(step: f64) -> Self {
        Self { step }
    }
}

impl Proposal<Vec<f64>> for GaussianRandomWalk {
    fn propose<R: Rng + ?Sized>(&self, from: &Vec<f64>, rng: &mut R) -> Vec<f64> {
        from.iter()
            .map(|x| {
                let z: f64 = StandardNormal.sample(rng);
                x + self.step * z
            })
            .collect()
    }

    fn log_ratio(&self, _from: &Vec<f64>, _to: &Vec<f64>) -> f64 {
        0.0
    }
}

/// A proposal over `{0, .., K-1}` with an explicit transition table.
pub trait FiniteProposal: Proposal<usize> {
    fn num_states(&self) -> usize;

    fn prob(&self, from: usize, to: usize) -> f64;

    /// States reachable from `from` with their probabilities, excluding `from`.
    fn moves(&self, from: usize) -> Vec<(usize, f64)>;
}

/// Lazy nearest-neighbour walk on a line: stay with probability ½, step left or
/// right with ¼ each; the end states step inward with probability ½.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LineProposal {
    states: usize,
}

impl LineProposal {
    pub fn new(states: usize) -> Result<Self> {
        if states < 2 {
            return Err(Error::Domain(format!("line proposal needs at least 2 states, got {states}")));
        }
        Ok(Self { states })
    }
}

impl Proposal<usize> for LineProposal {
    fn propose<R: Rng + ?Sized>(&self, &from: &usize, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let last = self.states - 1;
        if u < 0.5 {
            from
        } else if from == 0 {
            1
        } else if from == last {
            last - 1
        } else if u < 0.75 {
            from - 1
        } else {
            from + 1
        }
    }

    fn log_ratio(&self, &from: &usize, &to: &usize) -> f64 {
        if from == to {
            return 0.0;
        }
        (self.prob(to, from) / self.prob(from, to)).ln()
    }
}

impl FiniteProposal for LineProposal {
    fn num_states(&self) -> usize {
        self.states
    }

    fn prob(&self, from: usize, to: usize) -> f64 {
        let last = self.states - 1;
        if from == to {
            0.5
        } else if from.abs_diff(to) != 1 {
            0.0
        } else if from == 0 || from == last {
            0.5
        } else {
            0.25
        }
    }

    fn moves(&self, from: usize) -> Vec<(usize, f64)> {
        let mut out = Vec::with_capacity(2);
        if from > 0 {
            out.push((from - 1, self.prob(from, from - 1)));
        }
        if from + 1 < self.states {
            out.push((from + 1, self.prob(from, from + 1)));
        }
        out
    }
}

/// Dense row-stochastic proposal table, for small toy chains.
#[derive(Clone, Debug, PartialEq)]
pub struct TabulatedProposal {
    rows: Vec<Vec<f64>>,
}

impl TabulatedProposal {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = rows.len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::LengthMismatch { left: k, right: row.len() });
            }
            if row.iter().any(|p| !(*p >= 0.0)) {
                return Err(Error::Domain(format!("row {i} has a negative entry")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::Domain(format!("row {i} sums to {s}")));
            }
        }
        Ok(Self { rows })
    }

    /// Two states: stay with probability ½, switch with probability ½.
    pub fn flip() -> Self {
        Self { rows: vec![vec![0.5, 0.5], vec![0.5, 0.5]] }
    }
}

impl Proposal<usize> for TabulatedProposal {
    fn propose<R: Rng + ?Sized>(&self, &from: &usize, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let row = &self.rows[from];
        for (j, p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return j;
            }
        }
        // rounding left a sliver at the top of the row
        row.iter().rposition(|p| *p > 0.0).unwrap_or(from)
    }

    fn log_ratio(&self, &from: &usize, &to: &usize) -> f64 {
        if from == to {
            return 0.0;
        }
        (self.rows[to][from] / self.rows[from][to]).ln()
    }
}

impl FiniteProposal for TabulatedProposal {
    fn num_states(&self) -> usize {
        self.rows.len()
    }

    fn prob(&self, from: usize, to: usize) -> f64 {
        self.rows[from][to]
    }

    fn moves(&self, from: usize) -> Vec<(usize, f64)> {
        self.rows[from].iter().enumerate().filter(|&(j, p)| j != from && *p > 0.0).map(|(j, p)| (j, *p)).collect()
    }
}

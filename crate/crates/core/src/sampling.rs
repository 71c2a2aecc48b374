//! Random variate helpers shared by the kernels.

use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};

/// Means below this use sequential inversion; larger means go through
/// `rand_distr`'s rejection sampler.
const INVERSION_LIMIT: f64 = 10.0;

/// Draw from Poisson(`mean`). A mean of zero (or a negative mean within
/// rounding) returns 0.
pub fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if !(mean > 0.0) {
        return 0;
    }
    if mean < INVERSION_LIMIT {
        let u: f64 = rng.random();
        let mut p = (-mean).exp();
        let mut cdf = p;
        let mut k = 0u64;
        while u > cdf {
            k += 1;
            p *= mean / k as f64;
            cdf += p;
            // cdf stalls below 1 only through rounding in the far tail
            if p < f64::EPSILON * cdf && k as f64 > mean {
                break;
            }
        }
        k
    } else {
        let dist = Poisson::new(mean).expect("finite positive Poisson mean");
        dist.sample(rng) as u64
    }
}

/// Constant-time sampler for `P(i) = w_i / Σ w` backed by an alias table.
#[derive(Clone, Debug)]
pub struct IndexSampler {
    table: Option<WeightedAliasIndex<f64>>,
    len: usize,
}

impl IndexSampler {
    /// Builds the table. All-zero weights give a sampler that must never be
    /// drawn from (callers only draw when the total weight is positive).
    pub fn new(weights: &[f64]) -> Result<Self> {
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::Domain(format!("weight {i} = {w} is not a finite nonnegative number")));
        }
        let total: f64 = weights.iter().sum();
        let table = if total > 0.0 {
            Some(WeightedAliasIndex::new(weights.to_vec()).map_err(|e| Error::Domain(format!("alias table: {e}")))?)
        } else {
            None
        };
        Ok(Self { table, len: weights.len() })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// # Panics
    /// If every weight is zero.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.table.as_ref().expect("sampling from an all-zero weight table").sample(rng)
    }
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Principal components of an `n × p` row-major matrix.
#[derive(Clone, Debug)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// `p × k`, columns are unit eigenvectors in descending eigenvalue order.
    pub components: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
}

impl Pca {
    /// Fits on `rows` (row-major, `p` columns), keeping `k` components.
    ///
    /// Each component's largest-magnitude coordinate is made positive.
    pub fn fit(rows: &[f64], p: usize, k: usize) -> Result<Self> {
        if p == 0 || !rows.len().is_multiple_of(p) {
            return Err(Error::LengthMismatch { left: rows.len(), right: p });
        }
        let n = rows.len() / p;
        if k == 0 || k > n.min(p) {
            return Err(Error::RankDeficiency { wanted: k, found: n.min(p) });
        }
        let mut mean = vec![0.0; p];
        for r in rows.chunks_exact(p) {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let centred = DMatrix::from_fn(n, p, |i, j| rows[i * p + j] - mean[j]);
        let cov = (centred.transpose() * &centred) / (n.saturating_sub(1).max(1) as f64);
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

        let top = eig.eigenvalues[order[0]].max(0.0);
        let positive = order.iter().filter(|&&j| eig.eigenvalues[j] > 1e-12 * top.max(f64::MIN_POSITIVE)).count();
        if positive < k {
            return Err(Error::RankDeficiency { wanted: k, found: positive });
        }
        let mut components = DMatrix::zeros(p, k);
        let mut eigenvalues = Vec::with_capacity(k);
        for (c, &j) in order.iter().take(k).enumerate() {
            let v = eig.eigenvectors.column(j);
            let pivot = v.iter().copied().fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
            let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
            components.set_column(c, &(v * sign));
            eigenvalues.push(eig.eigenvalues[j]);
        }
        Ok(Self { mean, components, eigenvalues })
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn k(&self) -> usize {
        self.components.ncols()
    }

    /// Centres with the fitted mean and projects; returns `n × k` row-major.
    pub fn transform(&self, rows: &[f64]) -> Result<Vec<f64>> {
        let p = self.input_dim();
        if !rows.len().is_multiple_of(p) {
            return Err(Error::LengthMismatch { left: rows.len(), right: p });
        }
        let n = rows.len() / p;
        let x = DMatrix::from_fn(n, p, |i, j| rows[i * p + j] - self.mean[j]);
        let z = x * &self.components;
        Ok((0..n).flat_map(|i| (0..self.k()).map(move |c| (i, c))).map(|(i, c)| z[(i, c)]).collect())
    }

    /// Maps `n × k` scores back to `n × p`.
    pub fn reconstruct(&self, scores: &[f64]) -> Vec<f64> {
        let k = self.k();
        let p = self.input_dim();
        let n = scores.len() / k;
        let z = DMatrix::from_row_slice(n, k, scores);
        let x = z * self.components.transpose();
        (0..n).flat_map(|i| (0..p).map(move |j| (i, j))).map(|(i, j)| x[(i, j)] + self.mean[j]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn axis_aligned_data() {
        // Variance 9 on axis 1, 1 on axis 0.
        let mut rng = RngStream::from_seed(1);
        let rows: Vec<f64> = (0..2000)
            .flat_map(|_| {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                [a, 3.0 * b]
            })
            .collect();
        let pca = Pca::fit(&rows, 2, 2).unwrap();
        assert!((pca.components[(1, 0)] - 1.0).abs() < 1e-2);
        assert!((pca.components[(0, 1)] - 1.0).abs() < 1e-2);
    }

    #[test]
    fn line_cloud_has_one_direction() {
        let rows: Vec<f64> = (0..50).flat_map(|i| [i as f64, 2.0 * i as f64]).collect();
        let pca = Pca::fit(&rows, 2, 1).unwrap();
        let c = pca.components.column(0);
        assert!((c[1] / c[0] - 2.0).abs() < 1e-10);
        assert!(matches!(Pca::fit(&rows, 2, 2), Err(Error::RankDeficiency { wanted: 2, found: 1 })));
    }

    #[test]
    fn full_rank_reconstruction_is_exact() {
        let mut rng = RngStream::from_seed(2);
        let rows: Vec<f64> = (0..40 * 5).map(|_| StandardNormal.sample(&mut rng)).collect();
        let pca = Pca::fit(&rows, 5, 5).unwrap();
        let back = pca.reconstruct(&pca.transform(&rows).unwrap());
        let err = rows.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8);
    }

    #[test]
    fn projected_features_are_decorrelated() {
        let mut rng = RngStream::from_seed(3);
        let rows: Vec<f64> = (0..500)
            .flat_map(|_| {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                let c: f64 = StandardNormal.sample(&mut rng);
                [a + b, a - 2.0 * c, 0.5 * b + 2.0 * c]
            })
            .collect();
        let pca = Pca::fit(&rows, 3, 3).unwrap();
        let z = pca.transform(&rows).unwrap();
        let n = 500.0;
        for a in 0..3 {
            for b in 0..a {
                let cov: f64 = z.chunks_exact(3).map(|r| r[a] * r[b]).sum::<f64>() / (n - 1.0);
                assert!(cov.abs() < 1e-6 * pca.eigenvalues[0]);
            }
        }
    }
}

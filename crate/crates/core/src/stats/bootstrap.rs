//! Seeded nonparametric bootstrap over ensemble members.
//!
//! A replicate is a vector of member multiplicities; estimators accept it in
//! place of physically resampling trajectories.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{arg, Result};
use crate::rng;

pub const DEFAULT_REPLICATES: usize = 200;

/// Salt mixed into the run seed so bootstrap streams never coincide with the
/// streams that drew `xi`.
const SALT: u64 = 0xb007_57a9_0000_0001;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bootstrap {
    pub replicates: usize,
    pub seed: u64,
}

impl Bootstrap {
    pub fn new(replicates: usize, base_seed: u64) -> Self {
        Self { replicates, seed: base_seed ^ SALT }
    }

    pub fn with_default_replicates(base_seed: u64) -> Self {
        Self::new(DEFAULT_REPLICATES, base_seed)
    }

    /// Multiplicities of replicate `r` for `n` members.
    pub fn multiplicities(&self, n: usize, r: usize) -> Vec<u32> {
        let mut rng = rng::stream(self.seed, r as u64);
        let mut m = vec![0u32; n];
        for _ in 0..n {
            m[rng.random_range(0..n)] += 1;
        }
        m
    }

    /// Standard error of each component of `stat` over the replicates.
    /// Replicates run in parallel; results are combined in replicate order.
    pub fn standard_errors<F>(&self, n: usize, stat: F) -> Result<Vec<f64>>
    where
        F: Fn(&[u32]) -> Result<Vec<f64>> + Sync,
    {
        if self.replicates < 2 || n == 0 {
            return arg("bootstrap needs at least 2 replicates and one member");
        }
        let reps: Vec<Vec<f64>> = (0..self.replicates)
            .into_par_iter()
            .map(|r| stat(&self.multiplicities(n, r)))
            .collect::<Result<_>>()?;
        Ok(column_std(&reps))
    }
}

/// Sample standard deviation of each column; NaN columns propagate.
pub fn column_std(rows: &[Vec<f64>]) -> Vec<f64> {
    let k = rows.first().map_or(0, Vec::len);
    let n = rows.len() as f64;
    (0..k)
        .map(|c| {
            let mean = rows.iter().map(|r| r[c]).sum::<f64>() / n;
            let ss = rows.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>();
            (ss / (n - 1.0)).sqrt()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multiplicities_sum_to_n_and_are_reproducible() {
        let b = Bootstrap::new(10, 7);
        let m = b.multiplicities(1000, 3);
        assert_eq!(m.iter().map(|&c| c as usize).sum::<usize>(), 1000);
        assert_eq!(m, b.multiplicities(1000, 3));
        assert_ne!(m, b.multiplicities(1000, 4));
    }

    #[test]
    fn standard_error_of_mean_matches_sigma_over_sqrt_n() {
        // Values 0..n have sd sqrt((n^2-1)/12); SE of the mean is that / sqrt(n).
        let n = 400;
        let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let b = Bootstrap::new(400, 1);
        let se = b
            .standard_errors(n, |m| {
                let w: f64 = m.iter().map(|&c| c as f64).sum();
                Ok(vec![x.iter().zip(m).map(|(v, &c)| v * c as f64).sum::<f64>() / w])
            })
            .unwrap();
        let expect = ((n * n - 1) as f64 / 12.0).sqrt() / (n as f64).sqrt();
        assert!((se[0] / expect - 1.0).abs() < 0.15, "{} vs {expect}", se[0]);
    }
}

//! Multi-axis histograms standing in for the Dirac deltas in the PDF
//! definitions: a density is `count / (n_in * cell volume)`.
//!
//! Counts are integers (optionally multiplied by bootstrap multiplicities),
//! so merges, marginals and reductions are exact.

use rayon::prelude::*;

use crate::error::{arg, Error, Result};

/// Uniform bins on `[lo, hi]`. Bin `j` is `(e_j, e_{j+1}]` with
/// `e_j = lo + j (hi - lo) / n`, except that bin 0 also contains `lo`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinAxis {
    lo: f64,
    hi: f64,
    n_bins: usize,
}

impl BinAxis {
    pub fn new(lo: f64, hi: f64, n_bins: usize) -> Result<Self> {
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return arg(format!("bin axis needs finite lo < hi, got [{lo}, {hi}]"));
        }
        if n_bins == 0 {
            return arg("bin axis needs at least one bin");
        }
        Ok(Self { lo, hi, n_bins })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.n_bins as f64
    }

    pub fn edge(&self, j: usize) -> f64 {
        if j == self.n_bins {
            self.hi
        } else {
            self.lo + (self.hi - self.lo) * j as f64 / self.n_bins as f64
        }
    }

    pub fn center(&self, j: usize) -> f64 {
        0.5 * (self.edge(j) + self.edge(j + 1))
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_bins).map(|j| self.center(j)).collect()
    }

    /// Bin containing `v`, or `None` outside `[lo, hi]` (and for NaN).
    pub fn locate(&self, v: f64) -> Option<usize> {
        if !(v >= self.lo && v <= self.hi) {
            return None;
        }
        if v == self.lo {
            return Some(0);
        }
        let n = self.n_bins;
        let guess = ((v - self.lo) / self.width()).ceil() as isize - 1;
        let mut j = guess.clamp(0, n as isize - 1) as usize;
        while j > 0 && v <= self.edge(j) {
            j -= 1;
        }
        while j + 1 < n && v > self.edge(j + 1) {
            j += 1;
        }
        Some(j)
    }

    /// Number of upper edges `e_{j+1}` lying below `v`, i.e. the first lattice
    /// index at which `v <= e_{j+1}`; `n_bins` when `v > hi`.
    fn cdf_index(&self, v: f64) -> usize {
        if v <= self.lo {
            0
        } else {
            self.locate(v).unwrap_or(self.n_bins)
        }
    }

    /// Same range with half as many bins.
    pub fn coarsened(&self) -> Result<BinAxis> {
        if self.n_bins % 2 != 0 {
            return arg(format!("cannot coarsen an axis with {} bins", self.n_bins));
        }
        BinAxis::new(self.lo, self.hi, self.n_bins / 2)
    }
}

/// Row-major lattice shape helper; the last axis varies fastest.
fn strides(axes: &[BinAxis]) -> Vec<usize> {
    let mut s = vec![1; axes.len()];
    for a in (0..axes.len().saturating_sub(1)).rev() {
        s[a] = s[a + 1] * axes[a + 1].n_bins();
    }
    s
}

fn lattice_len(axes: &[BinAxis]) -> usize {
    axes.iter().map(BinAxis::n_bins).product()
}

/// Histogram density over a lattice of bins.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityEstimate {
    axes: Vec<BinAxis>,
    counts: Vec<u64>,
    weights: Vec<f64>,
    n_samples: u64,
    n_in: u64,
}

impl DensityEstimate {
    /// Histogram of the points whose coordinates are given column-wise, one
    /// column per axis. `multiplicity[i]` repeats point `i` (bootstrap); all
    /// ones when absent.
    pub fn from_columns(axes: &[BinAxis], columns: &[&[f64]], multiplicity: Option<&[u32]>) -> Result<Self> {
        let (counts, n_samples, n_in) = bin_counts(axes, columns, multiplicity)?;
        Ok(Self::from_counts(axes.to_vec(), counts, n_samples, n_in))
    }

    fn from_counts(axes: Vec<BinAxis>, counts: Vec<u64>, n_samples: u64, n_in: u64) -> Self {
        let vol: f64 = axes.iter().map(BinAxis::width).product();
        let norm = if n_in > 0 { 1.0 / (n_in as f64 * vol) } else { 0.0 };
        let weights = counts.iter().map(|&c| c as f64 * norm).collect();
        Self { axes, counts, weights, n_samples, n_in }
    }

    pub fn axes(&self) -> &[BinAxis] {
        &self.axes
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Density values over the lattice (row-major).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n_samples(&self) -> u64 {
        self.n_samples
    }

    pub fn n_in_range(&self) -> u64 {
        self.n_in
    }

    /// Samples outside the box on at least one axis.
    pub fn overflow(&self) -> u64 {
        self.n_samples - self.n_in
    }

    /// True when the in-range mass is nonzero and the weights integrate to 1.
    pub fn normalized(&self) -> bool {
        self.n_in > 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(BinAxis::width).product()
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        strides(&self.axes).iter().zip(idx).map(|(s, i)| s * i).sum()
    }

    pub fn density(&self, idx: &[usize]) -> f64 {
        self.weights[self.flat_index(idx)]
    }

    pub fn count(&self, idx: &[usize]) -> u64 {
        self.counts[self.flat_index(idx)]
    }

    /// `sum weights * cell volume`.
    pub fn integral(&self) -> f64 {
        self.weights.iter().sum::<f64>() * self.cell_volume()
    }

    /// Integrates out `axis` (exact: done on counts).
    pub fn marginalize(&self, axis: usize) -> Result<DensityEstimate> {
        if axis >= self.axes.len() || self.axes.len() < 2 {
            return arg(format!("cannot marginalize axis {axis} of a {}-axis estimate", self.axes.len()));
        }
        let mut axes = self.axes.clone();
        axes.remove(axis);
        let st = strides(&self.axes);
        let n_axis = self.axes[axis].n_bins();
        let inner = st[axis];
        let outer_len = self.counts.len() / (n_axis * inner);
        let mut counts = Vec::with_capacity(lattice_len(&axes));
        for o in 0..outer_len {
            for i in 0..inner {
                let base = o * n_axis * inner + i;
                counts.push((0..n_axis).map(|k| self.counts[base + k * inner]).sum());
            }
        }
        // Samples outside the removed axis only are no longer overflow, but
        // their position on the kept axes is unknown; keep the in-range total.
        Ok(Self::from_counts(axes, counts, self.n_samples, self.n_in))
    }

    /// Pools two estimates on the same lattice.
    pub fn merge(&self, other: &DensityEstimate) -> Result<DensityEstimate> {
        if self.axes != other.axes {
            return Err(Error::Lattice("cannot merge estimates on different lattices".into()));
        }
        let counts = self.counts.iter().zip(&other.counts).map(|(a, b)| a + b).collect();
        Ok(Self::from_counts(self.axes.clone(), counts, self.n_samples + other.n_samples, self.n_in + other.n_in))
    }
}

/// Empirical CDF `P(u_k <= e^k_{j_k + 1} for all k)` on the lattice of upper
/// bin edges. Samples below `lo` count at every edge; samples above `hi`
/// never do, so the top corner is 1 exactly when nothing overflows upward.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfEstimate {
    axes: Vec<BinAxis>,
    values: Vec<f64>,
    n_samples: u64,
}

impl CdfEstimate {
    pub fn from_columns(axes: &[BinAxis], columns: &[&[f64]], multiplicity: Option<&[u32]>) -> Result<Self> {
        check_columns(axes, columns, multiplicity)?;
        let st = strides(axes);
        let len = lattice_len(axes);
        let n = columns.first().map_or(0, |c| c.len());
        let mut counts = vec![0u64; len];
        let mut total = 0u64;
        for i in 0..n {
            let w = multiplicity.map_or(1, |m| m[i] as u64);
            if w == 0 {
                continue;
            }
            total += w;
            let mut flat = 0;
            let mut inside = true;
            for (a, axis) in axes.iter().enumerate() {
                let k = axis.cdf_index(columns[a][i]);
                if k == axis.n_bins() {
                    inside = false;
                    break;
                }
                flat += k * st[a];
            }
            if inside {
                counts[flat] += w;
            }
        }
        // Prefix sums along every axis.
        for (a, axis) in axes.iter().enumerate() {
            let s = st[a];
            for flat in 0..len {
                let k = (flat / s) % axis.n_bins();
                if k > 0 {
                    counts[flat] += counts[flat - s];
                }
            }
        }
        let values = counts.iter().map(|&c| if total > 0 { c as f64 / total as f64 } else { 0.0 }).collect();
        Ok(Self { axes: axes.to_vec(), values, n_samples: total })
    }

    pub fn axes(&self) -> &[BinAxis] {
        &self.axes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n_samples(&self) -> u64 {
        self.n_samples
    }

    pub fn value(&self, idx: &[usize]) -> f64 {
        let flat: usize = strides(&self.axes).iter().zip(idx).map(|(s, i)| s * i).sum();
        self.values[flat]
    }
}

fn check_columns(axes: &[BinAxis], columns: &[&[f64]], multiplicity: Option<&[u32]>) -> Result<()> {
    if axes.is_empty() || axes.len() != columns.len() {
        return arg(format!("{} axes but {} sample columns", axes.len(), columns.len()));
    }
    let n = columns[0].len();
    if columns.iter().any(|c| c.len() != n) {
        return arg("sample columns differ in length");
    }
    if let Some(m) = multiplicity {
        if m.len() != n {
            return arg(format!("{} multiplicities for {n} samples", m.len()));
        }
    }
    Ok(())
}

const CHUNK: usize = 8192;

fn bin_counts(axes: &[BinAxis], columns: &[&[f64]], multiplicity: Option<&[u32]>) -> Result<(Vec<u64>, u64, u64)> {
    check_columns(axes, columns, multiplicity)?;
    let st = strides(axes);
    let len = lattice_len(axes);
    let n = columns[0].len();
    let n_chunks = n.div_ceil(CHUNK).max(1);
    // Integer partial counts: the merge is exact in any order.
    let partials: Vec<(Vec<u64>, u64, u64)> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut counts = vec![0u64; len];
            let (mut total, mut inside_total) = (0u64, 0u64);
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                let w = multiplicity.map_or(1, |m| m[i] as u64);
                if w == 0 {
                    continue;
                }
                total += w;
                let mut flat = 0;
                let mut inside = true;
                for (a, axis) in axes.iter().enumerate() {
                    match axis.locate(columns[a][i]) {
                        Some(k) => flat += k * st[a],
                        None => {
                            inside = false;
                            break;
                        }
                    }
                }
                if inside {
                    counts[flat] += w;
                    inside_total += w;
                }
            }
            (counts, total, inside_total)
        })
        .collect();
    let mut counts = vec![0u64; len];
    let (mut total, mut n_in) = (0u64, 0u64);
    for (c, t, i) in partials {
        for (a, b) in counts.iter_mut().zip(c) {
            *a += b;
        }
        total += t;
        n_in += i;
    }
    Ok((counts, total, n_in))
}

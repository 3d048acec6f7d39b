//! Ensemble estimators of f^(N), F, q^(N) and the conditional dissipation.
//!
//! Every estimator has a `*_weighted` form taking bootstrap multiplicities;
//! `None` means each member once.

use crate::ensemble::EnsembleRun;
use crate::error::{arg, Result};

use super::histogram::{BinAxis, CdfEstimate, DensityEstimate};

pub const DEFAULT_N_MIN: u64 = 20;

pub(crate) fn check_point(run: &EnsembleRun, snapshot: usize, x: usize) -> Result<()> {
    if run.is_empty() {
        return arg("empty ensemble");
    }
    if snapshot >= run.times().len() {
        return arg(format!("snapshot {snapshot} out of range ({} stored)", run.times().len()));
    }
    if x >= run.grid().n_x() {
        return arg(format!("grid index {x} out of range (n_x = {})", run.grid().n_x()));
    }
    Ok(())
}

pub(crate) fn check_order(run: &EnsembleRun, order: usize) -> Result<()> {
    if order > run.deriv_order() {
        return arg(format!("derivative order {order} exceeds the run's stored order {}", run.deriv_order()));
    }
    Ok(())
}

/// One-point density and CDF of `u(t, x)` from the same samples.
pub fn estimate_point_stats(
    run: &EnsembleRun,
    snapshot: usize,
    x: usize,
    axis: BinAxis,
) -> Result<(DensityEstimate, CdfEstimate)> {
    estimate_point_stats_weighted(run, snapshot, x, axis, None)
}

pub fn estimate_point_stats_weighted(
    run: &EnsembleRun,
    snapshot: usize,
    x: usize,
    axis: BinAxis,
    w: Option<&[u32]>,
) -> Result<(DensityEstimate, CdfEstimate)> {
    check_point(run, snapshot, x)?;
    let u = run.samples(snapshot, 0, x);
    Ok((
        DensityEstimate::from_columns(&[axis], &[&u], w)?,
        CdfEstimate::from_columns(&[axis], &[&u], w)?,
    ))
}

/// Density of `(u(t, x_1), ..., u(t, x_n))`.
pub fn estimate_joint(run: &EnsembleRun, snapshot: usize, xs: &[usize], axes: &[BinAxis]) -> Result<DensityEstimate> {
    estimate_joint_weighted(run, snapshot, xs, axes, None)
}

pub fn estimate_joint_weighted(
    run: &EnsembleRun,
    snapshot: usize,
    xs: &[usize],
    axes: &[BinAxis],
    w: Option<&[u32]>,
) -> Result<DensityEstimate> {
    if xs.len() != axes.len() {
        return arg(format!("{} points but {} axes", xs.len(), axes.len()));
    }
    for &x in xs {
        check_point(run, snapshot, x)?;
    }
    let cols: Vec<Vec<f64>> = xs.iter().map(|&x| run.samples(snapshot, 0, x)).collect();
    let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
    DensityEstimate::from_columns(axes, &refs, w)
}

/// Two-point density of `(u(t, x1), u(t, x2))`.
pub fn estimate_joint_2pt(
    run: &EnsembleRun,
    snapshot: usize,
    x1: usize,
    x2: usize,
    axis1: BinAxis,
    axis2: BinAxis,
) -> Result<DensityEstimate> {
    estimate_joint(run, snapshot, &[x1, x2], &[axis1, axis2])
}

/// Joint density of `(u, u_x, ..., d^N u/dx^N)` at one point.
pub fn estimate_qn(run: &EnsembleRun, snapshot: usize, x: usize, n: usize, axes: &[BinAxis]) -> Result<DensityEstimate> {
    estimate_qn_weighted(run, snapshot, x, n, axes, None)
}

pub fn estimate_qn_weighted(
    run: &EnsembleRun,
    snapshot: usize,
    x: usize,
    n: usize,
    axes: &[BinAxis],
    w: Option<&[u32]>,
) -> Result<DensityEstimate> {
    check_point(run, snapshot, x)?;
    check_order(run, n)?;
    if axes.len() != n + 1 {
        return arg(format!("q^({n}) needs {} axes, got {}", n + 1, axes.len()));
    }
    let cols: Vec<Vec<f64>> = (0..=n).map(|k| run.samples(snapshot, k, x)).collect();
    let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
    DensityEstimate::from_columns(axes, &refs, w)
}

/// Per-bin conditional mean of `eps * u_xx` given `u(t, x)` in the bin.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalEstimate {
    pub axis: BinAxis,
    /// `None` where the bin holds fewer than `n_min` samples.
    pub means: Vec<Option<f64>>,
    /// Weighted sums of `eps * u_xx` per bin.
    pub sums: Vec<f64>,
    pub counts: Vec<u64>,
    pub n_min: u64,
    pub n_samples: u64,
    pub n_in: u64,
}

impl ConditionalEstimate {
    /// `E[eps u_xx | u in bin] * f` per bin, i.e. `sum / (n_in * dv)`; defined
    /// for every bin regardless of `n_min`.
    pub fn times_density(&self) -> Vec<f64> {
        let norm = if self.n_in > 0 { 1.0 / (self.n_in as f64 * self.axis.width()) } else { 0.0 };
        self.sums.iter().map(|s| s * norm).collect()
    }

    /// `sum_bins E[. | bin] * f * dv`: the in-range mean of `eps * u_xx`.
    pub fn total_mean(&self) -> f64 {
        self.times_density().iter().sum::<f64>() * self.axis.width()
    }

    pub fn missing(&self) -> Vec<bool> {
        self.means.iter().map(Option::is_none).collect()
    }
}

pub fn conditional_laplacian(
    run: &EnsembleRun,
    snapshot: usize,
    x: usize,
    axis: BinAxis,
    n_min: u64,
) -> Result<ConditionalEstimate> {
    conditional_laplacian_weighted(run, snapshot, x, axis, n_min, None)
}

pub fn conditional_laplacian_weighted(
    run: &EnsembleRun,
    snapshot: usize,
    x: usize,
    axis: BinAxis,
    n_min: u64,
    w: Option<&[u32]>,
) -> Result<ConditionalEstimate> {
    check_point(run, snapshot, x)?;
    check_order(run, 2)?;
    let eps = run.epsilon();
    let nb = axis.n_bins();
    let mut sums = vec![0.0; nb];
    let mut counts = vec![0u64; nb];
    let (mut n_samples, mut n_in) = (0u64, 0u64);
    // Sequential in member order: float sums must not depend on scheduling.
    for (i, tr) in run.trajectories().iter().enumerate() {
        let c = w.map_or(1, |w| w[i] as u64);
        if c == 0 {
            continue;
        }
        n_samples += c;
        if let Some(j) = axis.locate(tr.value(snapshot, 0, x)) {
            sums[j] += c as f64 * eps * tr.value(snapshot, 2, x);
            counts[j] += c;
            n_in += c;
        }
    }
    let means = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| if c >= n_min.max(1) { Some(s / c as f64) } else { None })
        .collect();
    Ok(ConditionalEstimate { axis, means, sums, counts, n_min, n_samples, n_in })
}

/// Bin axis spanning the range of `d^order u/dx^order` over the given
/// snapshots and points, padded by `pad` of the width on each side.
pub fn covering_axis(
    run: &EnsembleRun,
    snapshots: &[usize],
    xs: &[usize],
    order: usize,
    n_bins: usize,
    pad: f64,
) -> Result<BinAxis> {
    check_order(run, order)?;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &s in snapshots {
        for &x in xs {
            check_point(run, s, x)?;
            for tr in run.trajectories() {
                let v = tr.value(s, order, x);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
    }
    let span = (hi - lo).max(1e-6 * (1.0 + hi.abs().max(lo.abs())));
    BinAxis::new(lo - pad * span, hi + pad * span, n_bins)
}

//! Independence-closure CDF solver and the Lundgren triple closure.
//!
//! The closed CDF equation is
//! `F_t + g'(v) F_x + eps * (d^2/dx^2 m) F_v = 0` with
//! `m(t, x) = int v F_v dv`, i.e. the mean recovered from `F` itself.

use crate::ensemble::EnsembleRun;
use crate::error::{arg, Error, Result};
use crate::flux::FluxModel;
use crate::solver::GridSpec;
use crate::stats::bootstrap::Bootstrap;
use crate::stats::estimate::{estimate_joint_weighted, estimate_point_stats_weighted};
use crate::stats::histogram::{BinAxis, DensityEstimate};
use crate::stats::report::{CheckRow, Verdict};
use crate::stats::verify::location;

/// Boundary-contract slack for `F(v_min) = 0`, `F(v_max) = 1`.
pub const CONTRACT_TOL: f64 = 1e-6;

pub const DEFAULT_CLOSURE_SAFETY: f64 = 0.45;

/// `F(x_i, v_k)` on the tensor grid of `x` nodes and `v` nodes, where the `v`
/// nodes are the `n_bins + 1` edges of `v_axis`. Row-major in `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfField {
    grid: GridSpec,
    v_axis: BinAxis,
    values: Vec<f64>,
}

impl CdfField {
    /// Wraps node values, clipping to `[0, 1]` and pinning the boundary
    /// nodes to 0 and 1 after checking them against the contract.
    pub fn new(grid: GridSpec, v_axis: BinAxis, mut values: Vec<f64>) -> Result<Self> {
        let nv = v_axis.n_bins() + 1;
        if values.len() != grid.n_x() * nv {
            return arg(format!("CDF field needs {} x {nv} values, got {}", grid.n_x(), values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return arg("CDF field has non-finite values");
        }
        for i in 0..grid.n_x() {
            let row = &mut values[i * nv..(i + 1) * nv];
            check_contract(row)?;
            row[0] = 0.0;
            row[nv - 1] = 1.0;
            for v in row.iter_mut() {
                *v = v.clamp(0.0, 1.0);
            }
        }
        Ok(Self { grid, v_axis, values })
    }

    pub fn from_fn(grid: GridSpec, v_axis: BinAxis, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let nv = v_axis.n_bins() + 1;
        let mut values = Vec::with_capacity(grid.n_x() * nv);
        for i in 0..grid.n_x() {
            let x = grid.x(i);
            values.extend((0..nv).map(|k| f(x, v_axis.edge(k))));
        }
        Self::new(grid, v_axis, values)
    }

    /// `1/2 (1 + tanh((v - u0(x)) / width))`: the pre-smoothed CDF of
    /// deterministic data `u0`.
    pub fn smoothed_step(grid: GridSpec, v_axis: BinAxis, u0: &[f64], width: f64) -> Result<Self> {
        if u0.len() != grid.n_x() {
            return arg(format!("profile has {} points, grid has {}", u0.len(), grid.n_x()));
        }
        if !(width > 0.0) {
            return arg(format!("smoothing width must be positive, got {width}"));
        }
        let nv = v_axis.n_bins() + 1;
        let mut values = Vec::with_capacity(grid.n_x() * nv);
        for &c in u0 {
            values.extend((0..nv).map(|k| 0.5 * (1.0 + ((v_axis.edge(k) - c) / width).tanh())));
        }
        Self::new(grid, v_axis, values)
    }

    /// [`CdfField::smoothed_step`] with width `3 dv`, narrowed when needed so
    /// the step has decayed below the contract slack at both box edges.
    pub fn smoothed_step_default(grid: GridSpec, v_axis: BinAxis, u0: &[f64]) -> Result<Self> {
        let (lo, hi) = u0.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &u| (a.min(u), b.max(u)));
        let margin = (v_axis.hi() - hi).min(lo - v_axis.lo());
        let width = (3.0 * v_axis.width()).min(margin / 8.0);
        Self::smoothed_step(grid, v_axis, u0, width)
    }

    /// Empirical one-point CDF of an ensemble snapshot at every grid node.
    pub fn from_ensemble(run: &EnsembleRun, snapshot: usize, v_axis: BinAxis) -> Result<Self> {
        let grid = *run.grid();
        let nv = v_axis.n_bins() + 1;
        let mut values = Vec::with_capacity(grid.n_x() * nv);
        for i in 0..grid.n_x() {
            let (_, cdf) = estimate_point_stats_weighted(run, snapshot, i, v_axis, None)?;
            let below = run.trajectories().iter().filter(|tr| tr.value(snapshot, 0, i) < v_axis.lo()).count();
            values.push(below as f64 / run.len() as f64);
            values.extend_from_slice(cdf.values());
        }
        Self::new(grid, v_axis, values)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn v_axis(&self) -> &BinAxis {
        &self.v_axis
    }

    pub fn n_v(&self) -> usize {
        self.v_axis.n_bins() + 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, i: usize, k: usize) -> f64 {
        self.values[i * self.n_v() + k]
    }

    /// `F(x_i, .)`.
    pub fn slice(&self, i: usize) -> &[f64] {
        let nv = self.n_v();
        &self.values[i * nv..(i + 1) * nv]
    }

    /// `m(x_i)` for every node.
    pub fn means(&self) -> Result<Vec<f64>> {
        (0..self.grid.n_x()).map(|i| mean_from_cdf(self.slice(i), &self.v_axis)).collect()
    }

    /// Largest decrease `F(v_k) - F(v_{k+1})` anywhere (0 when monotone).
    pub fn monotonicity_violation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.grid.n_x() {
            for p in self.slice(i).windows(2) {
                worst = worst.max(p[0] - p[1]);
            }
        }
        worst
    }
}

fn check_contract(slice: &[f64]) -> Result<()> {
    let lo = slice[0];
    let hi = slice[slice.len() - 1];
    if lo.abs() > CONTRACT_TOL || (hi - 1.0).abs() > CONTRACT_TOL {
        return Err(Error::Contract(format!(
            "CDF must be 0 at v_min and 1 at v_max within {CONTRACT_TOL}, got {lo} and {hi}"
        )));
    }
    Ok(())
}

/// `int v F_v dv` on the truncated box, by parts:
/// `v_max F(v_max) - v_min F(v_min) - int F dv` (trapezoid rule).
pub fn mean_from_cdf(slice: &[f64], v_axis: &BinAxis) -> Result<f64> {
    if slice.len() != v_axis.n_bins() + 1 {
        return arg(format!("CDF slice has {} nodes, axis has {}", slice.len(), v_axis.n_bins() + 1));
    }
    check_contract(slice)?;
    let dv = v_axis.width();
    let integral: f64 = slice.windows(2).map(|p| 0.5 * (p[0] + p[1]) * dv).sum();
    let n = slice.len() - 1;
    Ok(v_axis.hi() * slice[n] - v_axis.lo() * slice[0] - integral)
}

/// Stored output of a closure solve.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosureTrajectory {
    pub times: Vec<f64>,
    pub fields: Vec<CdfField>,
    /// `m(t, x)` per stored time.
    pub means: Vec<Vec<f64>>,
    /// Worst monotonicity violation in `v` per stored time.
    pub monotonicity: Vec<f64>,
    pub steps: usize,
}

impl ClosureTrajectory {
    pub fn max_monotonicity_violation(&self) -> f64 {
        self.monotonicity.iter().fold(0.0, |a: f64, &b| a.max(b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosureOptions {
    /// Fraction of the upwind stability limit; at most 0.5 keeps each step a
    /// convex combination of neighbours.
    pub safety: f64,
    pub min_dt: f64,
}

impl Default for ClosureOptions {
    fn default() -> Self {
        Self { safety: DEFAULT_CLOSURE_SAFETY, min_dt: 1e-12 }
    }
}

/// Advances `F0` to `t_end` with first-order upwinding in `x` and `v` and
/// explicit Euler steps, storing the field at each of `store_times`
/// (ascending, within `[0, t_end]`; `t = 0` is always stored first).
pub fn solve_f_closure(
    f0: &CdfField,
    m: &FluxModel,
    epsilon: f64,
    t_end: f64,
    store_times: &[f64],
    opts: ClosureOptions,
) -> Result<ClosureTrajectory> {
    if !(epsilon >= 0.0) {
        return arg(format!("epsilon must be non-negative, got {epsilon}"));
    }
    if !(t_end >= 0.0) {
        return arg(format!("t_end must be non-negative, got {t_end}"));
    }
    if !(opts.safety > 0.0 && opts.safety <= 0.5) {
        return arg(format!("closure safety must lie in (0, 0.5], got {}", opts.safety));
    }
    let mut stops: Vec<f64> = store_times.to_vec();
    if stops.windows(2).any(|p| p[0] >= p[1]) || stops.iter().any(|&t| !(0.0..=t_end).contains(&t)) {
        return arg("store times must be strictly ascending within [0, t_end]");
    }
    if stops.first() != Some(&0.0) {
        stops.insert(0, 0.0);
    }
    if stops.last() != Some(&t_end) {
        stops.push(t_end);
    }
    let grid = *f0.grid();
    let axis = *f0.v_axis();
    let nx = grid.n_x();
    let nv = f0.n_v();
    let dx = grid.dx();
    let dv = axis.width();
    let gp = m.derivative(1);
    let speed: Vec<f64> = (0..nv).map(|k| gp.eval(axis.edge(k))).collect();
    let max_speed = speed.iter().fold(0.0, |a: f64, &s| a.max(s.abs()));

    let mut field = f0.values.clone();
    let mut next = field.clone();
    let mut out = ClosureTrajectory { times: Vec::new(), fields: Vec::new(), means: Vec::new(), monotonicity: Vec::new(), steps: 0 };
    let mut t = 0.0;
    let store = |t: f64, values: &[f64], out: &mut ClosureTrajectory| -> Result<()> {
        let f = CdfField { grid, v_axis: axis, values: values.to_vec() };
        out.means.push(f.means()?);
        out.monotonicity.push(f.monotonicity_violation());
        out.times.push(t);
        out.fields.push(f);
        Ok(())
    };
    store(0.0, &field, &mut out)?;
    let mut a = vec![0.0; nx];
    for &stop in &stops[1..] {
        while t < stop {
            let means: Vec<f64> =
                (0..nx).map(|i| mean_from_cdf(&field[i * nv..(i + 1) * nv], &axis)).collect::<Result<_>>()?;
            for i in 0..nx {
                let (l, r) = (grid.wrap(i, -1), grid.wrap(i, 1));
                a[i] = epsilon * (means[r] - 2.0 * means[i] + means[l]) / (dx * dx);
            }
            let max_a = a.iter().fold(0.0, |acc: f64, &v| acc.max(v.abs()));
            let mut dt = f64::INFINITY;
            if max_speed > 0.0 {
                dt = dt.min(dx / max_speed);
            }
            if max_a > 0.0 {
                dt = dt.min(dv / max_a);
            }
            dt *= opts.safety;
            let remaining = stop - t;
            if dt >= remaining {
                dt = remaining;
            } else if dt < opts.min_dt {
                return Err(Error::DtUnderflow { time: t, dt });
            }
            for i in 0..nx {
                let (l, r) = (grid.wrap(i, -1), grid.wrap(i, 1));
                let row = i * nv;
                next[row] = 0.0;
                next[row + nv - 1] = 1.0;
                for k in 1..nv - 1 {
                    let c = field[row + k];
                    let s = speed[k];
                    let fx = if s > 0.0 { c - field[l * nv + k] } else { field[r * nv + k] - c } / dx;
                    let fv = if a[i] > 0.0 { c - field[row + k - 1] } else { field[row + k + 1] - c } / dv;
                    next[row + k] = (c - dt * (s * fx + a[i] * fv)).clamp(0.0, 1.0);
                }
            }
            std::mem::swap(&mut field, &mut next);
            t = if dt == remaining { stop } else { t + dt };
            out.steps += 1;
        }
        store(stop, &field, &mut out)?;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Lundgren triple closure

/// Signed values on a histogram lattice (row-major, last axis fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeField {
    pub axes: Vec<BinAxis>,
    pub values: Vec<f64>,
}

impl LatticeField {
    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(BinAxis::width).product()
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_volume()
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |a, &b| a.min(b))
    }

    /// Integrates out the last axis.
    pub fn marginalize_last(&self) -> Result<LatticeField> {
        let Some(last) = self.axes.last() else { return arg("no axis to integrate out") };
        let n = last.n_bins();
        let w = last.width();
        Ok(LatticeField {
            axes: self.axes[..self.axes.len() - 1].to_vec(),
            values: self.values.chunks(n).map(|c| c.iter().sum::<f64>() * w).collect(),
        })
    }

    /// `sum |a - b| * cell volume`.
    pub fn l1_distance(&self, other: &[f64]) -> f64 {
        self.values.iter().zip(other).map(|(a, b)| (a - b).abs()).sum::<f64>() * self.cell_volume()
    }
}

/// `f2 - f (x) f` on a two-axis lattice.
pub type ConnectedCorrelation = LatticeField;

pub fn tilde_f2(f2: &DensityEstimate, fa: &DensityEstimate, fb: &DensityEstimate) -> Result<ConnectedCorrelation> {
    if f2.axes().len() != 2 || fa.axes().len() != 1 || fb.axes().len() != 1 {
        return Err(Error::Lattice("tilde_f2 needs a 2-axis pair estimate and two 1-axis estimates".into()));
    }
    if f2.axes()[0] != fa.axes()[0] || f2.axes()[1] != fb.axes()[0] {
        return Err(Error::Lattice("pair and one-point lattices differ".into()));
    }
    let nb = fb.axes()[0].n_bins();
    let values = f2
        .weights()
        .iter()
        .enumerate()
        .map(|(idx, &w)| w - fa.weights()[idx / nb] * fb.weights()[idx % nb])
        .collect();
    Ok(LatticeField { axes: f2.axes().to_vec(), values })
}

/// `f(w1) f(w2) f(w3)`.
pub fn product_f3(f1: [&DensityEstimate; 3]) -> Result<LatticeField> {
    lattice3(f1, None)
}

/// `prod_k f(w_k) + f(w1) t(w2,w3) + f(w2) t(w1,w3) + f(w3) t(w1,w2)`, with
/// `t` the connected correlation; `f2` holds the pairs (1,2), (1,3), (2,3).
pub fn lundgren_f3(f1: [&DensityEstimate; 3], f2: [&DensityEstimate; 3]) -> Result<LatticeField> {
    lattice3(f1, Some(f2))
}

fn lattice3(f1: [&DensityEstimate; 3], f2: Option<[&DensityEstimate; 3]>) -> Result<LatticeField> {
    if f1.iter().any(|f| f.axes().len() != 1) {
        return Err(Error::Lattice("one-point estimates must have one axis".into()));
    }
    let axes: Vec<BinAxis> = f1.iter().map(|f| f.axes()[0]).collect();
    let n: Vec<usize> = axes.iter().map(BinAxis::n_bins).collect();
    let w: Vec<&[f64]> = f1.iter().map(|f| f.weights()).collect();
    let t = match f2 {
        Some([p12, p13, p23]) => Some([tilde_f2(p12, f1[0], f1[1])?, tilde_f2(p13, f1[0], f1[2])?, tilde_f2(p23, f1[1], f1[2])?]),
        None => None,
    };
    let mut values = Vec::with_capacity(n[0] * n[1] * n[2]);
    for a in 0..n[0] {
        for b in 0..n[1] {
            for c in 0..n[2] {
                let mut v = w[0][a] * w[1][b] * w[2][c];
                if let Some([t12, t13, t23]) = &t {
                    v += w[0][a] * t23.values[b * n[2] + c]
                        + w[1][b] * t13.values[a * n[2] + c]
                        + w[2][c] * t12.values[a * n[1] + b];
                }
                values.push(v);
            }
        }
    }
    Ok(LatticeField { axes, values })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosureConsistency {
    pub location: String,
    pub lundgren_l1: f64,
    pub product_l1: f64,
    pub lundgren_se: f64,
    pub product_se: f64,
    /// Bootstrap SE of `lundgren_l1 - product_l1`.
    pub diff_se: f64,
    /// Most negative closure value (the closure is not a density).
    pub lundgren_min: f64,
    pub overflow: u64,
    pub verdict: Verdict,
}

impl ClosureConsistency {
    pub fn rows(&self) -> Vec<CheckRow> {
        let loc = &self.location;
        vec![
            CheckRow::new("closure", loc, "lundgren_l1", self.lundgren_l1, self.lundgren_se, f64::NAN, Verdict::Pass),
            CheckRow::new("closure", loc, "product_l1", self.product_l1, self.product_se, f64::NAN, Verdict::Pass),
            CheckRow::new(
                "closure",
                loc,
                "lundgren_minus_product_l1",
                self.lundgren_l1 - self.product_l1,
                self.diff_se,
                2.0 * self.diff_se,
                self.verdict,
            ),
            CheckRow::new("closure", loc, "lundgren_min_value", self.lundgren_min, 0.0, f64::NAN, Verdict::Pass),
        ]
    }
}

/// Minimum members per lattice cell before the comparison is trusted.
const MIN_SAMPLES_PER_CELL: usize = 10;
pub const MAX_CELLS_PER_AXIS: usize = 16;

fn l1_pair(run: &EnsembleRun, snapshot: usize, xs: [usize; 3], axes: [BinAxis; 3], w: Option<&[u32]>) -> Result<(f64, f64, u64)> {
    let one: Vec<DensityEstimate> = (0..3)
        .map(|k| estimate_point_stats_weighted(run, snapshot, xs[k], axes[k], w).map(|p| p.0))
        .collect::<Result<_>>()?;
    let pair = |a: usize, b: usize| estimate_joint_weighted(run, snapshot, &[xs[a], xs[b]], &[axes[a], axes[b]], w);
    let (p12, p13, p23) = (pair(0, 1)?, pair(0, 2)?, pair(1, 2)?);
    let f3 = estimate_joint_weighted(run, snapshot, &xs, &axes, w)?;
    let f1 = [&one[0], &one[1], &one[2]];
    let lund = lundgren_f3(f1, [&p12, &p13, &p23])?;
    let prod = product_f3(f1)?;
    Ok((lund.l1_distance(f3.weights()), prod.l1_distance(f3.weights()), f3.overflow()))
}

/// Lattice L1 distances of the Lundgren and pure-product closures to the
/// empirical three-point density at `(x1, x2, x3)`.
pub fn closure_consistency(
    run: &EnsembleRun,
    snapshot: usize,
    xs: [usize; 3],
    axes: [BinAxis; 3],
    boot: &Bootstrap,
) -> Result<ClosureConsistency> {
    if axes.iter().any(|a| a.n_bins() > MAX_CELLS_PER_AXIS) {
        return arg(format!("closure consistency uses at most {MAX_CELLS_PER_AXIS} bins per axis"));
    }
    let (lundgren_l1, product_l1, overflow) = l1_pair(run, snapshot, xs, axes, None)?;
    let se = boot.standard_errors(run.len(), |w| {
        let (l, p, _) = l1_pair(run, snapshot, xs, axes, Some(w))?;
        Ok(vec![l, p, l - p])
    })?;
    let one: Vec<DensityEstimate> = (0..3)
        .map(|k| estimate_point_stats_weighted(run, snapshot, xs[k], axes[k], None).map(|p| p.0))
        .collect::<Result<_>>()?;
    let p = |a: usize, b: usize| estimate_joint_weighted(run, snapshot, &[xs[a], xs[b]], &[axes[a], axes[b]], None);
    let lund = lundgren_f3([&one[0], &one[1], &one[2]], [&p(0, 1)?, &p(0, 2)?, &p(1, 2)?])?;
    let cells: usize = axes.iter().map(BinAxis::n_bins).product();
    let verdict = if run.len() < MIN_SAMPLES_PER_CELL * cells || overflow > 0 {
        Verdict::Inconclusive
    } else {
        Verdict::from_bool(lundgren_l1 <= product_l1 + 2.0 * se[2])
    };
    Ok(ClosureConsistency {
        location: format!("{};x2={};x3={}", location(run, snapshot, xs[0]), run.grid().x(xs[1]), run.grid().x(xs[2])),
        lundgren_l1,
        product_l1,
        lundgren_se: se[0],
        product_se: se[1],
        diff_se: se[2],
        lundgren_min: lund.min_value(),
        overflow,
        verdict,
    })
}

//! Numerical checks of the master-equation identities on ensemble data.
//!
//! Statistical error bars come from the seeded bootstrap; discretization
//! allowances are Richardson estimates `|r(2h) - r(h)| / 3`, scaled by
//! [`ALLOWANCE_SAFETY`], obtained by
//! doubling the time offset, the spatial offset and the bin width together,
//! and are reported next to (never folded into) the standard errors.

use crate::ensemble::EnsembleRun;
use crate::error::{arg, Result};

use super::bootstrap::Bootstrap;
use super::estimate::{
    check_order, check_point, conditional_laplacian_weighted, estimate_joint_weighted, estimate_point_stats_weighted,
    estimate_qn_weighted,
};
use super::histogram::BinAxis;
use super::report::{CheckRow, Verdict};
use super::testfn::{Bump, TestFunction};

pub const HIER_K_SE: f64 = 4.0;
pub const RESIDUAL_K_SE: f64 = 5.0;
pub const CHAIN_K_SE: f64 = 4.0;
pub const COINCIDENCE_K_SE: f64 = 2.0;
pub const DEFAULT_MIN_COUNT: u64 = 200;
/// Safety factor on the two-level error estimate `|r(2h) - r(h)| / 3` of a
/// second-order stencil (grid convergence index, two-grid value).
pub const ALLOWANCE_SAFETY: f64 = 3.0;

fn richardson_allowance(coarse: f64, fine: f64) -> f64 {
    ALLOWANCE_SAFETY * (coarse - fine).abs() / 3.0
}

/// Slack for identities that hold exactly up to rounding.
const ROUNDING: f64 = 1e-10;

pub(crate) fn location(run: &EnsembleRun, snapshot: usize, x: usize) -> String {
    format!("t={};x={}", run.times()[snapshot], run.grid().x(x))
}

/// Central difference across bins with zero padding outside the axis.
fn bin_diff(y: &[f64], dv: f64) -> Vec<f64> {
    let n = y.len();
    (0..n)
        .map(|j| {
            let up = if j + 1 < n { y[j + 1] } else { 0.0 };
            let dn = if j > 0 { y[j - 1] } else { 0.0 };
            (up - dn) / (2.0 * dv)
        })
        .collect()
}

/// Midpoint CDF per bin: `sum_{l<j} f_l dv + f_j dv / 2`.
fn midpoint_cdf(f: &[f64], dv: f64) -> Vec<f64> {
    let mut acc = 0.0;
    f.iter()
        .map(|&fj| {
            let mid = acc + 0.5 * fj * dv;
            acc += fj * dv;
            mid
        })
        .collect()
}

fn weight_of(w: Option<&[u32]>, i: usize) -> f64 {
    w.map_or(1.0, |w| w[i] as f64)
}

fn snapshot_pair(run: &EnsembleRun, snapshot: usize, k: usize) -> Result<(usize, usize, f64)> {
    if snapshot < k || snapshot + k >= run.times().len() {
        return arg(format!(
            "central differencing at snapshot {snapshot} with offset {k} needs snapshots {}..={} ({} stored)",
            snapshot as isize - k as isize,
            snapshot + k,
            run.times().len()
        ));
    }
    let t = run.times();
    Ok((snapshot - k, snapshot + k, t[snapshot + k] - t[snapshot - k]))
}

// ---------------------------------------------------------------------------
// Hierarchical viscous-term identity

#[derive(Debug, Clone, PartialEq)]
pub struct HierBin {
    pub center: f64,
    pub count: u64,
    pub lhs: f64,
    pub lhs_se: f64,
    /// One entry per separation.
    pub rhs: Vec<f64>,
    pub rhs_se: Vec<f64>,
}

impl HierBin {
    pub fn combined_se(&self, s: usize) -> f64 {
        self.lhs_se.hypot(self.rhs_se[s])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierReport {
    pub location: String,
    /// Separations in multiples of the grid spacing, as given.
    pub separations: Vec<usize>,
    pub bins: Vec<HierBin>,
    pub min_count: u64,
    /// Per separation: max over qualifying bins of `|lhs - rhs|`.
    pub trend: Vec<f64>,
    pub verdict: Verdict,
}

impl HierReport {
    pub fn qualifying(&self) -> impl Iterator<Item = &HierBin> {
        self.bins.iter().filter(move |b| b.count >= self.min_count)
    }

    fn smallest(&self) -> usize {
        (0..self.separations.len()).min_by_key(|&s| self.separations[s]).unwrap_or(0)
    }

    pub fn rows(&self) -> Vec<CheckRow> {
        let mut rows = Vec::new();
        for (s, &h) in self.separations.iter().enumerate() {
            rows.push(CheckRow::new(
                "hier",
                &self.location,
                format!("max_abs_diff_sep{h}"),
                self.trend[s],
                f64::NAN,
                f64::NAN,
                Verdict::Pass,
            ));
        }
        let s = self.smallest();
        for b in self.qualifying() {
            let se = b.combined_se(s);
            let tol = HIER_K_SE * se + ROUNDING * b.lhs.abs().max(b.rhs[s].abs());
            let d = b.lhs - b.rhs[s];
            rows.push(CheckRow::new(
                "hier",
                &self.location,
                format!("lhs_minus_rhs_v={}", b.center),
                d,
                se,
                tol,
                Verdict::from_bool(d.abs() <= tol),
            ));
        }
        if self.qualifying().next().is_none() {
            rows.push(CheckRow::new("hier", &self.location, "occupied_bins", 0.0, 0.0, 1.0, Verdict::Inconclusive));
        }
        rows
    }
}

/// Per bin: `[lhs.., rhs(sep_0).., rhs(sep_1).., ...]` with `eps` factored out.
fn hier_sides(
    run: &EnsembleRun,
    snapshot: usize,
    x: usize,
    axis: BinAxis,
    separations: &[usize],
    w: Option<&[u32]>,
) -> Vec<f64> {
    let grid = run.grid();
    let nb = axis.n_bins();
    let dv = axis.width();
    let ns = separations.len();
    let mut lhs = vec![0.0; nb];
    // g[s][0..3][j]: weighted sums of u(x - h), u(x), u(x + h) per bin.
    let mut g = vec![[vec![0.0; nb], vec![0.0; nb], vec![0.0; nb]]; ns];
    let mut total = 0.0;
    for (i, tr) in run.trajectories().iter().enumerate() {
        let c = weight_of(w, i);
        if c == 0.0 {
            continue;
        }
        let Some(j) = axis.locate(tr.value(snapshot, 0, x)) else { continue };
        total += c;
        lhs[j] += c * tr.value(snapshot, 2, x);
        let u = tr.field(snapshot);
        for (s, &h) in separations.iter().enumerate() {
            let h = h as isize;
            g[s][0][j] += c * u[grid.wrap(x, -h)];
            g[s][1][j] += c * u[x];
            g[s][2][j] += c * u[grid.wrap(x, h)];
        }
    }
    let norm = if total > 0.0 { 1.0 / (total * dv) } else { 0.0 };
    let mut out: Vec<f64> = lhs.iter().map(|v| v * norm).collect();
    for (s, &h) in separations.iter().enumerate() {
        let hh = (h as f64 * grid.dx()).powi(2);
        for j in 0..nb {
            out.push((g[s][2][j] - 2.0 * g[s][1][j] + g[s][0][j]) * norm / hh);
        }
    }
    out
}

/// Compares `E[u_xx | u = v] f` with the discrete Laplacian in `x'` of
/// `E[u(x') 1{u(x) in bin}] / dv` over decreasing separations.
pub fn verify_hier_identity(
    run: &EnsembleRun,
    snapshot: usize,
    x: usize,
    axis: BinAxis,
    separations: &[usize],
    min_count: u64,
    boot: &Bootstrap,
) -> Result<HierReport> {
    check_point(run, snapshot, x)?;
    check_order(run, 2)?;
    if separations.is_empty() || separations.contains(&0) {
        return arg("separations must be positive multiples of the grid spacing");
    }
    let nb = axis.n_bins();
    let ns = separations.len();
    let est = hier_sides(run, snapshot, x, axis, separations, None);
    let se = boot.standard_errors(run.len(), |w| Ok(hier_sides(run, snapshot, x, axis, separations, Some(w))))?;
    let (f, _) = estimate_point_stats_weighted(run, snapshot, x, axis, None)?;
    let bins: Vec<HierBin> = (0..nb)
        .map(|j| HierBin {
            center: axis.center(j),
            count: f.counts()[j],
            lhs: est[j],
            lhs_se: se[j],
            rhs: (0..ns).map(|s| est[(s + 1) * nb + j]).collect(),
            rhs_se: (0..ns).map(|s| se[(s + 1) * nb + j]).collect(),
        })
        .collect();
    let mut report = HierReport {
        location: location(run, snapshot, x),
        separations: separations.to_vec(),
        bins,
        min_count,
        trend: Vec::new(),
        verdict: Verdict::Inconclusive,
    };
    report.trend = (0..ns)
        .map(|s| report.qualifying().map(|b| (b.lhs - b.rhs[s]).abs()).fold(0.0, f64::max))
        .collect();
    let s = report.smallest();
    if report.qualifying().next().is_some() {
        let ok = report.qualifying().all(|b| {
            let tol = HIER_K_SE * b.combined_se(s) + ROUNDING * b.lhs.abs().max(b.rhs[s].abs());
            (b.lhs - b.rhs[s]).abs() <= tol
        });
        report.verdict = Verdict::from_bool(ok);
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Weak residuals

#[derive(Debug, Clone, PartialEq)]
pub struct WeakResidual {
    pub equation: &'static str,
    pub location: String,
    pub test_function: Bump,
    /// `<r, phi>` at the finest stencil.
    pub value: f64,
    pub se: f64,
    /// Same residual with doubled time offset, spatial offset and bin width.
    pub coarse_value: f64,
    pub allowance: f64,
    /// Weak forms of the individual terms: time derivative, advection, viscous.
    pub terms: [f64; 3],
    pub verdict: Verdict,
}

impl WeakResidual {
    pub fn tolerance(&self) -> f64 {
        RESIDUAL_K_SE * self.se + self.allowance + ROUNDING * self.terms.iter().map(|t| t.abs()).fold(0.0, f64::max)
    }

    pub fn rows(&self) -> Vec<CheckRow> {
        let phi = format!("bump(c={};w={})", self.test_function.center, self.test_function.half_width);
        vec![
            CheckRow::new(
                self.equation,
                &self.location,
                format!("weak_residual_{phi}"),
                self.value,
                self.se,
                self.tolerance(),
                self.verdict,
            ),
            CheckRow::new(
                self.equation,
                &self.location,
                format!("discretization_allowance_{phi}"),
                self.allowance,
                f64::NAN,
                f64::NAN,
                Verdict::Pass,
            ),
        ]
    }
}

/// Offsets of one residual evaluation level.
#[derive(Debug, Clone, Copy)]
struct Level {
    k_t: usize,
    k_x: usize,
}

impl Level {
    const FINE: Level = Level { k_t: 1, k_x: 1 };
    const COARSE: Level = Level { k_t: 2, k_x: 2 };
}

/// `[total, f_t, advection, viscous]` per test function.
#[allow(clippy::too_many_arguments)]
fn f1_weak(
    run: &EnsembleRun,
    snapshot: usize,
    x: usize,
    axis: BinAxis,
    lvl: Level,
    phis: &[Bump],
    w: Option<&[u32]>,
) -> Result<Vec<f64>> {
    let grid = run.grid();
    let (sm, sp, dt) = snapshot_pair(run, snapshot, lvl.k_t)?;
    let dv = axis.width();
    let centers = axis.centers();
    let (fm, _) = estimate_point_stats_weighted(run, sm, x, axis, w)?;
    let (fp, _) = estimate_point_stats_weighted(run, sp, x, axis, w)?;
    let ft: Vec<f64> = fp.weights().iter().zip(fm.weights()).map(|(a, b)| (a - b) / dt).collect();

    let kx = lvl.k_x as isize;
    let (fl, _) = estimate_point_stats_weighted(run, snapshot, grid.wrap(x, -kx), axis, w)?;
    let (fr, _) = estimate_point_stats_weighted(run, snapshot, grid.wrap(x, kx), axis, w)?;
    let cl = midpoint_cdf(fl.weights(), dv);
    let cr = midpoint_cdf(fr.weights(), dv);
    let span = 2.0 * lvl.k_x as f64 * grid.dx();
    let flux = run.flux().derivative(1);
    let p: Vec<f64> = (0..centers.len()).map(|j| flux.eval(centers[j]) * (cr[j] - cl[j]) / span).collect();

    let cond = conditional_laplacian_weighted(run, snapshot, x, axis, 1, w)?;
    let cf = cond.times_density();

    let adv = bin_diff(&p, dv);
    let visc = bin_diff(&cf, dv);
    let mut out = Vec::with_capacity(4 * phis.len());
    for phi in phis {
        let weak = |r: &dyn Fn(usize) -> f64| (0..centers.len()).map(|j| r(j) * phi.value(centers[j])).sum::<f64>() * dv;
        let a = weak(&|j| ft[j]);
        let b = weak(&|j| adv[j]);
        let c = weak(&|j| visc[j]);
        out.extend([weak(&|j| ft[j] + adv[j] + visc[j]), a, b, c]);
    }
    Ok(out)
}

/// `[total, q_t, advection, viscous]` per test function.
#[allow(clippy::too_many_arguments)]
fn q0_weak(
    run: &EnsembleRun,
    snapshot: usize,
    x: usize,
    axis0: BinAxis,
    axis1: BinAxis,
    lvl: Level,
    phis: &[Bump],
    w: Option<&[u32]>,
) -> Result<Vec<f64>> {
    let grid = run.grid();
    let (sm, sp, dt) = snapshot_pair(run, snapshot, lvl.k_t)?;
    let n0 = axis0.n_bins();
    let n1 = axis1.n_bins();
    let da0 = axis0.width();
    let da1 = axis1.width();
    let c0 = axis0.centers();
    let c1 = axis1.centers();
    let (qm, _) = estimate_point_stats_weighted(run, sm, x, axis0, w)?;
    let (qp, _) = estimate_point_stats_weighted(run, sp, x, axis0, w)?;
    let qt: Vec<f64> = qp.weights().iter().zip(qm.weights()).map(|(a, b)| (a - b) / dt).collect();

    let kx = lvl.k_x as isize;
    let (xl, xr) = (grid.wrap(x, -kx), grid.wrap(x, kx));
    let span = 2.0 * lvl.k_x as f64 * grid.dx();
    let (fl, _) = estimate_point_stats_weighted(run, snapshot, xl, axis0, w)?;
    let (fr, _) = estimate_point_stats_weighted(run, snapshot, xr, axis0, w)?;
    let cl = midpoint_cdf(fl.weights(), da0);
    let cr = midpoint_cdf(fr.weights(), da0);
    let flux = run.flux().derivative(1);
    let p: Vec<f64> = (0..n0).map(|j| flux.eval(c0[j]) * (cr[j] - cl[j]) / span).collect();

    let axes = [axis0, axis1];
    let q1 = estimate_qn_weighted(run, snapshot, x, 1, &axes, w)?;
    let q1l = estimate_qn_weighted(run, snapshot, xl, 1, &axes, w)?;
    let q1r = estimate_qn_weighted(run, snapshot, xr, 1, &axes, w)?;
    let at = |q: &[f64], j: isize, l: usize| if j < 0 || j >= n0 as isize { 0.0 } else { q[j as usize * n1 + l] };
    let mut v = vec![0.0; n0];
    for j in 0..n0 {
        let mut cum = 0.0;
        for l in 0..n1 {
            let qx = (q1r.weights()[j * n1 + l] - q1l.weights()[j * n1 + l]) / span;
            let qa = (at(q1.weights(), j as isize + 1, l) - at(q1.weights(), j as isize - 1, l)) / (2.0 * da0);
            let h = qx + c1[l] * qa;
            v[j] += (cum + 0.5 * h * da1) * da1;
            cum += h * da1;
        }
    }
    let eps = run.epsilon();
    let adv = bin_diff(&p, da0);
    let visc: Vec<f64> = bin_diff(&v, da0).iter().map(|d| -eps * d).collect();
    let mut out = Vec::with_capacity(4 * phis.len());
    for phi in phis {
        let weak = |r: &dyn Fn(usize) -> f64| (0..n0).map(|j| r(j) * phi.value(c0[j])).sum::<f64>() * da0;
        let a = weak(&|j| qt[j]);
        let b = weak(&|j| adv[j]);
        let c = weak(&|j| visc[j]);
        out.extend([weak(&|j| qt[j] + adv[j] + visc[j]), a, b, c]);
    }
    Ok(out)
}

fn assemble_residuals(
    equation: &'static str,
    location: String,
    phis: &[Bump],
    fine: &[f64],
    coarse: &[f64],
    se: &[f64],
) -> Vec<WeakResidual> {
    phis.iter()
        .enumerate()
        .map(|(p, phi)| {
            let mut r = WeakResidual {
                equation,
                location: location.clone(),
                test_function: *phi,
                value: fine[4 * p],
                se: se[p],
                coarse_value: coarse[4 * p],
                allowance: richardson_allowance(coarse[4 * p], fine[4 * p]),
                terms: [fine[4 * p + 1], fine[4 * p + 2], fine[4 * p + 3]],
                verdict: Verdict::Pass,
            };
            r.verdict = Verdict::from_bool(r.value.abs() <= r.tolerance());
            r
        })
        .collect()
}

fn totals(v: Vec<f64>) -> Vec<f64> {
    v.chunks(4).map(|c| c[0]).collect()
}

/// Weak residual of the one-point master equation
/// `f_t + (g'(v) d/dx int^v f)_v + (E[eps u_xx | u = v] f)_v = 0`.
///
/// Needs snapshots `snapshot +- 2` and an even number of bins.
pub fn residual_f1(
    run: &EnsembleRun,
    snapshot: usize,
    x: usize,
    axis: BinAxis,
    phis: &[Bump],
    boot: &Bootstrap,
) -> Result<Vec<WeakResidual>> {
    check_point(run, snapshot, x)?;
    check_order(run, 2)?;
    let fine = f1_weak(run, snapshot, x, axis, Level::FINE, phis, None)?;
    let coarse = f1_weak(run, snapshot, x, axis.coarsened()?, Level::COARSE, phis, None)?;
    let se = boot.standard_errors(run.len(), |w| {
        Ok(totals(f1_weak(run, snapshot, x, axis, Level::FINE, phis, Some(w))?))
    })?;
    Ok(assemble_residuals("f1", location(run, snapshot, x), phis, &fine, &coarse, &se))
}

/// Weak residual of the `q^(0)` equation, whose viscous term is the double
/// integral of `q^(1)_x + a_1 q^(1)_{a_0}`.
pub fn residual_q0(
    run: &EnsembleRun,
    snapshot: usize,
    x: usize,
    axis0: BinAxis,
    axis1: BinAxis,
    phis: &[Bump],
    boot: &Bootstrap,
) -> Result<Vec<WeakResidual>> {
    check_point(run, snapshot, x)?;
    check_order(run, 1)?;
    let fine = q0_weak(run, snapshot, x, axis0, axis1, Level::FINE, phis, None)?;
    let coarse = q0_weak(run, snapshot, x, axis0.coarsened()?, axis1.coarsened()?, Level::COARSE, phis, None)?;
    let se = boot.standard_errors(run.len(), |w| {
        Ok(totals(q0_weak(run, snapshot, x, axis0, axis1, Level::FINE, phis, Some(w))?))
    })?;
    Ok(assemble_residuals("q0", location(run, snapshot, x), phis, &fine, &coarse, &se))
}

// ---------------------------------------------------------------------------
// Chain rule

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Eta {
    T,
    X,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainReport {
    pub location: String,
    pub order: usize,
    pub eta: Eta,
    pub lhs: f64,
    pub rhs: f64,
    /// Bootstrap SE of `lhs - rhs` (paired over members).
    pub se: f64,
    pub allowance: f64,
    pub verdict: Verdict,
}

impl ChainReport {
    pub fn diff(&self) -> f64 {
        self.lhs - self.rhs
    }

    pub fn tolerance(&self) -> f64 {
        CHAIN_K_SE * self.se + self.allowance + ROUNDING * self.lhs.abs().max(self.rhs.abs())
    }

    pub fn rows(&self) -> Vec<CheckRow> {
        let eta = match self.eta {
            Eta::T => "t",
            Eta::X => "x",
        };
        vec![CheckRow::new(
            "chain",
            &self.location,
            format!("lhs_minus_rhs_N={}_eta={eta}", self.order),
            self.diff(),
            self.se,
            self.tolerance(),
            self.verdict,
        )]
    }
}

/// `(lhs, rhs)` at stencil offset `step`.
#[allow(clippy::too_many_arguments)]
fn chain_terms(
    run: &EnsembleRun,
    snapshot: usize,
    x: usize,
    n: usize,
    eta: Eta,
    step: usize,
    phi: &dyn TestFunction,
    w: Option<&[u32]>,
) -> Result<(f64, f64)> {
    let grid = run.grid();
    let z_at = |tr: &crate::solver::Trajectory, s: usize, i: usize| -> Vec<f64> { (0..=n).map(|k| tr.value(s, k, i)).collect() };
    let (mut lhs, mut rhs, mut total) = (0.0, 0.0, 0.0);
    match eta {
        Eta::X => {
            let (xl, xr) = (grid.wrap(x, -(step as isize)), grid.wrap(x, step as isize));
            let span = 2.0 * step as f64 * grid.dx();
            for (i, tr) in run.trajectories().iter().enumerate() {
                let c = weight_of(w, i);
                if c == 0.0 {
                    continue;
                }
                total += c;
                lhs += c * (phi.value(&z_at(tr, snapshot, xr)) - phi.value(&z_at(tr, snapshot, xl))) / span;
                let g = phi.gradient(&z_at(tr, snapshot, x));
                rhs += c * (0..=n).map(|k| g[k] * tr.value(snapshot, k + 1, x)).sum::<f64>();
            }
        }
        Eta::T => {
            let (sm, sp, dt) = snapshot_pair(run, snapshot, step)?;
            for (i, tr) in run.trajectories().iter().enumerate() {
                let c = weight_of(w, i);
                if c == 0.0 {
                    continue;
                }
                total += c;
                let (zm, zp) = (z_at(tr, sm, x), z_at(tr, sp, x));
                lhs += c * (phi.value(&zp) - phi.value(&zm)) / dt;
                let g = phi.gradient(&z_at(tr, snapshot, x));
                rhs += c * (0..=n).map(|k| g[k] * (zp[k] - zm[k]) / dt).sum::<f64>();
            }
        }
    }
    Ok((lhs / total, rhs / total))
}

/// Weak form of `q^(N)_eta = -sum_k d/da_k E[(d_eta d^k u) delta(...)]`:
/// the difference quotient in `eta` of `E[phi(u, .., d^N u)]` against
/// `E[sum_k phi_{a_k} d_eta d^k u]`.
pub fn chain_rule_check(
    run: &EnsembleRun,
    snapshot: usize,
    x: usize,
    n: usize,
    eta: Eta,
    phi: &dyn TestFunction,
    boot: &Bootstrap,
) -> Result<ChainReport> {
    check_point(run, snapshot, x)?;
    if phi.dim() != n + 1 {
        return arg(format!("test function has {} arguments, N = {n} needs {}", phi.dim(), n + 1));
    }
    match eta {
        Eta::X => check_order(run, n + 1)?,
        Eta::T => check_order(run, n)?,
    }
    let (lhs, rhs) = chain_terms(run, snapshot, x, n, eta, 1, phi, None)?;
    let (lc, rc) = chain_terms(run, snapshot, x, n, eta, 2, phi, None)?;
    let se = boot.standard_errors(run.len(), |w| {
        let (l, r) = chain_terms(run, snapshot, x, n, eta, 1, phi, Some(w))?;
        Ok(vec![l - r])
    })?[0];
    let mut report = ChainReport {
        location: location(run, snapshot, x),
        order: n,
        eta,
        lhs,
        rhs,
        se,
        allowance: richardson_allowance(lc - rc, lhs - rhs),
        verdict: Verdict::Pass,
    };
    report.verdict = Verdict::from_bool(report.diff().abs() <= report.tolerance());
    Ok(report)
}

// ---------------------------------------------------------------------------
// Normalization, reduction and coincidence

#[derive(Debug, Clone, PartialEq)]
pub struct SideReport {
    pub location: String,
    /// `|int f dv - 1|`.
    pub normalization_error: f64,
    pub overflow: u64,
    /// Max over separations of the weight mismatch between marginals of
    /// `f^(2)` and the one-point estimates.
    pub reduction_error: f64,
    /// Separations (grid multiples) in the order given, decreasing.
    pub separations: Vec<usize>,
    /// Fraction of `f^(2)` mass within one bin of the diagonal.
    pub diagonal_fraction: Vec<f64>,
    pub diagonal_se: Vec<f64>,
    /// SE of each consecutive difference (paired bootstrap).
    pub step_se: Vec<f64>,
    pub normalization: Verdict,
    pub reduction: Verdict,
    pub coincidence: Verdict,
}

impl SideReport {
    pub fn verdict(&self) -> Verdict {
        Verdict::all([self.normalization, self.reduction, self.coincidence])
    }

    pub fn rows(&self) -> Vec<CheckRow> {
        let loc = &self.location;
        let mut rows = vec![
            CheckRow::new("side", loc, "normalization_error", self.normalization_error, 0.0, 1e-12, self.normalization),
            CheckRow::new(
                "side",
                loc,
                "overflow_samples",
                self.overflow as f64,
                0.0,
                0.0,
                if self.overflow == 0 { Verdict::Pass } else { Verdict::Inconclusive },
            ),
            CheckRow::new("side", loc, "reduction_error", self.reduction_error, 0.0, 0.0, self.reduction),
        ];
        for (s, &h) in self.separations.iter().enumerate() {
            let (tol, ok) = if s == 0 {
                (f64::NAN, Verdict::Pass)
            } else {
                let drop = self.diagonal_fraction[s - 1] - self.diagonal_fraction[s];
                let tol = COINCIDENCE_K_SE * self.step_se[s - 1];
                (tol, Verdict::from_bool(drop <= tol))
            };
            let ok = if h == 0 { ok.and(Verdict::from_bool(self.diagonal_fraction[s] == 1.0)) } else { ok };
            rows.push(CheckRow::new(
                "side",
                loc,
                format!("diagonal_fraction_sep{h}"),
                self.diagonal_fraction[s],
                self.diagonal_se[s],
                tol,
                ok,
            ));
        }
        rows
    }
}

fn diagonal_fractions(
    run: &EnsembleRun,
    snapshot: usize,
    x1: usize,
    separations: &[usize],
    axis: BinAxis,
    w: Option<&[u32]>,
) -> Result<Vec<f64>> {
    let grid = run.grid();
    let nb = axis.n_bins();
    separations
        .iter()
        .map(|&h| {
            let x2 = grid.wrap(x1, h as isize);
            let f2 = estimate_joint_weighted(run, snapshot, &[x1, x2], &[axis, axis], w)?;
            let near: u64 = (0..nb)
                .flat_map(|a| (a.saturating_sub(1)..(a + 2).min(nb)).map(move |b| (a, b)))
                .map(|(a, b)| f2.counts()[a * nb + b])
                .sum();
            Ok(if f2.n_in_range() > 0 { near as f64 / f2.n_in_range() as f64 } else { f64::NAN })
        })
        .collect()
}

/// Normalization of `f`, exact reduction of `f^(2)` to `f`, and the binned
/// coincidence surrogate as `|x2 - x1|` shrinks through `separations`.
pub fn side_condition_report(
    run: &EnsembleRun,
    snapshot: usize,
    x1: usize,
    separations: &[usize],
    axis: BinAxis,
    boot: &Bootstrap,
) -> Result<SideReport> {
    check_point(run, snapshot, x1)?;
    if separations.windows(2).any(|p| p[0] <= p[1]) {
        return arg("separations must be strictly decreasing");
    }
    let grid = run.grid();
    let (f, _) = estimate_point_stats_weighted(run, snapshot, x1, axis, None)?;
    let normalization_error = if f.normalized() { (f.integral() - 1.0).abs() } else { f64::NAN };

    let mut reduction_error: f64 = 0.0;
    for &h in separations {
        let x2 = grid.wrap(x1, h as isize);
        let f2 = estimate_joint_weighted(run, snapshot, &[x1, x2], &[axis, axis], None)?;
        let (g, _) = estimate_point_stats_weighted(run, snapshot, x2, axis, None)?;
        for (marg, one) in [(f2.marginalize(1)?, &f), (f2.marginalize(0)?, &g)] {
            // Members outside the box on the other axis drop out of the pair
            // histogram; compare only when nothing overflowed.
            if f2.overflow() == 0 {
                for (a, b) in marg.weights().iter().zip(one.weights()) {
                    reduction_error = reduction_error.max((a - b).abs());
                }
            }
        }
    }

    let diag = diagonal_fractions(run, snapshot, x1, separations, axis, None)?;
    let ns = separations.len();
    let se_all = boot.standard_errors(run.len(), |w| {
        let d = diagonal_fractions(run, snapshot, x1, separations, axis, Some(w))?;
        let mut v = d.clone();
        v.extend(d.windows(2).map(|p| p[1] - p[0]));
        Ok(v)
    })?;
    let diagonal_se = se_all[..ns].to_vec();
    let step_se = se_all[ns..].to_vec();

    let mut coincidence = Verdict::Pass;
    for s in 1..ns {
        if diag[s - 1] - diag[s] > COINCIDENCE_K_SE * step_se[s - 1] {
            coincidence = Verdict::Fail;
        }
    }
    if separations.last() == Some(&0) && diag[ns - 1] != 1.0 {
        coincidence = Verdict::Fail;
    }
    let overflow = f.overflow();
    Ok(SideReport {
        location: location(run, snapshot, x1),
        normalization_error,
        overflow,
        reduction_error,
        separations: separations.to_vec(),
        diagonal_fraction: diag,
        diagonal_se,
        step_se,
        normalization: if f.normalized() { Verdict::from_bool(normalization_error <= 1e-12) } else { Verdict::Inconclusive },
        reduction: Verdict::from_bool(reduction_error <= 1e-12 * f.weights().iter().fold(0.0, |a: f64, &b| a.max(b))),
        coincidence,
    })
}

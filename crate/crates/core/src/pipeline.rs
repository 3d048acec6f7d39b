//! Run configuration, shipped demo configurations, and the one-shot
//! ensemble -> estimates -> checks -> report pipeline.
//!
//! Configs are plain `key = value` text. The canonical form (every key,
//! sorted) is hashed to name the run directory, so an identical config always
//! lands in, and reproduces, the same directory.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::closure::{closure_consistency, solve_f_closure, CdfField, ClosureOptions};
use crate::ensemble::{run_ensemble, EnsembleRun, EnsembleSpec, RandomInitialFamily, XiDistribution};
use crate::error::{Error, Result};
use crate::flux::FluxModel;
use crate::solver::{solve_viscous, GridSpec, InitialProfile};
use crate::stats::bootstrap::Bootstrap;
use crate::stats::estimate::covering_axis;
use crate::stats::histogram::BinAxis;
use crate::stats::report::{to_csv, CheckRow, Verdict};
use crate::stats::testfn::{Bump, PowerTest, ProductBump};
use crate::stats::verify::{chain_rule_check, residual_f1, residual_q0, side_condition_report, verify_hier_identity, Eta};

/// Checks in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Check {
    Mass,
    Side,
    Hier,
    F1,
    Q0,
    Chain,
    Closure,
    HeatOracle,
    ColeHopf,
    ClosureDet,
    ClosureTransport,
}

impl Check {
    pub const ALL: [Check; 11] = [
        Check::Mass,
        Check::Side,
        Check::Hier,
        Check::F1,
        Check::Q0,
        Check::Chain,
        Check::Closure,
        Check::HeatOracle,
        Check::ColeHopf,
        Check::ClosureDet,
        Check::ClosureTransport,
    ];

    /// What `checks = all` expands to: the checks on ensemble statistics.
    pub const STATISTICAL: [Check; 7] =
        [Check::Mass, Check::Side, Check::Hier, Check::F1, Check::Q0, Check::Chain, Check::Closure];

    pub fn name(self) -> &'static str {
        match self {
            Check::Mass => "mass",
            Check::Side => "side",
            Check::Hier => "hier",
            Check::F1 => "f1",
            Check::Q0 => "q0",
            Check::Chain => "chain",
            Check::Closure => "closure",
            Check::HeatOracle => "heat-oracle",
            Check::ColeHopf => "cole-hopf",
            Check::ClosureDet => "closure-det",
            Check::ClosureTransport => "closure-transport",
        }
    }

    fn needs_ensemble(self) -> bool {
        !matches!(self, Check::ColeHopf | Check::ClosureDet | Check::ClosureTransport)
    }
}

impl FromStr for Check {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Check::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown check {s:?}")))
    }
}

/// Parses a comma list of check names (or `all`) into sorted unique checks.
pub fn parse_checks(s: &str) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for tok in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        if tok == "all" {
            out.extend(Check::STATISTICAL);
        } else {
            out.push(tok.parse()?);
        }
    }
    out.sort();
    out.dedup();
    Ok(out)
}

/// A histogram axis given explicitly or sized to cover the samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AxisSpec {
    Auto { n_bins: usize },
    Fixed(BinAxis),
}

impl AxisSpec {
    fn n_bins(&self) -> usize {
        match self {
            AxisSpec::Auto { n_bins } => *n_bins,
            AxisSpec::Fixed(a) => a.n_bins(),
        }
    }
}

impl fmt::Display for AxisSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AxisSpec::Auto { n_bins } => write!(f, "auto:{n_bins}"),
            AxisSpec::Fixed(a) => write!(f, "{},{},{}", a.lo(), a.hi(), a.n_bins()),
        }
    }
}

impl FromStr for AxisSpec {
    type Err = Error;

    /// `auto:<n>` or `<lo>,<hi>,<n>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Argument(format!("bad axis {s:?} (expected auto:<n> or lo,hi,n)"));
        if let Some(n) = s.trim().strip_prefix("auto:") {
            let n_bins: usize = n.trim().parse().map_err(|_| bad())?;
            if n_bins == 0 {
                return Err(bad());
            }
            return Ok(AxisSpec::Auto { n_bins });
        }
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let [lo, hi, n] = parts.as_slice() else { return Err(bad()) };
        let lo: f64 = lo.parse().map_err(|_| bad())?;
        let hi: f64 = hi.parse().map_err(|_| bad())?;
        let n: usize = n.parse().map_err(|_| bad())?;
        Ok(AxisSpec::Fixed(BinAxis::new(lo, hi, n)?))
    }
}

/// Complete description of a pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub name: String,
    pub flux: FluxModel,
    pub epsilon: f64,
    pub length: f64,
    pub n_x: usize,
    pub cfl_safety: f64,
    pub times: Vec<f64>,
    pub family: RandomInitialFamily,
    pub dist: XiDistribution,
    pub members: usize,
    pub base_seed: u64,
    pub deriv_order: usize,
    /// Snapshot time and position at which the estimators are probed.
    pub probe_t: f64,
    pub probe_x: f64,
    pub v_axis: AxisSpec,
    pub a1_axis: AxisSpec,
    /// Hierarchy-identity separations, in grid spacings.
    pub separations: Vec<usize>,
    /// Coincidence separations, in grid spacings, decreasing.
    pub coincidence: Vec<usize>,
    pub closure_axis: AxisSpec,
    /// Offsets of the 2nd and 3rd closure-consistency points, in grid spacings.
    pub closure_offsets: Vec<usize>,
    pub replicates: usize,
    pub min_count: u64,
    pub checks: Vec<Check>,
    /// Deterministic profile for `closure-det`.
    pub profile: String,
    pub closure_nx: usize,
    pub closure_nv: usize,
    pub closure_vbox: (f64, f64),
    pub closure_t: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            name: "run".into(),
            flux: FluxModel::burgers(),
            epsilon: 0.1,
            length: 2.0 * std::f64::consts::PI,
            n_x: 64,
            cfl_safety: GridSpec::DEFAULT_SAFETY,
            times: vec![0.46, 0.48, 0.5, 0.52, 0.54],
            family: RandomInitialFamily::PhaseSine { amplitude: 1.0 },
            dist: XiDistribution::Uniform { a: 0.0, b: 2.0 * std::f64::consts::PI },
            members: 1000,
            base_seed: 1,
            deriv_order: 2,
            probe_t: 0.5,
            probe_x: 0.5 * std::f64::consts::PI,
            v_axis: AxisSpec::Auto { n_bins: 32 },
            a1_axis: AxisSpec::Auto { n_bins: 16 },
            separations: vec![4, 2, 1],
            coincidence: vec![16, 8, 4, 2, 1, 0],
            closure_axis: AxisSpec::Auto { n_bins: 8 },
            closure_offsets: vec![4, 8],
            replicates: crate::stats::bootstrap::DEFAULT_REPLICATES,
            min_count: crate::stats::verify::DEFAULT_MIN_COUNT,
            checks: vec![Check::Mass],
            profile: "tanh-pair".into(),
            closure_nx: 512,
            closure_nv: 200,
            closure_vbox: (-0.5, 1.5),
            closure_t: 0.5,
        }
    }
}

fn join<T: fmt::Display>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn parse_list<T: FromStr>(s: &str) -> std::result::Result<Vec<T>, ()> {
    s.split(',').map(|t| t.trim().parse::<T>().map_err(|_| ())).collect()
}

impl RunConfig {
    fn entries(&self) -> BTreeMap<&'static str, String> {
        let mut m = BTreeMap::new();
        m.insert("a1_axis", self.a1_axis.to_string());
        m.insert("base_seed", self.base_seed.to_string());
        m.insert("cfl_safety", self.cfl_safety.to_string());
        m.insert("checks", self.checks.iter().map(|c| c.name()).collect::<Vec<_>>().join(","));
        m.insert("closure_axis", self.closure_axis.to_string());
        m.insert("closure_nv", self.closure_nv.to_string());
        m.insert("closure_nx", self.closure_nx.to_string());
        m.insert("closure_offsets", join(&self.closure_offsets));
        m.insert("closure_t", self.closure_t.to_string());
        m.insert("closure_vbox", format!("{},{}", self.closure_vbox.0, self.closure_vbox.1));
        m.insert("coincidence", join(&self.coincidence));
        m.insert("deriv_order", self.deriv_order.to_string());
        m.insert("dist", self.dist.to_string());
        m.insert("epsilon", self.epsilon.to_string());
        m.insert("family", self.family.to_string());
        m.insert("flux", self.flux.to_string());
        m.insert("length", self.length.to_string());
        m.insert("members", self.members.to_string());
        m.insert("min_count", self.min_count.to_string());
        m.insert("n_x", self.n_x.to_string());
        m.insert("name", self.name.clone());
        m.insert("probe_t", self.probe_t.to_string());
        m.insert("probe_x", self.probe_x.to_string());
        m.insert("profile", self.profile.clone());
        m.insert("replicates", self.replicates.to_string());
        m.insert("separations", join(&self.separations));
        m.insert("times", join(&self.times));
        m.insert("v_axis", self.v_axis.to_string());
        m
    }

    /// Every key, sorted, one `key = value` per line.
    pub fn canonical(&self) -> String {
        self.entries().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    /// `<name>-<first 12 hex digits of the digest>`.
    pub fn run_dir_name(&self) -> String {
        format!("{}-{}", self.name, &self.digest()[..12])
    }

    /// Parses `key = value` lines (`#` starts a comment) over the defaults,
    /// then validates. Every offending key is reported.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut errors = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                errors.push(format!("line {}: expected key = value", lineno + 1));
                continue;
            };
            if let Err(msg) = cfg.set(key.trim(), value.trim()) {
                errors.push(msg);
            }
        }
        errors.extend(cfg.problems());
        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Config(errors))
        }
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let bad = |what: &str| format!("{key}: {what} (got {value:?})");
        match key {
            "name" => {
                if value.is_empty() || !value.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                    return Err(bad("expected a non-empty name of letters, digits, '-' or '_'"));
                }
                self.name = value.to_string();
            }
            "flux" => self.flux = value.parse().map_err(|_| bad("expected comma-separated coefficients"))?,
            "epsilon" => self.epsilon = value.parse().map_err(|_| bad("expected a real"))?,
            "length" => self.length = value.parse().map_err(|_| bad("expected a real"))?,
            "n_x" => self.n_x = value.parse().map_err(|_| bad("expected an integer"))?,
            "cfl_safety" => self.cfl_safety = value.parse().map_err(|_| bad("expected a real"))?,
            "times" => self.times = parse_list(value).map_err(|_| bad("expected a comma list of reals"))?,
            "family" => self.family = value.parse().map_err(|_| bad("expected phase-sine:A, amplitude-sine or constant"))?,
            "dist" => {
                self.dist = value.parse().map_err(|_| bad("expected uniform:a,b, normal:mu,sigma or degenerate:x"))?
            }
            "members" => self.members = value.parse().map_err(|_| bad("expected an integer"))?,
            "base_seed" => self.base_seed = value.parse().map_err(|_| bad("expected an unsigned integer"))?,
            "deriv_order" => self.deriv_order = value.parse().map_err(|_| bad("expected an integer"))?,
            "probe_t" => self.probe_t = value.parse().map_err(|_| bad("expected a real"))?,
            "probe_x" => self.probe_x = value.parse().map_err(|_| bad("expected a real"))?,
            "v_axis" => self.v_axis = value.parse().map_err(|_| bad("expected auto:<n> or lo,hi,n"))?,
            "a1_axis" => self.a1_axis = value.parse().map_err(|_| bad("expected auto:<n> or lo,hi,n"))?,
            "closure_axis" => self.closure_axis = value.parse().map_err(|_| bad("expected auto:<n> or lo,hi,n"))?,
            "separations" => self.separations = parse_list(value).map_err(|_| bad("expected a comma list of integers"))?,
            "coincidence" => self.coincidence = parse_list(value).map_err(|_| bad("expected a comma list of integers"))?,
            "closure_offsets" => {
                self.closure_offsets = parse_list(value).map_err(|_| bad("expected two integers"))?
            }
            "replicates" => self.replicates = value.parse().map_err(|_| bad("expected an integer"))?,
            "min_count" => self.min_count = value.parse().map_err(|_| bad("expected an integer"))?,
            "checks" => self.checks = parse_checks(value).map_err(|e| bad(&e.to_string()))?,
            "profile" => self.profile = value.to_string(),
            "closure_nx" => self.closure_nx = value.parse().map_err(|_| bad("expected an integer"))?,
            "closure_nv" => self.closure_nv = value.parse().map_err(|_| bad("expected an integer"))?,
            "closure_vbox" => {
                let v: Vec<f64> = parse_list(value).map_err(|_| bad("expected lo,hi"))?;
                let [lo, hi] = v.as_slice() else { return Err(bad("expected lo,hi")) };
                self.closure_vbox = (*lo, *hi);
            }
            "closure_t" => self.closure_t = value.parse().map_err(|_| bad("expected a real"))?,
            _ => return Err(format!("{key}: unknown key")),
        }
        Ok(())
    }

    /// Cross-field validation; one message per offending key.
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        let has = |c: Check| self.checks.contains(&c);
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            p.push(format!("epsilon: must be a finite non-negative real (got {})", self.epsilon));
        }
        if !(self.length > 0.0 && self.length.is_finite()) {
            p.push(format!("length: must be positive (got {})", self.length));
        }
        if self.n_x < 8 {
            p.push(format!("n_x: must be at least 8 (got {})", self.n_x));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            p.push(format!("cfl_safety: must lie in (0, 1] (got {})", self.cfl_safety));
        }
        if self.times.is_empty()
            || self.times.iter().any(|&t| !(t > 0.0 && t.is_finite()))
            || self.times.windows(2).any(|w| w[0] >= w[1])
        {
            p.push("times: must be strictly ascending positive reals".into());
        }
        if let Err(e) = self.dist.validate() {
            p.push(format!("dist: {e}"));
        }
        if self.members == 0 {
            p.push("members: must be positive".into());
        }
        if self.deriv_order > crate::solver::MAX_DERIV_ORDER {
            p.push(format!("deriv_order: at most {} (got {})", crate::solver::MAX_DERIV_ORDER, self.deriv_order));
        }
        let need_order = if has(Check::Hier) || has(Check::F1) { 2 } else if has(Check::Q0) || has(Check::Chain) { 1 } else { 0 };
        if self.deriv_order < need_order {
            p.push(format!("deriv_order: the requested checks need at least {need_order}"));
        }
        let snap = self.probe_snapshot();
        match snap {
            None if self.checks.iter().any(|&c| matches!(c, Check::Side | Check::Hier | Check::F1 | Check::Q0 | Check::Chain | Check::Closure)) => {
                p.push(format!("probe_t: {} is not one of the listed times", self.probe_t))
            }
            Some(s) if (has(Check::F1) || has(Check::Q0) || has(Check::Chain)) && (s < 2 || s + 2 > self.times.len()) => {
                p.push("probe_t: residual checks need two stored snapshots on each side".into())
            }
            _ => {}
        }
        if !(0.0..self.length).contains(&self.probe_x) {
            p.push(format!("probe_x: must lie in [0, length) (got {})", self.probe_x));
        }
        for (key, axis) in [("v_axis", self.v_axis), ("a1_axis", self.a1_axis)] {
            if axis.n_bins() % 2 != 0 && (has(Check::F1) || has(Check::Q0)) {
                p.push(format!("{key}: residual checks coarsen the axis, so it needs an even bin count"));
            }
        }
        if self.closure_axis.n_bins() > crate::closure::MAX_CELLS_PER_AXIS {
            p.push(format!("closure_axis: at most {} bins", crate::closure::MAX_CELLS_PER_AXIS));
        }
        if self.closure_offsets.len() != 2 {
            p.push("closure_offsets: expected two offsets".into());
        }
        if self.separations.is_empty() || self.separations.contains(&0) {
            p.push("separations: must be positive integers".into());
        }
        if self.coincidence.is_empty() || self.coincidence.windows(2).any(|w| w[0] <= w[1]) {
            p.push("coincidence: must be strictly decreasing".into());
        }
        if self.replicates < 2 {
            p.push("replicates: need at least 2".into());
        }
        if self.checks.is_empty() {
            p.push("checks: no checks requested".into());
        }
        if has(Check::HeatOracle) && (!self.flux.is_zero() || self.family != RandomInitialFamily::AmplitudeSine) {
            p.push("checks: heat-oracle needs flux = 0 and family = amplitude-sine".into());
        }
        if has(Check::ColeHopf) && (self.flux != FluxModel::burgers() || !(self.epsilon > 0.0)) {
            p.push("checks: cole-hopf needs flux = 0,0,0.5 and epsilon > 0".into());
        }
        if has(Check::ClosureDet) || has(Check::ClosureTransport) {
            if self.closure_nx < 8 || self.closure_nv < 4 {
                p.push("closure_nx: need closure_nx >= 8 and closure_nv >= 4".into());
            }
            if !(self.closure_vbox.0 < self.closure_vbox.1) {
                p.push("closure_vbox: need lo < hi".into());
            }
            if !(self.closure_t > 0.0) {
                p.push("closure_t: must be positive".into());
            }
        }
        if has(Check::ClosureDet) {
            if let Ok(grid) = GridSpec::new(self.length, self.closure_nx.max(8)) {
                if let Err(e) = InitialProfile::parse(&self.profile, &grid, self.epsilon) {
                    p.push(format!("profile: {e}"));
                }
            }
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }

    /// Index of `probe_t` among the stored snapshots (which start at `t = 0`).
    pub fn probe_snapshot(&self) -> Option<usize> {
        let tol = 1e-12 * (1.0 + self.probe_t.abs());
        self.times.iter().position(|&t| (t - self.probe_t).abs() <= tol).map(|i| i + 1)
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::with_safety(self.length, self.n_x, self.cfl_safety)
    }

    pub fn ensemble_spec(&self) -> Result<EnsembleSpec> {
        Ok(EnsembleSpec {
            family: self.family,
            dist: self.dist,
            members: self.members,
            flux: self.flux.clone(),
            epsilon: self.epsilon,
            grid: self.grid()?,
            times: self.times.clone(),
            deriv_order: self.deriv_order,
            base_seed: self.base_seed,
        })
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

/// The configurations exercised by the acceptance suite.
pub fn demo_configs() -> Vec<RunConfig> {
    let base = RunConfig::default();
    vec![
        RunConfig {
            name: "heat-decay".into(),
            flux: FluxModel::zero(),
            n_x: 256,
            times: vec![0.25, 0.5, 0.75, 1.0],
            family: RandomInitialFamily::AmplitudeSine,
            dist: XiDistribution::Normal { mu: 1.0, sigma: 0.3 },
            members: 64,
            checks: vec![Check::Mass, Check::HeatOracle],
            ..base.clone()
        },
        RunConfig {
            name: "cole-hopf".into(),
            length: 16.0,
            times: vec![1.0],
            probe_t: 1.0,
            members: 16,
            checks: vec![Check::Mass, Check::ColeHopf],
            ..base.clone()
        },
        RunConfig {
            name: "burgers-phase-sine".into(),
            members: 10_000,
            v_axis: AxisSpec::Fixed(BinAxis::new(-1.0, 1.0, 32).expect("static axis")),
            a1_axis: AxisSpec::Auto { n_bins: 16 },
            closure_axis: AxisSpec::Fixed(BinAxis::new(-1.0, 1.0, 8).expect("static axis")),
            checks: vec![Check::Mass, Check::Side, Check::Hier, Check::F1, Check::Q0, Check::Chain],
            ..base.clone()
        },
        RunConfig {
            name: "amplitude-sine".into(),
            flux: FluxModel::zero(),
            family: RandomInitialFamily::AmplitudeSine,
            dist: XiDistribution::Normal { mu: 1.0, sigma: 0.3 },
            members: 10_000,
            v_axis: AxisSpec::Fixed(BinAxis::new(-0.5, 2.5, 40).expect("static axis")),
            a1_axis: AxisSpec::Auto { n_bins: 16 },
            checks: vec![Check::Mass, Check::Side, Check::Hier, Check::F1, Check::Q0, Check::Chain],
            ..base.clone()
        },
        RunConfig {
            name: "constant-family".into(),
            family: RandomInitialFamily::Constant,
            dist: XiDistribution::Uniform { a: 0.0, b: 1.0 },
            members: 10_000,
            v_axis: AxisSpec::Fixed(BinAxis::new(0.0, 1.0, 16).expect("static axis")),
            a1_axis: AxisSpec::Fixed(BinAxis::new(-1.125, 0.875, 8).expect("static axis")),
            closure_axis: AxisSpec::Fixed(BinAxis::new(0.0, 1.0, 2).expect("static axis")),
            checks: Check::STATISTICAL.to_vec(),
            ..base.clone()
        },
        RunConfig {
            name: "closure-degenerate".into(),
            family: RandomInitialFamily::PhaseSine { amplitude: 0.5 },
            dist: XiDistribution::Degenerate(0.0),
            members: 1,
            times: vec![0.5],
            probe_t: 0.5,
            checks: vec![Check::Mass, Check::ClosureDet],
            ..base.clone()
        },
        RunConfig {
            name: "closure-transport".into(),
            epsilon: 0.0,
            family: RandomInitialFamily::Constant,
            dist: XiDistribution::Uniform { a: 0.0, b: 1.0 },
            members: 16,
            times: vec![0.5],
            probe_t: 0.5,
            closure_nx: 64,
            closure_nv: 60,
            closure_vbox: (-1.0, 2.0),
            closure_t: 0.5,
            checks: vec![Check::Mass, Check::ClosureTransport],
            ..base
        },
    ]
}

pub fn demo_config(name: &str) -> Option<RunConfig> {
    demo_configs().into_iter().find(|c| c.name == name)
}

// ---------------------------------------------------------------------------
// Checks

/// Relative slack on mass conservation.
pub const MASS_TOL: f64 = 1e-10;
/// Absolute slack on the discrete maximum principle.
pub const MAX_PRINCIPLE_SLACK: f64 = 1e-8;
pub const HEAT_TOL: f64 = 1e-4;
pub const COLE_HOPF_TOL: f64 = 1e-3;
pub const COLE_HOPF_RATIO: f64 = 3.0;
pub const CLOSURE_DET_TOL: f64 = 1e-2;
pub const TRANSPORT_RATIO: f64 = 1.8;
pub const MONOTONICITY_TOL: f64 = 0.05;

fn mass_rows(run: &EnsembleRun) -> Vec<CheckRow> {
    let grid = run.grid();
    let dx = grid.dx();
    let (mut worst_mass, mut mass_tol_at_worst, mut mass_ok) = (0.0f64, 0.0f64, true);
    let (mut worst_excess, mut mp_ok) = (0.0f64, true);
    for tr in run.trajectories() {
        let u0 = tr.field(0);
        let (lo, hi) = u0.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let amp = u0.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        let tol = MASS_TOL * grid.length() * amp;
        let m0 = tr.mass(0, dx);
        for s in 1..tr.n_snapshots() {
            let drift = (tr.mass(s, dx) - m0).abs();
            if drift > tol {
                mass_ok = false;
            }
            if drift >= worst_mass {
                worst_mass = drift;
                mass_tol_at_worst = tol;
            }
            for &v in tr.field(s) {
                let excess = (v - hi).max(lo - v);
                worst_excess = worst_excess.max(excess);
                if excess > MAX_PRINCIPLE_SLACK {
                    mp_ok = false;
                }
            }
        }
    }
    let loc = format!("members={}", run.len());
    vec![
        CheckRow::new("mass", &loc, "max_mass_drift", worst_mass, 0.0, mass_tol_at_worst, Verdict::from_bool(mass_ok)),
        CheckRow::new(
            "mass",
            &loc,
            "max_principle_excess",
            worst_excess.max(0.0),
            0.0,
            MAX_PRINCIPLE_SLACK,
            Verdict::from_bool(mp_ok),
        ),
    ]
}

fn heat_rows(run: &EnsembleRun) -> Vec<CheckRow> {
    let grid = run.grid();
    let k = 2.0 * std::f64::consts::PI / grid.length();
    let mut worst = 0.0f64;
    for (tr, &xi) in run.trajectories().iter().zip(run.xi_values()) {
        for (s, &t) in tr.times().iter().enumerate() {
            let decay = (-run.epsilon() * k * k * t).exp();
            for (i, &u) in tr.field(s).iter().enumerate() {
                worst = worst.max((u - xi * decay * (k * grid.x(i)).sin()).abs() / xi.abs().max(1.0));
            }
        }
    }
    vec![CheckRow::new(
        "heat-oracle",
        format!("n_x={}", grid.n_x()),
        "max_rel_error",
        worst,
        0.0,
        HEAT_TOL,
        Verdict::from_bool(worst <= HEAT_TOL),
    )]
}

/// Viscous Burgers travelling front joining `u_left` to `u_right`.
pub fn burgers_front(x: f64, t: f64, u_left: f64, u_right: f64, x0: f64, epsilon: f64) -> f64 {
    let s = 0.5 * (u_left + u_right);
    0.5 * (u_left + u_right) - 0.5 * (u_left - u_right) * ((u_left - u_right) * (x - x0 - s * t) / (4.0 * epsilon)).tanh()
}

/// Max-norm error against the travelling front at `t`, measured over the
/// middle half of the domain (the periodic wrap carries an expansion wave).
pub fn cole_hopf_error(length: f64, n_x: usize, epsilon: f64, t: f64) -> Result<f64> {
    let grid = GridSpec::new(length, n_x)?;
    let x0 = 0.3 * length;
    let u0: Vec<f64> = grid.nodes().iter().map(|&x| burgers_front(x, 0.0, 1.0, 0.0, x0, epsilon)).collect();
    let tr = solve_viscous(&u0, &FluxModel::burgers(), epsilon, &grid, &[t], 0)?;
    let last = tr.n_snapshots() - 1;
    let mut err = 0.0f64;
    for (i, &u) in tr.field(last).iter().enumerate() {
        let x = grid.x(i);
        if x >= 0.2 * length && x <= 0.8 * length {
            err = err.max((u - burgers_front(x, t, 1.0, 0.0, x0, epsilon)).abs());
        }
    }
    Ok(err)
}

fn cole_hopf_rows(cfg: &RunConfig) -> Result<Vec<CheckRow>> {
    let t = *cfg.times.last().unwrap_or(&1.0);
    let e128 = cole_hopf_error(cfg.length, 128, cfg.epsilon, t)?;
    let e256 = cole_hopf_error(cfg.length, 256, cfg.epsilon, t)?;
    let e512 = cole_hopf_error(cfg.length, 512, cfg.epsilon, t)?;
    let loc = format!("t={t};L={}", cfg.length);
    Ok(vec![
        CheckRow::new("cole-hopf", &loc, "max_error_nx512", e512, 0.0, COLE_HOPF_TOL, Verdict::from_bool(e512 <= COLE_HOPF_TOL)),
        CheckRow::new(
            "cole-hopf",
            &loc,
            "error_ratio_nx128_over_nx256",
            e128 / e256,
            0.0,
            COLE_HOPF_RATIO,
            Verdict::from_bool(e128 / e256 >= COLE_HOPF_RATIO),
        ),
    ])
}

/// Closure solve from pre-smoothed deterministic data against the direct
/// solve; returns `(max |m - u|, worst monotonicity violation)`.
pub fn closure_det_error(cfg: &RunConfig) -> Result<(f64, f64)> {
    let grid = GridSpec::new(cfg.length, cfg.closure_nx)?;
    let axis = BinAxis::new(cfg.closure_vbox.0, cfg.closure_vbox.1, cfg.closure_nv)?;
    let u0 = InitialProfile::parse(&cfg.profile, &grid, cfg.epsilon)?.sample(&grid)?;
    let f0 = CdfField::smoothed_step_default(grid, axis, &u0)?;
    let out = solve_f_closure(&f0, &cfg.flux, cfg.epsilon, cfg.closure_t, &[], ClosureOptions::default())?;
    let tr = solve_viscous(&u0, &cfg.flux, cfg.epsilon, &grid, &[cfg.closure_t], 0)?;
    let m = out.means.last().expect("final time stored");
    let u = tr.field(tr.n_snapshots() - 1);
    let err = m.iter().zip(u).fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
    Ok((err, out.max_monotonicity_violation()))
}

fn closure_det_rows(cfg: &RunConfig) -> Result<Vec<CheckRow>> {
    let (err, mono) = closure_det_error(cfg)?;
    let loc = format!("t={};nx={};nv={}", cfg.closure_t, cfg.closure_nx, cfg.closure_nv);
    Ok(vec![
        CheckRow::new("closure-det", &loc, "max_mean_error", err, 0.0, CLOSURE_DET_TOL, Verdict::from_bool(err <= CLOSURE_DET_TOL)),
        CheckRow::new(
            "closure-det",
            &loc,
            "max_monotonicity_violation",
            mono,
            0.0,
            MONOTONICITY_TOL,
            Verdict::from_bool(mono <= MONOTONICITY_TOL),
        ),
    ])
}

/// Transport-only closure solve (`eps = 0`) of
/// `F0 = 1/2 (1 + tanh((v - c(x)) / 0.15))`, `c(x) = 0.5 + 0.25 sin(2 pi x / L)`,
/// against the characteristics solution `F0(x - g'(v) t, v)`. Returns the
/// max-norm error and the worst monotonicity violation.
pub fn closure_transport_error(cfg: &RunConfig, n_x: usize) -> Result<(f64, f64)> {
    let grid = GridSpec::new(cfg.length, n_x)?;
    let axis = BinAxis::new(cfg.closure_vbox.0, cfg.closure_vbox.1, cfg.closure_nv)?;
    let l = cfg.length;
    let f0 = |x: f64, v: f64| {
        let c = 0.5 + 0.25 * (2.0 * std::f64::consts::PI * x / l).sin();
        0.5 * (1.0 + ((v - c) / 0.15).tanh())
    };
    let init = CdfField::from_fn(grid, axis, f0)?;
    let out = solve_f_closure(&init, &cfg.flux, 0.0, cfg.closure_t, &[], ClosureOptions::default())?;
    let fin = out.fields.last().expect("final time stored");
    let gp = cfg.flux.derivative(1);
    let mut err = 0.0f64;
    for i in 0..grid.n_x() {
        for k in 1..axis.n_bins() {
            let v = axis.edge(k);
            let exact = f0(grid.x(i) - gp.eval(v) * cfg.closure_t, v);
            err = err.max((fin.value(i, k) - exact).abs());
        }
    }
    Ok((err, out.max_monotonicity_violation()))
}

fn closure_transport_rows(cfg: &RunConfig) -> Result<Vec<CheckRow>> {
    let n = cfg.closure_nx;
    let (e1, m1) = closure_transport_error(cfg, n)?;
    let (e2, m2) = closure_transport_error(cfg, 2 * n)?;
    let (e3, m3) = closure_transport_error(cfg, 4 * n)?;
    let loc = format!("t={};nv={}", cfg.closure_t, cfg.closure_nv);
    let mono = m1.max(m2).max(m3);
    Ok(vec![
        CheckRow::new("closure-transport", &loc, format!("max_error_nx{}", 4 * n), e3, 0.0, f64::NAN, Verdict::Pass),
        CheckRow::new(
            "closure-transport",
            &loc,
            format!("error_ratio_nx{n}_over_nx{}", 2 * n),
            e1 / e2,
            0.0,
            TRANSPORT_RATIO,
            Verdict::from_bool(e1 / e2 >= TRANSPORT_RATIO),
        ),
        CheckRow::new(
            "closure-transport",
            &loc,
            format!("error_ratio_nx{}_over_nx{}", 2 * n, 4 * n),
            e2 / e3,
            0.0,
            TRANSPORT_RATIO,
            Verdict::from_bool(e2 / e3 >= TRANSPORT_RATIO),
        ),
        CheckRow::new(
            "closure-transport",
            &loc,
            "max_monotonicity_violation",
            mono,
            0.0,
            MONOTONICITY_TOL,
            Verdict::from_bool(mono <= MONOTONICITY_TOL),
        ),
    ])
}

/// Axes resolved against the run's samples.
struct Axes {
    v: BinAxis,
    a1: BinAxis,
    closure: BinAxis,
}

fn resolve_axes(cfg: &RunConfig, run: &EnsembleRun, snapshot: usize, x: usize) -> Result<Axes> {
    let grid = run.grid();
    let n_snap = run.times().len();
    let near: Vec<usize> = (snapshot.saturating_sub(2)..(snapshot + 3).min(n_snap)).collect();
    let xs: Vec<usize> = (-2..=2).map(|o| grid.wrap(x, o)).collect();
    let resolve = |spec: AxisSpec, order: usize, snaps: &[usize], xs: &[usize]| -> Result<BinAxis> {
        match spec {
            AxisSpec::Fixed(a) => Ok(a),
            AxisSpec::Auto { n_bins } => covering_axis(run, snaps, xs, order, n_bins, 0.02),
        }
    };
    let all_x: Vec<usize> = (0..grid.n_x()).collect();
    Ok(Axes {
        v: resolve(cfg.v_axis, 0, &near, &all_x)?,
        a1: if run.deriv_order() >= 1 { resolve(cfg.a1_axis, 1, &[snapshot], &xs)? } else { BinAxis::new(-1.0, 1.0, 2)? },
        closure: resolve(cfg.closure_axis, 0, &[snapshot], &all_x)?,
    })
}

fn statistical_rows(cfg: &RunConfig, run: &EnsembleRun, check: Check, axes: &Axes) -> Result<Vec<CheckRow>> {
    let grid = run.grid();
    let s = cfg.probe_snapshot().expect("validated");
    let x = grid.nearest_index(cfg.probe_x);
    let boot = Bootstrap::new(cfg.replicates, cfg.base_seed);
    let bumps = Bump::spread(axes.v.lo(), axes.v.hi());
    Ok(match check {
        Check::Side => side_condition_report(run, s, x, &cfg.coincidence, axes.v, &boot)?.rows(),
        Check::Hier => verify_hier_identity(run, s, x, axes.v, &cfg.separations, cfg.min_count, &boot)?.rows(),
        Check::F1 => residual_f1(run, s, x, axes.v, &bumps, &boot)?.iter().flat_map(|r| r.rows()).collect(),
        Check::Q0 => residual_q0(run, s, x, axes.v, axes.a1, &bumps, &boot)?.iter().flat_map(|r| r.rows()).collect(),
        Check::Chain => {
            let mut rows = chain_rule_check(run, s, x, 0, Eta::X, &PowerTest(vec![2]), &boot)?.rows();
            let half = |a: &BinAxis| Bump::new(0.5 * (a.lo() + a.hi()), 0.5 * (a.hi() - a.lo()));
            let phi = ProductBump(vec![half(&axes.v), half(&axes.a1)]);
            rows.extend(chain_rule_check(run, s, x, 1, Eta::T, &phi, &boot)?.rows());
            rows
        }
        Check::Closure => {
            let xs = [x, grid.wrap(x, cfg.closure_offsets[0] as isize), grid.wrap(x, cfg.closure_offsets[1] as isize)];
            closure_consistency(run, s, xs, [axes.closure; 3], &boot)?.rows()
        }
        _ => unreachable!("not a statistical check"),
    })
}

/// All report rows for a validated config, in check order.
pub fn evaluate(cfg: &RunConfig) -> Result<(Option<EnsembleRun>, Vec<CheckRow>)> {
    cfg.validate()?;
    let run = if cfg.checks.iter().any(|c| c.needs_ensemble()) { Some(run_ensemble(&cfg.ensemble_spec()?)?) } else { None };
    let mut rows = Vec::new();
    let mut axes = None;
    for &check in &cfg.checks {
        match check {
            Check::Mass => rows.extend(mass_rows(run.as_ref().expect("ensemble built"))),
            Check::HeatOracle => rows.extend(heat_rows(run.as_ref().expect("ensemble built"))),
            Check::ColeHopf => rows.extend(cole_hopf_rows(cfg)?),
            Check::ClosureDet => rows.extend(closure_det_rows(cfg)?),
            Check::ClosureTransport => rows.extend(closure_transport_rows(cfg)?),
            _ => {
                let run = run.as_ref().expect("ensemble built");
                if axes.is_none() {
                    let s = cfg.probe_snapshot().expect("validated");
                    axes = Some(resolve_axes(cfg, run, s, run.grid().nearest_index(cfg.probe_x))?);
                }
                rows.extend(statistical_rows(cfg, run, check, axes.as_ref().expect("resolved"))?);
            }
        }
    }
    Ok((run, rows))
}

/// Outcome of [`run_pipeline`].
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutcome {
    pub dir: PathBuf,
    pub rows: Vec<CheckRow>,
    pub status: Verdict,
}

impl PipelineOutcome {
    pub fn failed(&self) -> bool {
        self.status.is_fail()
    }
}

pub fn summary_text(cfg: &RunConfig, rows: &[CheckRow]) -> String {
    let mut out = format!("run {} ({})\n", cfg.name, cfg.digest());
    for &check in &cfg.checks {
        let mine: Vec<&CheckRow> = rows.iter().filter(|r| r.check == check.name()).collect();
        let v = Verdict::all(mine.iter().map(|r| r.verdict));
        let label = match v {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Inconclusive => "INCONCLUSIVE",
        };
        out.push_str(&format!("{:<18} {label:<13} {} rows\n", check.name(), mine.len()));
    }
    let overall = Verdict::all(rows.iter().map(|r| r.verdict));
    out.push_str(&format!("overall: {}\n", if overall.is_fail() { "FAIL" } else { "PASS" }));
    out
}

/// Ensemble, estimates and requested checks; writes `config.txt`,
/// `report.csv` and `summary.txt` under `out_root/<run dir name>`.
pub fn run_pipeline(cfg: &RunConfig, out_root: &Path) -> Result<PipelineOutcome> {
    let (_, rows) = evaluate(cfg)?;
    let dir = out_root.join(cfg.run_dir_name());
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.txt"), cfg.canonical())?;
    fs::write(dir.join("report.csv"), to_csv(&rows))?;
    fs::write(dir.join("summary.txt"), summary_text(cfg, &rows))?;
    let status = Verdict::all(rows.iter().map(|r| r.verdict));
    Ok(PipelineOutcome { dir, rows, status })
}

/// [`run_pipeline`] on a dedicated pool of `workers` threads.
pub fn run_pipeline_with_workers(cfg: &RunConfig, out_root: &Path, workers: usize) -> Result<PipelineOutcome> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Argument(format!("cannot build worker pool: {e}")))?;
    pool.install(|| run_pipeline(cfg, out_root))
}

/// Reads a config file written by [`run_pipeline`] (or by hand).
pub fn load_config(path: &Path) -> Result<RunConfig> {
    RunConfig::parse(&fs::read_to_string(path)?)
}

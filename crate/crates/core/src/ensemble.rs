//! Random initial data `u0(x, xi)` driven by a scalar random variable `xi`,
//! reproducible sampling of `xi`, and batch execution of deterministic solves.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{arg, Error, Result};
use crate::flux::FluxModel;
use crate::rng;
use crate::solver::{solve_viscous, GridSpec, Trajectory};

/// Law of the scalar random variable `xi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum XiDistribution {
    Uniform { a: f64, b: f64 },
    Normal { mu: f64, sigma: f64 },
    Degenerate(f64),
}

impl XiDistribution {
    pub fn validate(&self) -> Result<()> {
        match *self {
            XiDistribution::Uniform { a, b } if !(a < b && a.is_finite() && b.is_finite()) => {
                arg(format!("uniform({a}, {b}) needs finite a < b"))
            }
            XiDistribution::Normal { mu, sigma } if !(sigma > 0.0 && sigma.is_finite() && mu.is_finite()) => {
                arg(format!("normal({mu}, {sigma}) needs sigma > 0"))
            }
            XiDistribution::Degenerate(x) if !x.is_finite() => arg("degenerate point must be finite"),
            _ => Ok(()),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            XiDistribution::Uniform { a, b } => 0.5 * (a + b),
            XiDistribution::Normal { mu, .. } => mu,
            XiDistribution::Degenerate(x) => x,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self, XiDistribution::Degenerate(_))
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            XiDistribution::Uniform { a, b } => a + (b - a) * rng.random::<f64>(),
            XiDistribution::Normal { mu, sigma } => {
                let z: f64 = rng.sample(StandardNormal);
                mu + sigma * z
            }
            XiDistribution::Degenerate(x) => x,
        }
    }
}

impl fmt::Display for XiDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            XiDistribution::Uniform { a, b } => write!(f, "uniform:{a},{b}"),
            XiDistribution::Normal { mu, sigma } => write!(f, "normal:{mu},{sigma}"),
            XiDistribution::Degenerate(x) => write!(f, "degenerate:{x}"),
        }
    }
}

impl FromStr for XiDistribution {
    type Err = Error;

    /// `uniform:a,b`, `normal:mu,sigma` or `degenerate:x0`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, params) = s.split_once(':').unwrap_or((s, ""));
        let p = parse_params(params, s)?;
        let d = match (kind.trim(), p.as_slice()) {
            ("uniform", [a, b]) => XiDistribution::Uniform { a: *a, b: *b },
            ("normal", [mu, sigma]) => XiDistribution::Normal { mu: *mu, sigma: *sigma },
            ("degenerate", [x]) => XiDistribution::Degenerate(*x),
            _ => return arg(format!("bad distribution {s:?}")),
        };
        d.validate()?;
        Ok(d)
    }
}

fn parse_params(params: &str, whole: &str) -> Result<Vec<f64>> {
    if params.trim().is_empty() {
        return Ok(Vec::new());
    }
    params
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| Error::Argument(format!("bad number {t:?} in {whole:?}"))))
        .collect()
}

/// Family of initial data indexed by `xi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RandomInitialFamily {
    /// `A sin(2 pi x / L + xi)`.
    PhaseSine { amplitude: f64 },
    /// `xi sin(2 pi x / L)`.
    AmplitudeSine,
    /// `u0 = xi`.
    Constant,
}

impl RandomInitialFamily {
    pub fn initial_data(&self, xi: f64, grid: &GridSpec) -> Vec<f64> {
        let k = 2.0 * std::f64::consts::PI / grid.length();
        let xs = grid.nodes();
        match *self {
            RandomInitialFamily::PhaseSine { amplitude } => xs.iter().map(|&x| amplitude * (k * x + xi).sin()).collect(),
            RandomInitialFamily::AmplitudeSine => xs.iter().map(|&x| xi * (k * x).sin()).collect(),
            RandomInitialFamily::Constant => vec![xi; grid.n_x()],
        }
    }
}

impl fmt::Display for RandomInitialFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RandomInitialFamily::PhaseSine { amplitude } => write!(f, "phase-sine:{amplitude}"),
            RandomInitialFamily::AmplitudeSine => write!(f, "amplitude-sine"),
            RandomInitialFamily::Constant => write!(f, "constant"),
        }
    }
}

impl FromStr for RandomInitialFamily {
    type Err = Error;

    /// `phase-sine:A`, `amplitude-sine` or `constant`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, params) = s.split_once(':').unwrap_or((s, ""));
        let p = parse_params(params, s)?;
        match (kind.trim(), p.as_slice()) {
            ("phase-sine", [a]) if a.is_finite() => Ok(RandomInitialFamily::PhaseSine { amplitude: *a }),
            ("phase-sine", []) => Ok(RandomInitialFamily::PhaseSine { amplitude: 1.0 }),
            ("amplitude-sine", []) => Ok(RandomInitialFamily::AmplitudeSine),
            ("constant", []) => Ok(RandomInitialFamily::Constant),
            _ => arg(format!("bad initial family {s:?}")),
        }
    }
}

/// `n` i.i.d. draws; draw `i` depends only on `(base_seed, i)`.
pub fn sample_xi(dist: &XiDistribution, n: usize, base_seed: u64) -> Result<Vec<f64>> {
    dist.validate()?;
    if n == 0 {
        return arg("sample size must be positive");
    }
    Ok((0..n).map(|i| xi_for_member(dist, base_seed, i)).collect())
}

fn xi_for_member(dist: &XiDistribution, base_seed: u64, index: usize) -> f64 {
    let mut r = rng::stream(base_seed, index as u64);
    dist.draw(&mut r)
}

/// Everything needed to reproduce an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub family: RandomInitialFamily,
    pub dist: XiDistribution,
    pub members: usize,
    pub flux: FluxModel,
    pub epsilon: f64,
    pub grid: GridSpec,
    pub times: Vec<f64>,
    pub deriv_order: usize,
    pub base_seed: u64,
}

impl EnsembleSpec {
    /// Key-sorted canonical text form.
    pub fn canonical(&self) -> String {
        format!(
            "base_seed={}\ncfl_safety={}\nderiv_order={}\ndist={}\nepsilon={}\nfamily={}\nflux={}\nlength={}\nmembers={}\nn_x={}\ntimes={}\n",
            self.base_seed,
            self.grid.cfl_safety(),
            self.deriv_order,
            self.dist,
            self.epsilon,
            self.family,
            self.flux,
            self.grid.length(),
            self.members,
            self.grid.n_x(),
            self.times.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(","),
        )
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }
}

/// Completed ensemble; immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleRun {
    spec: EnsembleSpec,
    xi_values: Vec<f64>,
    trajectories: Vec<Trajectory>,
    config_digest: String,
}

impl EnsembleRun {
    pub fn spec(&self) -> &EnsembleSpec {
        &self.spec
    }

    pub fn base_seed(&self) -> u64 {
        self.spec.base_seed
    }

    pub fn xi_values(&self) -> &[f64] {
        &self.xi_values
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn member(&self, i: usize) -> &Trajectory {
        &self.trajectories[i]
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn grid(&self) -> &GridSpec {
        &self.spec.grid
    }

    pub fn epsilon(&self) -> f64 {
        self.spec.epsilon
    }

    pub fn flux(&self) -> &FluxModel {
        &self.spec.flux
    }

    /// Snapshot times shared by every member (with `t = 0` first).
    pub fn times(&self) -> &[f64] {
        self.trajectories[0].times()
    }

    pub fn deriv_order(&self) -> usize {
        self.spec.deriv_order
    }

    pub fn config_digest(&self) -> &str {
        &self.config_digest
    }

    /// `d^order u / dx^order` at `(snapshot, i)` for every member.
    pub fn samples(&self, snapshot: usize, order: usize, i: usize) -> Vec<f64> {
        self.trajectories.iter().map(|t| t.value(snapshot, order, i)).collect()
    }

    /// Members `range` as a standalone run (same spec and digest).
    pub fn slice(&self, range: std::ops::Range<usize>) -> EnsembleRun {
        EnsembleRun {
            spec: self.spec.clone(),
            xi_values: self.xi_values[range.clone()].to_vec(),
            trajectories: self.trajectories[range].to_vec(),
            config_digest: self.config_digest.clone(),
        }
    }
}

/// Solves every member of the ensemble. Members are keyed by index, so the
/// result does not depend on how the rayon pool schedules them.
pub fn run_ensemble(spec: &EnsembleSpec) -> Result<EnsembleRun> {
    if spec.members == 0 {
        return arg("ensemble needs at least one member");
    }
    spec.dist.validate()?;
    if !(spec.epsilon >= 0.0) {
        return arg(format!("epsilon must be non-negative, got {}", spec.epsilon));
    }
    let results: Vec<(f64, Result<Trajectory>)> = (0..spec.members)
        .into_par_iter()
        .map(|i| {
            let xi = xi_for_member(&spec.dist, spec.base_seed, i);
            let u0 = spec.family.initial_data(xi, &spec.grid);
            (xi, solve_viscous(&u0, &spec.flux, spec.epsilon, &spec.grid, &spec.times, spec.deriv_order))
        })
        .collect();
    let mut xi_values = Vec::with_capacity(spec.members);
    let mut trajectories = Vec::with_capacity(spec.members);
    for (index, (xi, r)) in results.into_iter().enumerate() {
        match r {
            Ok(t) => trajectories.push(t),
            Err(e) => return Err(Error::Member { index, xi, source: Box::new(e) }),
        }
        xi_values.push(xi);
    }
    Ok(EnsembleRun { spec: spec.clone(), xi_values, trajectories, config_digest: spec.digest() })
}

/// Deterministic quadrature for `E[h(xi)]`: Gauss-Legendre for uniform,
/// Gauss-Hermite for normal, a single node for degenerate. Weights sum to 1.
pub fn quadrature_xi(dist: &XiDistribution, n_nodes: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    dist.validate()?;
    if n_nodes == 0 {
        return arg("quadrature needs at least one node");
    }
    Ok(match *dist {
        XiDistribution::Degenerate(x) => (vec![x], vec![1.0]),
        XiDistribution::Uniform { a, b } => {
            let (x, w) = gauss_legendre(n_nodes);
            let nodes = x.iter().map(|&t| 0.5 * (a + b) + 0.5 * (b - a) * t).collect();
            (nodes, w.iter().map(|&w| 0.5 * w).collect())
        }
        XiDistribution::Normal { mu, sigma } => {
            let (x, w) = gauss_hermite(n_nodes);
            let s = std::f64::consts::PI.sqrt();
            let nodes = x.iter().map(|&t| mu + std::f64::consts::SQRT_2 * sigma * t).collect();
            (nodes, w.iter().map(|&w| w / s).collect())
        }
    })
}

/// Nodes (ascending) and weights on `[-1, 1]`; weights sum to 2.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 1..=m {
        let mut z = (std::f64::consts::PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j - 1) as f64 * z * p2 - (j - 1) as f64 * p3) / j as f64;
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 {
                break;
            }
        }
        x[i - 1] = -z;
        x[n - i] = z;
        w[i - 1] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - i] = w[i - 1];
    }
    (x, w)
}

/// Nodes (ascending) and weights for the weight `exp(-x^2)`; weights sum to
/// `sqrt(pi)`. Newton iteration on the orthonormal Hermite recurrence.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    const PIM4: f64 = 0.751_125_544_464_942_5;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (PIM4, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-14 {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    // Built from the largest root down; flip to ascending.
    x.reverse();
    w.reverse();
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_distributions() {
        assert_eq!("uniform:0,1".parse::<XiDistribution>().unwrap(), XiDistribution::Uniform { a: 0.0, b: 1.0 });
        assert_eq!("degenerate:3".parse::<XiDistribution>().unwrap(), XiDistribution::Degenerate(3.0));
        assert!("uniform:1,0".parse::<XiDistribution>().is_err());
        assert!("normal:0,0".parse::<XiDistribution>().is_err());
        assert!("cauchy:0,1".parse::<XiDistribution>().is_err());
        let d = XiDistribution::Normal { mu: 1.5, sigma: 0.25 };
        assert_eq!(d.to_string().parse::<XiDistribution>().unwrap(), d);
    }

    #[test]
    fn parse_families() {
        assert_eq!(
            "phase-sine:0.5".parse::<RandomInitialFamily>().unwrap(),
            RandomInitialFamily::PhaseSine { amplitude: 0.5 }
        );
        assert_eq!("constant".parse::<RandomInitialFamily>().unwrap(), RandomInitialFamily::Constant);
        assert!("amplitude-sine:2".parse::<RandomInitialFamily>().is_err());
    }

    #[test]
    fn degenerate_samples() {
        assert_eq!(sample_xi(&XiDistribution::Degenerate(3.0), 5, 11).unwrap(), vec![3.0; 5]);
    }

    #[test]
    fn uniform_sample_mean() {
        let s = sample_xi(&XiDistribution::Uniform { a: 0.0, b: 1.0 }, 10_000, 2024).unwrap();
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        assert!((mean - 0.5).abs() <= 0.0087, "mean {mean}");
        assert!(s.iter().all(|&v| (0.0..1.0).contains(&v)));
    }

    #[test]
    fn sampling_is_deterministic_and_prefix_stable() {
        let d = XiDistribution::Normal { mu: 0.0, sigma: 1.0 };
        let a = sample_xi(&d, 100, 5).unwrap();
        assert_eq!(a, sample_xi(&d, 100, 5).unwrap());
        assert_eq!(&a[..10], sample_xi(&d, 10, 5).unwrap().as_slice());
        assert_ne!(a, sample_xi(&d, 100, 6).unwrap());
        assert!(sample_xi(&d, 0, 5).is_err());
    }

    #[test]
    fn quadrature_examples() {
        let (n, w) = quadrature_xi(&XiDistribution::Degenerate(2.0), 1).unwrap();
        assert_eq!((n, w), (vec![2.0], vec![1.0]));

        let (n, w) = quadrature_xi(&XiDistribution::Uniform { a: -1.0, b: 1.0 }, 2).unwrap();
        let r = 1.0 / 3f64.sqrt();
        assert!((n[0] + r).abs() < 1e-15 && (n[1] - r).abs() < 1e-15);
        assert!((w[0] - 0.5).abs() < 1e-15 && (w[1] - 0.5).abs() < 1e-15);

        for k in [1, 3, 8, 20] {
            let (_, w) = quadrature_xi(&XiDistribution::Uniform { a: 0.0, b: 1.0 }, k).unwrap();
            assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-14);
        }
    }

    #[test]
    fn hermite_integrates_normal_moments() {
        let d = XiDistribution::Normal { mu: 1.0, sigma: 2.0 };
        let (n, w) = quadrature_xi(&d, 10).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-13);
        let m1: f64 = n.iter().zip(&w).map(|(x, w)| x * w).sum();
        let m2: f64 = n.iter().zip(&w).map(|(x, w)| (x - 1.0).powi(2) * w).sum();
        let m4: f64 = n.iter().zip(&w).map(|(x, w)| (x - 1.0).powi(4) * w).sum();
        assert!((m1 - 1.0).abs() < 1e-12);
        assert!((m2 - 4.0).abs() < 1e-11);
        assert!((m4 - 48.0).abs() < 1e-9);
        assert!(n.windows(2).all(|p| p[0] < p[1]));
    }
}

//! Method-of-lines solver for `u_t + g(u)_x = eps * u_xx` on a periodic
//! interval, plus stencil derivatives of the solution.
//!
//! Space: conservative central flux difference and the 3-point Laplacian.
//! Time: two-stage SSP Runge-Kutta (Heun). With the cell Peclet number
//! `max|g'| dx / eps <= 2` and the default CFL safety the forward-Euler stage
//! is a convex combination of neighbour values, so the scheme satisfies the
//! discrete maximum principle.

use std::str::FromStr;

use crate::error::{arg, Error, Result};
use crate::flux::FluxModel;

/// Highest derivative order [`spatial_derivatives`] will produce.
pub const MAX_DERIV_ORDER: usize = 4;

/// Uniform periodic grid on `[0, length)` with cell centres `x_i = i * dx`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    length: f64,
    n_x: usize,
    cfl_safety: f64,
}

impl GridSpec {
    pub const DEFAULT_SAFETY: f64 = 0.4;

    pub fn new(length: f64, n_x: usize) -> Result<Self> {
        Self::with_safety(length, n_x, Self::DEFAULT_SAFETY)
    }

    pub fn with_safety(length: f64, n_x: usize, cfl_safety: f64) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return arg(format!("grid length must be positive, got {length}"));
        }
        if n_x < 8 {
            return arg(format!("grid needs n_x >= 8, got {n_x}"));
        }
        if !(cfl_safety > 0.0 && cfl_safety <= 1.0) {
            return arg(format!("cfl_safety must lie in (0, 1], got {cfl_safety}"));
        }
        Ok(Self { length, n_x, cfl_safety })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn cfl_safety(&self) -> f64 {
        self.cfl_safety
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n_x as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.dx() * i as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_x).map(|i| self.x(i)).collect()
    }

    /// Index of `i + offset` with periodic wrap.
    pub fn wrap(&self, i: usize, offset: isize) -> usize {
        let n = self.n_x as isize;
        (((i as isize + offset) % n + n) % n) as usize
    }

    /// Grid index closest to `x` (after periodic reduction).
    pub fn nearest_index(&self, x: f64) -> usize {
        let r = (x / self.dx()).round() as isize;
        self.wrap(0, r)
    }
}

/// Solution snapshots of one deterministic solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    fields: Vec<Vec<f64>>,
    deriv_order: usize,
    /// `derivs[s][k - 1]` is `d^k u / dx^k` at snapshot `s`.
    derivs: Vec<Vec<Vec<f64>>>,
}

impl Trajectory {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn n_snapshots(&self) -> usize {
        self.times.len()
    }

    pub fn deriv_order(&self) -> usize {
        self.deriv_order
    }

    pub fn field(&self, snapshot: usize) -> &[f64] {
        &self.fields[snapshot]
    }

    /// Order-`k` derivative at a snapshot; order 0 is the field itself.
    pub fn deriv(&self, snapshot: usize, order: usize) -> &[f64] {
        if order == 0 {
            &self.fields[snapshot]
        } else {
            &self.derivs[snapshot][order - 1]
        }
    }

    pub fn value(&self, snapshot: usize, order: usize, i: usize) -> f64 {
        self.deriv(snapshot, order)[i]
    }

    /// Snapshot index whose time equals `t` up to rounding.
    pub fn snapshot_index(&self, t: f64) -> Option<usize> {
        let tol = 1e-12 * (1.0 + t.abs());
        self.times.iter().position(|&s| (s - t).abs() <= tol)
    }

    /// `sum_i u_i * dx` at a snapshot.
    pub fn mass(&self, snapshot: usize, dx: f64) -> f64 {
        self.fields[snapshot].iter().sum::<f64>() * dx
    }
}

/// Stable explicit time step:
/// `safety * min(dx / max|g'|, dx^2 / (2 eps))` over `u in [u_min, u_max]`,
/// dropping whichever bound does not exist.
pub fn stability_dt(grid: &GridSpec, m: &FluxModel, epsilon: f64, u_min: f64, u_max: f64) -> Result<f64> {
    if !(u_min <= u_max) {
        return arg(format!("u_min ({u_min}) must not exceed u_max ({u_max})"));
    }
    if !(epsilon >= 0.0) {
        return arg(format!("epsilon must be non-negative, got {epsilon}"));
    }
    let dx = grid.dx();
    let speed = m.max_abs_speed(u_min, u_max);
    let mut bound = f64::INFINITY;
    if speed > 0.0 {
        bound = bound.min(dx / speed);
    }
    if epsilon > 0.0 {
        bound = bound.min(dx * dx / (2.0 * epsilon));
    }
    if bound.is_infinite() {
        return Err(Error::UnboundedDt);
    }
    Ok(grid.cfl_safety * bound)
}

/// Explicit override for the time step used by [`solve_viscous_with`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SolveOptions {
    /// Upper bound on dt; required when no stability bound exists.
    pub max_dt: Option<f64>,
}

pub fn solve_viscous(
    u0: &[f64],
    m: &FluxModel,
    epsilon: f64,
    grid: &GridSpec,
    times: &[f64],
    deriv_order: usize,
) -> Result<Trajectory> {
    solve_viscous_with(u0, m, epsilon, grid, times, deriv_order, SolveOptions::default())
}

/// Integrates from `t = 0` and records the requested snapshot times; `t = 0`
/// is prepended when absent. Each snapshot is hit exactly by shortening the
/// last step before it.
pub fn solve_viscous_with(
    u0: &[f64],
    m: &FluxModel,
    epsilon: f64,
    grid: &GridSpec,
    times: &[f64],
    deriv_order: usize,
    opts: SolveOptions,
) -> Result<Trajectory> {
    if u0.len() != grid.n_x() {
        return arg(format!("u0 has {} values, grid has {}", u0.len(), grid.n_x()));
    }
    if deriv_order > MAX_DERIV_ORDER {
        return arg(format!("deriv_order {deriv_order} exceeds {MAX_DERIV_ORDER}"));
    }
    if times.is_empty() || times[0] < 0.0 || times.iter().any(|t| !t.is_finite()) {
        return arg("snapshot times must be finite, non-empty and start at t >= 0");
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return arg("snapshot times must be strictly ascending");
    }
    if u0.iter().any(|v| !v.is_finite()) {
        return Err(Error::BlowUp { time: 0.0 });
    }
    let mut snaps: Vec<f64> = Vec::with_capacity(times.len() + 1);
    if times[0] > 0.0 {
        snaps.push(0.0);
    }
    snaps.extend_from_slice(times);

    let (lo, hi) = u0.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let dt = match (stability_dt(grid, m, epsilon, lo, hi), opts.max_dt) {
        (Ok(dt), Some(cap)) => dt.min(cap),
        (Ok(dt), None) => dt,
        (Err(Error::UnboundedDt), Some(cap)) => cap,
        (Err(e), _) => return Err(e),
    };
    if !(dt > 0.0) {
        return arg(format!("time step must be positive, got {dt}"));
    }

    let mut stepper = Stepper::new(m, epsilon, grid);
    let mut u = u0.to_vec();
    let mut t = 0.0;
    let mut fields = Vec::with_capacity(snaps.len());
    let mut derivs = Vec::with_capacity(snaps.len());
    for &target in &snaps {
        while t < target {
            let remaining = target - t;
            let h = if remaining <= dt * (1.0 + 1e-12) { remaining } else { dt };
            stepper.step(&mut u, h);
            t = if h == remaining { target } else { t + h };
            if u.iter().any(|v| !v.is_finite()) {
                return Err(Error::BlowUp { time: t });
            }
        }
        derivs.push(spatial_derivatives(&u, deriv_order, grid)?);
        fields.push(u.clone());
    }
    Ok(Trajectory { times: snaps, fields, deriv_order, derivs })
}

struct Stepper<'a> {
    flux: &'a FluxModel,
    epsilon: f64,
    grid: GridSpec,
    g: Vec<f64>,
    k1: Vec<f64>,
    stage: Vec<f64>,
}

impl<'a> Stepper<'a> {
    fn new(flux: &'a FluxModel, epsilon: f64, grid: &GridSpec) -> Self {
        let n = grid.n_x();
        Self { flux, epsilon, grid: *grid, g: vec![0.0; n], k1: vec![0.0; n], stage: vec![0.0; n] }
    }

    fn rhs(flux: &FluxModel, epsilon: f64, grid: &GridSpec, g: &mut [f64], u: &[f64], out: &mut [f64]) {
        let n = u.len();
        let dx = grid.dx();
        let inv_2dx = 0.5 / dx;
        let nu = epsilon / (dx * dx);
        for (gi, &ui) in g.iter_mut().zip(u) {
            *gi = flux.eval(ui);
        }
        for i in 0..n {
            let ip = if i + 1 == n { 0 } else { i + 1 };
            let im = if i == 0 { n - 1 } else { i - 1 };
            out[i] = -(g[ip] - g[im]) * inv_2dx + nu * (u[ip] - 2.0 * u[i] + u[im]);
        }
    }

    /// Heun: `u1 = u + h L(u)`, `u <- (u + u1 + h L(u1)) / 2`.
    fn step(&mut self, u: &mut [f64], h: f64) {
        Self::rhs(self.flux, self.epsilon, &self.grid, &mut self.g, u, &mut self.k1);
        for ((s, &ui), &k) in self.stage.iter_mut().zip(u.iter()).zip(&self.k1) {
            *s = ui + h * k;
        }
        Self::rhs(self.flux, self.epsilon, &self.grid, &mut self.g, &self.stage, &mut self.k1);
        for ((ui, &s), &k) in u.iter_mut().zip(&self.stage).zip(&self.k1) {
            *ui = 0.5 * (*ui + s + h * k);
        }
    }
}

/// Periodic central first derivative.
pub fn central_diff(field: &[f64], dx: f64) -> Vec<f64> {
    let n = field.len();
    (0..n)
        .map(|i| {
            let ip = if i + 1 == n { 0 } else { i + 1 };
            let im = if i == 0 { n - 1 } else { i - 1 };
            (field[ip] - field[im]) / (2.0 * dx)
        })
        .collect()
}

/// Periodic 3-point Laplacian.
pub fn laplacian(field: &[f64], dx: f64) -> Vec<f64> {
    let n = field.len();
    (0..n)
        .map(|i| {
            let ip = if i + 1 == n { 0 } else { i + 1 };
            let im = if i == 0 { n - 1 } else { i - 1 };
            (field[ip] - 2.0 * field[i] + field[im]) / (dx * dx)
        })
        .collect()
}

/// Orders `1..=order` of `d^k u / dx^k`.
///
/// Order 2 is the 3-point Laplacian (the solver's operator); every other
/// order is the central first-derivative stencil applied to the previous one.
pub fn spatial_derivatives(field: &[f64], order: usize, grid: &GridSpec) -> Result<Vec<Vec<f64>>> {
    if order > MAX_DERIV_ORDER {
        return arg(format!("derivative order {order} exceeds {MAX_DERIV_ORDER}"));
    }
    if field.len() != grid.n_x() {
        return arg(format!("field has {} values, grid has {}", field.len(), grid.n_x()));
    }
    let dx = grid.dx();
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(order);
    for k in 1..=order {
        let next = match k {
            1 => central_diff(field, dx),
            2 => laplacian(field, dx),
            _ => central_diff(&out[k - 2], dx),
        };
        out.push(next);
    }
    Ok(out)
}

/// Deterministic initial profiles on a periodic grid.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialProfile {
    /// `amplitude * sin(2 pi x / L)`.
    Sine { amplitude: f64 },
    /// Single viscous Burgers front
    /// `(ul + ur)/2 - (ul - ur)/2 * tanh((ul - ur)(x - center) / (4 eps))`.
    /// Not periodic: the wrap point carries a jump from `ur` back to `ul`.
    TanhFront { u_left: f64, u_right: f64, center: f64, epsilon: f64 },
    /// Smooth periodic pair: a decreasing front at `L/4` and an increasing
    /// one at `3L/4`, each of the [`InitialProfile::TanhFront`] shape.
    TanhPair { u_high: f64, u_low: f64, epsilon: f64 },
    Constant(f64),
    /// Explicit grid values.
    Values(Vec<f64>),
}

impl InitialProfile {
    pub fn sample(&self, grid: &GridSpec) -> Result<Vec<f64>> {
        let l = grid.length();
        let xs = grid.nodes();
        let v = match self {
            InitialProfile::Sine { amplitude } => {
                xs.iter().map(|&x| amplitude * (2.0 * std::f64::consts::PI * x / l).sin()).collect()
            }
            InitialProfile::TanhFront { u_left, u_right, center, epsilon } => {
                xs.iter().map(|&x| tanh_front(x, *u_left, *u_right, *center, *epsilon)).collect()
            }
            InitialProfile::TanhPair { u_high, u_low, epsilon } => {
                let k = (u_high - u_low) / (4.0 * epsilon);
                xs.iter()
                    .map(|&x| {
                        u_high + 0.5 * (u_high - u_low) * (((x - 0.75 * l) * k).tanh() - ((x - 0.25 * l) * k).tanh())
                    })
                    .collect()
            }
            InitialProfile::Constant(c) => vec![*c; grid.n_x()],
            InitialProfile::Values(v) => {
                if v.len() != grid.n_x() {
                    return arg(format!("profile has {} values, grid has {}", v.len(), grid.n_x()));
                }
                v.clone()
            }
        };
        Ok(v)
    }

    /// Parses `sine`, `tanh`, `tanh-pair`, `const:<c>`, `file:<path>` (one
    /// value per line, or comma separated).
    pub fn parse(spec: &str, grid: &GridSpec, epsilon: f64) -> Result<Self> {
        let eps = if epsilon > 0.0 { epsilon } else { 0.1 };
        match spec {
            "sine" => Ok(InitialProfile::Sine { amplitude: 1.0 }),
            "tanh" => Ok(InitialProfile::TanhFront {
                u_left: 1.0,
                u_right: 0.0,
                center: 0.5 * grid.length(),
                epsilon: eps,
            }),
            "tanh-pair" => Ok(InitialProfile::TanhPair { u_high: 1.0, u_low: 0.0, epsilon: eps }),
            s if s.starts_with("const:") => s[6..]
                .trim()
                .parse::<f64>()
                .map(InitialProfile::Constant)
                .map_err(|_| Error::Argument(format!("bad constant in {s:?}"))),
            s if s.starts_with("file:") => {
                let text = std::fs::read_to_string(&s[5..])?;
                let vals = text
                    .split(|c: char| c == ',' || c.is_whitespace())
                    .filter(|t| !t.is_empty())
                    .map(|t| f64::from_str(t).map_err(|_| Error::Argument(format!("bad value {t:?} in {s}"))))
                    .collect::<Result<Vec<_>>>()?;
                Ok(InitialProfile::Values(vals))
            }
            other => arg(format!("unknown initial profile {other:?}")),
        }
    }
}

fn tanh_front(x: f64, ul: f64, ur: f64, center: f64, eps: f64) -> f64 {
    0.5 * (ul + ur) - 0.5 * (ul - ur) * ((ul - ur) * (x - center) / (4.0 * eps)).tanh()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn max_err(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn grid_rejects_bad_specs() {
        assert!(GridSpec::new(1.0, 7).is_err());
        assert!(GridSpec::new(0.0, 16).is_err());
        assert!(GridSpec::with_safety(1.0, 16, 1.5).is_err());
        let g = GridSpec::new(2.0 * PI, 256).unwrap();
        assert!((g.dx() * 256.0 - 2.0 * PI).abs() <= 2.0 * PI * f64::EPSILON);
    }

    #[test]
    fn wrap_and_nearest() {
        let g = GridSpec::new(1.0, 10).unwrap();
        assert_eq!(g.wrap(0, -1), 9);
        assert_eq!(g.wrap(9, 3), 2);
        assert_eq!(g.nearest_index(0.52), 5);
        assert_eq!(g.nearest_index(1.0), 0);
    }

    #[test]
    fn stability_dt_examples() {
        let g = GridSpec::with_safety(1.0, 100, 0.8).unwrap();
        let dt = stability_dt(&g, &FluxModel::zero(), 0.1, 0.0, 1.0).unwrap();
        assert!((dt - 4e-4).abs() < 1e-15);

        let g = GridSpec::with_safety(1.0, 10, 0.5).unwrap();
        let dt = stability_dt(&g, &FluxModel::burgers(), 0.0, -1.0, 1.0).unwrap();
        assert!((dt - 0.05).abs() < 1e-15);

        let g = GridSpec::with_safety(1.0, 10, 1.0).unwrap();
        let dt = stability_dt(&g, &FluxModel::burgers(), 0.1, 0.0, 1.0).unwrap();
        assert!((dt - 0.05).abs() < 1e-15);

        assert_eq!(stability_dt(&g, &FluxModel::zero(), 0.0, 0.0, 1.0), Err(Error::UnboundedDt));
        assert!(stability_dt(&g, &FluxModel::zero(), 0.1, 1.0, 0.0).is_err());
    }

    #[test]
    fn heat_mode_decays() {
        let g = GridSpec::new(2.0 * PI, 256).unwrap();
        let u0 = InitialProfile::Sine { amplitude: 1.0 }.sample(&g).unwrap();
        let tr = solve_viscous(&u0, &FluxModel::zero(), 0.1, &g, &[0.0, 1.0], 0).unwrap();
        let exact: Vec<f64> = g.nodes().iter().map(|x| (-0.1f64).exp() * x.sin()).collect();
        assert!(max_err(tr.field(1), &exact) <= 1e-4);
    }

    #[test]
    fn constants_are_exact_equilibria() {
        let g = GridSpec::new(3.0, 32).unwrap();
        let u0 = vec![0.7; 32];
        let tr = solve_viscous(&u0, &FluxModel::burgers(), 0.05, &g, &[0.5, 1.0], 2).unwrap();
        assert_eq!(tr.times(), &[0.0, 0.5, 1.0]);
        for s in 0..3 {
            assert!(tr.field(s).iter().all(|&v| v == 0.7));
            assert!(tr.deriv(s, 1).iter().all(|&v| v == 0.0));
            assert!(tr.deriv(s, 2).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn no_dynamics_without_flux_or_viscosity() {
        let g = GridSpec::new(1.0, 16).unwrap();
        let u0: Vec<f64> = (0..16).map(|i| (i as f64 * 0.37).sin()).collect();
        assert_eq!(
            solve_viscous(&u0, &FluxModel::zero(), 0.0, &g, &[1.0], 0),
            Err(Error::UnboundedDt)
        );
        let tr = solve_viscous_with(&u0, &FluxModel::zero(), 0.0, &g, &[0.3, 1.0], 0, SolveOptions { max_dt: Some(0.01) })
            .unwrap();
        assert_eq!(tr.field(2), u0.as_slice());
    }

    #[test]
    fn rejects_bad_times_and_detects_blowup() {
        let g = GridSpec::new(1.0, 16).unwrap();
        let u0 = vec![0.0; 16];
        assert!(solve_viscous(&u0, &FluxModel::burgers(), 0.1, &g, &[0.5, 0.2], 0).is_err());
        assert!(solve_viscous(&u0, &FluxModel::burgers(), 0.1, &g, &[-1.0], 0).is_err());
        let mut bad = u0.clone();
        bad[3] = f64::NAN;
        assert!(matches!(solve_viscous(&bad, &FluxModel::burgers(), 0.1, &g, &[0.5], 0), Err(Error::BlowUp { .. })));
    }

    #[test]
    fn derivative_stencils() {
        let g = GridSpec::new(2.0 * PI, 256).unwrap();
        let x = g.nodes();
        let f: Vec<f64> = x.iter().map(|x| x.sin()).collect();
        let d = spatial_derivatives(&f, 4, &g).unwrap();
        let cos: Vec<f64> = x.iter().map(|x| x.cos()).collect();
        let msin: Vec<f64> = f.iter().map(|v| -v).collect();
        assert!(max_err(&d[0], &cos) <= 1e-3);
        assert!(max_err(&d[1], &msin) <= 1e-2);
        let mcos: Vec<f64> = cos.iter().map(|v| -v).collect();
        assert!(max_err(&d[2], &mcos) <= 1e-2);
        assert!(max_err(&d[3], &f) <= 1e-2);
        let c = vec![7.0; 256];
        for k in spatial_derivatives(&c, 4, &g).unwrap() {
            assert!(k.iter().all(|&v| v == 0.0));
        }
        assert!(spatial_derivatives(&f, 5, &g).is_err());
    }

    #[test]
    fn profile_parsing() {
        let g = GridSpec::new(4.0, 16).unwrap();
        assert_eq!(InitialProfile::parse("const:2.5", &g, 0.1).unwrap(), InitialProfile::Constant(2.5));
        assert!(InitialProfile::parse("const:x", &g, 0.1).is_err());
        assert!(InitialProfile::parse("square", &g, 0.1).is_err());
        let wide = GridSpec::new(20.0, 16).unwrap();
        let pair = InitialProfile::parse("tanh-pair", &wide, 0.1).unwrap().sample(&wide).unwrap();
        assert!((pair[0] - 1.0).abs() < 1e-6 && pair[8].abs() < 1e-6);
    }
}

//! Polynomial flux models and the symbolic coefficients `C_k` of the
//! derivative-PDF master equations.
//!
//! The coefficients are obtained by differentiating `g(u)` in `x` while
//! treating `d^i u / dx^i` as the formal variable `a_i`. Under that
//! substitution the total `x`-derivative is the derivation `D(a_i) = a_{i+1}`
//! on polynomials in `a_0, a_1, ...`, and for a polynomial flux every `C_k`
//! is again a polynomial.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Neg, Sub};
use std::str::FromStr;

use crate::error::{Error, Result};

/// Polynomial flux `g(u) = sum_j c_j u^j`.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxModel {
    coeffs: Vec<f64>,
}

impl FluxModel {
    pub fn new(coeffs: impl Into<Vec<f64>>) -> Self {
        let mut coeffs = coeffs.into();
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    /// `g = 0`.
    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    /// Viscous Burgers flux `u^2 / 2`.
    pub fn burgers() -> Self {
        Self::new(vec![0.0, 0.0, 0.5])
    }

    /// Coefficients `c_0..c_deg`; empty for the zero flux.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Index of the last nonzero coefficient, `None` for `g = 0`.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Horner evaluation of `g(u)`.
    pub fn eval(&self, u: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * u + c)
    }

    /// `k`-th derivative `g^{(k)}(u)`; zero when `k` exceeds the degree.
    pub fn deriv(&self, k: usize, u: f64) -> f64 {
        if k >= self.coeffs.len() {
            return 0.0;
        }
        let mut acc = 0.0;
        for j in (k..self.coeffs.len()).rev() {
            acc = acc * u + self.coeffs[j] * falling_factorial(j, k);
        }
        acc
    }

    /// The polynomial of `g^{(k)}`.
    pub fn derivative(&self, k: usize) -> FluxModel {
        if k >= self.coeffs.len() {
            return FluxModel::zero();
        }
        let coeffs = (k..self.coeffs.len())
            .map(|j| self.coeffs[j] * falling_factorial(j, k))
            .collect::<Vec<_>>();
        FluxModel::new(coeffs)
    }

    /// `max |g'(u)|` over `[lo, hi]`.
    ///
    /// `g'` is a polynomial, so its extrema on the interval are attained at
    /// the endpoints or at real roots of `g''`; the roots are bracketed on a
    /// fine sample and refined by bisection.
    pub fn max_abs_speed(&self, lo: f64, hi: f64) -> f64 {
        let speed = |u: f64| self.deriv(1, u).abs();
        let mut best = speed(lo).max(speed(hi));
        if self.coeffs.len() <= 2 || hi <= lo {
            return best;
        }
        if self.coeffs.len() == 3 {
            // g' is linear: endpoints suffice.
            return best;
        }
        const SAMPLES: usize = 512;
        let g2 = |u: f64| self.deriv(2, u);
        let step = (hi - lo) / SAMPLES as f64;
        let mut a = lo;
        let mut fa = g2(a);
        for i in 1..=SAMPLES {
            let b = if i == SAMPLES { hi } else { lo + step * i as f64 };
            let fb = g2(b);
            best = best.max(speed(b));
            if fa == 0.0 {
                best = best.max(speed(a));
            } else if fa.signum() != fb.signum() && fb != 0.0 {
                let (mut l, mut r, mut fl) = (a, b, fa);
                for _ in 0..60 {
                    let m = 0.5 * (l + r);
                    let fm = g2(m);
                    if fm.signum() == fl.signum() {
                        l = m;
                        fl = fm;
                    } else {
                        r = m;
                    }
                }
                best = best.max(speed(0.5 * (l + r)));
            }
            a = b;
            fa = fb;
        }
        best
    }

    /// `g(a_0)` as a polynomial in the formal variables.
    pub fn to_multipoly(&self) -> MultiPoly {
        let mut p = MultiPoly::zero();
        for (j, &c) in self.coeffs.iter().enumerate() {
            p.add_term(Monomial::power(0, j as u32), c);
        }
        p
    }
}

impl FromStr for FluxModel {
    type Err = Error;

    /// Parses a comma-separated coefficient list `c0,c1,...`. An empty string
    /// is the zero flux.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(FluxModel::zero());
        }
        let coeffs = s
            .split(',')
            .map(|t| {
                let t = t.trim();
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Argument(format!("bad flux coefficient {t:?} in {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FluxModel::new(coeffs))
    }
}

impl fmt::Display for FluxModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.coeffs.iter().map(|c| c.to_string()).collect();
        write!(f, "{}", parts.join(","))
    }
}

fn falling_factorial(j: usize, k: usize) -> f64 {
    ((j - k + 1)..=j).fold(1.0, |acc, i| acc * i as f64)
}

/// Exponent vector over `a_0, a_1, ...` with trailing zeros trimmed, so that
/// equal monomials compare equal irrespective of how many variables exist.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Monomial(Vec<u32>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn new(exponents: impl Into<Vec<u32>>) -> Self {
        let mut e = exponents.into();
        while e.last() == Some(&0) {
            e.pop();
        }
        Monomial(e)
    }

    /// `a_var^exp`.
    pub fn power(var: usize, exp: u32) -> Self {
        let mut e = vec![0; var + 1];
        e[var] = exp;
        Monomial::new(e)
    }

    pub fn exponent(&self, var: usize) -> u32 {
        self.0.get(var).copied().unwrap_or(0)
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    /// Highest variable index with a positive exponent.
    pub fn max_var(&self) -> Option<usize> {
        self.0.len().checked_sub(1)
    }

    fn with_shift(&self, var: usize) -> Monomial {
        // a_var^e -> e * a_var^(e-1) * a_{var+1}; the factor e is applied by the caller.
        let mut e = self.0.clone();
        if e.len() < var + 2 {
            e.resize(var + 2, 0);
        }
        e[var] -= 1;
        e[var + 1] += 1;
        Monomial::new(e)
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let factors: Vec<String> = self
            .0
            .iter()
            .enumerate()
            .filter(|(_, &e)| e > 0)
            .map(|(i, &e)| if e == 1 { format!("a{i}") } else { format!("a{i}^{e}") })
            .collect();
        if factors.is_empty() {
            write!(f, "1")
        } else {
            write!(f, "{}", factors.join("*"))
        }
    }
}

/// Sparse multivariate polynomial in `a_0..a_K` with real coefficients.
///
/// Canonical form: no stored zero coefficients and monomials in a sorted
/// map, so `==` is structural equality of polynomials.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MultiPoly {
    terms: BTreeMap<Monomial, f64>,
}

impl MultiPoly {
    pub fn zero() -> Self {
        Self::default()
    }

    /// Single variable `a_i`.
    pub fn var(i: usize) -> Self {
        Self::from_terms([(Monomial::power(i, 1), 1.0)])
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (Monomial, f64)>) -> Self {
        let mut p = Self::zero();
        for (m, c) in terms {
            p.add_term(m, c);
        }
        p
    }

    pub fn add_term(&mut self, m: Monomial, c: f64) {
        if c == 0.0 {
            return;
        }
        let entry = self.terms.entry(m.clone()).or_insert(0.0);
        *entry += c;
        if *entry == 0.0 {
            self.terms.remove(&m);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn coeff(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Largest variable index present, `None` for constants.
    pub fn max_var(&self) -> Option<usize> {
        self.terms.keys().filter_map(Monomial::max_var).max()
    }

    pub fn scale(&self, s: f64) -> MultiPoly {
        MultiPoly::from_terms(self.terms.iter().map(|(m, &c)| (m.clone(), c * s)))
    }

    /// Evaluates at `a = values`; missing variables count as zero.
    pub fn eval(&self, values: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(m, &c)| {
                m.exponents()
                    .iter()
                    .enumerate()
                    .fold(c, |acc, (i, &e)| acc * values.get(i).copied().unwrap_or(0.0).powi(e as i32))
            })
            .sum()
    }
}

impl Add for &MultiPoly {
    type Output = MultiPoly;
    fn add(self, rhs: &MultiPoly) -> MultiPoly {
        let mut out = self.clone();
        for (m, c) in rhs.terms() {
            out.add_term(m.clone(), c);
        }
        out
    }
}

impl Sub for &MultiPoly {
    type Output = MultiPoly;
    fn sub(self, rhs: &MultiPoly) -> MultiPoly {
        let mut out = self.clone();
        for (m, c) in rhs.terms() {
            out.add_term(m.clone(), -c);
        }
        out
    }
}

impl Neg for &MultiPoly {
    type Output = MultiPoly;
    fn neg(self) -> MultiPoly {
        self.scale(-1.0)
    }
}

impl fmt::Display for MultiPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self.terms.iter().map(|(m, c)| format!("{c}*{m}")).collect();
        write!(f, "{}", parts.join(" + "))
    }
}

/// Total `x`-derivative under `D(a_i) = a_{i+1}`, applied with the product rule.
pub fn total_x_derivative(p: &MultiPoly) -> MultiPoly {
    let mut out = MultiPoly::zero();
    for (m, c) in p.terms() {
        for (var, &e) in m.exponents().iter().enumerate() {
            if e > 0 {
                out.add_term(m.with_shift(var), c * e as f64);
            }
        }
    }
    out
}

/// `D^n p`.
pub fn total_x_derivative_n(p: &MultiPoly, n: usize) -> MultiPoly {
    (0..n).fold(p.clone(), |acc, _| total_x_derivative(&acc))
}

/// Coefficients `C_0..C_N` of the order-`N` derivative-PDF master equation.
///
/// `C_k = D^{k+1} g(a_0)` for `k < N`; `C_N` is `D^{N+1} g(a_0)` with its only
/// `a_{N+1}`-dependent term `g'(a_0) a_{N+1}` removed.
pub fn hierarchy_coefficients(m: &FluxModel, order: usize) -> Vec<MultiPoly> {
    let g = m.to_multipoly();
    let mut out = Vec::with_capacity(order + 1);
    let mut d = g;
    for _ in 0..order {
        d = total_x_derivative(&d);
        out.push(d.clone());
    }
    d = total_x_derivative(&d);
    out.push(&d - &leading_transport_term(m, order + 1));
    out
}

/// `g'(a_0) * a_var` as a polynomial.
pub fn leading_transport_term(m: &FluxModel, var: usize) -> MultiPoly {
    let gp = m.derivative(1);
    let mut p = MultiPoly::zero();
    for (j, &c) in gp.coeffs().iter().enumerate() {
        let mut e = vec![0u32; var + 1];
        e[0] += j as u32;
        e[var] += 1;
        p.add_term(Monomial::new(e), c);
    }
    p
}

/// Output layout for [`format_hierarchy`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Text,
    Csv,
}

impl FromStr for TableFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(TableFormat::Text),
            "csv" => Ok(TableFormat::Csv),
            other => Err(Error::Argument(format!("unknown format {other:?} (expected text|csv)"))),
        }
    }
}

/// One row per monomial: `k, coeff, e_0..e_{N+1}`.
pub fn format_hierarchy(coeffs: &[MultiPoly], format: TableFormat) -> String {
    let n_vars = coeffs.len() + 1;
    let header: Vec<String> = ["k".to_string(), "coeff".to_string()]
        .into_iter()
        .chain((0..n_vars).map(|i| format!("a{i}")))
        .collect();
    let mut rows = vec![header];
    for (k, p) in coeffs.iter().enumerate() {
        for (m, c) in p.terms() {
            let mut row = vec![k.to_string(), c.to_string()];
            row.extend((0..n_vars).map(|i| m.exponent(i).to_string()));
            rows.push(row);
        }
    }
    match format {
        TableFormat::Csv => rows.iter().map(|r| r.join(",") + "\n").collect(),
        TableFormat::Text => {
            let widths: Vec<usize> =
                (0..rows[0].len()).map(|j| rows.iter().map(|r| r[j].len()).max().unwrap_or(0)).collect();
            let mut s = String::new();
            for r in &rows {
                let cells: Vec<String> =
                    r.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}", w = w)).collect();
                s.push_str(cells.join("  ").trim_end());
                s.push('\n');
            }
            for (k, p) in coeffs.iter().enumerate() {
                s.push_str(&format!("C{k} = {p}\n"));
            }
            s
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mono(e: &[u32]) -> Monomial {
        Monomial::new(e.to_vec())
    }

    #[test]
    fn eval_examples() {
        assert_eq!(FluxModel::burgers().eval(2.0), 2.0);
        assert_eq!(FluxModel::zero().eval(5.0), 0.0);
        assert_eq!(FluxModel::new(vec![0.0, 0.0, 0.0, 1.0]).eval(-1.0), -1.0);
    }

    #[test]
    fn deriv_examples() {
        let b = FluxModel::burgers();
        assert_eq!(b.deriv(1, 2.0), 2.0);
        assert_eq!(b.deriv(3, 7.0), 0.0);
        assert_eq!(FluxModel::new(vec![0.0, 0.0, 0.0, 1.0]).deriv(2, 2.0), 12.0);
        assert_eq!(b.deriv(0, 3.0), b.eval(3.0));
    }

    #[test]
    fn degree_trims_trailing_zeros() {
        assert_eq!(FluxModel::new(vec![1.0, 2.0, 0.0, 0.0]).degree(), Some(1));
        assert_eq!(FluxModel::new(vec![0.0]).degree(), None);
    }

    #[test]
    fn parse_flux_list() {
        assert_eq!("0,0,0.5".parse::<FluxModel>().unwrap(), FluxModel::burgers());
        assert!("1,,2".parse::<FluxModel>().is_err());
        assert!("1,x".parse::<FluxModel>().is_err());
        assert!("".parse::<FluxModel>().unwrap().is_zero());
    }

    #[test]
    fn max_speed_cubic_interior_extremum() {
        // g = u^3 - 3u: g' = 3u^2 - 3 has |g'| = 3 at u = 0, interior.
        let g = FluxModel::new(vec![0.0, -3.0, 0.0, 1.0]);
        assert!((g.max_abs_speed(-0.5, 0.5) - 3.0).abs() < 1e-12);
        assert_eq!(FluxModel::burgers().max_abs_speed(-1.0, 0.5), 1.0);
    }

    #[test]
    fn total_derivative_examples() {
        assert_eq!(total_x_derivative(&MultiPoly::var(0)), MultiPoly::var(1));

        let a0a1 = MultiPoly::from_terms([(mono(&[1, 1]), 1.0)]);
        let expect = MultiPoly::from_terms([(mono(&[0, 2]), 1.0), (mono(&[1, 0, 1]), 1.0)]);
        assert_eq!(total_x_derivative(&a0a1), expect);

        let a0sq = MultiPoly::from_terms([(mono(&[2]), 1.0)]);
        assert_eq!(total_x_derivative(&a0sq), MultiPoly::from_terms([(mono(&[1, 1]), 2.0)]));
    }

    #[test]
    fn derivative_of_constant_is_zero() {
        let c = MultiPoly::from_terms([(Monomial::one(), 4.0)]);
        assert!(total_x_derivative(&c).is_zero());
    }

    #[test]
    fn canonical_form_purges_cancelled_terms() {
        let p = MultiPoly::var(2);
        assert!((&p - &p).is_zero());
        assert_eq!((&p - &p), MultiPoly::zero());
    }

    #[test]
    fn burgers_order_two() {
        let c = hierarchy_coefficients(&FluxModel::burgers(), 2);
        assert_eq!(c.len(), 3);
        assert_eq!(c[0], MultiPoly::from_terms([(mono(&[1, 1]), 1.0)]));
        assert_eq!(c[1], MultiPoly::from_terms([(mono(&[0, 2]), 1.0), (mono(&[1, 0, 1]), 1.0)]));
        assert_eq!(c[2], MultiPoly::from_terms([(mono(&[0, 1, 1]), 3.0)]));
    }

    #[test]
    fn order_zero_coefficient_vanishes() {
        for g in [FluxModel::burgers(), FluxModel::new(vec![1.0, 2.0, 3.0, 4.0])] {
            let c = hierarchy_coefficients(&g, 0);
            assert_eq!(c, vec![MultiPoly::zero()]);
        }
    }

    #[test]
    fn table_has_one_row_per_monomial() {
        let c = hierarchy_coefficients(&FluxModel::burgers(), 2);
        let csv = format_hierarchy(&c, TableFormat::Csv);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "k,coeff,a0,a1,a2,a3");
        assert_eq!(lines.len(), 1 + 1 + 2 + 1);
        assert!(lines.contains(&"2,3,0,1,1,0"));
    }
}

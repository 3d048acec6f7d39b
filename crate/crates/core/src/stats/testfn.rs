//! Smooth test functions for weak-form residuals.

/// `exp(1 - 1/(1 - r^2))` with `r = (a - center) / half_width`; peak value 1,
/// support `(center - half_width, center + half_width)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub center: f64,
    pub half_width: f64,
}

impl Bump {
    pub fn new(center: f64, half_width: f64) -> Self {
        Self { center, half_width }
    }

    /// Three overlapping bumps centered at the quarter points of `[lo, hi]`.
    pub fn spread(lo: f64, hi: f64) -> Vec<Bump> {
        let q = (hi - lo) / 4.0;
        (1..=3).map(|k| Bump::new(lo + k as f64 * q, q)).collect()
    }

    pub fn value(&self, a: f64) -> f64 {
        let r = (a - self.center) / self.half_width;
        if r.abs() >= 1.0 {
            0.0
        } else {
            (1.0 - 1.0 / (1.0 - r * r)).exp()
        }
    }

    pub fn derivative(&self, a: f64) -> f64 {
        let r = (a - self.center) / self.half_width;
        if r.abs() >= 1.0 {
            return 0.0;
        }
        let s = 1.0 - r * r;
        self.value(a) * (-2.0 * r / (s * s)) / self.half_width
    }
}

/// A test function over `(a_0, ..., a_N)` with its gradient.
pub trait TestFunction: Sync {
    fn dim(&self) -> usize;
    fn value(&self, a: &[f64]) -> f64;
    fn gradient(&self, a: &[f64]) -> Vec<f64>;
}

impl TestFunction for Bump {
    fn dim(&self) -> usize {
        1
    }

    fn value(&self, a: &[f64]) -> f64 {
        Bump::value(self, a[0])
    }

    fn gradient(&self, a: &[f64]) -> Vec<f64> {
        vec![self.derivative(a[0])]
    }
}

/// Tensor product of 1-D bumps.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductBump(pub Vec<Bump>);

impl TestFunction for ProductBump {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn value(&self, a: &[f64]) -> f64 {
        self.0.iter().zip(a).map(|(b, &v)| b.value(v)).product()
    }

    fn gradient(&self, a: &[f64]) -> Vec<f64> {
        let vals: Vec<f64> = self.0.iter().zip(a).map(|(b, &v)| b.value(v)).collect();
        (0..self.0.len())
            .map(|k| {
                let others: f64 = vals.iter().enumerate().filter(|&(j, _)| j != k).map(|(_, v)| v).product();
                self.0[k].derivative(a[k]) * others
            })
            .collect()
    }
}

/// `prod_k a_k^{p_k}`; not compactly supported, but fine for bounded samples.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerTest(pub Vec<u32>);

impl TestFunction for PowerTest {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn value(&self, a: &[f64]) -> f64 {
        self.0.iter().zip(a).map(|(&p, &v)| v.powi(p as i32)).product()
    }

    fn gradient(&self, a: &[f64]) -> Vec<f64> {
        (0..self.0.len())
            .map(|k| {
                if self.0[k] == 0 {
                    return 0.0;
                }
                let mut e = self.0.clone();
                e[k] -= 1;
                self.0[k] as f64 * PowerTest(e).value(a)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_derivative_matches_finite_difference() {
        let b = Bump::new(0.3, 0.5);
        for &a in &[-0.1, 0.2, 0.3, 0.55, 0.75] {
            let h = 1e-6;
            let fd = (b.value(a + h) - b.value(a - h)) / (2.0 * h);
            assert!((fd - b.derivative(a)).abs() < 1e-6, "{a}");
        }
        assert_eq!(b.value(0.3), 1.0);
        assert_eq!(b.value(0.8), 0.0);
    }

    #[test]
    fn product_and_power_gradients() {
        let p = ProductBump(vec![Bump::new(0.0, 1.0), Bump::new(1.0, 2.0)]);
        let a = [0.2, 0.4];
        let g = p.gradient(&a);
        let h = 1e-6;
        for k in 0..2 {
            let mut up = a;
            let mut dn = a;
            up[k] += h;
            dn[k] -= h;
            assert!(((p.value(&up) - p.value(&dn)) / (2.0 * h) - g[k]).abs() < 1e-6);
        }
        let q = PowerTest(vec![2]);
        assert_eq!(q.value(&[3.0]), 9.0);
        assert_eq!(q.gradient(&[3.0]), vec![6.0]);
    }
}

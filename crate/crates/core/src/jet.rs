//! Third-order forward-mode differentiation.
//!
//! A [`Jet`] carries a value together with its first three derivatives with
//! respect to a single scalar variable. Weight functions and test functions
//! are written once against `Jet` and yield all derivatives they need.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet(pub [f64; 4]);

impl Jet {
    pub fn constant(c: f64) -> Self {
        Jet([c, 0.0, 0.0, 0.0])
    }

    /// The independent variable evaluated at `x`.
    pub fn var(x: f64) -> Self {
        Jet([x, 1.0, 0.0, 0.0])
    }

    pub fn value(&self) -> f64 {
        self.0[0]
    }

    pub fn d(&self, order: usize) -> f64 {
        self.0[order]
    }

    /// Chain rule given the outer function's derivatives `[h, h', h'', h''']` at `self.value()`.
    pub fn compose(self, h: [f64; 4]) -> Self {
        let [_, g1, g2, g3] = self.0;
        Jet([
            h[0],
            h[1] * g1,
            h[2] * g1 * g1 + h[1] * g2,
            h[3] * g1 * g1 * g1 + 3.0 * h[2] * g1 * g2 + h[1] * g3,
        ])
    }

    pub fn exp(self) -> Self {
        let e = self.0[0].exp();
        self.compose([e, e, e, e])
    }

    pub fn powf(self, p: f64) -> Self {
        let x = self.0[0];
        self.compose([
            x.powf(p),
            p * x.powf(p - 1.0),
            p * (p - 1.0) * x.powf(p - 2.0),
            p * (p - 1.0) * (p - 2.0) * x.powf(p - 3.0),
        ])
    }

    pub fn recip(self) -> Self {
        let x = self.0[0];
        let r = 1.0 / x;
        self.compose([r, -r * r, 2.0 * r * r * r, -6.0 * r * r * r * r])
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.0[0].sin_cos();
        self.compose([s, c, -s, -c])
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.0[0].sin_cos();
        self.compose([c, -s, -c, s])
    }

    pub fn scale(self, c: f64) -> Self {
        Jet(self.0.map(|v| v * c))
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet([
            self.0[0] + o.0[0],
            self.0[1] + o.0[1],
            self.0[2] + o.0[2],
            self.0[3] + o.0[3],
        ])
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let [a0, a1, a2, a3] = self.0;
        let [b0, b1, b2, b3] = o.0;
        Jet([
            a0 * b0,
            a1 * b0 + a0 * b1,
            a2 * b0 + 2.0 * a1 * b1 + a0 * b2,
            a3 * b0 + 3.0 * a2 * b1 + 3.0 * a1 * b2 + a0 * b3,
        ])
    }
}

impl Div for Jet {
    type Output = Jet;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Jet) -> Jet {
        self * o.recip()
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, c: f64) -> Jet {
        self.0[0] += c;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, c: f64) -> Jet {
        self.0[0] -= c;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, c: f64) -> Jet {
        self.scale(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_and_quotient_match_closed_forms() {
        // f(x) = x^2 * e^x / (1 + x) at x = 0.7
        let x = Jet::var(0.7);
        let f = x * x * x.exp() / (x + 1.0);
        let h = 1e-3;
        let g = |t: f64| t * t * t.exp() / (1.0 + t);
        let d1 = (g(0.7 + h) - g(0.7 - h)) / (2.0 * h);
        let d2 = (g(0.7 + h) - 2.0 * g(0.7) + g(0.7 - h)) / (h * h);
        let d3 = (g(0.7 + 2.0 * h) - 2.0 * g(0.7 + h) + 2.0 * g(0.7 - h) - g(0.7 - 2.0 * h))
            / (2.0 * h * h * h);
        assert!((f.d(1) - d1).abs() < 1e-5);
        assert!((f.d(2) - d2).abs() < 1e-4);
        assert!((f.d(3) - d3).abs() < 1e-3);
    }

    #[test]
    fn powf_third_derivative() {
        let f = Jet::var(2.0).powf(3.0);
        assert_eq!(f.0, [8.0, 12.0, 12.0, 6.0]);
    }
}

//! Natural (restricted) cubic spline basis in the truncated-power form.
//!
//! With knots `k_0 < k_1 < ... < k_{m+1}` the basis has `m + 1` functions:
//! `B_1(x) = x` and, for each interior knot `k_j`,
//!
//! `B_{j+1}(x) = [(x-k_j)³₊ - λ_j (x-k_0)³₊ - (1-λ_j)(x-k_{m+1})³₊] / (k_{m+1}-k_0)²`
//!
//! with `λ_j = (k_{m+1} - k_j) / (k_{m+1} - k_0)`. Every basis function is linear
//! outside the boundary knots.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct NaturalSpline {
    knots: Vec<f64>,
    lambda: Vec<f64>,
    scale: f64,
}

#[inline]
fn pos(z: f64) -> f64 {
    z.max(0.0)
}

impl NaturalSpline {
    /// `knots` must contain both boundary knots and be strictly increasing.
    pub fn new(knots: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::input("spline needs at least the two boundary knots"));
        }
        if knots.iter().any(|k| !k.is_finite()) || knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::input(format!("spline knots must be finite and strictly increasing: {knots:?}")));
        }
        let lo = knots[0];
        let hi = knots[knots.len() - 1];
        let range = hi - lo;
        let lambda = knots[1..knots.len() - 1].iter().map(|k| (hi - k) / range).collect();
        Ok(Self { knots, lambda, scale: 1.0 / (range * range) })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number of basis functions.
    pub fn dim(&self) -> usize {
        self.knots.len() - 1
    }

    fn bounds(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    pub fn eval_into(&self, x: f64, out: &mut [f64]) {
        let (lo, hi) = self.bounds();
        out[0] = x;
        let a = pos(x - lo).powi(3);
        let c = pos(x - hi).powi(3);
        for (j, (&kj, &lam)) in self.knots[1..self.knots.len() - 1].iter().zip(&self.lambda).enumerate() {
            out[j + 1] = (pos(x - kj).powi(3) - lam * a - (1.0 - lam) * c) * self.scale;
        }
    }

    /// First derivatives `dB_j/dx`.
    pub fn deriv_into(&self, x: f64, out: &mut [f64]) {
        let (lo, hi) = self.bounds();
        out[0] = 1.0;
        let a = pos(x - lo).powi(2);
        let c = pos(x - hi).powi(2);
        for (j, (&kj, &lam)) in self.knots[1..self.knots.len() - 1].iter().zip(&self.lambda).enumerate() {
            out[j + 1] = 3.0 * (pos(x - kj).powi(2) - lam * a - (1.0 - lam) * c) * self.scale;
        }
    }

    fn second_deriv_into(&self, x: f64, out: &mut [f64]) {
        let (lo, hi) = self.bounds();
        out[0] = 0.0;
        let a = pos(x - lo);
        let c = pos(x - hi);
        for (j, (&kj, &lam)) in self.knots[1..self.knots.len() - 1].iter().zip(&self.lambda).enumerate() {
            out[j + 1] = 6.0 * (pos(x - kj) - lam * a - (1.0 - lam) * c) * self.scale;
        }
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(x, &mut out);
        out
    }

    pub fn deriv(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.deriv_into(x, &mut out);
        out
    }

    /// `Σ_j coef_j B'_j(x)`.
    pub fn deriv_combination(&self, coef: &[f64], x: f64) -> f64 {
        let mut buf = vec![0.0; self.dim()];
        self.deriv_into(x, &mut buf);
        buf.iter().zip(coef).map(|(b, c)| b * c).sum()
    }

    /// Global maximum over the real line of `Σ_j coef_j B'_j(x)`.
    ///
    /// The combination is constant outside the boundary knots and quadratic between
    /// consecutive knots, so the maximum is attained at a knot or at an interior
    /// stationary point.
    pub fn max_deriv_combination(&self, coef: &[f64]) -> f64 {
        let mut best = f64::NEG_INFINITY;
        let mut d2 = vec![0.0; self.dim()];
        for (i, &k) in self.knots.iter().enumerate() {
            best = best.max(self.deriv_combination(coef, k));
            if let Some(&next) = self.knots.get(i + 1) {
                // the second derivative is linear on [k, next]
                self.second_deriv_into(k + 1e-12 * (next - k), &mut d2);
                let s0: f64 = d2.iter().zip(coef).map(|(b, c)| b * c).sum();
                self.second_deriv_into(next - 1e-12 * (next - k), &mut d2);
                let s1: f64 = d2.iter().zip(coef).map(|(b, c)| b * c).sum();
                if s0 * s1 < 0.0 {
                    let x = k + (next - k) * s0 / (s0 - s1);
                    best = best.max(self.deriv_combination(coef, x));
                }
            }
        }
        best
    }
}

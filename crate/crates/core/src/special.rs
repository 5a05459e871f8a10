//! Special functions used by the baseline families: log-space normal CDF, the
//! regularized incomplete Beta function and a few log-sum-exp helpers.

use statrs::function::erf::{erfc, erfc_inv};
pub use statrs::function::gamma::{digamma, ln_gamma};
use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `ln(exp(a) + exp(b))`.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `ln(1 - exp(x))` for `x <= 0`.
#[inline]
pub fn log1m_exp(x: f64) -> f64 {
    if x > -std::f64::consts::LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

#[inline]
pub fn ln_norm_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// `ln Φ(x)`, accurate far into both tails.
pub fn ln_norm_cdf(x: f64) -> f64 {
    if x > 5.0 {
        // Φ(x) = 1 - Φ(-x) with Φ(-x) tiny
        (-0.5 * erfc(x * FRAC_1_SQRT_2)).ln_1p()
    } else if x > -37.0 {
        (0.5 * erfc(-x * FRAC_1_SQRT_2)).ln()
    } else {
        // Asymptotic Mills-ratio expansion: Φ(x) ≈ φ(x)/|x| · (1 - 1/x² + 3/x⁴ - 15/x⁶)
        let z = 1.0 / (x * x);
        let series = 1.0 - z * (1.0 - z * (3.0 - 15.0 * z));
        ln_norm_pdf(x) - (-x).ln() + series.ln()
    }
}

/// Standard normal quantile function.
pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let mut x = -SQRT_2 * erfc_inv(2.0 * p);
    // One Newton polish against the erfc-based CDF.
    if x.is_finite() {
        let (cdf, pdf) = if x < 0.0 { (norm_cdf(x), (ln_norm_pdf(x)).exp()) } else { (1.0 - norm_cdf(-x), (ln_norm_pdf(x)).exp()) };
        if pdf > 0.0 {
            x -= (cdf - p) / pdf;
        }
    }
    x
}

/// `ln B(a, b)`.
pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Continued fraction for the incomplete Beta function (modified Lentz).
fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 1e-16;
    const TINY: f64 = 1e-300;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Log of the regularized incomplete Beta function `ln I_x(a, b)`, with `x` supplied
/// through both `ln x` and `ln(1 - x)` so that either tail can be resolved without
/// cancellation.
pub fn ln_beta_inc(a: f64, b: f64, ln_x: f64, ln_1mx: f64) -> f64 {
    if ln_x == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if ln_1mx == f64::NEG_INFINITY {
        return 0.0;
    }
    let x = ln_x.exp();
    let ln_front = a * ln_x + b * ln_1mx - ln_beta(a, b);
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front - a.ln() + beta_cf(x, a, b).ln()
    } else {
        let y = ln_1mx.exp();
        let complement = (ln_front - b.ln()).exp() * beta_cf(y, b, a);
        (-complement).ln_1p()
    }
}

/// Regularized incomplete Beta function `I_x(a, b)`.
pub fn beta_inc(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    ln_beta_inc(a, b, x.ln(), (-x).ln_1p()).exp()
}

/// Log Beta(a, b) density at `x`, from `ln x` and `ln(1 - x)`.
#[inline]
pub fn ln_beta_pdf(a: f64, b: f64, ln_x: f64, ln_1mx: f64) -> f64 {
    let mut out = -ln_beta(a, b);
    if a != 1.0 {
        out += (a - 1.0) * ln_x;
    }
    if b != 1.0 {
        out += (b - 1.0) * ln_1mx;
    }
    out
}

/// Log density of Gamma(shape, rate) at `x > 0`.
pub fn ln_gamma_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

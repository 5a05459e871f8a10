//! The covariate process `V(t | x)`, its time derivative `v` and its inverse.
//!
//! Every supported process factors as `V(t) = exp(-x'β) · U(t)`, where the time
//! map `U` carries the flexible effect of one covariate `x1`:
//!
//! - constant effect: `U(t) = t`
//! - piecewise linear with knots `0 = τ0 < τ1 < ... < τJ`:
//!   `U(t) = min(t, τ1) + Σ_j exp(-x1 α_j) (min(t, τ_{j+1}) - τ_j)₊`
//! - natural cubic spline on log time: `U(t) = t · exp(-x1 Σ_j α_j B_j(ln t))`
//!
//! A binary time-varying covariate switching on at `t_X` uses
//! `V(t) = exp(-x'β) [min(t, t_X) + exp(-β_tv) U(t - t_X)₊]`, with `U` evaluated on
//! the time-since-switch axis (and `x1 = 1`).

use crate::error::{Error, Result};
use crate::root;
use crate::spline::NaturalSpline;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectKind {
    Constant,
    #[serde(alias = "piecewise")]
    PiecewiseLinear,
    #[serde(alias = "spline")]
    NaturalCubicSpline,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EffectSpecRepr {
    kind: EffectKind,
    #[serde(default)]
    knots: Vec<f64>,
}

/// Shape of the flexible effect and its knots.
///
/// Piecewise knots are on the time axis and start at 0; spline knots are on the
/// log-time axis and include both boundary knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EffectSpecRepr", into = "EffectSpecRepr")]
pub struct EffectSpec {
    kind: EffectKind,
    knots: Vec<f64>,
    spline: Option<NaturalSpline>,
}

impl TryFrom<EffectSpecRepr> for EffectSpec {
    type Error = Error;

    fn try_from(r: EffectSpecRepr) -> Result<Self> {
        match r.kind {
            EffectKind::Constant => Ok(EffectSpec::constant()),
            EffectKind::PiecewiseLinear => EffectSpec::piecewise(r.knots),
            EffectKind::NaturalCubicSpline => EffectSpec::spline(r.knots),
        }
    }
}

impl From<EffectSpec> for EffectSpecRepr {
    fn from(e: EffectSpec) -> Self {
        EffectSpecRepr { kind: e.kind, knots: e.knots }
    }
}

impl Default for EffectSpec {
    fn default() -> Self {
        Self::constant()
    }
}

impl EffectSpec {
    pub fn constant() -> Self {
        Self { kind: EffectKind::Constant, knots: Vec::new(), spline: None }
    }

    pub fn piecewise(knots: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::input("piecewise effect needs knot 0 plus at least one break point"));
        }
        if knots[0] != 0.0 {
            return Err(Error::input(format!("piecewise knots must start at 0, got {}", knots[0])));
        }
        if knots.iter().any(|k| !k.is_finite()) || knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::input(format!("piecewise knots must be finite and strictly increasing: {knots:?}")));
        }
        Ok(Self { kind: EffectKind::PiecewiseLinear, knots, spline: None })
    }

    /// `log_knots`: boundary and interior knots on the log-time axis.
    pub fn spline(log_knots: Vec<f64>) -> Result<Self> {
        let spline = NaturalSpline::new(log_knots.clone())?;
        Ok(Self { kind: EffectKind::NaturalCubicSpline, knots: log_knots, spline: Some(spline) })
    }

    pub fn kind(&self) -> EffectKind {
        self.kind
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn is_constant(&self) -> bool {
        self.kind == EffectKind::Constant
    }

    /// Number of `α` coefficients.
    pub fn n_alpha(&self) -> usize {
        match self.kind {
            EffectKind::Constant => 0,
            EffectKind::PiecewiseLinear => self.knots.len() - 1,
            EffectKind::NaturalCubicSpline => self.knots.len() - 1,
        }
    }

    fn spline_basis(&self) -> &NaturalSpline {
        self.spline.as_ref().expect("spline effect carries its basis")
    }

    /// Index of the piecewise segment containing `d` (0 = `[0, τ1)`); a point on a
    /// knot belongs to the segment to its right.
    fn segment(&self, d: f64) -> usize {
        self.knots[1..].partition_point(|&k| k <= d)
    }

    /// Transformed knots `τ*`: the images `U(τ_j)` of the break points.
    pub fn transformed_knots(&self, alpha: &[f64], c: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.knots.len());
        if self.kind != EffectKind::PiecewiseLinear {
            return out;
        }
        out.push(0.0);
        out.push(self.knots[1]);
        for j in 2..self.knots.len() {
            let prev = out[j - 1];
            out.push(prev + (-c * alpha[j - 2]).exp() * (self.knots[j] - self.knots[j - 1]));
        }
        out
    }

    /// The time map `U(d)` for flexible-covariate value `c`.
    pub fn flex_value(&self, alpha: &[f64], c: f64, d: f64) -> f64 {
        if d <= 0.0 {
            return 0.0;
        }
        match self.kind {
            EffectKind::Constant => d,
            EffectKind::PiecewiseLinear => {
                let k = &self.knots;
                let mut u = d.min(k[1]);
                for (j, a) in alpha.iter().enumerate() {
                    let start = k[j + 1];
                    if d <= start {
                        break;
                    }
                    let end = k.get(j + 2).copied().unwrap_or(f64::INFINITY);
                    u += (-c * a).exp() * (d.min(end) - start);
                }
                u
            }
            EffectKind::NaturalCubicSpline => {
                if d == f64::INFINITY {
                    return f64::INFINITY;
                }
                let mut b = vec![0.0; alpha.len()];
                self.spline_basis().eval_into(d.ln(), &mut b);
                let lin: f64 = b.iter().zip(alpha).map(|(b, a)| b * a).sum();
                d * (-c * lin).exp()
            }
        }
    }

    /// `dU/dd`.
    pub fn flex_slope(&self, alpha: &[f64], c: f64, d: f64) -> f64 {
        let mut scratch = vec![0.0; alpha.len()];
        self.flex_ln_slope_grad(alpha, c, d, &mut scratch).exp()
    }

    /// `ln U(d)`, writing `∂ ln U / ∂α_j` into `d_alpha`.
    pub fn flex_ln_value_grad(&self, alpha: &[f64], c: f64, d: f64, d_alpha: &mut [f64]) -> f64 {
        d_alpha.iter_mut().for_each(|x| *x = 0.0);
        if d <= 0.0 {
            return f64::NEG_INFINITY;
        }
        if d == f64::INFINITY {
            return f64::INFINITY;
        }
        match self.kind {
            EffectKind::Constant => d.ln(),
            EffectKind::PiecewiseLinear => {
                let k = &self.knots;
                let mut u = d.min(k[1]);
                for (j, a) in alpha.iter().enumerate() {
                    let start = k[j + 1];
                    if d <= start {
                        break;
                    }
                    let end = k.get(j + 2).copied().unwrap_or(f64::INFINITY);
                    let piece = (-c * a).exp() * (d.min(end) - start);
                    u += piece;
                    d_alpha[j] = -c * piece;
                }
                d_alpha.iter_mut().for_each(|x| *x /= u);
                u.ln()
            }
            EffectKind::NaturalCubicSpline => {
                let x = d.ln();
                self.spline_basis().eval_into(x, d_alpha);
                let mut lin = 0.0;
                for (g, a) in d_alpha.iter_mut().zip(alpha) {
                    lin += *g * a;
                    *g *= -c;
                }
                x - c * lin
            }
        }
    }

    /// `ln u(d)` with `u = dU/dd`, writing `∂ ln u / ∂α_j` into `d_alpha`. Returns
    /// NaN where the spline map is decreasing.
    pub fn flex_ln_slope_grad(&self, alpha: &[f64], c: f64, d: f64, d_alpha: &mut [f64]) -> f64 {
        d_alpha.iter_mut().for_each(|x| *x = 0.0);
        match self.kind {
            EffectKind::Constant => 0.0,
            EffectKind::PiecewiseLinear => {
                let seg = self.segment(d.max(0.0));
                if seg == 0 {
                    0.0
                } else {
                    d_alpha[seg - 1] = -c;
                    -c * alpha[seg - 1]
                }
            }
            EffectKind::NaturalCubicSpline => {
                if d <= 0.0 {
                    let lead = c * alpha[0];
                    return if lead == 0.0 {
                        0.0
                    } else if lead > 0.0 {
                        f64::INFINITY
                    } else {
                        f64::NEG_INFINITY
                    };
                }
                let x = d.ln();
                let basis = self.spline_basis();
                let n = alpha.len();
                let mut b = vec![0.0; n];
                let mut db = vec![0.0; n];
                basis.eval_into(x, &mut b);
                basis.deriv_into(x, &mut db);
                let lin: f64 = b.iter().zip(alpha).map(|(b, a)| b * a).sum();
                let dlin: f64 = db.iter().zip(alpha).map(|(b, a)| b * a).sum();
                let factor = 1.0 - c * dlin;
                if !(factor > 0.0) {
                    return f64::NAN;
                }
                for j in 0..n {
                    d_alpha[j] = -c * b[j] - c * db[j] / factor;
                }
                -c * lin + factor.ln()
            }
        }
    }

    /// Exact check that `U` is strictly increasing on `(0, ∞)`.
    pub fn flex_is_monotone(&self, alpha: &[f64], c: f64) -> bool {
        match self.kind {
            EffectKind::Constant => true,
            EffectKind::PiecewiseLinear => alpha.iter().all(|a| (c * a).is_finite()),
            EffectKind::NaturalCubicSpline => {
                if c == 0.0 {
                    return true;
                }
                let scaled: Vec<f64> = alpha.iter().map(|a| c * a).collect();
                self.spline_basis().max_deriv_combination(&scaled) < 1.0
            }
        }
    }

    /// `U^{-1}(s)`.
    pub fn flex_inverse(&self, alpha: &[f64], c: f64, s: f64) -> Result<f64> {
        if s.is_nan() || s < 0.0 {
            return Err(Error::domain(format!("inverse needs s >= 0, got {s}")));
        }
        if s == 0.0 {
            return Ok(0.0);
        }
        if s == f64::INFINITY {
            return Ok(f64::INFINITY);
        }
        match self.kind {
            EffectKind::Constant => Ok(s),
            EffectKind::PiecewiseLinear => {
                let star = self.transformed_knots(alpha, c);
                let seg = star[1..].partition_point(|&k| k <= s);
                if seg == 0 {
                    Ok(s)
                } else {
                    Ok(self.knots[seg] + (s - star[seg]) * (c * alpha[seg - 1]).exp())
                }
            }
            EffectKind::NaturalCubicSpline => {
                if !self.flex_is_monotone(alpha, c) {
                    return Err(Error::NonMonotone(format!("spline time map decreases somewhere for alpha={alpha:?}, x1={c}")));
                }
                let target = s.ln();
                let basis = self.spline_basis();
                let n = alpha.len();
                let mut b = vec![0.0; n];
                let mut g = |x: f64| {
                    basis.eval_into(x, &mut b);
                    let lin: f64 = b.iter().zip(alpha).map(|(b, a)| b * a).sum();
                    basis.deriv_into(x, &mut b);
                    let dlin: f64 = b.iter().zip(alpha).map(|(b, a)| b * a).sum();
                    (x - c * lin - target, 1.0 - c * dlin)
                };
                let (mut lo, mut hi) = (target - 1.0, target + 1.0);
                let mut n_expand = 0;
                while g(lo).0 > 0.0 {
                    lo -= 2.0 * (target - lo).abs().max(1.0);
                    n_expand += 1;
                    if n_expand > 200 {
                        return Err(Error::Bracket { what: "spline inverse".into(), lo, hi, target: s });
                    }
                }
                while g(hi).0 < 0.0 {
                    hi += 2.0 * (hi - target).abs().max(1.0);
                    n_expand += 1;
                    if n_expand > 200 {
                        return Err(Error::Bracket { what: "spline inverse".into(), lo, hi, target: s });
                    }
                }
                Ok(root::newton_bisect(g, lo, hi)?.exp())
            }
        }
    }
}

/// How the flexible/exposure covariate enters a subject's process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exposure {
    /// Time-invariant covariates; `x1` is the value of the flexible covariate (0 when
    /// the effect is constant).
    Fixed { x1: f64 },
    /// Binary covariate switching on at `t_x` (`∞` = never) with coefficient `beta_tv`.
    Switch { t_x: f64, beta_tv: f64 },
}

/// Partials of a log process quantity.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProcGrad {
    pub d_eta: f64,
    pub d_beta_tv: f64,
    pub d_alpha: Vec<f64>,
}

impl ProcGrad {
    pub fn new(n_alpha: usize) -> Self {
        Self { d_alpha: vec![0.0; n_alpha], ..Default::default() }
    }
}

/// One subject's covariate process: `eta = x'β` over the time-invariant covariates.
#[derive(Debug, Clone, Copy)]
pub struct Process<'a> {
    pub effect: &'a EffectSpec,
    pub alpha: &'a [f64],
    pub eta: f64,
    pub exposure: Exposure,
}

impl<'a> Process<'a> {
    pub fn new(effect: &'a EffectSpec, alpha: &'a [f64], eta: f64, exposure: Exposure) -> Self {
        Self { effect, alpha, eta, exposure }
    }

    pub fn value(&self, t: f64) -> Result<f64> {
        if t.is_nan() || t < 0.0 {
            return Err(Error::domain(format!("V(t) needs t >= 0, got {t}")));
        }
        let scale = (-self.eta).exp();
        Ok(match self.exposure {
            Exposure::Fixed { x1 } => scale * self.effect.flex_value(self.alpha, x1, t),
            Exposure::Switch { t_x, beta_tv } => {
                if t <= t_x {
                    scale * t
                } else if self.effect.is_constant() {
                    // k t + (1 - k) t_x is exact when k = 1
                    let k = (-beta_tv).exp();
                    scale * (k * t + (1.0 - k) * t_x)
                } else {
                    scale * (t_x + (-beta_tv).exp() * self.effect.flex_value(self.alpha, 1.0, t - t_x))
                }
            }
        })
    }

    /// `v(t) = dV/dt`; right-hand derivative at piecewise knots, pre-switch slope at `t_x`.
    pub fn slope(&self, t: f64) -> Result<f64> {
        if t.is_nan() || t <= 0.0 {
            return Err(Error::domain(format!("v(t) needs t > 0, got {t}")));
        }
        let mut g = ProcGrad::new(self.alpha.len());
        Ok(self.ln_slope_grad(t, &mut g).exp())
    }

    pub fn inverse(&self, s: f64) -> Result<f64> {
        if s.is_nan() || s < 0.0 {
            return Err(Error::domain(format!("V^-1(s) needs s >= 0, got {s}")));
        }
        let unscaled = s * self.eta.exp();
        match self.exposure {
            Exposure::Fixed { x1 } => self.effect.flex_inverse(self.alpha, x1, unscaled),
            Exposure::Switch { t_x, beta_tv } => {
                if unscaled <= t_x {
                    Ok(unscaled)
                } else if self.effect.is_constant() {
                    let k = beta_tv.exp();
                    Ok(k * unscaled + (1.0 - k) * t_x)
                } else {
                    Ok(t_x + self.effect.flex_inverse(self.alpha, 1.0, (unscaled - t_x) * beta_tv.exp())?)
                }
            }
        }
    }

    pub fn is_monotone(&self) -> bool {
        match self.exposure {
            Exposure::Fixed { x1 } => self.effect.flex_is_monotone(self.alpha, x1),
            Exposure::Switch { t_x, .. } => t_x == f64::INFINITY || self.effect.flex_is_monotone(self.alpha, 1.0),
        }
    }

    /// `ln V(t)` and its partials.
    pub fn ln_value_grad(&self, t: f64, g: &mut ProcGrad) -> f64 {
        g.d_eta = -1.0;
        g.d_beta_tv = 0.0;
        match self.exposure {
            Exposure::Fixed { x1 } => -self.eta + self.effect.flex_ln_value_grad(self.alpha, x1, t, &mut g.d_alpha),
            Exposure::Switch { t_x, beta_tv } => {
                if t <= t_x {
                    g.d_alpha.iter_mut().for_each(|x| *x = 0.0);
                    return -self.eta + t.ln();
                }
                let ln_u = self.effect.flex_ln_value_grad(self.alpha, 1.0, t - t_x, &mut g.d_alpha);
                if ln_u == f64::INFINITY {
                    return f64::INFINITY;
                }
                let post = (ln_u - beta_tv).exp();
                let total = t_x + post;
                let share = post / total;
                g.d_beta_tv = -share;
                g.d_alpha.iter_mut().for_each(|x| *x *= share);
                -self.eta + total.ln()
            }
        }
    }

    /// `ln v(t)` and its partials.
    pub fn ln_slope_grad(&self, t: f64, g: &mut ProcGrad) -> f64 {
        g.d_eta = -1.0;
        g.d_beta_tv = 0.0;
        match self.exposure {
            Exposure::Fixed { x1 } => -self.eta + self.effect.flex_ln_slope_grad(self.alpha, x1, t, &mut g.d_alpha),
            Exposure::Switch { t_x, beta_tv } => {
                if t <= t_x {
                    g.d_alpha.iter_mut().for_each(|x| *x = 0.0);
                    return -self.eta;
                }
                g.d_beta_tv = -1.0;
                -self.eta - beta_tv + self.effect.flex_ln_slope_grad(self.alpha, 1.0, t - t_x, &mut g.d_alpha)
            }
        }
    }
}

fn linear_predictor(beta: &[f64], x: &[f64]) -> Result<f64> {
    if beta.len() != x.len() {
        return Err(Error::input(format!("covariate vector has length {} but beta has length {}", x.len(), beta.len())));
    }
    Ok(beta.iter().zip(x).map(|(b, v)| b * v).sum())
}

fn fixed_process<'a>(effect: &'a EffectSpec, flexible: usize, beta: &[f64], alpha: &'a [f64], x: &[f64]) -> Result<Process<'a>> {
    if alpha.len() != effect.n_alpha() {
        return Err(Error::input(format!("effect needs {} alpha coefficients, got {}", effect.n_alpha(), alpha.len())));
    }
    let eta = linear_predictor(beta, x)?;
    let x1 = if effect.is_constant() {
        0.0
    } else {
        *x.get(flexible).ok_or_else(|| Error::input(format!("flexible covariate index {flexible} out of range")))?
    };
    Ok(Process::new(effect, alpha, eta, Exposure::Fixed { x1 }))
}

/// `V(t | x)` for time-invariant covariates; `flexible` indexes the covariate carrying
/// the flexible effect.
pub fn v_value(effect: &EffectSpec, flexible: usize, beta: &[f64], alpha: &[f64], x: &[f64], t: f64) -> Result<f64> {
    fixed_process(effect, flexible, beta, alpha, x)?.value(t)
}

pub fn v_deriv(effect: &EffectSpec, flexible: usize, beta: &[f64], alpha: &[f64], x: &[f64], t: f64) -> Result<f64> {
    fixed_process(effect, flexible, beta, alpha, x)?.slope(t)
}

pub fn v_inverse(effect: &EffectSpec, flexible: usize, beta: &[f64], alpha: &[f64], x: &[f64], s: f64) -> Result<f64> {
    fixed_process(effect, flexible, beta, alpha, x)?.inverse(s)
}

/// `V(t | X(t))` for a binary covariate switching on at `t_x`; `eta2 = x2'β2` covers
/// the remaining covariates.
pub fn tv_v_value(beta_tv: f64, eta2: f64, alpha: &[f64], t_x: f64, effect: &EffectSpec, t: f64) -> Result<f64> {
    check_switch(t_x)?;
    Process::new(effect, alpha, eta2, Exposure::Switch { t_x, beta_tv }).value(t)
}

pub fn tv_v_inverse(beta_tv: f64, eta2: f64, alpha: &[f64], t_x: f64, effect: &EffectSpec, s: f64) -> Result<f64> {
    check_switch(t_x)?;
    let p = Process::new(effect, alpha, eta2, Exposure::Switch { t_x, beta_tv });
    if !p.is_monotone() {
        return Err(Error::NonMonotone("time-varying flexible effect decreases somewhere".into()));
    }
    p.inverse(s)
}

fn check_switch(t_x: f64) -> Result<()> {
    if !(t_x > 0.0) {
        return Err(Error::domain(format!("switch time must be > 0, got {t_x}")));
    }
    Ok(())
}

/// True iff `v(t | x) > 0` at every grid point.
pub fn monotonicity_check(effect: &EffectSpec, flexible: usize, beta: &[f64], alpha: &[f64], x: &[f64], grid: &[f64]) -> bool {
    let Ok(p) = fixed_process(effect, flexible, beta, alpha, x) else {
        return false;
    };
    grid.iter().all(|&t| matches!(p.slope(t), Ok(v) if v > 0.0 && v.is_finite()))
}

/// `n` log-spaced points on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![hi];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

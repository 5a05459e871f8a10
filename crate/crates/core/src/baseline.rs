//! Baseline survivor distributions `S0`.
//!
//! Weibull and log-Normal are parameterized by a log-time location `mu` and a
//! shape/scale `sigma`:
//!
//! - Weibull: `S0(t) = exp(-[t exp(-mu)]^sigma)`
//! - log-Normal: `S0(t) = 1 - Φ((ln t - mu) / sigma)`
//!
//! The transformed Bernstein polynomial (TBP) family composes a parametric centering
//! survivor `S0*` with a mixture of Beta CDFs:
//!
//! `S0(t) = Σ_k w_k I(S0*(t); K - k + 1, k)`
//!
//! where `I(·; a, b)` is the regularized incomplete Beta function. Equal weights
//! give back `S0*` exactly and every weight vector yields a decreasing survivor.
//!
//! All log-quantities are computed in log space from `ln t`, so contributions deep
//! in either tail stay finite.

use crate::error::{Error, Result};
use crate::root;
use crate::special::{ln_beta_inc, ln_beta_pdf, ln_norm_cdf, ln_norm_pdf, log1m_exp, log_sum_exp, norm_quantile};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Centering {
    Weibull,
    #[serde(alias = "log-normal", alias = "log_normal")]
    LogNormal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Weibull,
    #[serde(alias = "log-normal", alias = "log_normal")]
    LogNormal,
    Tbp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineSpec {
    pub family: Family,
    /// Centering distribution; only read for `Family::Tbp`.
    pub centering: Centering,
    /// Number of Bernstein basis functions; only read for `Family::Tbp`.
    pub k: usize,
}

impl BaselineSpec {
    pub fn weibull() -> Self {
        Self { family: Family::Weibull, centering: Centering::Weibull, k: 0 }
    }

    pub fn log_normal() -> Self {
        Self { family: Family::LogNormal, centering: Centering::LogNormal, k: 0 }
    }

    pub fn tbp(centering: Centering, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::param("TBP baseline needs K >= 1"));
        }
        Ok(Self { family: Family::Tbp, centering, k })
    }

    pub fn is_tbp(&self) -> bool {
        self.family == Family::Tbp
    }

    /// Number of mixture weights carried by the parameter vector.
    pub fn n_weights(&self) -> usize {
        if self.is_tbp() {
            self.k
        } else {
            0
        }
    }

    /// The parametric distribution actually evaluated (the family itself, or the
    /// TBP centering).
    pub fn parametric(&self) -> Centering {
        match self.family {
            Family::Weibull => Centering::Weibull,
            Family::LogNormal => Centering::LogNormal,
            Family::Tbp => self.centering,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_tbp() && self.k == 0 {
            return Err(Error::param("TBP baseline needs K >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineParams {
    pub mu: f64,
    pub sigma: f64,
}

impl BaselineParams {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::param(format!("mu must be finite, got {mu}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::param(format!("sigma must be positive, got {sigma}")));
        }
        Ok(Self { mu, sigma })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TbpWeights {
    pub w: Vec<f64>,
    pub theta: f64,
}

impl TbpWeights {
    pub fn new(w: Vec<f64>, theta: f64) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::param("TBP weights must be non-empty"));
        }
        if w.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return Err(Error::param("TBP weights must be non-negative"));
        }
        let total: f64 = w.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::param(format!("TBP weights sum to {total}, not 1")));
        }
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::param(format!("theta must be positive, got {theta}")));
        }
        Ok(Self { w, theta })
    }

    pub fn uniform(k: usize) -> Self {
        Self { w: vec![1.0 / k as f64; k], theta: 1.0 }
    }

    pub fn k(&self) -> usize {
        self.w.len()
    }
}

/// Partial derivatives of a baseline log-quantity.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BaseGrad {
    /// With respect to `ln s`, where `s` is the (transformed) time argument.
    pub d_ln_s: f64,
    pub d_mu: f64,
    pub d_sigma: f64,
    /// With respect to each TBP weight (empty for parametric baselines).
    pub d_w: Vec<f64>,
}

impl BaseGrad {
    pub fn with_weights(k: usize) -> Self {
        Self { d_w: vec![0.0; k], ..Default::default() }
    }

    fn clear(&mut self) {
        self.d_ln_s = 0.0;
        self.d_mu = 0.0;
        self.d_sigma = 0.0;
        self.d_w.iter_mut().for_each(|x| *x = 0.0);
    }
}

/// Log survivor, log CDF and log density of a centering distribution at one point,
/// each with partials in `(ln s, mu, sigma)`.
#[derive(Debug, Clone, Copy)]
struct CenterPoint {
    ln_sf: f64,
    ln_cdf: f64,
    ln_pdf: f64,
    g_sf: [f64; 3],
    g_cdf: [f64; 3],
    g_pdf: [f64; 3],
}

fn center_point(c: Centering, mu: f64, sigma: f64, ln_s: f64) -> CenterPoint {
    let dx = ln_s - mu;
    match c {
        Centering::Weibull => {
            let q = sigma * dx;
            let e = q.exp();
            let ln_sf = -e;
            let ln_cdf = log1m_exp(-e);
            let ratio = (q + ln_sf - ln_cdf).exp();
            CenterPoint {
                ln_sf,
                ln_cdf,
                ln_pdf: sigma.ln() - ln_s + q - e,
                g_sf: [-sigma * e, sigma * e, -dx * e],
                g_cdf: [sigma * ratio, -sigma * ratio, dx * ratio],
                g_pdf: [-1.0 + sigma - sigma * e, -sigma + sigma * e, 1.0 / sigma + dx * (1.0 - e)],
            }
        }
        Centering::LogNormal => {
            let w = dx / sigma;
            let ln_sf = ln_norm_cdf(-w);
            let ln_cdf = ln_norm_cdf(w);
            let ln_phi = ln_norm_pdf(w);
            let lam_s = (ln_phi - ln_sf).exp();
            let lam_f = (ln_phi - ln_cdf).exp();
            CenterPoint {
                ln_sf,
                ln_cdf,
                ln_pdf: -ln_s - sigma.ln() + ln_phi,
                g_sf: [-lam_s / sigma, lam_s / sigma, lam_s * w / sigma],
                g_cdf: [lam_f / sigma, -lam_f / sigma, -lam_f * w / sigma],
                g_pdf: [-1.0 - w / sigma, w / sigma, (w * w - 1.0) / sigma],
            }
        }
    }
}

fn center_inverse(c: Centering, mu: f64, sigma: f64, p: f64) -> f64 {
    match c {
        Centering::Weibull => (mu + (-p.ln()).ln() / sigma).exp(),
        Centering::LogNormal => (mu - sigma * norm_quantile(p)).exp(),
    }
}

/// A fully specified baseline distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Baseline {
    spec: BaselineSpec,
    params: BaselineParams,
    /// `(ln w_k, a_k, b_k)` for TBP.
    tbp: Vec<(f64, f64, f64)>,
}

impl Baseline {
    pub fn new(spec: BaselineSpec, params: BaselineParams, weights: Option<&TbpWeights>) -> Result<Self> {
        spec.validate()?;
        BaselineParams::new(params.mu, params.sigma)?;
        let tbp = match (spec.is_tbp(), weights) {
            (true, Some(w)) => {
                if w.k() != spec.k {
                    return Err(Error::param(format!("TBP spec has K={} but {} weights were supplied", spec.k, w.k())));
                }
                TbpWeights::new(w.w.clone(), w.theta)?;
                Self::tbp_terms(&w.w)
            }
            (true, None) => return Err(Error::param("TBP baseline requires weights")),
            (false, Some(_)) => return Err(Error::param("weights supplied for a parametric baseline")),
            (false, None) => Vec::new(),
        };
        Ok(Self { spec, params, tbp })
    }

    /// Construction without validation, for the likelihood hot path where the
    /// parameters come out of a constraining transform.
    pub(crate) fn new_unchecked(spec: BaselineSpec, params: BaselineParams, w: Option<&[f64]>) -> Self {
        let tbp = w.map(Self::tbp_terms).unwrap_or_default();
        Self { spec, params, tbp }
    }

    fn tbp_terms(w: &[f64]) -> Vec<(f64, f64, f64)> {
        let k = w.len();
        w.iter()
            .enumerate()
            .map(|(i, wk)| {
                let idx = (i + 1) as f64;
                (wk.ln(), (k as f64) - idx + 1.0, idx)
            })
            .collect()
    }

    pub fn spec(&self) -> &BaselineSpec {
        &self.spec
    }

    pub fn params(&self) -> BaselineParams {
        self.params
    }

    fn center(&self, ln_s: f64) -> CenterPoint {
        center_point(self.spec.parametric(), self.params.mu, self.params.sigma, ln_s)
    }

    fn ln_survivor_at(&self, ln_s: f64) -> f64 {
        if ln_s == f64::NEG_INFINITY {
            return 0.0;
        }
        if ln_s == f64::INFINITY {
            return f64::NEG_INFINITY;
        }
        let cp = self.center(ln_s);
        if self.tbp.is_empty() {
            return cp.ln_sf;
        }
        let terms: Vec<f64> = self.tbp.iter().map(|&(lw, a, b)| lw + ln_beta_inc(a, b, cp.ln_sf, cp.ln_cdf)).collect();
        log_sum_exp(&terms)
    }

    fn ln_density_at(&self, ln_s: f64) -> f64 {
        let cp = self.center(ln_s);
        if self.tbp.is_empty() {
            return cp.ln_pdf;
        }
        let terms: Vec<f64> = self.tbp.iter().map(|&(lw, a, b)| lw + ln_beta_pdf(a, b, cp.ln_sf, cp.ln_cdf)).collect();
        cp.ln_pdf + log_sum_exp(&terms)
    }

    fn check_time(t: f64) -> Result<()> {
        if t.is_nan() || t < 0.0 {
            return Err(Error::domain(format!("time must be >= 0, got {t}")));
        }
        Ok(())
    }

    pub fn log_survivor(&self, t: f64) -> Result<f64> {
        Self::check_time(t)?;
        if self.spec.family == Family::Weibull {
            return Ok(-(t * (-self.params.mu).exp()).powf(self.params.sigma));
        }
        Ok(self.ln_survivor_at(t.ln()))
    }

    pub fn survivor(&self, t: f64) -> Result<f64> {
        Ok(self.log_survivor(t)?.exp())
    }

    pub fn log_density(&self, t: f64) -> Result<f64> {
        if t.is_nan() || t <= 0.0 {
            return Err(Error::domain(format!("density needs t > 0, got {t}")));
        }
        if t == f64::INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(self.ln_density_at(t.ln()))
    }

    pub fn density(&self, t: f64) -> Result<f64> {
        Ok(self.log_density(t)?.exp())
    }

    /// `S0^{-1}(p)`: closed form for the parametric families, bracketed bisection
    /// for TBP.
    pub fn inverse_survivor(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::domain(format!("probability must lie in (0,1), got {p}")));
        }
        let c = self.spec.parametric();
        let (mu, sigma) = (self.params.mu, self.params.sigma);
        if self.tbp.is_empty() {
            return Ok(center_inverse(c, mu, sigma, p));
        }
        let lo = center_inverse(c, mu, sigma, 1.0 - (1.0 - p) / 10.0);
        let hi = center_inverse(c, mu, sigma, p / 10.0);
        let f = |t: f64| self.ln_survivor_at(t.ln()).exp();
        let (lo, hi) = root::expand_positive_bracket(f, p, lo, hi.max(lo * (1.0 + 1e-12)), "TBP inverse survivor")?;
        Ok(root::bisect(f, p, lo, hi, |t| 1e-10 * t.max(1.0)))
    }

    /// `ln S0(s)` and its partials, at `s = exp(ln_s)`.
    pub fn log_survivor_grad(&self, ln_s: f64, grad: &mut BaseGrad) -> f64 {
        grad.clear();
        if ln_s == f64::NEG_INFINITY {
            return 0.0;
        }
        if ln_s == f64::INFINITY {
            return f64::NEG_INFINITY;
        }
        let cp = self.center(ln_s);
        if self.tbp.is_empty() {
            [grad.d_ln_s, grad.d_mu, grad.d_sigma] = cp.g_sf;
            return cp.ln_sf;
        }
        let k = self.tbp.len();
        let mut ln_i = Vec::with_capacity(k);
        let mut ln_pu = Vec::with_capacity(k);
        for &(lw, a, b) in &self.tbp {
            ln_i.push(lw + ln_beta_inc(a, b, cp.ln_sf, cp.ln_cdf));
            ln_pu.push(lw + ln_beta_pdf(a, b, cp.ln_sf, cp.ln_cdf) + cp.ln_sf);
        }
        let ln_s0 = log_sum_exp(&ln_i);
        let chain = (log_sum_exp(&ln_pu) - ln_s0).exp();
        grad.d_ln_s = chain * cp.g_sf[0];
        grad.d_mu = chain * cp.g_sf[1];
        grad.d_sigma = chain * cp.g_sf[2];
        for (j, &(lw, _, _)) in self.tbp.iter().enumerate() {
            grad.d_w[j] = (ln_i[j] - lw - ln_s0).exp();
        }
        ln_s0
    }

    /// `ln f0(s)` and its partials, at `s = exp(ln_s)`.
    pub fn log_density_grad(&self, ln_s: f64, grad: &mut BaseGrad) -> f64 {
        grad.clear();
        let cp = self.center(ln_s);
        if self.tbp.is_empty() {
            [grad.d_ln_s, grad.d_mu, grad.d_sigma] = cp.g_pdf;
            return cp.ln_pdf;
        }
        let k = self.tbp.len();
        let mut ln_terms = Vec::with_capacity(k);
        for &(lw, a, b) in &self.tbp {
            ln_terms.push(lw + ln_beta_pdf(a, b, cp.ln_sf, cp.ln_cdf));
        }
        let ln_g = log_sum_exp(&ln_terms);
        let mut g = cp.g_pdf;
        for (j, &(lw, a, b)) in self.tbp.iter().enumerate() {
            let rho = (ln_terms[j] - ln_g).exp();
            for (d, gd) in g.iter_mut().enumerate() {
                *gd += rho * ((a - 1.0) * cp.g_sf[d] + (b - 1.0) * cp.g_cdf[d]);
            }
            grad.d_w[j] = (ln_terms[j] - lw - ln_g).exp();
        }
        [grad.d_ln_s, grad.d_mu, grad.d_sigma] = g;
        cp.ln_pdf + ln_g
    }
}

//! Model specification, constrained parameters and the unconstrained coordinates
//! the sampler works in.
//!
//! Unconstrained layout: `[β (d), β_tv (if time-varying), α (J), μ, ln σ,
//! y (K-1, stick-breaking), ln θ (TBP only)]`.

use crate::baseline::{BaseGrad, Baseline, BaselineParams, BaselineSpec, TbpWeights};
use crate::covproc::{EffectSpec, Exposure, Process};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Prior hyperparameters; Gamma distributions use the shape/rate convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSpec {
    pub a_sigma: f64,
    pub b_sigma: f64,
    pub a_theta: f64,
    pub b_theta: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self { a_sigma: 0.3, b_sigma: 0.05, a_theta: 1.0, b_theta: 1.0 }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("a_sigma", self.a_sigma), ("b_sigma", self.b_sigma), ("a_theta", self.a_theta), ("b_theta", self.b_theta)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::input(format!("prior hyperparameter {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Baseline family, covariates and covariate-process shape.
///
/// `flexible` names the covariate whose effect follows `effect`; it may be the
/// time-varying covariate. With a constant effect it is ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub baseline: BaselineSpec,
    /// Time-invariant covariates, in data-column order.
    pub covariates: Vec<String>,
    /// Name of the binary time-varying covariate, if any.
    #[serde(default)]
    pub time_varying: Option<String>,
    #[serde(default)]
    pub effect: EffectSpec,
    #[serde(default)]
    pub flexible: Option<String>,
}

/// Constrained parameters `ψ`.
///
/// `beta` holds the `d` time-invariant coefficients followed by the time-varying
/// coefficient when the model has one. `w` is empty and `theta` unused for
/// parametric baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterVector {
    pub beta: Vec<f64>,
    #[serde(default)]
    pub alpha: Vec<f64>,
    pub mu: f64,
    pub sigma: f64,
    #[serde(default)]
    pub w: Vec<f64>,
    #[serde(default = "one")]
    pub theta: f64,
}

fn one() -> f64 {
    1.0
}

/// Where the flexible effect acts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlexTarget {
    None,
    Covariate(usize),
    TimeVarying,
}

/// Offsets of each block in the unconstrained vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub d: usize,
    pub n_beta: usize,
    pub n_alpha: usize,
    pub k: usize,
    pub alpha: usize,
    pub mu: usize,
    pub ln_sigma: usize,
    pub stick: usize,
    pub ln_theta: Option<usize>,
    pub dim: usize,
}

impl ModelSpec {
    /// Standard AFT model with constant effects.
    pub fn constant(baseline: BaselineSpec, covariates: Vec<String>) -> Self {
        Self { baseline, covariates, time_varying: None, effect: EffectSpec::constant(), flexible: None }
    }

    pub fn with_flexible(mut self, covariate: &str, effect: EffectSpec) -> Self {
        self.flexible = Some(covariate.to_string());
        self.effect = effect;
        self
    }

    pub fn with_time_varying(mut self, name: &str) -> Self {
        self.time_varying = Some(name.to_string());
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.baseline.validate().map_err(|e| Error::input(e.to_string()))?;
        let mut seen = std::collections::HashSet::new();
        for c in self.covariates.iter().chain(self.time_varying.iter()) {
            if c.is_empty() {
                return Err(Error::input("empty covariate name"));
            }
            if !seen.insert(c.as_str()) {
                return Err(Error::input(format!("duplicate covariate name '{c}'")));
            }
        }
        self.flex_target()?;
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.covariates.len()
    }

    pub fn has_time_varying(&self) -> bool {
        self.time_varying.is_some()
    }

    pub fn flex_target(&self) -> Result<FlexTarget> {
        if self.effect.is_constant() {
            return Ok(FlexTarget::None);
        }
        let Some(name) = &self.flexible else {
            return Err(Error::input("a flexible effect needs `flexible` to name its covariate"));
        };
        if self.time_varying.as_deref() == Some(name.as_str()) {
            return Ok(FlexTarget::TimeVarying);
        }
        if self.has_time_varying() {
            return Err(Error::input("with a time-varying covariate only that covariate may carry the flexible effect"));
        }
        match self.covariates.iter().position(|c| c == name) {
            Some(i) => Ok(FlexTarget::Covariate(i)),
            None => Err(Error::input(format!("flexible covariate '{name}' is not a model covariate"))),
        }
    }

    pub fn layout(&self) -> Layout {
        let d = self.d();
        let n_beta = d + usize::from(self.has_time_varying());
        let n_alpha = self.effect.n_alpha();
        let k = if self.baseline.is_tbp() { self.baseline.k } else { 0 };
        let alpha = n_beta;
        let mu = alpha + n_alpha;
        let ln_sigma = mu + 1;
        let stick = ln_sigma + 1;
        let mut dim = stick + k.saturating_sub(1);
        let ln_theta = if k > 0 {
            dim += 1;
            Some(dim - 1)
        } else {
            None
        };
        Layout { d, n_beta, n_alpha, k, alpha, mu, ln_sigma, stick, ln_theta, dim }
    }

    pub fn dim(&self) -> usize {
        self.layout().dim
    }

    fn beta_names(&self) -> Vec<String> {
        self.covariates.iter().chain(self.time_varying.iter()).map(|c| format!("beta_{c}")).collect()
    }

    /// Names of the constrained parameters, in `ParameterVector::flatten` order.
    pub fn param_names(&self) -> Vec<String> {
        let l = self.layout();
        let mut names = self.beta_names();
        names.extend((1..=l.n_alpha).map(|j| format!("alpha_{j}")));
        names.push("mu".into());
        names.push("sigma".into());
        if l.k > 0 {
            names.extend((1..=l.k).map(|j| format!("w_{j}")));
            names.push("theta".into());
        }
        names
    }

    /// Names of the unconstrained coordinates.
    pub fn unconstrained_names(&self) -> Vec<String> {
        let l = self.layout();
        let mut names = self.beta_names();
        names.extend((1..=l.n_alpha).map(|j| format!("alpha_{j}")));
        names.push("mu".into());
        names.push("log_sigma".into());
        if l.k > 0 {
            names.extend((1..l.k).map(|j| format!("stick_{j}")));
            names.push("log_theta".into());
        }
        names
    }

    pub fn check_params(&self, psi: &ParameterVector) -> Result<()> {
        let l = self.layout();
        if psi.beta.len() != l.n_beta {
            return Err(Error::param(format!("expected {} beta coefficients, got {}", l.n_beta, psi.beta.len())));
        }
        if psi.alpha.len() != l.n_alpha {
            return Err(Error::param(format!("expected {} alpha coefficients, got {}", l.n_alpha, psi.alpha.len())));
        }
        if psi.beta.iter().chain(&psi.alpha).any(|v| !v.is_finite()) {
            return Err(Error::param("regression coefficients must be finite"));
        }
        BaselineParams::new(psi.mu, psi.sigma)?;
        if l.k > 0 {
            TbpWeights::new(psi.w.clone(), psi.theta)?;
            if psi.w.len() != l.k {
                return Err(Error::param(format!("expected {} TBP weights, got {}", l.k, psi.w.len())));
            }
        } else if !psi.w.is_empty() {
            return Err(Error::param("weights supplied for a parametric baseline"));
        }
        Ok(())
    }

    /// The baseline distribution implied by `psi` (validated).
    pub fn baseline_of(&self, psi: &ParameterVector) -> Result<Baseline> {
        let weights = if self.baseline.is_tbp() { Some(TbpWeights::new(psi.w.clone(), psi.theta)?) } else { None };
        Baseline::new(self.baseline, BaselineParams::new(psi.mu, psi.sigma)?, weights.as_ref())
    }

    pub(crate) fn baseline_unchecked(&self, psi: &ParameterVector) -> Baseline {
        let w = if self.baseline.is_tbp() { Some(psi.w.as_slice()) } else { None };
        Baseline::new_unchecked(self.baseline, BaselineParams { mu: psi.mu, sigma: psi.sigma }, w)
    }

    /// The covariate process of a subject with covariates `x` and switch time `t_x`
    /// (ignored unless the model is time-varying).
    pub fn process<'a>(&'a self, psi: &'a ParameterVector, x: &[f64], t_x: f64) -> Process<'a> {
        let d = self.d();
        let eta: f64 = psi.beta[..d].iter().zip(x).map(|(b, v)| b * v).sum();
        let exposure = if self.has_time_varying() {
            Exposure::Switch { t_x, beta_tv: psi.beta[d] }
        } else {
            let x1 = match self.flex_target() {
                Ok(FlexTarget::Covariate(i)) => x[i],
                _ => 0.0,
            };
            Exposure::Fixed { x1 }
        };
        Process::new(&self.effect, &psi.alpha, eta, exposure)
    }

    /// Map unconstrained coordinates to `ψ`.
    pub fn constrain(&self, z: &[f64]) -> Result<ParameterVector> {
        let l = self.layout();
        if z.len() != l.dim {
            return Err(Error::param(format!("expected {} unconstrained coordinates, got {}", l.dim, z.len())));
        }
        let (w, theta) = if l.k > 0 {
            let (w, _) = stick_breaking(&z[l.stick..l.stick + l.k - 1]);
            (w, z[l.ln_theta.unwrap()].exp())
        } else {
            (Vec::new(), 1.0)
        };
        Ok(ParameterVector {
            beta: z[..l.n_beta].to_vec(),
            alpha: z[l.alpha..l.alpha + l.n_alpha].to_vec(),
            mu: z[l.mu],
            sigma: z[l.ln_sigma].exp(),
            w,
            theta,
        })
    }

    /// Inverse of [`constrain`](Self::constrain).
    pub fn unconstrain(&self, psi: &ParameterVector) -> Result<Vec<f64>> {
        self.check_params(psi)?;
        let l = self.layout();
        let mut z = Vec::with_capacity(l.dim);
        z.extend_from_slice(&psi.beta);
        z.extend_from_slice(&psi.alpha);
        z.push(psi.mu);
        z.push(psi.sigma.ln());
        if l.k > 0 {
            z.extend(stick_breaking_inverse(&psi.w)?);
            z.push(psi.theta.ln());
        }
        Ok(z)
    }
}

impl ParameterVector {
    /// Values in [`ModelSpec::param_names`] order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.beta.len() + self.alpha.len() + 3 + self.w.len());
        out.extend_from_slice(&self.beta);
        out.extend_from_slice(&self.alpha);
        out.push(self.mu);
        out.push(self.sigma);
        if !self.w.is_empty() {
            out.extend_from_slice(&self.w);
            out.push(self.theta);
        }
        out
    }

    /// Inverse of [`flatten`](Self::flatten) for a given model.
    pub fn from_flat(model: &ModelSpec, v: &[f64]) -> Result<Self> {
        let l = model.layout();
        let want = l.n_beta + l.n_alpha + 2 + if l.k > 0 { l.k + 1 } else { 0 };
        if v.len() != want {
            return Err(Error::param(format!("expected {want} parameter values, got {}", v.len())));
        }
        let mut it = v.iter().copied();
        let beta: Vec<f64> = it.by_ref().take(l.n_beta).collect();
        let alpha: Vec<f64> = it.by_ref().take(l.n_alpha).collect();
        let mu = it.next().unwrap();
        let sigma = it.next().unwrap();
        let w: Vec<f64> = it.by_ref().take(l.k).collect();
        let theta = it.next().unwrap_or(1.0);
        Ok(Self { beta, alpha, mu, sigma, w, theta })
    }
}

#[inline]
fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Stick-breaking map from `K-1` reals to the `K`-simplex, with the log absolute
/// Jacobian determinant.
pub fn stick_breaking(y: &[f64]) -> (Vec<f64>, f64) {
    let k = y.len() + 1;
    let mut w = Vec::with_capacity(k);
    let mut rest: f64 = 1.0;
    let mut log_jac = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        let z = logistic(yi - ((k - i - 1) as f64).ln());
        log_jac += z.ln() + (1.0 - z).ln() + rest.ln();
        let wi = rest * z;
        w.push(wi);
        rest -= wi;
    }
    w.push(rest.max(0.0));
    (w, log_jac)
}

pub fn stick_breaking_inverse(w: &[f64]) -> Result<Vec<f64>> {
    let k = w.len();
    let mut rest = 1.0;
    let mut y = Vec::with_capacity(k.saturating_sub(1));
    for (i, &wi) in w[..k - 1].iter().enumerate() {
        let z = wi / rest;
        if !(z > 0.0 && z < 1.0) {
            return Err(Error::param(format!("weights must lie in the open simplex, got {w:?}")));
        }
        y.push(z.ln() - (-z).ln_1p() + ((k - i - 1) as f64).ln());
        rest -= wi;
    }
    Ok(y)
}

/// Back-propagate `dF/dw` through the stick-breaking map, including the gradient
/// of its log-Jacobian, into `dF/dy`.
pub fn stick_breaking_backprop(y: &[f64], d_w: &[f64], d_y: &mut [f64]) {
    let k = y.len() + 1;
    let mut zs = Vec::with_capacity(k - 1);
    let mut rests = Vec::with_capacity(k - 1);
    let mut rest = 1.0;
    for (i, &yi) in y.iter().enumerate() {
        let z = logistic(yi - ((k - i - 1) as f64).ln());
        zs.push(z);
        rests.push(rest);
        rest *= 1.0 - z;
    }
    // adjoint of the remaining stick, starting from w_K = r_K
    let mut adj = d_w[k - 1];
    for i in (0..k - 1).rev() {
        let (z, r) = (zs[i], rests[i]);
        d_y[i] = r * z * (1.0 - z) * (d_w[i] - adj) + 1.0 - 2.0 * z;
        adj = adj * (1.0 - z) + d_w[i] * z + 1.0 / r;
    }
}

/// Partials of a log-quantity with respect to the constrained parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamGrad {
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub mu: f64,
    pub sigma: f64,
    pub w: Vec<f64>,
    pub theta: f64,
}

impl ParamGrad {
    pub fn zeros(l: &Layout) -> Self {
        Self { beta: vec![0.0; l.n_beta], alpha: vec![0.0; l.n_alpha], mu: 0.0, sigma: 0.0, w: vec![0.0; l.k], theta: 0.0 }
    }

    pub fn clear(&mut self) {
        self.beta.iter_mut().for_each(|v| *v = 0.0);
        self.alpha.iter_mut().for_each(|v| *v = 0.0);
        self.w.iter_mut().for_each(|v| *v = 0.0);
        self.mu = 0.0;
        self.sigma = 0.0;
        self.theta = 0.0;
    }

    pub fn add_scaled(&mut self, other: &ParamGrad, s: f64) {
        for (a, b) in self.beta.iter_mut().zip(&other.beta) {
            *a += s * b;
        }
        for (a, b) in self.alpha.iter_mut().zip(&other.alpha) {
            *a += s * b;
        }
        for (a, b) in self.w.iter_mut().zip(&other.w) {
            *a += s * b;
        }
        self.mu += s * other.mu;
        self.sigma += s * other.sigma;
        self.theta += s * other.theta;
    }

    pub(crate) fn add_base(&mut self, g: &BaseGrad, s: f64) {
        self.mu += s * g.d_mu;
        self.sigma += s * g.d_sigma;
        for (a, b) in self.w.iter_mut().zip(&g.d_w) {
            *a += s * b;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baseline::Centering;

    fn tbp_model() -> ModelSpec {
        ModelSpec::constant(BaselineSpec::tbp(Centering::Weibull, 4).unwrap(), vec!["a".into(), "b".into()])
            .with_flexible("a", EffectSpec::piecewise(vec![0.0, 1.0, 2.0]).unwrap())
    }

    #[test]
    fn layout_and_names() {
        let m = tbp_model();
        let l = m.layout();
        assert_eq!(l.dim, 2 + 2 + 2 + 3 + 1);
        assert_eq!(m.unconstrained_names().len(), l.dim);
        assert_eq!(m.param_names(), vec!["beta_a", "beta_b", "alpha_1", "alpha_2", "mu", "sigma", "w_1", "w_2", "w_3", "w_4", "theta"]);
        let tv = ModelSpec::constant(BaselineSpec::weibull(), vec!["z".into()]).with_time_varying("onset");
        assert_eq!(tv.param_names(), vec!["beta_z", "beta_onset", "mu", "sigma"]);
    }

    #[test]
    fn flexible_target_rules() {
        assert_eq!(tbp_model().flex_target().unwrap(), FlexTarget::Covariate(0));
        let bad = tbp_model().with_flexible("zz", EffectSpec::piecewise(vec![0.0, 1.0]).unwrap());
        assert!(bad.validate().is_err());
        let tv = ModelSpec::constant(BaselineSpec::weibull(), vec!["z".into()])
            .with_time_varying("onset")
            .with_flexible("onset", EffectSpec::piecewise(vec![0.0, 1.0]).unwrap());
        assert_eq!(tv.flex_target().unwrap(), FlexTarget::TimeVarying);
        let mixed = tv.clone().with_flexible("z", EffectSpec::piecewise(vec![0.0, 1.0]).unwrap());
        assert!(mixed.validate().is_err());
    }

    #[test]
    fn transform_round_trip() {
        let m = tbp_model();
        let z: Vec<f64> = (0..m.dim()).map(|i| 0.3 * i as f64 - 1.1).collect();
        let psi = m.constrain(&z).unwrap();
        assert!((psi.w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        let back = m.unconstrain(&psi).unwrap();
        for (a, b) in z.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
        let flat = psi.flatten();
        assert_eq!(ParameterVector::from_flat(&m, &flat).unwrap(), psi);
    }

    #[test]
    fn stick_breaking_centre_is_uniform() {
        let (w, _) = stick_breaking(&[0.0, 0.0, 0.0]);
        for wi in w {
            assert!((wi - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn stick_breaking_jacobian_matches_determinant() {
        // K = 3: compare against the log-determinant of the 2x2 Jacobian of (w1, w2)
        let y = [0.4, -0.7];
        let (_, lj) = stick_breaking(&y);
        let h = 1e-6;
        let mut jac = [[0.0; 2]; 2];
        for c in 0..2 {
            let mut up = y;
            let mut dn = y;
            up[c] += h;
            dn[c] -= h;
            let (wu, _) = stick_breaking(&up);
            let (wd, _) = stick_breaking(&dn);
            for r in 0..2 {
                jac[r][c] = (wu[r] - wd[r]) / (2.0 * h);
            }
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        assert!((det.abs().ln() - lj).abs() < 1e-8);
    }

    #[test]
    fn dirichlet_normaliser_by_quadrature() {
        // ∫ exp(log-Jacobian) dy over R² equals the simplex volume 1/Γ(3) = 1/2
        let n = 400;
        let (lo, hi) = (-25.0, 25.0);
        let step = (hi - lo) / n as f64;
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let y = [lo + (i as f64 + 0.5) * step, lo + (j as f64 + 0.5) * step];
                total += stick_breaking(&y).1.exp() * step * step;
            }
        }
        assert!((total - 0.5).abs() < 1e-3, "{total}");
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let y = [0.3, -1.2, 0.8];
        let dl = [0.7, -0.2, 1.5, 0.1];
        let f = |y: &[f64]| {
            let (w, lj) = stick_breaking(y);
            w.iter().zip(&dl).map(|(a, b)| a * b).sum::<f64>() + lj
        };
        let mut g = [0.0; 3];
        stick_breaking_backprop(&y, &dl, &mut g);
        for i in 0..3 {
            let mut up = y;
            let mut dn = y;
            up[i] += 1e-6;
            dn[i] -= 1e-6;
            let fd = (f(&up) - f(&dn)) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-7, "{i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn serde_round_trip() {
        let m = tbp_model();
        let s = serde_json::to_string(&m).unwrap();
        let back: ModelSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }
}

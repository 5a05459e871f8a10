//! Log-likelihood under interval censoring and left truncation, priors, and the
//! log-posterior in unconstrained coordinates with its gradient.
//!
//! A subject with record `(y_l, y_u, δ, l, x)` contributes
//!
//! - `δ = 1`: `ln f0(V(y_l)) + ln v(y_l)`
//! - `δ = 0`: `ln[S0(V(y_l)) - S0(V(y_u))]` (`y_u = ∞` for right censoring)
//!
//! minus `ln S0(V(l))` when `l > 0`.

use crate::baseline::{BaseGrad, Baseline};
use crate::covproc::{ProcGrad, Process};
use crate::error::{Error, Result};
use crate::model::{stick_breaking, stick_breaking_backprop, FlexTarget, Layout, ModelSpec, ParamGrad, ParameterVector, PriorSpec};
use crate::special::{digamma, ln_gamma, ln_gamma_pdf, log1m_exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Log-probabilities below this are treated as zero probability.
pub const LOG_FLOOR: f64 = -745.0;

const CHUNK: usize = 64;

/// One observation `(y_l, y_u, δ, l, x, t_X)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub y_l: f64,
    /// `∞` for right censoring; equal to `y_l` for exact events.
    pub y_u: f64,
    pub delta: bool,
    /// Left-truncation (study entry) time; 0 when none.
    pub trunc: f64,
    pub x: Vec<f64>,
    /// Switch time of the time-varying covariate; `∞` if it never switches.
    pub t_x: f64,
}

impl SubjectRecord {
    pub fn exact(y: f64, x: Vec<f64>) -> Self {
        Self { y_l: y, y_u: y, delta: true, trunc: 0.0, x, t_x: f64::INFINITY }
    }

    pub fn right_censored(y: f64, x: Vec<f64>) -> Self {
        Self::interval(y, f64::INFINITY, x)
    }

    pub fn interval(y_l: f64, y_u: f64, x: Vec<f64>) -> Self {
        Self { y_l, y_u, delta: false, trunc: 0.0, x, t_x: f64::INFINITY }
    }

    pub fn truncated(mut self, l: f64) -> Self {
        self.trunc = l;
        self
    }

    pub fn switching_at(mut self, t_x: f64) -> Self {
        self.t_x = t_x;
        self
    }

    /// Check the record against the model; `index` is reported in errors.
    pub fn validate(&self, model: &ModelSpec, index: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::input(format!("record {index}: {msg}")));
        if self.x.len() != model.d() {
            return bad(format!("expected {} covariates, got {}", model.d(), self.x.len()));
        }
        if self.x.iter().any(|v| !v.is_finite()) {
            return bad("covariates must be finite".into());
        }
        if !(self.trunc >= 0.0 && self.trunc.is_finite()) {
            return bad(format!("truncation time must be finite and >= 0, got {}", self.trunc));
        }
        if self.delta {
            if !(self.y_l > 0.0 && self.y_l.is_finite()) {
                return bad(format!("event time must be finite and > 0, got {}", self.y_l));
            }
            if self.y_u != self.y_l {
                return bad(format!("exact event needs y_u = y_l, got ({}, {})", self.y_l, self.y_u));
            }
        } else {
            if !(self.y_l >= 0.0 && self.y_l.is_finite()) {
                return bad(format!("y_l must be finite and >= 0, got {}", self.y_l));
            }
            if self.y_u.is_nan() || self.y_u <= self.y_l {
                return bad(format!("censoring interval ({}, {}] is empty", self.y_l, self.y_u));
            }
        }
        if self.trunc > self.y_l {
            return bad(format!("y_l={} lies below the truncation time {}", self.y_l, self.trunc));
        }
        if model.has_time_varying() && !(self.t_x > 0.0) {
            return bad(format!("switch time must be > 0 (or inf), got {}", self.t_x));
        }
        Ok(())
    }
}

/// Reusable buffers for the per-subject gradient.
struct Scratch {
    pg: ProcGrad,
    bg: BaseGrad,
    a: ParamGrad,
    b: ParamGrad,
    sub: ParamGrad,
}

impl Scratch {
    fn new(l: &Layout) -> Self {
        Self {
            pg: ProcGrad::new(l.n_alpha),
            bg: BaseGrad::with_weights(l.k),
            a: ParamGrad::zeros(l),
            b: ParamGrad::zeros(l),
            sub: ParamGrad::zeros(l),
        }
    }
}

fn add_process(out: &mut ParamGrad, pg: &ProcGrad, s: f64, x: &[f64], tv: bool) {
    if s == 0.0 {
        return;
    }
    let d = x.len();
    for (o, xj) in out.beta[..d].iter_mut().zip(x) {
        *o += s * pg.d_eta * xj;
    }
    if tv {
        out.beta[d] += s * pg.d_beta_tv;
    }
    for (o, a) in out.alpha.iter_mut().zip(&pg.d_alpha) {
        *o += s * a;
    }
}

/// `ln S0(V(t))`, with its gradient written into `out` when requested.
#[allow(clippy::too_many_arguments)]
fn ln_surv(
    p: &Process,
    base: &Baseline,
    t: f64,
    x: &[f64],
    tv: bool,
    pg: &mut ProcGrad,
    bg: &mut BaseGrad,
    out: Option<&mut ParamGrad>,
) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    if t == f64::INFINITY {
        return f64::NEG_INFINITY;
    }
    let ln_v = p.ln_value_grad(t, pg);
    let val = base.log_survivor_grad(ln_v, bg);
    if let Some(o) = out {
        o.add_base(bg, 1.0);
        add_process(o, pg, bg.d_ln_s, x, tv);
    }
    val
}

fn subject_term(
    model: &ModelSpec,
    psi: &ParameterVector,
    base: &Baseline,
    rec: &SubjectRecord,
    index: usize,
    scratch: Option<&mut Scratch>,
) -> Result<f64> {
    let tv = model.has_time_varying();
    let p = model.process(psi, &rec.x, rec.t_x);
    let x = rec.x.as_slice();
    let mut local;
    let (sc, want) = match scratch {
        Some(s) => (s, true),
        None => {
            local = Scratch {
                pg: ProcGrad::new(psi.alpha.len()),
                bg: BaseGrad::with_weights(psi.w.len()),
                a: ParamGrad::default(),
                b: ParamGrad::default(),
                sub: ParamGrad::default(),
            };
            (&mut local, false)
        }
    };
    if want {
        sc.sub.clear();
    }
    let mut value = if rec.delta {
        let ln_v = p.ln_value_grad(rec.y_l, &mut sc.pg);
        let lf = base.log_density_grad(ln_v, &mut sc.bg);
        if want {
            sc.sub.add_base(&sc.bg, 1.0);
            add_process(&mut sc.sub, &sc.pg, sc.bg.d_ln_s, x, tv);
        }
        let lv = p.ln_slope_grad(rec.y_l, &mut sc.pg);
        if want {
            add_process(&mut sc.sub, &sc.pg, 1.0, x, tv);
        }
        lf + lv
    } else {
        if want {
            sc.a.clear();
        }
        let la = ln_surv(&p, base, rec.y_l, x, tv, &mut sc.pg, &mut sc.bg, want.then_some(&mut sc.a));
        if rec.y_u == f64::INFINITY {
            if want {
                sc.sub.add_scaled(&sc.a, 1.0);
            }
            la
        } else {
            if want {
                sc.b.clear();
            }
            let lb = ln_surv(&p, base, rec.y_u, x, tv, &mut sc.pg, &mut sc.bg, want.then_some(&mut sc.b));
            if !(lb < la) {
                if la <= LOG_FLOOR {
                    return Ok(f64::NEG_INFINITY);
                }
                return Err(Error::DegenerateInterval { subject: index, s_lower: la.exp(), s_upper: lb.exp() });
            }
            let r = (lb - la).exp();
            if want {
                let inv = 1.0 / (1.0 - r);
                sc.sub.add_scaled(&sc.a, inv);
                sc.sub.add_scaled(&sc.b, -r * inv);
            }
            la + log1m_exp(lb - la)
        }
    };
    if rec.trunc > 0.0 {
        if want {
            sc.a.clear();
        }
        let ll = ln_surv(&p, base, rec.trunc, x, tv, &mut sc.pg, &mut sc.bg, want.then_some(&mut sc.a));
        if want {
            sc.sub.add_scaled(&sc.a, -1.0);
        }
        value -= ll;
    }
    if value.is_nan() || value == f64::INFINITY {
        return Err(Error::numerical(format!("non-finite log-likelihood ({value}) for subject {index}")));
    }
    Ok(value)
}

fn monotone_for_data(model: &ModelSpec, psi: &ParameterVector, levels: &[f64]) -> bool {
    levels.iter().all(|&c| model.effect.flex_is_monotone(&psi.alpha, c))
}

/// Distinct values taken by the flexible covariate in `data` (the switched state
/// for a time-varying flexible effect).
pub fn flexible_levels(model: &ModelSpec, data: &[SubjectRecord]) -> Result<Vec<f64>> {
    let mut levels: Vec<f64> = match model.flex_target()? {
        FlexTarget::None => Vec::new(),
        FlexTarget::Covariate(i) => data.iter().map(|r| r.x[i]).collect(),
        FlexTarget::TimeVarying => {
            if data.iter().any(|r| r.t_x.is_finite()) {
                vec![1.0]
            } else {
                Vec::new()
            }
        }
    };
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    Ok(levels)
}

/// Log-likelihood contribution of one subject.
pub fn loglik_subject(model: &ModelSpec, psi: &ParameterVector, rec: &SubjectRecord) -> Result<f64> {
    model.check_params(psi)?;
    rec.validate(model, 0)?;
    let base = model.baseline_of(psi)?;
    if !model.process(psi, &rec.x, rec.t_x).is_monotone() {
        return Err(Error::NonMonotone("covariate process decreases for this subject".into()));
    }
    subject_term(model, psi, &base, rec, 0, None)
}

/// Sum of subject contributions.
pub fn loglik_total(model: &ModelSpec, psi: &ParameterVector, data: &[SubjectRecord]) -> Result<f64> {
    model.check_params(psi)?;
    for (i, r) in data.iter().enumerate() {
        r.validate(model, i)?;
    }
    let base = model.baseline_of(psi)?;
    let levels = flexible_levels(model, data)?;
    if !monotone_for_data(model, psi, &levels) {
        return Err(Error::NonMonotone("covariate process decreases for some subject".into()));
    }
    chunked_value(model, psi, &base, data)
}

fn chunked_value(model: &ModelSpec, psi: &ParameterVector, base: &Baseline, data: &[SubjectRecord]) -> Result<f64> {
    let partial: Vec<Result<f64>> = data
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut s = 0.0;
            for (j, rec) in chunk.iter().enumerate() {
                s += subject_term(model, psi, base, rec, c * CHUNK + j, None)?;
            }
            Ok(s)
        })
        .collect();
    let mut total = 0.0;
    for p in partial {
        total += p?;
    }
    Ok(total)
}

/// Per-subject contributions.
pub fn loglik_pointwise(model: &ModelSpec, psi: &ParameterVector, data: &[SubjectRecord]) -> Result<Vec<f64>> {
    model.check_params(psi)?;
    let base = model.baseline_of(psi)?;
    let levels = flexible_levels(model, data)?;
    if !monotone_for_data(model, psi, &levels) {
        return Err(Error::NonMonotone("covariate process decreases for some subject".into()));
    }
    data.iter().enumerate().map(|(i, r)| subject_term(model, psi, &base, r, i, None)).collect()
}

fn log_prior_grad(model: &ModelSpec, psi: &ParameterVector, priors: &PriorSpec, grad: Option<&mut ParamGrad>) -> f64 {
    let s = psi.sigma;
    let mut lp = ln_gamma_pdf(s, priors.a_sigma, priors.b_sigma);
    let tbp = model.baseline.is_tbp();
    let mut g_theta = 0.0;
    if tbp {
        let k = psi.w.len() as f64;
        let th = psi.theta;
        let sum_ln_w: f64 = psi.w.iter().map(|w| w.ln()).sum();
        lp += ln_gamma(k * th) - k * ln_gamma(th) + (th - 1.0) * sum_ln_w;
        lp += ln_gamma_pdf(th, priors.a_theta, priors.b_theta);
        g_theta = k * digamma(k * th) - k * digamma(th) + sum_ln_w + (priors.a_theta - 1.0) / th - priors.b_theta;
    }
    if let Some(g) = grad {
        g.sigma += (priors.a_sigma - 1.0) / s - priors.b_sigma;
        if tbp {
            for (gw, w) in g.w.iter_mut().zip(&psi.w) {
                *gw += (psi.theta - 1.0) / w;
            }
            g.theta += g_theta;
        }
    }
    lp
}

/// Log prior density of `ψ`: flat on `β`, `α`, `μ`; Gamma on `σ`; for TBP a
/// symmetric Dirichlet(θ) on `w` and Gamma on `θ`.
pub fn log_prior(model: &ModelSpec, psi: &ParameterVector, priors: &PriorSpec) -> Result<f64> {
    model.check_params(psi)?;
    priors.validate()?;
    Ok(log_prior_grad(model, psi, priors, None))
}

/// The posterior in unconstrained coordinates, owning its data.
#[derive(Debug, Clone)]
pub struct Posterior {
    model: ModelSpec,
    data: Vec<SubjectRecord>,
    priors: PriorSpec,
    levels: Vec<f64>,
    layout: Layout,
}

impl Posterior {
    pub fn new(model: ModelSpec, data: Vec<SubjectRecord>, priors: PriorSpec) -> Result<Self> {
        model.validate()?;
        priors.validate()?;
        for (i, r) in data.iter().enumerate() {
            r.validate(&model, i)?;
        }
        let levels = flexible_levels(&model, &data)?;
        let layout = model.layout();
        Ok(Self { model, data, priors, levels, layout })
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn data(&self) -> &[SubjectRecord] {
        &self.data
    }

    pub fn priors(&self) -> &PriorSpec {
        &self.priors
    }

    pub fn dim(&self) -> usize {
        self.layout.dim
    }

    /// The same posterior with subject `i` removed.
    pub fn without(&self, i: usize) -> Result<Self> {
        let mut data = self.data.clone();
        data.remove(i);
        Self::new(self.model.clone(), data, self.priors)
    }

    /// Constrained parameters, or `None` when `z` maps outside the support the
    /// likelihood can evaluate (degenerate weights, non-monotone process).
    fn admissible(&self, z: &[f64]) -> Option<ParameterVector> {
        if z.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let psi = self.model.constrain(z).ok()?;
        if !(psi.sigma > 0.0 && psi.sigma.is_finite()) || !(psi.theta > 0.0 && psi.theta.is_finite()) {
            return None;
        }
        if psi.w.iter().any(|w| !(*w > 0.0)) {
            return None;
        }
        if !monotone_for_data(&self.model, &psi, &self.levels) {
            return None;
        }
        Some(psi)
    }

    fn jacobian(&self, z: &[f64]) -> f64 {
        let l = &self.layout;
        let mut lj = z[l.ln_sigma];
        if let Some(t) = l.ln_theta {
            lj += stick_breaking(&z[l.stick..l.stick + l.k - 1]).1 + z[t];
        }
        lj
    }

    /// Log posterior density at unconstrained `z` (up to a constant); `-∞` when `z`
    /// is inadmissible or the likelihood cannot be evaluated.
    pub fn log_density(&self, z: &[f64]) -> f64 {
        let Some(psi) = self.admissible(z) else {
            return f64::NEG_INFINITY;
        };
        let base = self.model.baseline_unchecked(&psi);
        let Ok(ll) = chunked_value(&self.model, &psi, &base, &self.data) else {
            return f64::NEG_INFINITY;
        };
        let v = ll + log_prior_grad(&self.model, &psi, &self.priors, None) + self.jacobian(z);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }

    /// Log posterior density and its gradient; returns `-∞` (gradient unspecified)
    /// on rejection.
    pub fn log_density_and_grad(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        self.try_value_and_grad(z, grad).unwrap_or(f64::NEG_INFINITY)
    }

    /// As [`log_density_and_grad`](Self::log_density_and_grad) but reporting why a
    /// point was rejected.
    pub fn try_value_and_grad(&self, z: &[f64], grad: &mut [f64]) -> Result<f64> {
        let l = &self.layout;
        if z.len() != l.dim || grad.len() != l.dim {
            return Err(Error::param(format!("expected dimension {}", l.dim)));
        }
        let psi = self.admissible(z).ok_or_else(|| Error::param("point outside the admissible parameter region"))?;
        let base = self.model.baseline_unchecked(&psi);
        let parts: Vec<Result<(f64, ParamGrad)>> = self
            .data
            .par_chunks(CHUNK)
            .enumerate()
            .map(|(c, chunk)| {
                let mut sc = Scratch::new(l);
                let mut acc = ParamGrad::zeros(l);
                let mut s = 0.0;
                for (j, rec) in chunk.iter().enumerate() {
                    s += subject_term(&self.model, &psi, &base, rec, c * CHUNK + j, Some(&mut sc))?;
                    acc.add_scaled(&sc.sub, 1.0);
                }
                Ok((s, acc))
            })
            .collect();
        let mut total = ParamGrad::zeros(l);
        let mut value = 0.0;
        for p in parts {
            let (v, g) = p?;
            if v == f64::NEG_INFINITY {
                return Err(Error::numerical("zero-probability observation"));
            }
            value += v;
            total.add_scaled(&g, 1.0);
        }
        value += log_prior_grad(&self.model, &psi, &self.priors, Some(&mut total));
        value += self.jacobian(z);

        grad[..l.n_beta].copy_from_slice(&total.beta);
        grad[l.alpha..l.alpha + l.n_alpha].copy_from_slice(&total.alpha);
        grad[l.mu] = total.mu;
        grad[l.ln_sigma] = total.sigma * psi.sigma + 1.0;
        if let Some(t) = l.ln_theta {
            stick_breaking_backprop(&z[l.stick..l.stick + l.k - 1], &total.w, &mut grad[l.stick..l.stick + l.k - 1]);
            grad[t] = total.theta * psi.theta + 1.0;
        }
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::numerical(format!("non-finite log-posterior or gradient at z={z:?}")));
        }
        Ok(value)
    }

    /// Per-subject log-likelihood at constrained parameters.
    pub fn pointwise(&self, psi: &ParameterVector) -> Result<Vec<f64>> {
        loglik_pointwise(&self.model, psi, &self.data)
    }
}

/// Log posterior in unconstrained coordinates (`-∞` on rejection).
pub fn log_posterior_unconstrained(model: &ModelSpec, z: &[f64], data: &[SubjectRecord], priors: &PriorSpec) -> Result<f64> {
    let post = Posterior::new(model.clone(), data.to_vec(), *priors)?;
    Ok(post.log_density(z))
}

pub fn grad_log_posterior(model: &ModelSpec, z: &[f64], data: &[SubjectRecord], priors: &PriorSpec) -> Result<Vec<f64>> {
    let post = Posterior::new(model.clone(), data.to_vec(), *priors)?;
    let mut g = vec![0.0; post.dim()];
    post.try_value_and_grad(z, &mut g)?;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baseline::{BaselineSpec, Centering};
    use crate::covproc::EffectSpec;

    fn unit_exp() -> (ModelSpec, ParameterVector) {
        let m = ModelSpec::constant(BaselineSpec::weibull(), vec!["x".into()]);
        let psi = ParameterVector { beta: vec![0.0], alpha: vec![], mu: 0.0, sigma: 1.0, w: vec![], theta: 1.0 };
        (m, psi)
    }

    #[test]
    fn hand_examples() {
        let (m, psi) = unit_exp();
        let ev = SubjectRecord::exact(1.0, vec![1.0]);
        assert!((loglik_subject(&m, &psi, &ev).unwrap() + 1.0).abs() < 1e-15);
        let rc = SubjectRecord::right_censored(2.0, vec![1.0]);
        assert!((loglik_subject(&m, &psi, &rc).unwrap() + 2.0).abs() < 1e-15);
        let tr = rc.clone().truncated(1.0);
        assert!((loglik_subject(&m, &psi, &tr).unwrap() + 1.0).abs() < 1e-15);
        assert!((loglik_total(&m, &psi, &[rc.clone(), rc]).unwrap() + 4.0).abs() < 1e-15);
        assert_eq!(loglik_total(&m, &psi, &[]).unwrap(), 0.0);
    }

    #[test]
    fn prior_examples() {
        let (m, psi) = unit_exp();
        let pr = PriorSpec { a_sigma: 1.0, b_sigma: 1.0, ..Default::default() };
        assert!((log_prior(&m, &psi, &pr).unwrap() + 1.0).abs() < 1e-15);
        let mut other = psi.clone();
        other.beta[0] = 7.0;
        assert_eq!(log_prior(&m, &other, &pr).unwrap(), log_prior(&m, &psi, &pr).unwrap());

        let k = 5;
        let tm = ModelSpec::constant(BaselineSpec::tbp(Centering::Weibull, k).unwrap(), vec![]);
        let tpsi = ParameterVector { beta: vec![], alpha: vec![], mu: 0.0, sigma: 1.0, w: vec![1.0 / k as f64; k], theta: 1.0 };
        let lp = log_prior(&tm, &tpsi, &pr).unwrap();
        // Gamma(1,1) at σ=1 and θ=1 each give -1
        assert!((lp - (ln_gamma(k as f64) - 2.0)).abs() < 1e-12);
    }

    #[test]
    fn degenerate_interval_is_reported() {
        // with x'β = 4 the two endpoints collapse onto the same ln V in floating point
        let (m, mut psi) = unit_exp();
        psi.beta[0] = 4.0;
        let base = m.baseline_of(&psi).unwrap();
        let rec = SubjectRecord::interval(1.0, 1.0 + f64::EPSILON, vec![1.0]);
        rec.validate(&m, 0).unwrap();
        let r = subject_term(&m, &psi, &base, &rec, 3, None);
        assert!(matches!(r, Err(Error::DegenerateInterval { subject: 3, .. })), "{r:?}");
    }

    #[test]
    fn validation_errors() {
        let (m, _) = unit_exp();
        assert!(SubjectRecord::exact(0.0, vec![1.0]).validate(&m, 0).is_err());
        assert!(SubjectRecord::interval(2.0, 1.0, vec![1.0]).validate(&m, 0).is_err());
        assert!(SubjectRecord::right_censored(2.0, vec![1.0]).truncated(3.0).validate(&m, 0).is_err());
        assert!(SubjectRecord::right_censored(2.0, vec![]).validate(&m, 0).is_err());
        assert!(SubjectRecord::interval(0.0, 1.0, vec![1.0]).validate(&m, 0).is_ok());
    }

    #[test]
    fn spline_violation_gives_minus_infinity() {
        let m = ModelSpec::constant(BaselineSpec::weibull(), vec!["x".into()])
            .with_flexible("x", EffectSpec::spline(vec![-1.0, 0.3, 2.0]).unwrap());
        let data = vec![SubjectRecord::exact(1.0, vec![1.0]), SubjectRecord::right_censored(2.0, vec![0.0])];
        let post = Posterior::new(m, data, PriorSpec::default()).unwrap();
        // β, α1, α2, μ, ln σ
        let z = [0.0, 3.0, 0.0, 0.0, 0.0];
        assert_eq!(post.log_density(&z), f64::NEG_INFINITY);
        let ok = [0.0, 0.2, 0.1, 0.0, 0.0];
        assert!(post.log_density(&ok).is_finite());
    }
}

//! Synthetic data from a fitted or hypothesized model by inverse-transform
//! sampling, with right or interval censoring and left truncation.

use crate::error::{Error, Result};
use crate::inference::{quantile_time, Pattern};
use crate::likelihood::SubjectRecord;
use crate::model::{ModelSpec, ParameterVector};
use crate::sampler::rng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Stream tag separating simulation draws from sampler streams.
const SIM_STREAM: u64 = 0x5349_4d55;

/// Truncation draws allowed per subject before the configuration is rejected.
const MAX_TRIES: usize = 10_000;

/// Distribution of one covariate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovariateGen {
    Bernoulli { p: f64 },
    Normal { mean: f64, sd: f64 },
    Uniform { lo: f64, hi: f64 },
    Constant { value: f64 },
}

/// Distribution of a nonnegative time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case", deny_unknown_fields)]
pub enum TimeDist {
    Exponential { rate: f64 },
    Uniform { lo: f64, hi: f64 },
    Constant { value: f64 },
}

/// Onset of the time-varying covariate: it switches on with probability `prob`, at a
/// time drawn from `onset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchGen {
    pub prob: f64,
    pub onset: TimeDist,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CensoringSpec {
    /// End of follow-up.
    pub administrative: Option<f64>,
    /// Rate of independent exponential dropout.
    pub rate: Option<f64>,
    /// Spacing of inspection visits (from study entry); events are then only known
    /// to lie between two visits.
    pub visit_interval: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    pub model: ModelSpec,
    pub truth: ParameterVector,
    /// One generator per covariate of `model`.
    #[serde(default)]
    pub covariates: Vec<CovariateGen>,
    #[serde(default)]
    pub switch: Option<SwitchGen>,
    #[serde(default)]
    pub censoring: CensoringSpec,
    /// Study-entry time distribution.
    #[serde(default)]
    pub truncation: Option<TimeDist>,
}

impl CovariateGen {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            CovariateGen::Bernoulli { p } => (0.0..=1.0).contains(&p),
            CovariateGen::Normal { mean, sd } => mean.is_finite() && sd.is_finite() && sd >= 0.0,
            CovariateGen::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo <= hi,
            CovariateGen::Constant { value } => value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::input(format!("invalid covariate generator {self:?}")))
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            CovariateGen::Bernoulli { p } => f64::from(u8::from(rng.random::<f64>() < p)),
            CovariateGen::Normal { mean, sd } => Normal::new(mean, sd).expect("validated").sample(rng),
            CovariateGen::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            CovariateGen::Constant { value } => value,
        }
    }
}

impl TimeDist {
    fn validate(&self, what: &str) -> Result<()> {
        let ok = match *self {
            TimeDist::Exponential { rate } => rate > 0.0 && rate.is_finite(),
            TimeDist::Uniform { lo, hi } => lo >= 0.0 && hi.is_finite() && lo <= hi,
            TimeDist::Constant { value } => value >= 0.0 && value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::input(format!("invalid {what} distribution {self:?}")))
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            TimeDist::Exponential { rate } => Exp::new(rate).expect("validated").sample(rng),
            TimeDist::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            TimeDist::Constant { value } => value,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::input("simulation needs n >= 1"));
        }
        self.model.validate()?;
        self.model.check_params(&self.truth)?;
        if self.covariates.len() != self.model.d() {
            return Err(Error::input(format!("{} covariate generators for {} covariates", self.covariates.len(), self.model.d())));
        }
        for g in &self.covariates {
            g.validate()?;
        }
        match (&self.switch, self.model.has_time_varying()) {
            (Some(s), true) => {
                if !(0.0..=1.0).contains(&s.prob) {
                    return Err(Error::input(format!("switch probability must lie in [0,1], got {}", s.prob)));
                }
                s.onset.validate("onset")?;
            }
            (None, true) => return Err(Error::input("time-varying model needs a switch generator")),
            (Some(_), false) => return Err(Error::input("switch generator given but the model has no time-varying covariate")),
            (None, false) => {}
        }
        let c = &self.censoring;
        if let Some(a) = c.administrative {
            if !(a > 0.0) {
                return Err(Error::input(format!("administrative censoring time must be > 0 (no events observable otherwise), got {a}")));
            }
        }
        if let Some(r) = c.rate {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::input(format!("censoring rate must be finite and >= 0, got {r}")));
            }
        }
        if let Some(v) = c.visit_interval {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::input(format!("visit interval must be finite and > 0, got {v}")));
            }
        }
        if let Some(t) = &self.truncation {
            t.validate("truncation")?;
        }
        Ok(())
    }
}

/// `T = V^{-1}(S0^{-1}(u) | x)`: the event time at uniform draw `u`.
pub fn event_time_at(model: &ModelSpec, psi: &ParameterVector, pat: &Pattern, u: f64) -> Result<f64> {
    quantile_time(model, psi, pat, u)
}

fn open_uniform(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// One event time by inverse-transform sampling.
pub fn draw_event_time(model: &ModelSpec, psi: &ParameterVector, pat: &Pattern, rng: &mut ChaCha8Rng) -> Result<f64> {
    event_time_at(model, psi, pat, open_uniform(rng))
}

fn simulate_subject(cfg: &SimConfig, i: usize) -> Result<SubjectRecord> {
    let mut rng = rng::stream(cfg.seed, i as u64, SIM_STREAM);
    let x: Vec<f64> = cfg.covariates.iter().map(|g| g.sample(&mut rng)).collect();
    let t_x = match &cfg.switch {
        Some(s) if rng.random::<f64>() < s.prob => s.onset.sample(&mut rng).max(f64::MIN_POSITIVE),
        _ => f64::INFINITY,
    };
    let pat = Pattern::switching(x.clone(), t_x);
    let entry = cfg.truncation.map_or(0.0, |d| d.sample(&mut rng));
    let mut t = f64::NAN;
    for _ in 0..MAX_TRIES {
        let draw = draw_event_time(&cfg.model, &cfg.truth, &pat, &mut rng)?;
        if draw > entry {
            t = draw;
            break;
        }
    }
    if t.is_nan() {
        return Err(Error::input(format!(
            "subject {i}: no event time beyond entry {entry} in {MAX_TRIES} draws (truncation acceptance rate below 1e-4)"
        )));
    }
    let c = &cfg.censoring;
    let mut cens = c.administrative.unwrap_or(f64::INFINITY);
    if let Some(r) = c.rate.filter(|r| *r > 0.0) {
        cens = cens.min(entry + Exp::new(r).expect("validated").sample(&mut rng));
    }
    let rec = match c.visit_interval {
        None => {
            if t <= cens {
                SubjectRecord::exact(t, x)
            } else {
                SubjectRecord::right_censored(cens.max(entry), x)
            }
        }
        Some(h) => {
            // visits at entry + k h, k >= 1, up to the censoring time
            let k = ((t - entry) / h).ceil().max(1.0);
            let upper = entry + k * h;
            if upper <= cens {
                SubjectRecord::interval(entry + (k - 1.0) * h, upper, x)
            } else {
                let last = entry + ((cens - entry) / h).floor().max(0.0) * h;
                SubjectRecord::right_censored(last, x)
            }
        }
    };
    Ok(rec.truncated(entry).switching_at(t_x))
}

/// Simulate `cfg.n` records. Each subject uses its own random stream, so the result
/// depends only on the configuration.
pub fn simulate_dataset(cfg: &SimConfig) -> Result<Vec<SubjectRecord>> {
    cfg.validate()?;
    (0..cfg.n).into_par_iter().map(|i| simulate_subject(cfg, i)).collect()
}

/// Replace interval-censored observations by exact events at the interval midpoint.
pub fn midpoint_events(data: &[SubjectRecord]) -> Vec<SubjectRecord> {
    data.iter()
        .map(|r| {
            if !r.delta && r.y_u.is_finite() {
                let mid = 0.5 * (r.y_l + r.y_u);
                SubjectRecord { y_l: mid, y_u: mid, delta: true, ..r.clone() }
            } else {
                r.clone()
            }
        })
        .collect()
}

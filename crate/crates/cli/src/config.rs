//! TOML configuration: model structure, priors, sampler settings, optional true
//! parameters and simulation settings.

use crate::error::{CliError, Context, Result};
use qaft::inference::sorted_quantile;
use qaft::simulate::{CensoringSpec, CovariateGen, SwitchGen, TimeDist};
use qaft::{
    BaselineSpec, Centering, EffectKind, EffectSpec, Family, ModelSpec, ParameterVector, PriorSpec, SamplerConfig, SimConfig, SubjectRecord,
};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub model: ModelSection,
    pub baseline: BaselineSection,
    #[serde(default)]
    pub effect: EffectSection,
    #[serde(default)]
    pub priors: PriorSpec,
    #[serde(default)]
    pub sampler: SamplerConfig,
    /// Known parameter values, for `simulate` and `af --analytic`.
    #[serde(default)]
    pub truth: Option<ParameterVector>,
    #[serde(default)]
    pub simulate: Option<SimulateSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub covariates: Vec<String>,
    #[serde(default)]
    pub time_varying: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSection {
    pub family: Family,
    #[serde(default)]
    pub centering: Option<Centering>,
    #[serde(default, rename = "K", alias = "k")]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EffectSection {
    pub kind: EffectKind,
    #[serde(default)]
    pub flexible_covariate: Option<String>,
    /// Piecewise: break points on the time axis starting at 0. Spline: knots on the
    /// log-time axis, boundaries included.
    #[serde(default)]
    pub knots: Option<Vec<f64>>,
    /// Data-driven placement, e.g. `quantiles:2,log` or `equal:3`.
    #[serde(default)]
    pub rule: Option<String>,
}

impl Default for EffectSection {
    fn default() -> Self {
        Self { kind: EffectKind::Constant, flexible_covariate: None, knots: None, rule: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub n: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub covariates: Vec<CovariateGen>,
    #[serde(default)]
    pub switch: Option<SwitchGen>,
    #[serde(default)]
    pub censoring: CensoringSpec,
    #[serde(default)]
    pub truncation: Option<TimeDist>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    Quantiles,
    Equal,
}

/// Knot placement rule `quantiles:K[,log]` or `equal:K[,log]`: `K` interior knots at
/// the `j/(K+1)` quantiles of observed event times, or equally spaced over their
/// range, computed on the log-time axis with `log`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KnotRule {
    pub placement: Placement,
    pub interior: usize,
    pub log: bool,
}

impl std::str::FromStr for KnotRule {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || CliError::input(format!("effect.rule: expected 'quantiles:K[,log]' or 'equal:K[,log]', got '{s}'"));
        let (name, rest) = s.split_once(':').ok_or_else(bad)?;
        let placement = match name.trim() {
            "quantiles" => Placement::Quantiles,
            "equal" => Placement::Equal,
            _ => return Err(bad()),
        };
        let mut parts = rest.split(',').map(str::trim);
        let interior: usize = parts.next().and_then(|k| k.parse().ok()).ok_or_else(bad)?;
        let log = match parts.next() {
            None => false,
            Some("log") => true,
            Some(_) => return Err(bad()),
        };
        if parts.next().is_some() || interior == 0 {
            return Err(bad());
        }
        Ok(Self { placement, interior, log })
    }
}

/// Times of observed events on the scale the flexible effect acts on: time since
/// onset for a time-varying flexible covariate, otherwise time since origin.
/// Interval-censored events count at their midpoint.
pub fn event_times(model: &ModelSpec, data: &[SubjectRecord]) -> Vec<f64> {
    let tv_flex = model.flexible.is_some() && model.flexible == model.time_varying;
    data.iter()
        .filter(|r| r.y_u.is_finite())
        .filter_map(|r| {
            let t = if r.delta { r.y_l } else { 0.5 * (r.y_l + r.y_u) };
            if tv_flex {
                (t > r.t_x).then_some(t - r.t_x)
            } else {
                Some(t)
            }
        })
        .filter(|&t| t > 0.0)
        .collect()
}

impl KnotRule {
    /// Knots for `kind` (in the axis convention of [`EffectSpec`]) from event times.
    pub fn knots(&self, kind: EffectKind, events: &[f64]) -> Result<Vec<f64>> {
        let mut v: Vec<f64> = events.to_vec();
        v.sort_by(f64::total_cmp);
        v.dedup();
        if v.len() < self.interior + 2 {
            return Err(CliError::input(format!(
                "effect.rule: {} distinct event times cannot place {} interior knots",
                v.len(),
                self.interior
            )));
        }
        let axis: Vec<f64> = if self.log { v.iter().map(|t| t.ln()).collect() } else { v };
        let (lo, hi) = (axis[0], axis[axis.len() - 1]);
        let k1 = (self.interior + 1) as f64;
        let interior: Vec<f64> = (1..=self.interior)
            .map(|j| {
                let q = j as f64 / k1;
                match self.placement {
                    Placement::Quantiles => sorted_quantile(&axis, q),
                    Placement::Equal if kind == EffectKind::PiecewiseLinear && !self.log => hi * q,
                    Placement::Equal => lo + (hi - lo) * q,
                }
            })
            .collect();
        let to_time = |a: f64| if self.log { a.exp() } else { a };
        let to_log = |a: f64| if self.log { a } else { a.ln() };
        let knots = match kind {
            EffectKind::PiecewiseLinear => std::iter::once(0.0).chain(interior.into_iter().map(to_time)).collect(),
            EffectKind::NaturalCubicSpline => std::iter::once(lo).chain(interior).chain(std::iter::once(hi)).map(to_log).collect(),
            EffectKind::Constant => Vec::new(),
        };
        Ok(knots)
    }
}

impl ConfigFile {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::input(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
    }

    pub fn baseline_spec(&self) -> Result<BaselineSpec> {
        let b = &self.baseline;
        match b.family {
            Family::Tbp => {
                let k = b.k.ok_or_else(|| CliError::input("config: baseline.K is required for family = \"tbp\""))?;
                BaselineSpec::tbp(b.centering.unwrap_or(Centering::Weibull), k).context("config: baseline")
            }
            Family::Weibull | Family::LogNormal => {
                if b.k.is_some() || b.centering.is_some() {
                    return Err(CliError::input("config: baseline.K and baseline.centering only apply to family = \"tbp\""));
                }
                Ok(if b.family == Family::Weibull { BaselineSpec::weibull() } else { BaselineSpec::log_normal() })
            }
        }
    }

    /// The model with a constant effect; enough to read data files.
    pub fn data_model(&self) -> Result<ModelSpec> {
        let mut m = ModelSpec::constant(self.baseline_spec()?, self.model.covariates.clone());
        if let Some(tv) = &self.model.time_varying {
            m = m.with_time_varying(tv);
        }
        m.validate().context("config: model")?;
        Ok(m)
    }

    pub fn needs_data_for_knots(&self) -> bool {
        self.effect.kind != EffectKind::Constant && self.effect.knots.is_none()
    }

    /// The full model; `data` supplies event times when knots come from a rule.
    pub fn model(&self, data: Option<&[SubjectRecord]>) -> Result<ModelSpec> {
        let base = self.data_model()?;
        let e = &self.effect;
        if e.kind == EffectKind::Constant {
            if e.knots.is_some() || e.rule.is_some() || e.flexible_covariate.is_some() {
                return Err(CliError::input(
                    "config: effect.knots, effect.rule and effect.flexible_covariate need a non-constant effect.kind",
                ));
            }
            return Ok(base);
        }
        let cov = e
            .flexible_covariate
            .as_deref()
            .ok_or_else(|| CliError::input("config: effect.flexible_covariate is required for a non-constant effect"))?;
        let knots = match (&e.knots, &e.rule) {
            (Some(k), None) => k.clone(),
            (None, Some(rule)) => {
                let rule: KnotRule = rule.parse()?;
                let data =
                    data.ok_or_else(|| CliError::input("config: effect.rule needs a data file; give explicit effect.knots instead"))?;
                let probe = base.clone().with_flexible(cov, EffectSpec::constant());
                rule.knots(e.kind, &event_times(&probe, data))?
            }
            _ => return Err(CliError::input("config: give exactly one of effect.knots and effect.rule")),
        };
        let effect = match e.kind {
            EffectKind::PiecewiseLinear => EffectSpec::piecewise(knots),
            EffectKind::NaturalCubicSpline => EffectSpec::spline(knots),
            EffectKind::Constant => unreachable!(),
        }
        .context("config: effect")?;
        let m = base.with_flexible(cov, effect);
        m.validate().context("config: effect")?;
        Ok(m)
    }

    pub fn truth(&self, model: &ModelSpec) -> Result<ParameterVector> {
        let t = self.truth.clone().ok_or_else(|| CliError::input("config: a [truth] section is required"))?;
        model.check_params(&t).map_err(|e| CliError::input(format!("config: truth: {e}")))?;
        Ok(t)
    }

    pub fn sim_config(&self, seed: Option<u64>) -> Result<SimConfig> {
        let s = self.simulate.as_ref().ok_or_else(|| CliError::input("config: a [simulate] section is required"))?;
        let model = self.model(None)?;
        let cfg = SimConfig {
            n: s.n,
            seed: seed.or(s.seed).unwrap_or(self.sampler.seed),
            truth: self.truth(&model)?,
            model,
            covariates: s.covariates.clone(),
            switch: s.switch,
            censoring: s.censoring,
            truncation: s.truncation,
        };
        cfg.validate().map_err(|e| CliError::input(format!("config: simulate: {e}")))?;
        Ok(cfg)
    }
}

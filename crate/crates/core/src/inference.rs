//! Quantile times, acceleration factors and regression-standardized summaries.
//!
//! A draw-level quantity (a quantile ratio, a standardized survivor value) is
//! computed for every posterior draw and then summarized by its mean and
//! equal-tailed 95% interval.

use crate::error::{Error, Result};
use crate::likelihood::SubjectRecord;
use crate::model::{ModelSpec, ParameterVector};
use crate::root;
use crate::sampler::{format_float, PosteriorDraws};
use rayon::prelude::*;
use std::io::{Read, Write};

/// A covariate pattern: time-invariant covariates plus the switch time of the
/// time-varying covariate (`∞` = never switches, ignored for fixed models).
#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    pub x: Vec<f64>,
    pub t_x: f64,
}

impl Pattern {
    pub fn fixed(x: Vec<f64>) -> Self {
        Self { x, t_x: f64::INFINITY }
    }

    pub fn switching(x: Vec<f64>, t_x: f64) -> Self {
        Self { x, t_x }
    }
}

/// What is set for every subject when standardizing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Intervention {
    /// Time-invariant covariate `covariate` fixed at `value`.
    Set { covariate: usize, value: f64 },
    /// Time-varying covariate switching on at the given time (`∞` = never).
    Onset(f64),
}

impl Intervention {
    /// Set the covariate called `name` to `value`.
    pub fn set(model: &ModelSpec, name: &str, value: f64) -> Result<Self> {
        let covariate =
            model.covariates.iter().position(|c| c == name).ok_or_else(|| Error::input(format!("unknown covariate '{name}'")))?;
        Ok(Intervention::Set { covariate, value })
    }

    fn apply(&self, rec: &SubjectRecord) -> Pattern {
        match *self {
            Intervention::Set { covariate, value } => {
                let mut x = rec.x.clone();
                x[covariate] = value;
                Pattern { x, t_x: rec.t_x }
            }
            Intervention::Onset(t) => Pattern { x: rec.x.clone(), t_x: t },
        }
    }

    fn check(&self, model: &ModelSpec) -> Result<()> {
        match *self {
            Intervention::Set { covariate, value } => {
                if covariate >= model.d() {
                    return Err(Error::input(format!("covariate index {covariate} out of range")));
                }
                if !value.is_finite() {
                    return Err(Error::input("intervention value must be finite"));
                }
            }
            Intervention::Onset(t) => {
                if !model.has_time_varying() {
                    return Err(Error::input("onset intervention needs a time-varying covariate"));
                }
                if !(t > 0.0) {
                    return Err(Error::input(format!("onset time must be > 0, got {t}")));
                }
            }
        }
        Ok(())
    }

    /// Observed subjects whose own exposure matches this level.
    fn matches(&self, rec: &SubjectRecord) -> bool {
        match *self {
            Intervention::Set { covariate, value } => rec.x[covariate] == value,
            Intervention::Onset(t) => t.is_finite() == rec.t_x.is_finite(),
        }
    }
}

/// Exposed versus reference standardization levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contrast {
    pub exposed: Intervention,
    pub reference: Intervention,
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!("probability must lie in (0,1), got {p}")));
    }
    Ok(())
}

fn check_pattern(model: &ModelSpec, pat: &Pattern) -> Result<()> {
    if pat.x.len() != model.d() {
        return Err(Error::input(format!("pattern has {} covariates, model has {}", pat.x.len(), model.d())));
    }
    if pat.t_x.is_nan() || pat.t_x <= 0.0 {
        return Err(Error::input(format!("switch time must be > 0, got {}", pat.t_x)));
    }
    Ok(())
}

/// `t_x^{(p)} = V^{-1}(S0^{-1}(p) | x)`.
pub fn quantile_time(model: &ModelSpec, psi: &ParameterVector, pat: &Pattern, p: f64) -> Result<f64> {
    check_p(p)?;
    check_pattern(model, pat)?;
    let base = model.baseline_of(psi)?;
    let proc = model.process(psi, &pat.x, pat.t_x);
    if !proc.is_monotone() {
        return Err(Error::NonMonotone(format!("covariate process decreases for pattern {pat:?}")));
    }
    proc.inverse(base.inverse_survivor(p)?)
}

/// `ξ(p | x, x') = t_x^{(p)} / t_{x'}^{(p)}`.
pub fn acceleration_factor(model: &ModelSpec, psi: &ParameterVector, p: f64, x: &Pattern, x_ref: &Pattern) -> Result<f64> {
    Ok(quantile_time(model, psi, x, p)? / quantile_time(model, psi, x_ref, p)?)
}

/// Closed-form acceleration factor of switching at `t_x` versus never switching,
/// for a constant time-varying effect: a weighted average of 1 and `e^{β_tv}` once
/// the reference quantile `S0^{-1}(p)·e^{x2'β2}` passes the onset, 1 before.
pub fn tv_acceleration_factor(model: &ModelSpec, psi: &ParameterVector, p: f64, t_x: f64, x2: &[f64]) -> Result<f64> {
    check_p(p)?;
    if !model.has_time_varying() || !model.effect.is_constant() {
        return Err(Error::input("closed-form time-varying AF needs a constant time-varying effect"));
    }
    check_pattern(model, &Pattern::switching(x2.to_vec(), t_x))?;
    let d = model.d();
    let eta2: f64 = psi.beta[..d].iter().zip(x2).map(|(b, v)| b * v).sum();
    let q = model.baseline_of(psi)?.inverse_survivor(p)? * eta2.exp();
    if q < t_x {
        return Ok(1.0);
    }
    let share = t_x / q;
    Ok(share + psi.beta[d].exp() * (1.0 - share))
}

/// Distinct patterns produced by an intervention, with multiplicities, in order of
/// first appearance.
fn population(model: &ModelSpec, data: &[SubjectRecord], iv: &Intervention) -> Result<Vec<(Pattern, f64)>> {
    if data.is_empty() {
        return Err(Error::input("standardization needs a nonempty dataset"));
    }
    iv.check(model)?;
    let mut out: Vec<(Pattern, f64)> = Vec::new();
    for rec in data {
        let pat = iv.apply(rec);
        check_pattern(model, &pat)?;
        match out.iter_mut().find(|(q, _)| *q == pat) {
            Some((_, n)) => *n += 1.0,
            None => out.push((pat, 1.0)),
        }
    }
    Ok(out)
}

/// Standardized survivor function of one draw over a fixed population.
struct Standardized<'a> {
    model: &'a ModelSpec,
    psi: &'a ParameterVector,
    base: crate::baseline::Baseline,
    pop: &'a [(Pattern, f64)],
    total: f64,
}

impl<'a> Standardized<'a> {
    fn new(model: &'a ModelSpec, psi: &'a ParameterVector, pop: &'a [(Pattern, f64)]) -> Result<Self> {
        let base = model.baseline_of(psi)?;
        for (pat, _) in pop {
            if !model.process(psi, &pat.x, pat.t_x).is_monotone() {
                return Err(Error::NonMonotone(format!("covariate process decreases for pattern {pat:?}")));
            }
        }
        let total = pop.iter().map(|(_, n)| n).sum();
        Ok(Self { model, psi, base, pop, total })
    }

    fn survivor(&self, t: f64) -> Result<f64> {
        let mut s = 0.0;
        for (pat, n) in self.pop {
            let v = self.model.process(self.psi, &pat.x, pat.t_x).value(t)?;
            s += n * self.base.survivor(v)?;
        }
        Ok(s / self.total)
    }

    /// `(S_Z(t), f_Z(t))`.
    fn survivor_density(&self, t: f64) -> Result<(f64, f64)> {
        let (mut s, mut f) = (0.0, 0.0);
        for (pat, n) in self.pop {
            let proc = self.model.process(self.psi, &pat.x, pat.t_x);
            let v = proc.value(t)?;
            s += n * self.base.survivor(v)?;
            if v > 0.0 {
                f += n * self.base.density(v)? * proc.slope(t)?;
            }
        }
        Ok((s / self.total, f / self.total))
    }

    /// `S_Z^{-1}(p)`. Every subject quantile brackets the root, so a homogeneous
    /// population returns the conditional quantile itself.
    fn quantile(&self, p: f64) -> Result<f64> {
        let s0 = self.base.inverse_survivor(p)?;
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for (pat, _) in self.pop {
            let q = self.model.process(self.psi, &pat.x, pat.t_x).inverse(s0)?;
            lo = lo.min(q);
            hi = hi.max(q);
        }
        if lo == hi {
            return Ok(lo);
        }
        let target = p.ln();
        let mut failure = None;
        let g = |u: f64| {
            let t = u.exp();
            match self.survivor_density(t) {
                Ok((s, f)) => (s.ln() - target, -t * f / s),
                Err(e) => {
                    failure = Some(e);
                    (f64::NAN, f64::NAN)
                }
            }
        };
        let u = root::newton_bisect(g, lo.ln(), hi.ln());
        if let Some(e) = failure {
            return Err(e);
        }
        Ok(u?.exp())
    }
}

/// `S_Z(t | intervention) = n^{-1} Σ_i S(t | x_i with the intervention applied)`.
pub fn standardized_survivor(model: &ModelSpec, psi: &ParameterVector, data: &[SubjectRecord], iv: &Intervention, t: f64) -> Result<f64> {
    if t.is_nan() || t < 0.0 {
        return Err(Error::domain(format!("time must be >= 0, got {t}")));
    }
    let pop = population(model, data, iv)?;
    Standardized::new(model, psi, &pop)?.survivor(t)
}

/// Inverse of [`standardized_survivor`] in `t`.
pub fn standardized_quantile(model: &ModelSpec, psi: &ParameterVector, data: &[SubjectRecord], iv: &Intervention, p: f64) -> Result<f64> {
    check_p(p)?;
    let pop = population(model, data, iv)?;
    Standardized::new(model, psi, &pop)?.quantile(p)
}

/// Posterior summary of a scalar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub lo95: f64,
    pub hi95: f64,
}

/// Linear-interpolation (type 7) quantile of sorted data.
pub fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let i = h.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    sorted[i] + (h - i as f64) * (sorted[j] - sorted[i])
}

/// Mean, median and equal-tailed 95% interval.
pub fn summarize(values: &[f64]) -> Summary {
    if values.is_empty() {
        return Summary { mean: f64::NAN, median: f64::NAN, lo95: f64::NAN, hi95: f64::NAN };
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    // centred on the first draw so that identical draws summarize exactly
    let m0 = values[0];
    let mean = m0 + values.iter().map(|v| v - m0).sum::<f64>() / values.len() as f64;
    Summary { mean, median: sorted_quantile(&sorted, 0.5), lo95: sorted_quantile(&sorted, 0.025), hi95: sorted_quantile(&sorted, 0.975) }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub abscissa: f64,
    pub group: String,
    pub mean: f64,
    pub median: f64,
    pub lo95: f64,
    pub hi95: f64,
    pub extrapolated: bool,
}

/// Long-format plot data.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CurveTable {
    pub rows: Vec<CurveRow>,
}

pub const CURVE_HEADER: [&str; 7] = ["abscissa", "group", "mean", "median", "lo95", "hi95", "extrapolated"];

impl CurveTable {
    /// Rows belonging to `group`.
    pub fn group(&self, group: &str) -> Vec<&CurveRow> {
        self.rows.iter().filter(|r| r.group == group).collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::input(format!("CSV: {e}"));
        wr.write_record(CURVE_HEADER).map_err(err)?;
        for r in &self.rows {
            wr.write_record([
                format_float(r.abscissa),
                r.group.clone(),
                format_float(r.mean),
                format_float(r.median),
                format_float(r.lo95),
                format_float(r.hi95),
                u8::from(r.extrapolated).to_string(),
            ])
            .map_err(err)?;
        }
        wr.flush().map_err(|e| Error::input(e.to_string()))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let err = |e: csv::Error| Error::input(format!("CSV: {e}"));
        let header: Vec<String> = rd.headers().map_err(err)?.iter().map(str::to_string).collect();
        if header != CURVE_HEADER {
            return Err(Error::input(format!("curve CSV header must be {}", CURVE_HEADER.join(","))));
        }
        let mut rows = Vec::new();
        for (i, rec) in rd.records().enumerate() {
            let rec = rec.map_err(err)?;
            let num =
                |j: usize| rec[j].parse::<f64>().map_err(|_| Error::input(format!("curve CSV row {}: bad {}", i + 1, CURVE_HEADER[j])));
            let flag = match &rec[6] {
                "0" => false,
                "1" => true,
                other => return Err(Error::input(format!("curve CSV row {}: bad extrapolated flag '{other}'", i + 1))),
            };
            rows.push(CurveRow {
                abscissa: num(0)?,
                group: rec[1].to_string(),
                mean: num(2)?,
                median: num(3)?,
                lo95: num(4)?,
                hi95: num(5)?,
                extrapolated: flag,
            });
        }
        Ok(Self { rows })
    }
}

/// Constrained parameter vectors of every retained draw.
pub fn parameter_draws(model: &ModelSpec, draws: &PosteriorDraws) -> Result<Vec<ParameterVector>> {
    if draws.names != model.param_names() {
        return Err(Error::input("draws do not match the model's parameters"));
    }
    draws.values.iter().map(|v| ParameterVector::from_flat(model, v)).collect()
}

/// `p` from `0.01` to `0.99` in steps of `step`.
pub fn p_grid(step: f64) -> Vec<f64> {
    let n = ((0.98 / step) + 1e-9).floor() as usize;
    (0..=n).map(|i| ((0.01 + step * i as f64) * 1e10).round() / 1e10).collect()
}

/// Largest observed follow-up time (upper interval end, or last time seen alive).
pub fn max_follow_up(data: &[SubjectRecord]) -> f64 {
    data.iter().map(|r| if r.y_u.is_finite() { r.y_u } else { r.y_l }).fold(0.0, f64::max)
}

/// `n` equally spaced onset times over `(0, max follow-up]`.
pub fn onset_grid(data: &[SubjectRecord], n: usize) -> Vec<f64> {
    let hi = max_follow_up(data);
    (1..=n).map(|k| hi * k as f64 / n as f64).collect()
}

fn rows_from(abscissa: &[f64], group: &str, per_draw: &[Vec<f64>], flags: &[bool]) -> Vec<CurveRow> {
    abscissa
        .iter()
        .enumerate()
        .map(|(j, &a)| {
            let col: Vec<f64> = per_draw.iter().map(|d| d[j]).collect();
            let s = summarize(&col);
            CurveRow {
                abscissa: a,
                group: group.to_string(),
                mean: s.mean,
                median: s.median,
                lo95: s.lo95,
                hi95: s.hi95,
                extrapolated: flags[j],
            }
        })
        .collect()
}

fn check_draws(draws: &[ParameterVector]) -> Result<()> {
    if draws.is_empty() {
        return Err(Error::input("no posterior draws"));
    }
    Ok(())
}

fn check_grid(p: &[f64]) -> Result<()> {
    for &q in p {
        check_p(q)?;
    }
    Ok(())
}

/// Posterior mean of the standardized survivor at the largest follow-up time of the
/// subjects observed at this exposure level (all subjects when none are).
fn tail_survivor(model: &ModelSpec, draws: &[ParameterVector], data: &[SubjectRecord], iv: &Intervention) -> Result<f64> {
    let own: Vec<SubjectRecord> = data.iter().filter(|r| iv.matches(r)).cloned().collect();
    let t_max = max_follow_up(if own.is_empty() { data } else { &own });
    let pop = population(model, data, iv)?;
    let values: Vec<f64> = draws.par_iter().map(|psi| Standardized::new(model, psi, &pop)?.survivor(t_max)).collect::<Result<_>>()?;
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Per-draw standardized acceleration factors: row `m` holds
/// `S_Z^{-1}(p | exposed) / S_Z^{-1}(p | reference)` under draw `m` for each `p`.
pub fn standardized_af_draws(
    model: &ModelSpec,
    draws: &[ParameterVector],
    data: &[SubjectRecord],
    contrast: &Contrast,
    p_grid: &[f64],
) -> Result<Vec<Vec<f64>>> {
    check_draws(draws)?;
    check_grid(p_grid)?;
    let pop_a = population(model, data, &contrast.exposed)?;
    let pop_b = population(model, data, &contrast.reference)?;
    draws
        .par_iter()
        .enumerate()
        .map(|(m, psi)| {
            let a = Standardized::new(model, psi, &pop_a)?;
            let b = Standardized::new(model, psi, &pop_b)?;
            p_grid
                .iter()
                .map(|&p| {
                    let ratio = a.quantile(p)? / b.quantile(p)?;
                    if ratio.is_finite() {
                        Ok(ratio)
                    } else {
                        Err(Error::numerical(format!("draw {m}, p={p}: quantile ratio is {ratio}")))
                    }
                })
                .collect::<Result<Vec<f64>>>()
                .map_err(|e| match e {
                    Error::Bracket { .. } | Error::Numerical(_) => Error::numerical(format!("draw {m}: {e}")),
                    other => other,
                })
        })
        .collect()
}

/// Regression-standardized acceleration factor over `p_grid`, summarized across
/// draws. Quantiles below the standardized survivor at the end of follow-up in
/// either group are flagged as extrapolated.
pub fn standardized_af(
    model: &ModelSpec,
    draws: &[ParameterVector],
    data: &[SubjectRecord],
    contrast: &Contrast,
    p_grid: &[f64],
    group: &str,
) -> Result<CurveTable> {
    let per_draw = standardized_af_draws(model, draws, data, contrast, p_grid)?;
    let edge = tail_survivor(model, draws, data, &contrast.exposed)?.max(tail_survivor(model, draws, data, &contrast.reference)?);
    let flags: Vec<bool> = p_grid.iter().map(|&p| p < edge).collect();
    Ok(CurveTable { rows: rows_from(p_grid, group, &per_draw, &flags) })
}

/// Conditional acceleration factor between two fixed patterns over `p_grid`.
pub fn conditional_af(
    model: &ModelSpec,
    draws: &[ParameterVector],
    x: &Pattern,
    x_ref: &Pattern,
    p_grid: &[f64],
    group: &str,
) -> Result<CurveTable> {
    check_draws(draws)?;
    check_grid(p_grid)?;
    let per_draw: Vec<Vec<f64>> = draws
        .par_iter()
        .map(|psi| p_grid.iter().map(|&p| acceleration_factor(model, psi, p, x, x_ref)).collect())
        .collect::<Result<_>>()?;
    Ok(CurveTable { rows: rows_from(p_grid, group, &per_draw, &vec![false; p_grid.len()]) })
}

/// Standardized survivor curve over `t_grid`; times beyond the group's follow-up
/// are flagged as extrapolated.
pub fn standardized_survivor_curve(
    model: &ModelSpec,
    draws: &[ParameterVector],
    data: &[SubjectRecord],
    iv: &Intervention,
    t_grid: &[f64],
    group: &str,
) -> Result<CurveTable> {
    check_draws(draws)?;
    if let Some(t) = t_grid.iter().find(|t| !(**t >= 0.0)) {
        return Err(Error::domain(format!("time must be >= 0, got {t}")));
    }
    let pop = population(model, data, iv)?;
    let per_draw: Vec<Vec<f64>> = draws
        .par_iter()
        .map(|psi| {
            let s = Standardized::new(model, psi, &pop)?;
            t_grid.iter().map(|&t| s.survivor(t)).collect()
        })
        .collect::<Result<_>>()?;
    let own: Vec<SubjectRecord> = data.iter().filter(|r| iv.matches(r)).cloned().collect();
    let t_max = max_follow_up(if own.is_empty() { data } else { &own });
    let flags: Vec<bool> = t_grid.iter().map(|&t| t > t_max).collect();
    Ok(CurveTable { rows: rows_from(t_grid, group, &per_draw, &flags) })
}

/// Label of the surface slice at onset `t_x`.
pub fn surface_group(t_x: f64) -> String {
    format!("t_x={}", format_float(t_x))
}

/// Standardized AF of switching at each onset time versus never switching, in long
/// format: one [`standardized_af`] curve per onset, labelled by [`surface_group`].
pub fn af_surface(
    model: &ModelSpec,
    draws: &[ParameterVector],
    data: &[SubjectRecord],
    onsets: &[f64],
    p_grid: &[f64],
) -> Result<CurveTable> {
    if !model.has_time_varying() {
        return Err(Error::input("AF surface needs a time-varying covariate"));
    }
    let mut out = CurveTable::default();
    for &g in onsets {
        let contrast = Contrast { exposed: Intervention::Onset(g), reference: Intervention::Onset(f64::INFINITY) };
        out.rows.extend(standardized_af(model, draws, data, &contrast, p_grid, &surface_group(g))?.rows);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baseline::BaselineSpec;
    use crate::covproc::EffectSpec;

    fn exp03() -> (ModelSpec, ParameterVector) {
        let m = ModelSpec::constant(BaselineSpec::weibull(), vec!["x".into()]);
        let psi = ParameterVector { beta: vec![0.5], alpha: vec![], mu: -(0.3f64.ln()), sigma: 1.0, w: vec![], theta: 1.0 };
        (m, psi)
    }

    #[test]
    fn quantile_time_closed_form() {
        let (m, psi) = exp03();
        let q = quantile_time(&m, &psi, &Pattern::fixed(vec![1.0]), 0.5).unwrap();
        assert!((q - 2.0f64.ln() / 0.3 * 0.5f64.exp()).abs() < 1e-12);
        assert!((q - 3.809).abs() < 1e-3);
        let q0 = quantile_time(&m, &psi, &Pattern::fixed(vec![0.0]), 0.5).unwrap();
        assert!((q0 - 2.310490).abs() < 1e-6);
    }

    #[test]
    fn piecewise_quantile_and_af() {
        let m = ModelSpec::constant(BaselineSpec::weibull(), vec!["x".into()])
            .with_flexible("x", EffectSpec::piecewise(vec![0.0, 2.0]).unwrap());
        let psi = ParameterVector { beta: vec![0.0], alpha: vec![-(2.0f64).ln()], mu: 0.0, sigma: 1.0, w: vec![], theta: 1.0 };
        let q = quantile_time(&m, &psi, &Pattern::fixed(vec![1.0]), (-4.0f64).exp()).unwrap();
        assert!((q - 3.0).abs() < 1e-12, "{q}");
        let a = acceleration_factor(&m, &psi, (-1.0f64).exp(), &Pattern::fixed(vec![1.0]), &Pattern::fixed(vec![0.0])).unwrap();
        assert!((a - 1.0).abs() < 1e-12);
        let b = acceleration_factor(&m, &psi, (-4.0f64).exp(), &Pattern::fixed(vec![1.0]), &Pattern::fixed(vec![0.0])).unwrap();
        assert!((b - 0.75).abs() < 1e-12, "{b}");
    }

    #[test]
    fn tv_closed_form_example() {
        let m = ModelSpec::constant(BaselineSpec::weibull(), vec![]).with_time_varying("z");
        // S0^{-1}(p) = 10 for a unit exponential at p = e^{-10}
        let psi = ParameterVector { beta: vec![-(2.0f64).ln()], alpha: vec![], mu: 0.0, sigma: 1.0, w: vec![], theta: 1.0 };
        let p = (-10.0f64).exp();
        let xi = tv_acceleration_factor(&m, &psi, p, 4.0, &[]).unwrap();
        assert!((xi - 0.7).abs() < 1e-12);
        assert_eq!(tv_acceleration_factor(&m, &psi, p, 12.0, &[]).unwrap(), 1.0);
        let generic = acceleration_factor(&m, &psi, p, &Pattern::switching(vec![], 4.0), &Pattern::fixed(vec![])).unwrap();
        assert!((generic - 0.7).abs() < 1e-12);
    }

    #[test]
    fn standardized_survivor_is_a_mean() {
        let (m, psi) = exp03();
        let data = vec![SubjectRecord::exact(1.0, vec![0.0]), SubjectRecord::exact(2.0, vec![1.0])];
        let m2 = ModelSpec::constant(BaselineSpec::weibull(), vec!["a".into(), "z".into()]);
        let psi2 = ParameterVector { beta: vec![0.5, 0.8], ..psi.clone() };
        let data2: Vec<SubjectRecord> = data.iter().map(|r| SubjectRecord::exact(r.y_l, vec![0.0, r.x[0]])).collect();
        let iv = Intervention::Set { covariate: 0, value: 1.0 };
        let t = 2.5;
        let s = standardized_survivor(&m2, &psi2, &data2, &iv, t).unwrap();
        let direct: f64 = [0.0f64, 1.0].iter().map(|z| (-0.3 * t * (-(0.5 + 0.8 * z)).exp()).exp()).sum::<f64>() / 2.0;
        assert!((s - direct).abs() < 1e-14);
        // homogeneous population reduces to the conditional survivor
        let s1 = standardized_survivor(&m, &psi, &data, &Intervention::Set { covariate: 0, value: 1.0 }, t).unwrap();
        assert!((s1 - (-0.3 * t * (-0.5f64).exp()).exp()).abs() < 1e-15);
    }

    #[test]
    fn standardized_quantile_inverts() {
        let m = ModelSpec::constant(BaselineSpec::log_normal(), vec!["a".into(), "z".into()]);
        let psi = ParameterVector { beta: vec![0.4, -1.1], alpha: vec![], mu: 0.3, sigma: 0.7, w: vec![], theta: 1.0 };
        let data: Vec<SubjectRecord> = (0..7).map(|i| SubjectRecord::exact(1.0, vec![0.0, i as f64 * 0.4])).collect();
        let iv = Intervention::Set { covariate: 0, value: 1.0 };
        for p in [0.02, 0.3, 0.5, 0.9, 0.99] {
            let t = standardized_quantile(&m, &psi, &data, &iv, p).unwrap();
            let s = standardized_survivor(&m, &psi, &data, &iv, t).unwrap();
            assert!((s - p).abs() < 1e-12 * p.max(1e-3) * 1e3, "p={p} s={s}");
        }
    }

    #[test]
    fn summary_of_identical_values_has_zero_width() {
        let s = summarize(&[0.1; 7]);
        assert_eq!((s.mean, s.median, s.lo95, s.hi95), (0.1, 0.1, 0.1, 0.1));
        let s = summarize(&(1..=101).map(f64::from).collect::<Vec<_>>());
        assert_eq!(s.median, 51.0);
        assert_eq!(s.lo95, 3.5);
        assert_eq!(s.hi95, 98.5);
    }

    #[test]
    fn curve_csv_round_trip() {
        let t = CurveTable {
            rows: vec![CurveRow {
                abscissa: 0.25,
                group: "t_x=4.0".into(),
                mean: 1.0 / 3.0,
                median: 0.3,
                lo95: 0.1,
                hi95: 0.9,
                extrapolated: true,
            }],
        };
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("abscissa,group,mean,median,lo95,hi95,extrapolated\n"));
        assert_eq!(CurveTable::read_csv(buf.as_slice()).unwrap(), t);
    }

    #[test]
    fn grids() {
        let p = p_grid(0.02);
        assert_eq!(p.len(), 50);
        assert_eq!(p[0], 0.01);
        assert_eq!(p[49], 0.99);
        assert_eq!(p_grid(0.01).len(), 99);
    }
}

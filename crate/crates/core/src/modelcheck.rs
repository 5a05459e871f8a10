//! Leave-one-out predictive accuracy by Pareto-smoothed importance sampling, with
//! an exact refit estimator for validation.

use crate::error::{Error, Result};
use crate::likelihood::{loglik_pointwise, loglik_subject, Posterior, SubjectRecord};
use crate::model::{ModelSpec, ParameterVector, PriorSpec};
use crate::sampler::{format_float, run_chains, SamplerConfig};
use crate::special::log_sum_exp;
use rayon::prelude::*;
use std::fmt::Write as _;

/// Fewest draws accepted by [`psis_loo`].
pub const MIN_DRAWS: usize = 100;

/// Pareto shape above which importance sampling is unreliable.
pub const KHAT_THRESHOLD: f64 = 0.7;

/// `M × n` matrix of per-draw, per-subject log-likelihoods, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointwiseLogLik {
    pub draws: usize,
    pub subjects: usize,
    pub values: Vec<f64>,
}

impl PointwiseLogLik {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let draws = rows.len();
        let subjects = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != subjects) {
            return Err(Error::input("pointwise log-likelihood rows differ in length"));
        }
        Ok(Self { draws, subjects, values: rows.into_iter().flatten().collect() })
    }

    pub fn get(&self, m: usize, i: usize) -> f64 {
        self.values[m * self.subjects + i]
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.values[m * self.subjects..(m + 1) * self.subjects]
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        (0..self.draws).map(|m| self.get(m, i)).collect()
    }
}

/// Entry `(m, i)` is the log-likelihood of subject `i` under draw `m`.
pub fn pointwise_loglik(model: &ModelSpec, draws: &[ParameterVector], data: &[SubjectRecord]) -> Result<PointwiseLogLik> {
    let rows: Vec<Vec<f64>> = draws
        .par_iter()
        .enumerate()
        .map(|(m, psi)| {
            let row = loglik_pointwise(model, psi, data).map_err(|e| annotate(e, m))?;
            if let Some(i) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::numerical(format!("draw {m}: log-likelihood of subject {i} is {}", row[i])));
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    PointwiseLogLik::from_rows(rows)
}

fn annotate(e: Error, m: usize) -> Error {
    match e {
        Error::Numerical(s) => Error::Numerical(format!("draw {m}: {s}")),
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LooResult {
    pub elpd: f64,
    pub elpd_se: f64,
    pub minus2elpd: f64,
    /// In-sample log pointwise predictive density.
    pub lpd: f64,
    /// Effective number of parameters, `lpd - elpd`.
    pub p_loo: f64,
    pub elpd_i: Vec<f64>,
    /// Pareto shape per subject; NaN where the importance ratios are all equal.
    pub khat: Vec<f64>,
    pub draws: usize,
    pub warnings: Vec<String>,
}

/// Generalized Pareto fit `(k, σ)` to positive exceedances by the profile-likelihood
/// posterior mean of Zhang and Stephens, with the weakly informative shrinkage of
/// `k` toward 0.5.
pub fn gpd_fit(x: &[f64]) -> (f64, f64) {
    let mut x = x.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len();
    let prior = 3.0;
    let m = 30 + (n as f64).sqrt().floor() as usize;
    let xstar = x[((n as f64) / 4.0 + 0.5).floor() as usize - 1];
    let theta: Vec<f64> = (1..=m).map(|j| 1.0 / x[n - 1] + (1.0 - (m as f64 / (j as f64 - 0.5)).sqrt()) / prior / xstar).collect();
    let l_theta: Vec<f64> = theta
        .iter()
        .map(|&t| {
            let a = -t;
            let k = x.iter().map(|v| (a * v).ln_1p()).sum::<f64>() / n as f64;
            n as f64 * ((a / k).ln() - k - 1.0)
        })
        .collect();
    let norm = log_sum_exp(&l_theta);
    let theta_hat: f64 = theta.iter().zip(&l_theta).map(|(t, l)| t * (l - norm).exp()).sum();
    let k = x.iter().map(|v| (-theta_hat * v).ln_1p()).sum::<f64>() / n as f64;
    let sigma = -k / theta_hat;
    let k = k * n as f64 / (n as f64 + 10.0) + 10.0 * 0.5 / (n as f64 + 10.0);
    (if k.is_nan() { f64::INFINITY } else { k }, sigma)
}

/// Quantile function of the generalized Pareto distribution.
pub fn gpd_quantile(p: f64, k: f64, sigma: f64) -> f64 {
    if k.abs() < 1e-12 {
        -sigma * (-p).ln_1p()
    } else {
        sigma * (-k * (-p).ln_1p()).exp_m1() / k
    }
}

/// Pareto-smoothed log weights for one subject, with the fitted shape.
///
/// Log ratios are shifted so the largest is 0; the largest `ceil(min(0.2 M, 3√M))`
/// are replaced by expected order statistics of a generalized Pareto fit to their
/// exceedances over the cutoff, and the result is capped at the raw maximum.
pub fn psis_smooth(log_ratios: &[f64]) -> (Vec<f64>, f64) {
    let m = log_ratios.len();
    let max = log_ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut lw: Vec<f64> = log_ratios.iter().map(|r| r - max).collect();
    let tail = (0.2 * m as f64).min(3.0 * (m as f64).sqrt()).ceil() as usize;
    if tail < 5 || tail >= m {
        return (lw, f64::INFINITY);
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| lw[a].total_cmp(&lw[b]));
    let tail_ids = &order[m - tail..];
    let cutoff = lw[order[m - tail - 1]];
    let lo = lw[tail_ids[0]];
    let hi = lw[tail_ids[tail - 1]];
    if lo == hi {
        let k = if lw[order[0]] == hi { f64::NAN } else { f64::INFINITY };
        return (lw, k);
    }
    let exceed: Vec<f64> = tail_ids.iter().map(|&j| lw[j].exp() - cutoff.exp()).collect();
    let (k, sigma) = gpd_fit(&exceed);
    if k.is_finite() {
        for (r, &j) in tail_ids.iter().enumerate() {
            let p = (r as f64 + 0.5) / tail as f64;
            lw[j] = (gpd_quantile(p, k, sigma) + cutoff.exp()).ln().min(0.0);
        }
    }
    (lw, k)
}

/// PSIS-LOO estimate of the expected log pointwise predictive density.
pub fn psis_loo(ll: &PointwiseLogLik) -> Result<LooResult> {
    if ll.draws < MIN_DRAWS {
        return Err(Error::input(format!("PSIS-LOO needs at least {MIN_DRAWS} draws, got {}", ll.draws)));
    }
    if ll.subjects == 0 {
        return Err(Error::input("PSIS-LOO needs at least one subject"));
    }
    if ll.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("pointwise log-likelihood contains non-finite values"));
    }
    let per: Vec<(f64, f64, f64)> = (0..ll.subjects)
        .into_par_iter()
        .map(|i| {
            let col = ll.column(i);
            let neg: Vec<f64> = col.iter().map(|v| -v).collect();
            let (lw, k) = psis_smooth(&neg);
            let num: Vec<f64> = lw.iter().zip(&col).map(|(w, l)| w + l).collect();
            let elpd_i = log_sum_exp(&num) - log_sum_exp(&lw);
            let lpd_i = log_sum_exp(&col) - (ll.draws as f64).ln();
            (elpd_i, lpd_i, k)
        })
        .collect();
    let elpd_i: Vec<f64> = per.iter().map(|p| p.0).collect();
    let khat: Vec<f64> = per.iter().map(|p| p.2).collect();
    let elpd: f64 = elpd_i.iter().sum();
    let lpd: f64 = per.iter().map(|p| p.1).sum();
    let mut warnings = Vec::new();
    let high: Vec<usize> = (0..khat.len()).filter(|&i| khat[i] > KHAT_THRESHOLD).collect();
    if !high.is_empty() {
        warnings.push(format!("{} subjects with khat > {KHAT_THRESHOLD}: {high:?}", high.len()));
    }
    let flat = khat.iter().filter(|k| k.is_nan()).count();
    if flat > 0 {
        warnings.push(format!("{flat} subjects with constant importance ratios; smoothing skipped and khat undefined"));
    }
    Ok(LooResult {
        elpd,
        elpd_se: total_se(&elpd_i),
        minus2elpd: -2.0 * elpd,
        lpd,
        p_loo: lpd - elpd,
        elpd_i,
        khat,
        draws: ll.draws,
        warnings,
    })
}

/// `sqrt(n · var(v))` with the sample variance.
fn total_se(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    if v.len() < 2 {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (n * var).sqrt()
}

/// `elpd(a) - elpd(b)` and the standard error of the paired differences.
pub fn elpd_difference(a: &LooResult, b: &LooResult) -> Result<(f64, f64)> {
    if a.elpd_i.len() != b.elpd_i.len() {
        return Err(Error::Comparison(format!("results cover different numbers of subjects ({} vs {})", a.elpd_i.len(), b.elpd_i.len())));
    }
    let d: Vec<f64> = a.elpd_i.iter().zip(&b.elpd_i).map(|(x, y)| x - y).collect();
    Ok((d.iter().sum(), total_se(&d)))
}

/// One model's place in a comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ranked {
    /// Position of the result in the input list.
    pub index: usize,
    pub elpd: f64,
    /// `elpd - elpd(best)`, so 0 for the best model.
    pub elpd_diff: f64,
    pub se_diff: f64,
}

/// Rank results by elpd, best first, with differences to the best.
pub fn compare(results: &[LooResult]) -> Result<Vec<Ranked>> {
    if results.is_empty() {
        return Err(Error::Comparison("nothing to compare".into()));
    }
    let mut order: Vec<usize> = (0..results.len()).collect();
    order.sort_by(|&a, &b| results[b].elpd.total_cmp(&results[a].elpd));
    let best = &results[order[0]];
    order
        .into_iter()
        .map(|j| {
            let (diff, se) = elpd_difference(&results[j], best)?;
            Ok(Ranked { index: j, elpd: results[j].elpd, elpd_diff: diff, se_diff: se })
        })
        .collect()
}

impl LooResult {
    /// Flat `key=value` report.
    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "elpd={}", format_float(self.elpd));
        let _ = writeln!(s, "elpd_se={}", format_float(self.elpd_se));
        let _ = writeln!(s, "minus2elpd={}", format_float(self.minus2elpd));
        let _ = writeln!(s, "lpd={}", format_float(self.lpd));
        let _ = writeln!(s, "p_loo={}", format_float(self.p_loo));
        let _ = writeln!(s, "subjects={}", self.elpd_i.len());
        let _ = writeln!(s, "draws={}", self.draws);
        let n_high = self.khat.iter().filter(|k| **k > KHAT_THRESHOLD).count();
        let _ = writeln!(s, "khat_above_0.7={n_high}");
        for w in &self.warnings {
            let _ = writeln!(s, "warning={}", w.replace('\n', " "));
        }
        s
    }

    /// Per-subject CSV `subject,elpd_i,khat`.
    pub fn pointwise_csv(&self) -> String {
        let mut s = String::from("subject,elpd_i,khat\n");
        for (i, (e, k)) in self.elpd_i.iter().zip(&self.khat).enumerate() {
            let _ = writeln!(s, "{i},{},{}", format_float(*e), format_float(*k));
        }
        s
    }

    /// Inverse of [`report`](Self::report) and [`pointwise_csv`](Self::pointwise_csv).
    pub fn parse(report: &str, pointwise: &str) -> Result<Self> {
        let mut out = LooResult {
            elpd: f64::NAN,
            elpd_se: f64::NAN,
            minus2elpd: f64::NAN,
            lpd: f64::NAN,
            p_loo: f64::NAN,
            elpd_i: Vec::new(),
            khat: Vec::new(),
            draws: 0,
            warnings: Vec::new(),
        };
        let num = |k: &str, v: &str| v.parse::<f64>().map_err(|_| Error::input(format!("LOO report: bad value for {k}: '{v}'")));
        let mut subjects = None;
        for line in report.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| Error::input(format!("LOO report: malformed line '{line}'")))?;
            match k {
                "elpd" => out.elpd = num(k, v)?,
                "elpd_se" => out.elpd_se = num(k, v)?,
                "minus2elpd" => out.minus2elpd = num(k, v)?,
                "lpd" => out.lpd = num(k, v)?,
                "p_loo" => out.p_loo = num(k, v)?,
                "subjects" => subjects = Some(v.parse::<usize>().map_err(|_| Error::input("LOO report: bad subjects"))?),
                "draws" => out.draws = v.parse().map_err(|_| Error::input("LOO report: bad draws"))?,
                "khat_above_0.7" => {}
                "warning" => out.warnings.push(v.to_string()),
                other => return Err(Error::input(format!("LOO report: unknown key '{other}'"))),
            }
        }
        let mut rd = csv::Reader::from_reader(pointwise.as_bytes());
        let header: Vec<String> = rd.headers().map_err(|e| Error::input(format!("CSV: {e}")))?.iter().map(str::to_string).collect();
        if header != ["subject", "elpd_i", "khat"] {
            return Err(Error::input("LOO pointwise CSV header must be subject,elpd_i,khat"));
        }
        for (row, rec) in rd.records().enumerate() {
            let rec = rec.map_err(|e| Error::input(format!("CSV: {e}")))?;
            if rec[0].parse::<usize>().ok() != Some(row) {
                return Err(Error::input(format!("LOO pointwise CSV row {}: subject index out of order", row + 1)));
            }
            out.elpd_i.push(num("elpd_i", &rec[1])?);
            out.khat.push(num("khat", &rec[2])?);
        }
        if subjects != Some(out.elpd_i.len()) {
            return Err(Error::input("LOO report and pointwise CSV disagree on the number of subjects"));
        }
        Ok(out)
    }
}

/// Exact leave-one-out by refitting without each subject in turn.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactLoo {
    pub elpd: f64,
    pub elpd_i: Vec<f64>,
}

/// `ln mean_m p(y_i | ψ^{(m)}_{-i})` from a fit of `full` without subject `i`.
pub fn refit_elpd_i(full: &Posterior, i: usize, cfg: &SamplerConfig) -> Result<f64> {
    let model = full.model();
    let rec = full.data().get(i).ok_or_else(|| Error::input(format!("subject {i} out of range")))?;
    let reduced = full.without(i)?;
    let draws = run_chains(&reduced, &SamplerConfig { seed: cfg.seed.wrapping_add(i as u64), ..*cfg })?;
    let ll: Vec<f64> = draws
        .values
        .iter()
        .map(|v| {
            let psi = ParameterVector::from_flat(model, v)?;
            match loglik_subject(model, &psi, rec) {
                Err(Error::NonMonotone(_)) => Ok(f64::NEG_INFINITY),
                other => other,
            }
        })
        .collect::<Result<_>>()?;
    Ok(log_sum_exp(&ll) - (ll.len() as f64).ln())
}

/// `elpd_i = ln mean_m p(y_i | ψ^{(m)}_{-i})`, with draws from `n` separate fits.
/// Intended for small validation datasets.
pub fn exact_loo(model: &ModelSpec, data: &[SubjectRecord], priors: &PriorSpec, cfg: &SamplerConfig) -> Result<ExactLoo> {
    let full = Posterior::new(model.clone(), data.to_vec(), *priors)?;
    let elpd_i = (0..data.len()).map(|i| refit_elpd_i(&full, i, cfg)).collect::<Result<Vec<f64>>>()?;
    Ok(ExactLoo { elpd: elpd_i.iter().sum(), elpd_i })
}

/// Replace the PSIS estimates of `subjects` by exact refits and recompute the totals.
pub fn refit_subjects(result: &LooResult, full: &Posterior, cfg: &SamplerConfig, subjects: &[usize]) -> Result<LooResult> {
    if full.data().len() != result.elpd_i.len() {
        return Err(Error::Comparison(format!("LOO result has {} subjects, data has {}", result.elpd_i.len(), full.data().len())));
    }
    let mut out = result.clone();
    for &i in subjects {
        out.elpd_i[i] = refit_elpd_i(full, i, cfg)?;
    }
    out.elpd = out.elpd_i.iter().sum();
    out.elpd_se = total_se(&out.elpd_i);
    out.minus2elpd = -2.0 * out.elpd;
    out.p_loo = out.lpd - out.elpd;
    if !subjects.is_empty() {
        out.warnings.push(format!("refit exactly: {subjects:?}"));
    }
    Ok(out)
}

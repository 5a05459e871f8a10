//! Split R-hat and autocorrelation-based effective sample size.

use crate::error::{Error, Result};

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Split potential scale reduction factor over equal-length chains.
pub fn split_rhat(chains: &[Vec<f64>]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(Error::Diagnostics("R-hat needs at least two chains".into()));
    }
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    let half = n / 2;
    if half < 2 {
        return Err(Error::Diagnostics(format!("R-hat needs at least 4 draws per chain, got {n}")));
    }
    let mut split = Vec::with_capacity(2 * chains.len());
    for c in chains {
        split.push(&c[..half]);
        split.push(&c[n - half..n]);
    }
    let means: Vec<f64> = split.iter().map(|c| mean(c)).collect();
    let w = split.iter().map(|c| sample_var(c)).sum::<f64>() / split.len() as f64;
    let nf = half as f64;
    let b = nf * sample_var(&means);
    let var_plus = (nf - 1.0) / nf * w + b / nf;
    Ok((var_plus / w).sqrt())
}

/// Autocovariance at `lag` with divisor `n`.
fn autocov(x: &[f64], m: f64, lag: usize) -> f64 {
    let n = x.len();
    x[..n - lag].iter().zip(&x[lag..]).map(|(a, b)| (a - m) * (b - m)).sum::<f64>() / n as f64
}

/// Multi-chain effective sample size with Geyer's initial monotone sequence
/// estimator. Constant input gives 0.
pub fn ess(chains: &[Vec<f64>]) -> f64 {
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    let m = chains.len();
    if m == 0 || n < 4 {
        return 0.0;
    }
    let chains: Vec<&[f64]> = chains.iter().map(|c| &c[..n]).collect();
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let nf = n as f64;
    let mean_var = chains.iter().zip(&means).map(|(c, &mu)| autocov(c, mu, 0) * nf / (nf - 1.0)).sum::<f64>() / m as f64;
    let mut var_plus = mean_var * (nf - 1.0) / nf;
    if m > 1 {
        var_plus += sample_var(&means);
    }
    if !(var_plus > 0.0) || !var_plus.is_finite() {
        return 0.0;
    }
    let rho = |lag: usize| {
        let acov = chains.iter().zip(&means).map(|(c, &mu)| autocov(c, mu, lag)).sum::<f64>() / m as f64;
        1.0 - (mean_var - acov) / var_plus
    };
    let mut rho_hat = vec![0.0; n + 2];
    rho_hat[0] = 1.0;
    rho_hat[1] = rho(1);
    let mut even = 1.0;
    let mut odd = rho_hat[1];
    let mut s = 1;
    while s + 4 < n && even + odd > 0.0 {
        even = rho(s + 1);
        odd = rho(s + 2);
        if even + odd >= 0.0 {
            rho_hat[s + 1] = even;
            rho_hat[s + 2] = odd;
        }
        s += 2;
    }
    let max_s = s;
    if even > 0.0 {
        rho_hat[max_s + 1] = even;
    }
    // initial monotone sequence over pairs
    let mut k = 1;
    while k + 3 <= max_s {
        let prev = rho_hat[k - 1] + rho_hat[k];
        if rho_hat[k + 1] + rho_hat[k + 2] > prev {
            rho_hat[k + 1] = prev / 2.0;
            rho_hat[k + 2] = prev / 2.0;
        }
        k += 2;
    }
    let total = (m * n) as f64;
    let tau = -1.0 + 2.0 * rho_hat[..max_s].iter().sum::<f64>() + rho_hat[max_s + 1];
    let tau = tau.max(1.0 / total.log10());
    total / tau
}

/// Monte Carlo standard error of the mean.
pub fn mcse_mean(chains: &[Vec<f64>]) -> f64 {
    let all: Vec<f64> = chains.iter().flatten().copied().collect();
    let e = ess(chains);
    if e == 0.0 {
        return 0.0;
    }
    (sample_var(&all) / e).sqrt()
}

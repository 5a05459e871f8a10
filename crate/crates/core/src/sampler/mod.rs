//! No-U-Turn Hamiltonian Monte Carlo over an unconstrained log density, with
//! windowed warmup adaptation, parallel chains and convergence diagnostics.

mod adapt;
pub mod diagnostics;
mod nuts;
pub mod rng;

pub use adapt::{DualAveraging, RunningVariance, WindowSchedule};
pub use diagnostics::{ess, mcse_mean, split_rhat};
pub use nuts::TransitionStats;

use crate::error::{Error, Result};
use crate::likelihood::Posterior;
use nuts::{Hamiltonian, Point};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

/// A differentiable log density on `R^dim`.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Log density at `z` (up to a constant) with its gradient in `grad`; `-∞`
    /// rejects the point.
    fn log_density_and_grad(&self, z: &[f64], grad: &mut [f64]) -> f64;

    /// A starting point; `attempt` counts previous rejected starts.
    fn initial_point(&self, rng: &mut ChaCha8Rng, radius: f64, attempt: usize) -> Vec<f64> {
        let r = radius * 0.9f64.powi(attempt as i32);
        (0..self.dim()).map(|_| rng.random_range(-r..=r)).collect()
    }

    fn param_names(&self) -> Vec<String> {
        (0..self.dim()).map(|i| format!("z_{}", i + 1)).collect()
    }

    /// Values reported for a draw, matching `param_names`.
    fn constrain(&self, z: &[f64]) -> Vec<f64> {
        z.to_vec()
    }
}

impl LogDensity for Posterior {
    fn dim(&self) -> usize {
        Posterior::dim(self)
    }

    fn log_density_and_grad(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        Posterior::log_density_and_grad(self, z, grad)
    }

    /// `σ` and `θ` start at 1; the remaining coordinates are uniform on
    /// `[-radius, radius]`, with the flexible coefficients shrunk on retries so that
    /// a monotone covariate process is eventually found.
    fn initial_point(&self, rng: &mut ChaCha8Rng, radius: f64, attempt: usize) -> Vec<f64> {
        let l = self.model().layout();
        let mut z: Vec<f64> = (0..l.dim).map(|_| rng.random_range(-radius..=radius)).collect();
        let shrink = 0.8f64.powi(attempt as i32);
        for a in &mut z[l.alpha..l.alpha + l.n_alpha] {
            *a *= shrink;
        }
        z[l.ln_sigma] = 0.0;
        if let Some(t) = l.ln_theta {
            z[t] = 0.0;
        }
        z
    }

    fn param_names(&self) -> Vec<String> {
        self.model().param_names()
    }

    fn constrain(&self, z: &[f64]) -> Vec<f64> {
        self.model().constrain(z).map(|p| p.flatten()).unwrap_or_else(|_| vec![f64::NAN; z.len()])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub chains: usize,
    #[serde(alias = "warmup")]
    pub warmup_iters: usize,
    #[serde(alias = "iters")]
    pub sampling_iters: usize,
    pub seed: u64,
    pub target_accept: f64,
    pub max_tree_depth: usize,
    pub thin: usize,
    /// Half-width of the uniform initialization box.
    pub init_radius: f64,
    pub init_buffer: usize,
    pub term_buffer: usize,
    pub base_window: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            warmup_iters: 1000,
            sampling_iters: 1000,
            seed: 1,
            target_accept: 0.8,
            max_tree_depth: 10,
            thin: 1,
            init_radius: 2.0,
            init_buffer: 75,
            term_buffer: 50,
            base_window: 25,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::input(format!("sampler config: {m}")));
        if self.chains == 0 {
            return fail("chains must be >= 1");
        }
        if self.sampling_iters == 0 {
            return fail("sampling_iters must be >= 1");
        }
        if self.thin == 0 {
            return fail("thin must be >= 1");
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return fail("target_accept must lie in (0, 1)");
        }
        if self.max_tree_depth == 0 {
            return fail("max_tree_depth must be >= 1");
        }
        if !(self.init_radius >= 0.0 && self.init_radius.is_finite()) {
            return fail("init_radius must be finite and >= 0");
        }
        Ok(())
    }
}

/// Retained draws from all chains, ordered by chain then iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub names: Vec<String>,
    pub chains: usize,
    pub chain: Vec<usize>,
    pub iter: Vec<usize>,
    /// Reported (constrained) values, one row per draw.
    pub values: Vec<Vec<f64>>,
    /// Unconstrained coordinates (empty when loaded from CSV).
    pub unconstrained: Vec<Vec<f64>>,
    pub divergent: Vec<bool>,
    pub energy: Vec<f64>,
    pub accept_stat: Vec<f64>,
    pub tree_depth: Vec<usize>,
    /// Adapted step size per chain.
    pub step_size: Vec<f64>,
    pub inv_metric: Vec<Vec<f64>>,
    pub warmup_divergent: Vec<usize>,
}

impl PosteriorDraws {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn n_divergent(&self) -> usize {
        self.divergent.iter().filter(|d| **d).count()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.iter().map(|r| r[j]).collect()
    }

    /// Column `j` split by chain.
    pub fn by_chain(&self, j: usize) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); self.chains];
        for (row, &c) in self.values.iter().zip(&self.chain) {
            out[c].push(row[j]);
        }
        out
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Keep every `k`-th draw within each chain.
    pub fn thinned(&self, k: usize) -> Self {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| self.iter[i].is_multiple_of(k.max(1))).collect();
        let pick = |v: &Vec<f64>| keep.iter().map(|&i| v[i]).collect::<Vec<f64>>();
        Self {
            names: self.names.clone(),
            chains: self.chains,
            chain: keep.iter().map(|&i| self.chain[i]).collect(),
            iter: keep.iter().map(|&i| self.iter[i]).collect(),
            values: keep.iter().map(|&i| self.values[i].clone()).collect(),
            unconstrained: if self.unconstrained.is_empty() {
                Vec::new()
            } else {
                keep.iter().map(|&i| self.unconstrained[i].clone()).collect()
            },
            divergent: keep.iter().map(|&i| self.divergent[i]).collect(),
            energy: pick(&self.energy),
            accept_stat: pick(&self.accept_stat),
            tree_depth: keep.iter().map(|&i| self.tree_depth[i]).collect(),
            step_size: self.step_size.clone(),
            inv_metric: self.inv_metric.clone(),
            warmup_divergent: self.warmup_divergent.clone(),
        }
    }

    /// CSV with header `chain,iter,<names>,divergent,energy`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["chain".to_string(), "iter".to_string()];
        header.extend(self.names.iter().cloned());
        header.push("divergent".into());
        header.push("energy".into());
        wr.write_record(&header).map_err(csv_err)?;
        for i in 0..self.len() {
            let mut rec = vec![self.chain[i].to_string(), self.iter[i].to_string()];
            rec.extend(self.values[i].iter().map(|v| format_float(*v)));
            rec.push(u8::from(self.divergent[i]).to_string());
            rec.push(format_float(self.energy[i]));
            wr.write_record(&rec).map_err(csv_err)?;
        }
        wr.flush().map_err(|e| Error::input(e.to_string()))?;
        Ok(())
    }

    /// Read draws written by [`write_csv`](Self::write_csv).
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let header: Vec<String> = rd.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
        let k = header.len();
        if k < 4 || header[0] != "chain" || header[1] != "iter" || header[k - 2] != "divergent" || header[k - 1] != "energy" {
            return Err(Error::input("draws CSV header must be chain,iter,<params>,divergent,energy"));
        }
        let names = header[2..k - 2].to_vec();
        let mut out = Self {
            names,
            chains: 0,
            chain: Vec::new(),
            iter: Vec::new(),
            values: Vec::new(),
            unconstrained: Vec::new(),
            divergent: Vec::new(),
            energy: Vec::new(),
            accept_stat: Vec::new(),
            tree_depth: Vec::new(),
            step_size: Vec::new(),
            inv_metric: Vec::new(),
            warmup_divergent: Vec::new(),
        };
        for (row, rec) in rd.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let bad = |what: &str| Error::input(format!("draws CSV row {}: bad {what}", row + 1));
            let chain: usize = rec[0].parse().map_err(|_| bad("chain"))?;
            out.chain.push(chain);
            out.iter.push(rec[1].parse().map_err(|_| bad("iter"))?);
            let vals = (2..k - 2).map(|j| rec[j].parse::<f64>().map_err(|_| bad(&header[j]))).collect::<Result<Vec<_>>>()?;
            out.values.push(vals);
            out.divergent.push(&rec[k - 2] == "1");
            out.energy.push(rec[k - 1].parse().map_err(|_| bad("energy"))?);
            out.accept_stat.push(f64::NAN);
            out.tree_depth.push(0);
            out.chains = out.chains.max(chain + 1);
        }
        Ok(out)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::input(format!("CSV: {e}"))
}

/// Shortest representation that round-trips.
pub fn format_float(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:?}")
    }
}

struct ChainOutput {
    draws: Vec<Point>,
    iters: Vec<usize>,
    stats: Vec<TransitionStats>,
    step_size: f64,
    inv_metric: Vec<f64>,
    warmup_divergent: usize,
}

fn initialize<T: LogDensity + ?Sized>(target: &T, cfg: &SamplerConfig, chain: usize) -> Result<Point> {
    const ATTEMPTS: usize = 100;
    let mut rng = rng::stream(cfg.seed, chain as u64, u64::MAX);
    for attempt in 0..ATTEMPTS {
        let z = target.initial_point(&mut rng, cfg.init_radius, attempt);
        let pt = Point::new(target, z);
        if pt.logp.is_finite() && pt.grad.iter().all(|g| g.is_finite()) {
            return Ok(pt);
        }
    }
    Err(Error::Sampler(format!("chain {chain}: no initial point with finite log density after {ATTEMPTS} attempts")))
}

fn run_chain<T: LogDensity + ?Sized>(target: &T, cfg: &SamplerConfig, chain: usize) -> Result<ChainOutput> {
    let dim = target.dim();
    let mut current = initialize(target, cfg, chain)?;
    let mut inv_metric = vec![1.0; dim];
    let mut rng0 = rng::stream(cfg.seed, chain as u64, u64::MAX - 1);
    let mut eps = {
        let ham = Hamiltonian { target, inv_metric: &inv_metric };
        nuts::initial_step_size(&ham, &current, 1.0, &mut rng0)
    };
    let mut da = DualAveraging::new(cfg.target_accept, eps);
    let mut schedule = WindowSchedule::new(cfg.warmup_iters, cfg.init_buffer, cfg.term_buffer, cfg.base_window);
    let mut var = RunningVariance::new(dim);
    let mut warmup_divergent = 0;

    for i in 0..cfg.warmup_iters {
        let mut rng = rng::stream(cfg.seed, chain as u64, i as u64);
        let (next, stats) = {
            let ham = Hamiltonian { target, inv_metric: &inv_metric };
            nuts::transition(&ham, &current, eps, cfg.max_tree_depth, &mut rng)
        };
        current = next;
        warmup_divergent += usize::from(stats.divergent);
        eps = da.update(stats.accept_stat);
        if schedule.in_slow_window(i) {
            var.add(&current.z);
        }
        if schedule.window_closes(i) {
            inv_metric = var.regularized();
            var.reset();
            let ham = Hamiltonian { target, inv_metric: &inv_metric };
            eps = nuts::initial_step_size(&ham, &current, eps, &mut rng);
            da.restart(eps);
        }
    }
    if cfg.warmup_iters > 0 {
        if warmup_divergent == cfg.warmup_iters {
            return Err(Error::Sampler(format!("chain {chain}: every warmup transition diverged")));
        }
        eps = da.final_step_size();
    }
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::Sampler(format!("chain {chain}: adapted step size is {eps}")));
    }

    let ham = Hamiltonian { target, inv_metric: &inv_metric };
    let mut draws = Vec::with_capacity(cfg.sampling_iters / cfg.thin + 1);
    let mut iters = Vec::with_capacity(draws.capacity());
    let mut all_stats = Vec::with_capacity(draws.capacity());
    for i in 0..cfg.sampling_iters {
        let mut rng = rng::stream(cfg.seed, chain as u64, (cfg.warmup_iters + i) as u64);
        let (next, stats) = nuts::transition(&ham, &current, eps, cfg.max_tree_depth, &mut rng);
        current = next;
        if !current.logp.is_finite() {
            return Err(Error::numerical(format!("chain {chain}, iteration {i}: non-finite log density")));
        }
        if i % cfg.thin == 0 {
            draws.push(current.clone());
            iters.push(i);
            all_stats.push(stats);
        }
    }
    Ok(ChainOutput { draws, iters, stats: all_stats, step_size: eps, inv_metric, warmup_divergent })
}

/// Run `cfg.chains` independent chains (in parallel) and merge their draws.
pub fn run_chains<T: LogDensity + ?Sized>(target: &T, cfg: &SamplerConfig) -> Result<PosteriorDraws> {
    cfg.validate()?;
    let outputs: Vec<Result<ChainOutput>> = (0..cfg.chains).into_par_iter().map(|c| run_chain(target, cfg, c)).collect();
    let mut draws = PosteriorDraws {
        names: target.param_names(),
        chains: cfg.chains,
        chain: Vec::new(),
        iter: Vec::new(),
        values: Vec::new(),
        unconstrained: Vec::new(),
        divergent: Vec::new(),
        energy: Vec::new(),
        accept_stat: Vec::new(),
        tree_depth: Vec::new(),
        step_size: Vec::new(),
        inv_metric: Vec::new(),
        warmup_divergent: Vec::new(),
    };
    for (c, out) in outputs.into_iter().enumerate() {
        let out = out?;
        for ((pt, it), st) in out.draws.into_iter().zip(out.iters).zip(out.stats) {
            draws.chain.push(c);
            draws.iter.push(it);
            draws.values.push(target.constrain(&pt.z));
            draws.unconstrained.push(pt.z);
            draws.divergent.push(st.divergent);
            draws.energy.push(st.energy);
            draws.accept_stat.push(st.accept_stat);
            draws.tree_depth.push(st.depth);
        }
        draws.step_size.push(out.step_size);
        draws.inv_metric.push(out.inv_metric);
        draws.warmup_divergent.push(out.warmup_divergent);
    }
    Ok(draws)
}

/// Split R-hat of column `j`.
pub fn rhat(draws: &PosteriorDraws, j: usize) -> Result<f64> {
    split_rhat(&draws.by_chain(j))
}

/// Effective sample size of column `j`.
pub fn ess_of(draws: &PosteriorDraws, j: usize) -> f64 {
    ess(&draws.by_chain(j))
}

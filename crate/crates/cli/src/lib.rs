//! Command-line front end for `qaft`.
//!
//! Exit codes: 0 on success, 2 for bad input (flags, files, data, configuration,
//! missing fit outputs), 3 for numerical or sampling failures.

pub mod config;
pub mod error;
pub mod files;

use clap::{Args, Parser, Subcommand};
use config::ConfigFile;
use error::{CliError, Context, Result};
use files::{Fit, FitMeta, FitSummary};
use qaft::data::write_records;
use qaft::inference::{
    af_surface, conditional_af, max_follow_up, onset_grid, p_grid, parameter_draws, standardized_af, standardized_survivor_curve,
};
use qaft::modelcheck::{pointwise_loglik, psis_loo, refit_subjects, KHAT_THRESHOLD};
use qaft::sampler::run_chains;
use qaft::simulate::{midpoint_events, simulate_dataset};
use qaft::{Contrast, CurveTable, Intervention, ModelSpec, ParameterVector, Pattern, Posterior, SubjectRecord};
use serde::Serialize;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(name = "qaft", version, about = "Bayesian AFT models with quantile-varying acceleration factors")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "QAFT_THREADS", value_parser = clap::value_parser!(u32).range(1..))]
    pub threads: Option<u32>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample the posterior and write draws, summary and diagnostics.
    Fit(FitArgs),
    /// Recompute summary.json and diagnostics.csv from a fit's draws.
    Summarize {
        #[arg(long)]
        fit: PathBuf,
    },
    /// Regression-standardized survivor curves for two exposure levels.
    Standardize(StandardizeArgs),
    /// Quantile-varying acceleration factor curve.
    Af(AfArgs),
    /// Standardized AF of switching at each onset time versus never switching.
    Surface(SurfaceArgs),
    /// PSIS leave-one-out cross-validation.
    Loo(LooArgs),
    /// Simulate a data set from the model and [truth] in a config file.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides sampler.seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Treat interval-censored events as exact at the interval midpoint.
    #[arg(long)]
    pub midpoint: bool,
}

#[derive(Debug, Args, Clone, Default)]
pub struct ContrastArgs {
    /// Covariate set to --exposed versus --reference for every subject.
    #[arg(long)]
    pub covariate: Option<String>,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub exposed: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub reference: f64,
    /// Time-varying covariate switching on at this time versus never.
    #[arg(long)]
    pub onset: Option<f64>,
    /// Conditional contrast: covariate pattern, comma-separated in model order.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x: Option<Vec<f64>>,
    #[arg(long = "x-ref", value_delimiter = ',', allow_hyphen_values = true)]
    pub x_ref: Option<Vec<f64>>,
    /// Switch time for --x (default: never).
    #[arg(long)]
    pub tx: Option<f64>,
    /// Switch time for --x-ref (default: never).
    #[arg(long = "tx-ref")]
    pub tx_ref: Option<f64>,
}

pub enum ResolvedContrast {
    Standardized(Contrast),
    Conditional(Pattern, Pattern),
}

impl ContrastArgs {
    pub fn resolve(&self, model: &ModelSpec) -> Result<ResolvedContrast> {
        let given = [self.covariate.is_some(), self.onset.is_some(), self.x.is_some() || self.x_ref.is_some()];
        if given.iter().filter(|g| **g).count() != 1 {
            return Err(CliError::input("give exactly one of --covariate, --onset, or --x with --x-ref"));
        }
        if let Some(name) = &self.covariate {
            return Ok(ResolvedContrast::Standardized(Contrast {
                exposed: Intervention::set(model, name, self.exposed)?,
                reference: Intervention::set(model, name, self.reference)?,
            }));
        }
        if let Some(t) = self.onset {
            return Ok(ResolvedContrast::Standardized(Contrast {
                exposed: Intervention::Onset(t),
                reference: Intervention::Onset(f64::INFINITY),
            }));
        }
        let (Some(x), Some(x_ref)) = (&self.x, &self.x_ref) else {
            return Err(CliError::input("--x and --x-ref go together"));
        };
        let inf = f64::INFINITY;
        Ok(ResolvedContrast::Conditional(
            Pattern::switching(x.clone(), self.tx.unwrap_or(inf)),
            Pattern::switching(x_ref.clone(), self.tx_ref.unwrap_or(inf)),
        ))
    }
}

#[derive(Debug, Args)]
pub struct StandardizeArgs {
    #[arg(long)]
    pub fit: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub contrast: ContrastArgs,
    /// Number of grid times from 0 to --t-max.
    #[arg(long, default_value_t = 100)]
    pub times: usize,
    /// End of the time grid (default: largest follow-up time).
    #[arg(long)]
    pub t_max: Option<f64>,
    /// Use every k-th draw.
    #[arg(long, default_value_t = 1)]
    pub thin: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AfArgs {
    /// Fit directory (posterior AF).
    #[arg(long, required_unless_present = "analytic")]
    pub fit: Option<PathBuf>,
    /// Evaluate at the [truth] parameters of --config instead of a fit.
    #[arg(long, requires = "config", conflicts_with = "fit")]
    pub analytic: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Population to standardize over (needed for --covariate and --onset).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub contrast: ContrastArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value_t = 1)]
    pub thin: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct GridArgs {
    /// Spacing of the probability grid from 0.01 to 0.99.
    #[arg(long, default_value_t = 0.01)]
    pub p_step: f64,
    /// Explicit survival probabilities, comma-separated (overrides --p-step).
    #[arg(long, value_delimiter = ',')]
    pub p: Option<Vec<f64>>,
}

impl GridArgs {
    pub fn values(&self) -> Result<Vec<f64>> {
        if let Some(p) = &self.p {
            if let Some(bad) = p.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
                return Err(CliError::input(format!("--p values must lie in (0, 1), got {bad}")));
            }
            return Ok(p.clone());
        }
        if !(self.p_step > 0.0 && self.p_step <= 0.98) {
            return Err(CliError::input(format!("--p-step must lie in (0, 0.98], got {}", self.p_step)));
        }
        Ok(p_grid(self.p_step))
    }
}

#[derive(Debug, Args)]
pub struct SurfaceArgs {
    #[arg(long)]
    pub fit: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Number of equally spaced onset times up to the largest follow-up time.
    #[arg(long, default_value_t = 10)]
    pub onsets: usize,
    /// Explicit onset times, comma-separated (overrides --onsets).
    #[arg(long, value_delimiter = ',')]
    pub onset_times: Option<Vec<f64>>,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value_t = 1)]
    pub thin: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LooArgs {
    #[arg(long)]
    pub fit: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory (default: the fit directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Refit without each subject whose khat exceeds 0.7 and use the exact value.
    #[arg(long)]
    pub refit_high_k: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Data file to write; the true parameters go to `<out>.truth.json`.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides simulate.seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Record interval-censored events at their midpoint as exact events.
    #[arg(long)]
    pub midpoint: bool,
}

/// Parse `args`, run the command and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n as usize).build_global();
    }
    match cli.command {
        Command::Fit(a) => fit(&a),
        Command::Summarize { fit } => summarize_fit(&fit),
        Command::Standardize(a) => standardize(&a),
        Command::Af(a) => af(&a),
        Command::Surface(a) => surface(&a),
        Command::Loo(a) => loo(&a),
        Command::Simulate(a) => simulate(&a),
    }
}

fn fit(a: &FitArgs) -> Result<()> {
    let cfg = ConfigFile::load(&a.config)?;
    let data = files::read_data(&a.data, &cfg.data_model()?, a.midpoint)?;
    let model = cfg.model(Some(&data))?;
    let mut sampler = cfg.sampler;
    if let Some(seed) = a.seed {
        sampler.seed = seed;
    }
    sampler.validate().context("config: sampler")?;
    let meta = FitMeta {
        data_sha256: files::data_digest(&model, &data)?,
        subjects: data.len(),
        model: model.clone(),
        priors: cfg.priors,
        sampler,
        midpoint: a.midpoint,
    };
    let posterior = Posterior::new(model, data, cfg.priors).context(a.data.display())?;
    let draws = run_chains(&posterior, &sampler)?;
    files::create_dir(&a.out)?;
    files::write_atomic(&a.out.join(files::DRAWS), |w| Ok(draws.write_csv(w)?))?;
    files::write_json(&a.out.join(files::FIT_META), &meta)?;
    let summary = FitSummary::new(&draws);
    summary.write(&a.out)?;
    report_fit(&summary);
    Ok(())
}

fn report_fit(s: &FitSummary) {
    eprintln!(
        "{} chains, {} draws, {} divergent; max R-hat {:.4}, min ESS {:.0}",
        s.chains,
        s.draws,
        s.divergent,
        s.max_rhat(),
        s.min_ess()
    );
    println!("{:<12} {:>12} {:>12} {:>12} {:>8} {:>8}", "parameter", "median", "lo95", "hi95", "rhat", "ess");
    for p in &s.parameters {
        println!("{:<12} {:>12.5} {:>12.5} {:>12.5} {:>8.4} {:>8.0}", p.name, p.median, p.lo95, p.hi95, p.rhat, p.ess);
    }
}

fn summarize_fit(dir: &Path) -> Result<()> {
    let fit = Fit::load(dir)?;
    let summary = FitSummary::new(&fit.draws);
    summary.write(dir)?;
    report_fit(&summary);
    Ok(())
}

fn check_thin(thin: usize) -> Result<()> {
    if thin == 0 {
        return Err(CliError::input("--thin must be >= 1"));
    }
    Ok(())
}

fn fit_draws(fit: &Fit, thin: usize) -> Result<Vec<ParameterVector>> {
    check_thin(thin)?;
    Ok(parameter_draws(&fit.meta.model, &fit.draws.thinned(thin))?)
}

fn write_curves(path: &Path, table: &CurveTable) -> Result<()> {
    files::write_atomic(path, |w| Ok(table.write_csv(w)?))
}

fn standardize(a: &StandardizeArgs) -> Result<()> {
    let fit = Fit::load(&a.fit)?;
    let model = &fit.meta.model;
    let data = fit.read_data(&a.data)?;
    let ResolvedContrast::Standardized(c) = a.contrast.resolve(model)? else {
        return Err(CliError::input("standardize needs --covariate or --onset"));
    };
    if a.times < 2 {
        return Err(CliError::input("--times must be >= 2"));
    }
    let t_max = a.t_max.unwrap_or_else(|| max_follow_up(&data));
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(CliError::input(format!("--t-max must be positive and finite, got {t_max}")));
    }
    let grid: Vec<f64> = (0..a.times).map(|k| t_max * k as f64 / (a.times - 1) as f64).collect();
    let draws = fit_draws(&fit, a.thin)?;
    let mut table = standardized_survivor_curve(model, &draws, &data, &c.exposed, &grid, "exposed")?;
    table.rows.extend(standardized_survivor_curve(model, &draws, &data, &c.reference, &grid, "reference")?.rows);
    write_curves(&a.out, &table)
}

fn af(a: &AfArgs) -> Result<()> {
    check_thin(a.thin)?;
    let ps = a.grid.values()?;
    let (model, draws, data): (ModelSpec, Vec<ParameterVector>, Option<Vec<SubjectRecord>>) = if a.analytic {
        let path = a.config.as_deref().ok_or_else(|| CliError::input("--analytic needs --config"))?;
        let cfg = ConfigFile::load(path)?;
        let data = match &a.data {
            Some(p) => Some(files::read_data(p, &cfg.data_model()?, false)?),
            None => None,
        };
        let model = cfg.model(data.as_deref())?;
        let truth = cfg.truth(&model)?;
        (model, vec![truth], data)
    } else {
        let dir = a.fit.as_deref().ok_or_else(|| CliError::input("af needs --fit or --analytic"))?;
        let fit = Fit::load(dir)?;
        let data = match &a.data {
            Some(p) => Some(fit.read_data(p)?),
            None => None,
        };
        let draws = fit_draws(&fit, a.thin)?;
        (fit.meta.model, draws, data)
    };
    let table = match a.contrast.resolve(&model)? {
        ResolvedContrast::Conditional(x, x_ref) => conditional_af(&model, &draws, &x, &x_ref, &ps, "af")?,
        ResolvedContrast::Standardized(c) => {
            let data = data.ok_or_else(|| CliError::input("a standardized contrast needs --data"))?;
            standardized_af(&model, &draws, &data, &c, &ps, "af")?
        }
    };
    write_curves(&a.out, &table)
}

fn surface(a: &SurfaceArgs) -> Result<()> {
    let ps = a.grid.values()?;
    let fit = Fit::load(&a.fit)?;
    let data = fit.read_data(&a.data)?;
    let onsets = match &a.onset_times {
        Some(t) => t.clone(),
        None if a.onsets > 0 => onset_grid(&data, a.onsets),
        None => return Err(CliError::input("--onsets must be >= 1")),
    };
    let draws = fit_draws(&fit, a.thin)?;
    let table = af_surface(&fit.meta.model, &draws, &data, &onsets, &ps)?;
    write_curves(&a.out, &table)
}

fn loo(a: &LooArgs) -> Result<()> {
    let fit = Fit::load(&a.fit)?;
    let data = fit.read_data(&a.data)?;
    fit.check_same_data(&data)?;
    let model = &fit.meta.model;
    let draws = parameter_draws(model, &fit.draws)?;
    let ll = pointwise_loglik(model, &draws, &data)?;
    let mut result = psis_loo(&ll)?;
    if a.refit_high_k {
        let high: Vec<usize> = (0..result.khat.len()).filter(|&i| result.khat[i] > KHAT_THRESHOLD).collect();
        if !high.is_empty() {
            eprintln!("refitting without {} subjects with khat > {KHAT_THRESHOLD}", high.len());
            let posterior = Posterior::new(model.clone(), data, fit.meta.priors)?;
            result = refit_subjects(&result, &posterior, &fit.meta.sampler, &high)?;
        }
    }
    let out = a.out.as_deref().unwrap_or(&a.fit);
    files::create_dir(out)?;
    let report = result.report();
    files::write_text(&out.join(files::LOO_REPORT), &report)?;
    files::write_text(&out.join(files::LOO_POINTWISE), &result.pointwise_csv())?;
    print!("{report}");
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

#[derive(Serialize)]
struct TruthFile<'a> {
    n: usize,
    seed: u64,
    model: &'a ModelSpec,
    truth: &'a ParameterVector,
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let cfg = ConfigFile::load(&a.config)?.sim_config(a.seed)?;
    let mut data = simulate_dataset(&cfg)?;
    if a.midpoint {
        data = midpoint_events(&data);
    }
    files::write_atomic(&a.out, |w| Ok(write_records(w, &cfg.model, &data)?))?;
    files::write_json(&files::truth_path(&a.out), &TruthFile { n: cfg.n, seed: cfg.seed, model: &cfg.model, truth: &cfg.truth })?;
    let events = data.iter().filter(|r| r.y_u.is_finite()).count();
    eprintln!("{} subjects, {} with an observed event", data.len(), events);
    Ok(())
}

//! Fit directory layout and file helpers. Every output is written to a temporary
//! file in the target directory and renamed into place.

use crate::error::{CliError, Context, Result};
use qaft::data::{read_records, write_records};
use qaft::inference::summarize;
use qaft::sampler::{ess_of, format_float, rhat};
use qaft::simulate::midpoint_events;
use qaft::{ModelSpec, PosteriorDraws, PriorSpec, SamplerConfig, SubjectRecord};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

pub const FIT_META: &str = "fit.json";
pub const DRAWS: &str = "draws.csv";
pub const SUMMARY: &str = "summary.json";
pub const DIAGNOSTICS: &str = "diagnostics.csv";
pub const LOO_REPORT: &str = "loo.txt";
pub const LOO_POINTWISE: &str = "loo_pointwise.csv";

pub fn write_atomic(path: &Path, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let io_err = |e: std::io::Error| CliError::input(format!("{}: {e}", path.display()));
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        f(&mut w)?;
        w.flush().map_err(io_err)?;
    }
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, |w| w.write_all(text.as_bytes()).map_err(|e| CliError::input(format!("{}: {e}", path.display()))))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    write_text(path, &(text + "\n"))
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

pub fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

/// Read a data file; with `midpoint`, interval-censored events are replaced by exact
/// events at the interval midpoint.
pub fn read_data(path: &Path, model: &ModelSpec, midpoint: bool) -> Result<Vec<SubjectRecord>> {
    let data = read_records(open(path)?, model).context(path.display())?;
    Ok(if midpoint { midpoint_events(&data) } else { data })
}

/// SHA-256 of the canonical CSV form of `data`.
pub fn data_digest(model: &ModelSpec, data: &[SubjectRecord]) -> Result<String> {
    let mut buf = Vec::new();
    write_records(&mut buf, model, data)?;
    Ok(format!("{:x}", Sha256::digest(&buf)))
}

/// Everything needed to interpret `draws.csv` later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitMeta {
    pub model: ModelSpec,
    pub priors: PriorSpec,
    pub sampler: SamplerConfig,
    pub midpoint: bool,
    pub subjects: usize,
    pub data_sha256: String,
}

pub struct Fit {
    pub meta: FitMeta,
    pub draws: PosteriorDraws,
}

impl Fit {
    pub fn load(dir: &Path) -> Result<Self> {
        let meta_path = dir.join(FIT_META);
        let draws_path = dir.join(DRAWS);
        for p in [&meta_path, &draws_path] {
            if !p.is_file() {
                return Err(CliError::input(format!("{}: missing fit output (run `qaft fit` first)", p.display())));
            }
        }
        let meta: FitMeta =
            serde_json::from_reader(open(&meta_path)?).map_err(|e| CliError::input(format!("{}: {e}", meta_path.display())))?;
        let draws = PosteriorDraws::read_csv(open(&draws_path)?).context(draws_path.display())?;
        if draws.names != meta.model.param_names() {
            return Err(CliError::input(format!("{}: columns do not match the model in {FIT_META}", draws_path.display())));
        }
        Ok(Self { meta, draws })
    }

    /// Read `path` the way the fitted data were read.
    pub fn read_data(&self, path: &Path) -> Result<Vec<SubjectRecord>> {
        read_data(path, &self.meta.model, self.meta.midpoint)
    }

    /// Fail unless `data` is the data set this fit was run on.
    pub fn check_same_data(&self, data: &[SubjectRecord]) -> Result<()> {
        if data.len() != self.meta.subjects {
            return Err(CliError::input(format!("data has {} subjects but the fit used {}", data.len(), self.meta.subjects)));
        }
        if data_digest(&self.meta.model, data)? != self.meta.data_sha256 {
            return Err(CliError::input("data differ from the data the fit was run on"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub median: f64,
    pub lo95: f64,
    pub hi95: f64,
    pub rhat: f64,
    pub ess: f64,
}

/// Posterior medians and 95% intervals with convergence diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub chains: usize,
    pub draws: usize,
    pub divergent: usize,
    pub step_size: Vec<f64>,
    pub parameters: Vec<ParamSummary>,
}

impl FitSummary {
    pub fn new(draws: &PosteriorDraws) -> Self {
        let parameters = draws
            .names
            .iter()
            .enumerate()
            .map(|(j, name)| {
                let s = summarize(&draws.column(j));
                ParamSummary {
                    name: name.clone(),
                    mean: s.mean,
                    median: s.median,
                    lo95: s.lo95,
                    hi95: s.hi95,
                    rhat: rhat(draws, j).unwrap_or(f64::NAN),
                    ess: ess_of(draws, j),
                }
            })
            .collect();
        Self { chains: draws.chains, draws: draws.len(), divergent: draws.n_divergent(), step_size: draws.step_size.clone(), parameters }
    }

    pub fn max_rhat(&self) -> f64 {
        self.parameters.iter().map(|p| p.rhat).fold(f64::NAN, f64::max)
    }

    pub fn min_ess(&self) -> f64 {
        self.parameters.iter().map(|p| p.ess).fold(f64::NAN, f64::min)
    }

    pub fn diagnostics_csv(&self) -> String {
        let mut out = String::from("parameter,rhat,ess\n");
        for p in &self.parameters {
            out.push_str(&format!("{},{},{}\n", p.name, format_float(p.rhat), format_float(p.ess)));
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(SUMMARY), self)?;
        write_text(&dir.join(DIAGNOSTICS), &self.diagnostics_csv())
    }
}

/// Sidecar path for the true parameters of a simulated data file.
pub fn truth_path(data: &Path) -> PathBuf {
    data.with_extension("truth.json")
}

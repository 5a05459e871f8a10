//! Survival data CSV: columns `y_l, y_u, delta, trunc`, one column per covariate,
//! and `tx_time` for time-varying models. An empty or `inf` `y_u` (or `tx_time`)
//! means right censoring (or never switching).

use crate::error::{Error, Result};
use crate::likelihood::SubjectRecord;
use crate::model::ModelSpec;
use crate::sampler::format_float;
use std::io::{Read, Write};

pub const TX_COLUMN: &str = "tx_time";

fn csv_err(e: csv::Error) -> Error {
    Error::input(format!("CSV: {e}"))
}

fn parse_time(s: &str) -> Option<f64> {
    let s = s.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinity") {
        Some(f64::INFINITY)
    } else {
        s.parse().ok()
    }
}

/// Read and validate records for `model`; errors name the 1-based data row.
pub fn read_records<R: Read>(r: R, model: &ModelSpec) -> Result<Vec<SubjectRecord>> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let header: Vec<String> = rd.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let col = |name: &str| header.iter().position(|h| h == name).ok_or_else(|| Error::input(format!("data file has no '{name}' column")));
    let (yl, yu, dl, tr) = (col("y_l")?, col("y_u")?, col("delta")?, col("trunc")?);
    let covs = model.covariates.iter().map(|c| col(c)).collect::<Result<Vec<_>>>()?;
    let tx = if model.has_time_varying() { Some(col(TX_COLUMN)?) } else { None };
    let mut out = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(csv_err)?;
        let bad = |what: &str, v: &str| Error::input(format!("data row {row}: invalid {what} '{v}'"));
        let num = |j: usize, what: &str| rec[j].parse::<f64>().map_err(|_| bad(what, &rec[j]));
        let delta = match &rec[dl] {
            "1" | "true" => true,
            "0" | "false" => false,
            v => return Err(bad("delta", v)),
        };
        let y_l = num(yl, "y_l")?;
        let mut y_u = parse_time(&rec[yu]).ok_or_else(|| bad("y_u", &rec[yu]))?;
        if delta && y_u == f64::INFINITY && rec[yu].is_empty() {
            y_u = y_l;
        }
        let trunc = if rec[tr].is_empty() { 0.0 } else { num(tr, "trunc")? };
        let x = covs.iter().zip(&model.covariates).map(|(&j, name)| num(j, name)).collect::<Result<Vec<_>>>()?;
        let t_x = match tx {
            Some(j) => parse_time(&rec[j]).ok_or_else(|| bad(TX_COLUMN, &rec[j]))?,
            None => f64::INFINITY,
        };
        let r = SubjectRecord { y_l, y_u, delta, trunc, x, t_x };
        r.validate(model, row).map_err(|e| match e {
            Error::Input(m) => Error::Input(m.replacen("record", "data row", 1)),
            other => other,
        })?;
        out.push(r);
    }
    if out.is_empty() {
        return Err(Error::input("data file has no rows"));
    }
    Ok(out)
}

/// Write records with covariate columns named by `model`.
pub fn write_records<W: Write>(w: W, model: &ModelSpec, data: &[SubjectRecord]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header: Vec<String> = ["y_l", "y_u", "delta", "trunc"].iter().map(|s| s.to_string()).collect();
    header.extend(model.covariates.iter().cloned());
    if model.has_time_varying() {
        header.push(TX_COLUMN.into());
    }
    wr.write_record(&header).map_err(csv_err)?;
    for r in data {
        let mut row = vec![format_float(r.y_l), format_float(r.y_u), u8::from(r.delta).to_string(), format_float(r.trunc)];
        row.extend(r.x.iter().map(|v| format_float(*v)));
        if model.has_time_varying() {
            row.push(format_float(r.t_x));
        }
        wr.write_record(&row).map_err(csv_err)?;
    }
    wr.flush().map_err(|e| Error::input(e.to_string()))?;
    Ok(())
}

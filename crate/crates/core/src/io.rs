//! Observation files, solution records and trace output.
//!
//! CSV observation files hold one observation per row, so a file with `p`
//! rows and `n` columns becomes the `n × p` matrix `V`. A header row is
//! allowed; it is recognised by containing a field that is not a number.
//!
//! The binary layout is little-endian:
//!
//! ```text
//! offset  size     field
//! 0       4        magic "MOMV"
//! 4       4        u32 version = 1
//! 8       8        u64 n
//! 16      8        u64 p
//! 24      8·n·p    f64 entries, observation after observation
//! ```
//!
//! Neither format stores weights; observations read back are uniformly weighted.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ShapeBuilder};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observations::ObservationSet;
use crate::optim::{MultistartReport, RunReport, Termination, TracePoint};
use crate::scalar::Scalar;

pub const BINARY_MAGIC: &[u8; 4] = b"MOMV";
pub const BINARY_VERSION: u32 = 1;
const BINARY_HEADER_LEN: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObservationFormat {
    Csv,
    Binary,
}

impl ObservationFormat {
    /// `.csv` is CSV; `.bin` and `.momv` are binary.
    pub fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "csv" => Some(Self::Csv),
            "bin" | "momv" => Some(Self::Binary),
            _ => None,
        }
    }
}

impl std::str::FromStr for ObservationFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "bin" | "binary" | "momv" => Ok(Self::Binary),
            other => Err(Error::arg(format!("unknown observation format '{other}'"))),
        }
    }
}

fn resolve_format(path: &Path, format: Option<ObservationFormat>) -> Result<ObservationFormat> {
    format.or_else(|| ObservationFormat::from_path(path)).ok_or_else(|| {
        Error::arg(format!(
            "cannot infer the format of {}; name it .csv or .bin, or pass the format",
            path.display()
        ))
    })
}

/// Reads observations with uniform weights. `format` defaults to the file extension.
pub fn read_observations<T: Scalar>(path: &Path, format: Option<ObservationFormat>) -> Result<ObservationSet<T>> {
    let file = File::open(path)?;
    match resolve_format(path, format)? {
        ObservationFormat::Csv => parse_csv(BufReader::new(file)),
        ObservationFormat::Binary => parse_binary(BufReader::new(file)),
    }
}

/// Writes the observation matrix. Weights are not stored, so non-uniform sets are refused.
pub fn write_observations<T: Scalar>(path: &Path, obs: &ObservationSet<T>, format: Option<ObservationFormat>) -> Result<()> {
    if !obs.is_uniform() {
        return Err(Error::arg("observation files carry no weights; only uniform sets can be written"));
    }
    let format = resolve_format(path, format)?;
    let mut out = BufWriter::new(File::create(path)?);
    match format {
        ObservationFormat::Csv => write_csv(&mut out, obs)?,
        ObservationFormat::Binary => write_binary(&mut out, obs)?,
    }
    out.flush()?;
    Ok(())
}

pub fn parse_csv<T: Scalar, R: Read>(reader: R) -> Result<ObservationSet<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut values: Vec<f64> = Vec::new();
    let mut width = None;
    let mut rows = 0usize;
    for (i, record) in rdr.records().enumerate() {
        let line = i + 1;
        let record = record.map_err(|e| Error::parse(format!("row {line}"), e.to_string()))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: Vec<Option<f64>> = record.iter().map(|s| s.parse::<f64>().ok()).collect();
        if parsed.iter().any(Option::is_none) {
            if i == 0 {
                continue;
            }
            let col = parsed.iter().position(Option::is_none).unwrap();
            return Err(Error::parse(
                format!("row {line}, column {}", col + 1),
                format!("'{}' is not a number", &record[col]),
            ));
        }
        match width {
            None => width = Some(parsed.len()),
            Some(w) if w != parsed.len() => {
                return Err(Error::parse(
                    format!("row {line}"),
                    format!("expected {w} fields, found {}", parsed.len()),
                ));
            }
            _ => {}
        }
        if let Some(col) = parsed.iter().position(|v| !v.unwrap().is_finite()) {
            return Err(Error::Validation(format!(
                "row {line}, column {}: non-finite value {}",
                col + 1,
                &record[col]
            )));
        }
        values.extend(parsed.into_iter().map(Option::unwrap));
        rows += 1;
    }
    let Some(n) = width else {
        return Err(Error::parse("row 1", "no observations"));
    };
    // Row-major p × n is column-major n × p.
    let data = Array2::from_shape_vec((n, rows).f(), values.into_iter().map(T::lit).collect())
        .expect("every row has n fields");
    ObservationSet::uniform(data.as_standard_layout().into_owned())
}

pub fn write_csv<T: Scalar, W: Write>(out: W, obs: &ObservationSet<T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for col in obs.data().columns() {
        w.write_record(col.iter().map(|v| format!("{}", v.to_f64_lossy())))
            .map_err(|e| Error::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn parse_binary<T: Scalar, R: Read>(mut reader: R) -> Result<ObservationSet<T>> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    let at = |offset: usize| format!("byte {offset}");
    if bytes.len() < BINARY_HEADER_LEN {
        return Err(Error::parse(
            at(bytes.len()),
            format!("file ends inside the {BINARY_HEADER_LEN}-byte header"),
        ));
    }
    if &bytes[..4] != BINARY_MAGIC {
        return Err(Error::parse(at(0), "missing MOMV magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != BINARY_VERSION {
        return Err(Error::parse(at(4), format!("unsupported version {version}")));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let p = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    if n == 0 || p == 0 {
        return Err(Error::parse(at(8), format!("empty shape n={n} p={p}")));
    }
    let expected = (n as u128) * (p as u128) * 8 + BINARY_HEADER_LEN as u128;
    if (bytes.len() as u128) < expected {
        let whole = (bytes.len() - BINARY_HEADER_LEN) / 8 * 8 + BINARY_HEADER_LEN;
        return Err(Error::parse(
            at(whole),
            format!("truncated data: {n}×{p} entries need {expected} bytes, file has {}", bytes.len()),
        ));
    }
    if (bytes.len() as u128) > expected {
        return Err(Error::parse(at(expected as usize), "trailing bytes after the data"));
    }
    let (n, p) = (n as usize, p as usize);
    let mut values = Vec::with_capacity(n * p);
    for (k, chunk) in bytes[BINARY_HEADER_LEN..].chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::Validation(format!(
                "observation {}, coordinate {} (byte {}): non-finite value {v}",
                k / n,
                k % n,
                BINARY_HEADER_LEN + 8 * k
            )));
        }
        values.push(T::lit(v));
    }
    let data = Array2::from_shape_vec((n, p).f(), values).expect("length checked above");
    ObservationSet::uniform(data.as_standard_layout().into_owned())
}

pub fn write_binary<T: Scalar, W: Write>(mut out: W, obs: &ObservationSet<T>) -> Result<()> {
    out.write_all(BINARY_MAGIC)?;
    out.write_all(&BINARY_VERSION.to_le_bytes())?;
    out.write_all(&(obs.dim() as u64).to_le_bytes())?;
    out.write_all(&(obs.len() as u64).to_le_bytes())?;
    for col in obs.data().columns() {
        for v in col {
            out.write_all(&v.to_f64_lossy().to_le_bytes())?;
        }
    }
    Ok(())
}

/// Outcome of one run inside a multistart job, without its variables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_index: usize,
    /// `None` when the run failed.
    pub f: Option<f64>,
    pub grad_inf_norm: Option<f64>,
    pub evaluations: Option<usize>,
    pub iterations: Option<usize>,
    pub reason: Option<Termination>,
    pub wall_time: Option<f64>,
    pub error: Option<String>,
}

/// Serialized best solution of a decomposition job.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub version: String,
    pub order: usize,
    pub dim: usize,
    pub observations: usize,
    pub rank: usize,
    pub method: String,
    pub weights: Vec<f64>,
    /// Always `"row-major"`: `factors[i * rank + j] = A[i, j]`.
    pub factor_layout: String,
    pub factors: Vec<f64>,
    /// Shifted objective at the solution.
    pub f: f64,
    /// Constant added to the objective (`0` or `‖X‖²`).
    pub alpha: f64,
    pub grad_inf_norm: f64,
    pub evaluations: usize,
    pub iterations: usize,
    pub reason: Termination,
    pub seed: u64,
    pub best_run: usize,
    pub wall_time: f64,
    pub total_time: f64,
    pub runs: Vec<RunSummary>,
}

pub const ROW_MAJOR: &str = "row-major";

impl SolutionRecord {
    pub fn from_report<T: Scalar>(
        report: &MultistartReport<T>,
        order: usize,
        observations: usize,
        alpha: f64,
        method: &str,
    ) -> Self {
        let best: &RunReport<T> = report.best();
        let (dim, rank) = best.factors.dim();
        Self {
            version: crate::VERSION.to_string(),
            order,
            dim,
            observations,
            rank,
            method: method.to_string(),
            weights: best.weights.iter().map(|v| v.to_f64_lossy()).collect(),
            factor_layout: ROW_MAJOR.to_string(),
            factors: best.factors.iter().map(|v| v.to_f64_lossy()).collect(),
            f: best.f.to_f64_lossy(),
            alpha,
            grad_inf_norm: best.grad_inf_norm.to_f64_lossy(),
            evaluations: best.evaluations,
            iterations: best.iterations,
            reason: best.reason,
            seed: best.seed,
            best_run: report.best_index,
            wall_time: best.wall_time,
            total_time: report.total_time(),
            runs: report
                .runs
                .iter()
                .enumerate()
                .map(|(i, r)| match r {
                    Ok(r) => RunSummary {
                        run_index: i,
                        f: Some(r.f.to_f64_lossy()),
                        grad_inf_norm: Some(r.grad_inf_norm.to_f64_lossy()),
                        evaluations: Some(r.evaluations),
                        iterations: Some(r.iterations),
                        reason: Some(r.reason),
                        wall_time: Some(r.wall_time),
                        error: None,
                    },
                    Err(e) => RunSummary {
                        run_index: i,
                        f: None,
                        grad_inf_norm: None,
                        evaluations: None,
                        iterations: None,
                        reason: None,
                        wall_time: None,
                        error: Some(e.clone()),
                    },
                })
                .collect(),
        }
    }

    pub fn weights(&self) -> Array1<f64> {
        Array1::from(self.weights.clone())
    }

    pub fn factors(&self) -> Result<Array2<f64>> {
        if self.factor_layout != ROW_MAJOR {
            return Err(Error::parse("factor_layout", format!("unsupported layout '{}'", self.factor_layout)));
        }
        Array2::from_shape_vec((self.dim, self.rank), self.factors.clone())
            .map_err(|_| Error::parse("factors", format!("expected {}×{} entries", self.dim, self.rank)))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Per-run traces as CSV with columns `run,iteration,f,time`, where
/// `iteration` counts function/gradient evaluations.
pub fn write_traces<T: Scalar, W: Write>(out: W, report: &MultistartReport<T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["run", "iteration", "f", "time"]).map_err(csv_err)?;
    for run in report.successful() {
        for TracePoint { evaluation, f, time } in &run.trace {
            w.write_record([run.run_index.to_string(), evaluation.to_string(), f.to_string(), time.to_string()])
                .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.into())
}

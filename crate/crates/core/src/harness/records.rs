//! Experiment records and curve rows, with CSV and JSON emission.
//!
//! CSV columns are fixed per row type (see [`ExperimentRecord::COLUMNS`] and
//! [`CurveRow::COLUMNS`]). Floats are written as `{:.16e}` (17 significant
//! digits, lossless); absent values are empty cells; lists are `;`-joined.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    /// Format implied by a file extension, CSV unless it ends in `.json`.
    pub fn from_path(path: &Path) -> OutputFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => OutputFormat::Json,
            _ => OutputFormat::Csv,
        }
    }
}

/// A row type with a fixed CSV layout.
pub trait CsvRow: Sized {
    const COLUMNS: &'static [&'static str];
    fn to_fields(&self) -> Vec<String>;
    fn from_fields(fields: &[&str]) -> std::result::Result<Self, String>;
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

fn fmt_opt_f64(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn parse<T: FromStr>(s: &str, col: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|_| format!("column {col}: cannot parse {s:?}"))
}

fn parse_opt<T: FromStr>(s: &str, col: &str) -> std::result::Result<Option<T>, String> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse(s, col).map(Some)
    }
}

/// One grid point of an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub config_hash: String,
    /// Unique key of the grid point within the config.
    pub point: String,
    pub task: String,
    pub k: usize,
    pub m: usize,
    pub architecture: String,
    pub init: String,
    /// Seeds the metrics are averaged over.
    pub seeds: Vec<u64>,
    pub n_train: Option<u64>,
    pub train_loss: Option<f64>,
    pub test_loss: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub similarity: Option<f64>,
    pub sample_complexity: Option<u64>,
    pub search_c: Option<f64>,
    pub search_l: Option<f64>,
    pub search_r: Option<f64>,
    pub search_exceeded: Option<bool>,
    pub status: String,
    pub wall_time_s: f64,
}

impl CsvRow for ExperimentRecord {
    const COLUMNS: &'static [&'static str] = &[
        "config_hash",
        "point",
        "task",
        "k",
        "m",
        "architecture",
        "init",
        "seeds",
        "n_train",
        "train_loss",
        "test_loss",
        "test_accuracy",
        "similarity",
        "sample_complexity",
        "search_c",
        "search_l",
        "search_r",
        "search_exceeded",
        "status",
        "wall_time_s",
    ];

    fn to_fields(&self) -> Vec<String> {
        vec![
            self.config_hash.clone(),
            self.point.clone(),
            self.task.clone(),
            self.k.to_string(),
            self.m.to_string(),
            self.architecture.clone(),
            self.init.clone(),
            self.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(";"),
            fmt_opt(&self.n_train),
            fmt_opt_f64(self.train_loss),
            fmt_opt_f64(self.test_loss),
            fmt_opt_f64(self.test_accuracy),
            fmt_opt_f64(self.similarity),
            fmt_opt(&self.sample_complexity),
            fmt_opt_f64(self.search_c),
            fmt_opt_f64(self.search_l),
            fmt_opt_f64(self.search_r),
            fmt_opt(&self.search_exceeded),
            self.status.clone(),
            fmt_f64(self.wall_time_s),
        ]
    }

    fn from_fields(f: &[&str]) -> std::result::Result<Self, String> {
        let c = Self::COLUMNS;
        let seeds = if f[7].is_empty() {
            Vec::new()
        } else {
            f[7].split(';').map(|s| parse(s, c[7])).collect::<std::result::Result<_, _>>()?
        };
        Ok(ExperimentRecord {
            config_hash: f[0].to_string(),
            point: f[1].to_string(),
            task: f[2].to_string(),
            k: parse(f[3], c[3])?,
            m: parse(f[4], c[4])?,
            architecture: f[5].to_string(),
            init: f[6].to_string(),
            seeds,
            n_train: parse_opt(f[8], c[8])?,
            train_loss: parse_opt(f[9], c[9])?,
            test_loss: parse_opt(f[10], c[10])?,
            test_accuracy: parse_opt(f[11], c[11])?,
            similarity: parse_opt(f[12], c[12])?,
            sample_complexity: parse_opt(f[13], c[13])?,
            search_c: parse_opt(f[14], c[14])?,
            search_l: parse_opt(f[15], c[15])?,
            search_r: parse_opt(f[16], c[16])?,
            search_exceeded: parse_opt(f[17], c[17])?,
            status: f[18].to_string(),
            wall_time_s: parse(f[19], c[19])?,
        })
    }
}

/// A point on a train/test loss curve, shared by closed-form predictions
/// and simulations so both overlay directly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    /// `theory` or `simulation`.
    pub source: String,
    /// `monolithic` or `modular`.
    pub model: String,
    pub n: u64,
    pub p: f64,
    pub m: u32,
    pub d: u64,
    pub train: f64,
    pub test: f64,
    pub train_se: Option<f64>,
    pub test_se: Option<f64>,
}

impl CsvRow for CurveRow {
    const COLUMNS: &'static [&'static str] =
        &["source", "model", "n", "p", "m", "d", "train", "test", "train_se", "test_se"];

    fn to_fields(&self) -> Vec<String> {
        vec![
            self.source.clone(),
            self.model.clone(),
            self.n.to_string(),
            fmt_f64(self.p),
            self.m.to_string(),
            self.d.to_string(),
            fmt_f64(self.train),
            fmt_f64(self.test),
            fmt_opt_f64(self.train_se),
            fmt_opt_f64(self.test_se),
        ]
    }

    fn from_fields(f: &[&str]) -> std::result::Result<Self, String> {
        let c = Self::COLUMNS;
        Ok(CurveRow {
            source: f[0].to_string(),
            model: f[1].to_string(),
            n: parse(f[2], c[2])?,
            p: parse(f[3], c[3])?,
            m: parse(f[4], c[4])?,
            d: parse(f[5], c[5])?,
            train: parse(f[6], c[6])?,
            test: parse(f[7], c[7])?,
            train_se: parse_opt(f[8], c[8])?,
            test_se: parse_opt(f[9], c[9])?,
        })
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        _ => Ok(()),
    }
}

pub fn write_csv<T: CsvRow, W: Write>(rows: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(T::COLUMNS)?;
    for r in rows {
        w.write_record(r.to_fields())?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Writes `rows` to `path` as CSV or a JSON array.
pub fn emit_results<T: CsvRow + Serialize>(rows: &[T], path: &Path, format: OutputFormat) -> Result<()> {
    ensure_parent(path)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    match format {
        OutputFormat::Csv => write_csv(rows, file).map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        }),
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&file, rows)?;
            Ok(())
        }
    }
}

pub fn read_results<T: CsvRow + DeserializeOwned>(path: &Path, format: OutputFormat) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    match format {
        OutputFormat::Json => Ok(serde_json::from_reader(BufReader::new(file))?),
        OutputFormat::Csv => {
            let mut r = csv::Reader::from_reader(file);
            let header = r.headers()?.clone();
            if header.iter().collect::<Vec<_>>() != T::COLUMNS {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    msg: format!("unexpected CSV header {header:?}"),
                });
            }
            let mut out = Vec::new();
            for (i, rec) in r.records().enumerate() {
                let rec = rec?;
                let fields: Vec<&str> = rec.iter().collect();
                out.push(T::from_fields(&fields).map_err(|msg| Error::Format {
                    path: path.to_path_buf(),
                    msg: format!("row {}: {msg}", i + 1),
                })?);
            }
            Ok(out)
        }
    }
}

/// Appends one JSON line to a record log.
pub fn append_jsonl<T: Serialize>(path: &Path, row: &T) -> Result<()> {
    ensure_parent(path)?;
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut line = serde_json::to_vec(row)?;
    line.push(b'\n');
    f.write_all(&line).map_err(|e| Error::io(path, e))
}

/// Reads a record log; a missing file is an empty log. A truncated final
/// line (interrupted write) is ignored.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(v) => out.push(v),
            Err(_) if i + 1 == lines.len() => break,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(i: u64) -> ExperimentRecord {
        ExperimentRecord {
            config_hash: "abc".into(),
            point: format!("p{i}"),
            task: "sine-linear".into(),
            k: 3,
            m: 3,
            architecture: "modular, with comma".into(),
            init: "kernel".into(),
            seeds: vec![i, i + 1],
            n_train: Some(1 << 12),
            train_loss: Some(0.1 + 0.2),
            test_loss: Some(1.0 / 3.0),
            test_accuracy: None,
            similarity: Some(f64::MIN_POSITIVE),
            sample_complexity: Some(11585),
            search_c: Some(13.5),
            search_l: Some(13.0),
            search_r: None,
            search_exceeded: Some(false),
            status: "ok".into(),
            wall_time_s: 1.25,
        }
    }

    #[test]
    fn csv_and_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![record(0), record(7)];
        for (name, fmt) in [("r.csv", OutputFormat::Csv), ("r.json", OutputFormat::Json)] {
            let path = dir.path().join(name);
            assert_eq!(OutputFormat::from_path(&path), fmt);
            emit_results(&rows, &path, fmt).unwrap();
            let back: Vec<ExperimentRecord> = read_results(&path, fmt).unwrap();
            assert_eq!(back, rows);
        }
    }

    #[test]
    fn empty_csv_has_only_header() {
        let mut buf = Vec::new();
        write_csv::<CurveRow, _>(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{}\n", CurveRow::COLUMNS.join(",")));
    }

    #[test]
    fn floats_use_seventeen_significant_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        let x = 0.1 + 0.2;
        assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
    }

    #[test]
    fn jsonl_tolerates_truncated_tail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        assert!(read_jsonl::<ExperimentRecord>(&path).unwrap().is_empty());
        append_jsonl(&path, &record(1)).unwrap();
        append_jsonl(&path, &record(2)).unwrap();
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"config_hash\":").unwrap();
        let back: Vec<ExperimentRecord> = read_jsonl(&path).unwrap();
        assert_eq!(back, vec![record(1), record(2)]);
    }
}

//! Result rows and their file formats.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::spec::{Algorithm, Scenario};
use crate::SimError;

/// One solve: an algorithm on one realization at one sweep point.
/// Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub scenario: Scenario,
    pub algorithm: Algorithm,
    pub nt: usize,
    pub nr_or_nu: usize,
    pub ns: usize,
    pub na: usize,
    pub snr_db: f64,
    pub realization_index: usize,
    pub seed: u64,
    /// bits/s/Hz; NaN when the solver failed.
    pub sum_rate: f64,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time_ms: f64,
}

pub const CSV_HEADER: [&str; 13] = [
    "scenario",
    "algorithm",
    "nt",
    "nr_or_nu",
    "ns",
    "na",
    "snr_db",
    "realization_index",
    "seed",
    "sum_rate",
    "iterations",
    "converged",
    "wall_time_ms",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordFormat {
    Csv,
    Json,
}

impl RecordFormat {
    /// `.json` selects JSON, anything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => RecordFormat::Json,
            _ => RecordFormat::Csv,
        }
    }
}

pub fn write_csv<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<(), SimError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_records(records: &[ResultRecord], path: &Path, format: RecordFormat) -> Result<(), SimError> {
    let mut out = BufWriter::new(File::create(path)?);
    match format {
        RecordFormat::Csv => {
            if records.is_empty() {
                writeln!(out, "{}", CSV_HEADER.join(","))?;
            } else {
                write_csv(records, &mut out)?;
            }
        }
        RecordFormat::Json => {
            serde_json::to_writer_pretty(&mut out, records)?;
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<ResultRecord>, SimError> {
    match RecordFormat::from_path(path) {
        RecordFormat::Csv => {
            let mut r = csv::Reader::from_path(path)?;
            Ok(r.deserialize().collect::<Result<_, _>>()?)
        }
        RecordFormat::Json => {
            // failed solves are written as null
            let raw: Vec<serde_json::Value> = serde_json::from_reader(File::open(path)?)?;
            raw.into_iter()
                .map(|mut v| {
                    if v.get("sum_rate").is_some_and(|x| x.is_null()) {
                        v["sum_rate"] = serde_json::Value::from(0.0);
                        let mut rec: ResultRecord = serde_json::from_value(v)?;
                        rec.sum_rate = f64::NAN;
                        Ok(rec)
                    } else {
                        Ok(serde_json::from_value(v)?)
                    }
                })
                .collect()
        }
    }
}

/// Mean sum rate of one algorithm at one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub scenario: Scenario,
    pub algorithm: Algorithm,
    pub nt: usize,
    pub nr_or_nu: usize,
    pub ns: usize,
    pub na: usize,
    pub snr_db: f64,
    pub realizations: usize,
    pub failures: usize,
    pub mean_sum_rate: f64,
}

/// Groups records by algorithm and sweep point, in first-seen order. The mean
/// is a plain left-to-right sum divided by the count, NaN if any solve failed.
pub fn summarize(records: &[ResultRecord]) -> Vec<SummaryRow> {
    let mut rows: Vec<(SummaryRow, f64)> = Vec::new();
    for r in records {
        let key = |s: &SummaryRow| {
            s.algorithm == r.algorithm
                && s.nt == r.nt
                && s.nr_or_nu == r.nr_or_nu
                && s.ns == r.ns
                && s.na == r.na
                && s.snr_db.to_bits() == r.snr_db.to_bits()
        };
        match rows.iter_mut().find(|(s, _)| key(s)) {
            Some((s, sum)) => {
                s.realizations += 1;
                s.failures += usize::from(r.sum_rate.is_nan());
                *sum += r.sum_rate;
            }
            None => rows.push((
                SummaryRow {
                    scenario: r.scenario,
                    algorithm: r.algorithm,
                    nt: r.nt,
                    nr_or_nu: r.nr_or_nu,
                    ns: r.ns,
                    na: r.na,
                    snr_db: r.snr_db,
                    realizations: 1,
                    failures: usize::from(r.sum_rate.is_nan()),
                    mean_sum_rate: 0.0,
                },
                r.sum_rate,
            )),
        }
    }
    rows.into_iter()
        .map(|(mut s, sum)| {
            s.mean_sum_rate = sum / s.realizations as f64;
            s
        })
        .collect()
}

pub fn write_summary(records: &[ResultRecord], path: &Path) -> Result<(), SimError> {
    let mut out = BufWriter::new(File::create(path)?);
    write_csv(&summarize(records), &mut out)?;
    out.flush()?;
    Ok(())
}

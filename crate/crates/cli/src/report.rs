//! CSV and JSON emission.
//!
//! CSV header, in order:
//! `protocol,loss_db,mu1,mu2,pZ_alice,pZ_bob,qber,phi_Z,skr_bps,secret_fraction`.
//! JSON is an array of objects with the same keys.

use crate::config::OutputFormat;
use crate::sweep::ReportTable;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use thiserror::Error;
use timebin_qkd::channel::Protocol;
use timebin_qkd::session::KeyRateReport;

pub const CSV_HEADER: [&str; 10] = [
    "protocol",
    "loss_db",
    "mu1",
    "mu2",
    "pZ_alice",
    "pZ_bob",
    "qber",
    "phi_Z",
    "skr_bps",
    "secret_fraction",
];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub protocol: Protocol,
    pub loss_db: f64,
    pub mu1: f64,
    pub mu2: f64,
    #[serde(rename = "pZ_alice")]
    pub p_z_alice: f64,
    #[serde(rename = "pZ_bob")]
    pub p_z_bob: f64,
    pub qber: f64,
    #[serde(rename = "phi_Z")]
    pub phi_z: f64,
    pub skr_bps: f64,
    pub secret_fraction: f64,
}

impl From<&KeyRateReport> for ReportRow {
    fn from(r: &KeyRateReport) -> Self {
        Self {
            protocol: r.protocol,
            loss_db: r.channel_loss_db,
            mu1: r.mu1,
            mu2: r.mu2,
            p_z_alice: r.p_z_alice,
            p_z_bob: r.p_z_bob,
            qber: r.qber_z,
            phi_z: r.phi_z_upper,
            skr_bps: r.skr_bits_per_second,
            secret_fraction: r.secret_fraction,
        }
    }
}

pub fn rows(table: &ReportTable) -> Vec<ReportRow> {
    table.reports.iter().map(ReportRow::from).collect()
}

/// Serializes any row type in the requested format.
pub fn render<T: Serialize>(rows: &[T], format: OutputFormat) -> Result<Vec<u8>, ReportError> {
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in rows {
                w.serialize(r)?;
            }
            w.flush().map_err(|source| ReportError::Io {
                path: "<buffer>".into(),
                source,
            })?;
            Ok(w.into_inner()
                .map_err(|e| e.into_error())
                .map_err(|source| ReportError::Io {
                    path: "<buffer>".into(),
                    source,
                })?)
        }
        OutputFormat::Json => {
            let mut out = serde_json::to_vec_pretty(rows)?;
            out.push(b'\n');
            Ok(out)
        }
    }
}

/// Writes to `path`, or to standard output when absent.
pub fn write_output(bytes: &[u8], path: Option<&Path>) -> Result<(), ReportError> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|source| ReportError::Io {
            path: p.display().to_string(),
            source,
        }),
        None => std::io::stdout()
            .lock()
            .write_all(bytes)
            .map_err(|source| ReportError::Io {
                path: "<stdout>".into(),
                source,
            }),
    }
}

pub fn emit_report(
    table: &ReportTable,
    format: OutputFormat,
    path: Option<&Path>,
) -> Result<(), ReportError> {
    write_output(&render(&rows(table), format)?, path)
}

pub fn parse_csv(bytes: &[u8]) -> Result<Vec<ReportRow>, ReportError> {
    let mut r = csv::Reader::from_reader(bytes);
    Ok(r.deserialize().collect::<Result<Vec<ReportRow>, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;
    use crate::sweep::run_sweep;

    #[test]
    fn default_run_has_eight_rows_and_round_trips() {
        let table = run_sweep(&ExperimentConfig::default());
        let bytes = render(&rows(&table), OutputFormat::Csv).unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
        assert_eq!(text.lines().count(), 9);
        assert_eq!(parse_csv(&bytes).unwrap(), rows(&table));

        let json: serde_json::Value =
            serde_json::from_slice(&render(&rows(&table), OutputFormat::Json).unwrap()).unwrap();
        let keys: Vec<_> = json[0].as_object().unwrap().keys().cloned().collect();
        let mut expect: Vec<_> = CSV_HEADER.iter().map(|s| s.to_string()).collect();
        expect.sort();
        let mut keys = keys;
        keys.sort();
        assert_eq!(keys, expect);
    }

    #[test]
    fn unwritable_path_fails() {
        let err = write_output(b"x", Some(Path::new("/nonexistent-dir/report.csv")));
        assert!(err.is_err());
    }
}

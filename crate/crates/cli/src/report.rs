//! Result rows and the two output formats.
//!
//! CSV is the interchange contract: fixed column set, one row per
//! (n, T, start type) cell, empty cells where a quantity was not computed
//! (absence is not zero). JSON carries the same rows plus the config echo,
//! spectral context and continuity diagnostics. Floats print through the
//! shortest round-trip formatter, so a fixed config yields byte-identical
//! files across runs.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::sweep::ExperimentConfig;

pub const CSV_COLUMNS: [&str; 13] = [
    "theorem",
    "regime",
    "r",
    "n",
    "rho",
    "T",
    "start_type",
    "exact",
    "limit",
    "mc",
    "mc_stderr",
    "abs_err",
    "rel_err",
];

/// One verification cell. `error` never reaches the CSV; failed cells show
/// up there as rows with empty value columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub theorem: u8,
    pub regime: String,
    pub r: f64,
    pub n: u32,
    pub rho: f64,
    #[serde(rename = "T")]
    pub t: f64,
    pub start_type: Option<usize>,
    pub exact: Option<f64>,
    pub limit: Option<f64>,
    pub mc: Option<f64>,
    pub mc_stderr: Option<f64>,
    pub abs_err: Option<f64>,
    pub rel_err: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Spectral quantities of the calibrated law at the largest n of the sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextEcho {
    pub n: u32,
    pub rho: f64,
    pub rho_mu: f64,
    pub q: f64,
    pub q_mu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_dot_u: Option<f64>,
}

/// Serializable mirror of the continuity probes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub name: String,
    pub computed: f64,
    pub expected: f64,
    pub rel_gap: f64,
    pub consistent: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: ExperimentConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<ContextEcho>,
    pub rows: Vec<Row>,
    pub diagnostics: Vec<Diagnostic>,
}

fn cell_f64(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => String::new(),
    }
}

pub fn csv_string(rows: &[Row]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS)?;
    for row in rows {
        w.write_record([
            row.theorem.to_string(),
            row.regime.clone(),
            format!("{}", row.r),
            row.n.to_string(),
            format!("{}", row.rho),
            format!("{}", row.t),
            row.start_type.map(|j| j.to_string()).unwrap_or_default(),
            cell_f64(row.exact),
            cell_f64(row.limit),
            cell_f64(row.mc),
            cell_f64(row.mc_stderr),
            cell_f64(row.abs_err),
            cell_f64(row.rel_err),
        ])?;
    }
    let bytes = w.into_inner().context("flushing csv buffer")?;
    Ok(String::from_utf8(bytes).expect("csv output is ascii"))
}

pub fn write_csv(path: &Path, rows: &[Row]) -> Result<()> {
    let body = csv_string(rows)?;
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

pub fn json_string(report: &Report) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)?)
}

pub fn write_json(path: &Path, report: &Report) -> Result<()> {
    let body = json_string(report)?;
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

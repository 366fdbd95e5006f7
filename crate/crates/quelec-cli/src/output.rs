//! Result persistence: one data file (CSV or JSON lines) per run plus a
//! structured summary document carrying the fit, latency ledger, seed and
//! config hash. Formatting is deterministic so identical (config, seed) runs
//! produce byte-identical files.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::json;
use sha2::{Digest, Sha256};

use crate::experiments::RunResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    JsonLines,
}

/// Run provenance recorded in every summary.
#[derive(Debug, Clone, serde::Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
}

impl Provenance {
    pub fn new(config_text: &str, seed: u64) -> Provenance {
        Provenance {
            config_hash: config_hash(config_text),
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

/// SHA-256 of the raw config document, hex-encoded.
pub fn config_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn format_value(v: f64) -> String {
    // Shortest round-trip float formatting; stable across runs.
    format!("{v}")
}

/// Render the sweep rows as CSV text.
pub fn to_csv(result: &RunResult) -> String {
    let mut out = String::new();
    out.push_str(&result.columns.join(","));
    out.push('\n');
    for row in &result.rows {
        let line: Vec<String> = row.iter().map(|&v| format_value(v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Render the sweep rows as JSON lines.
pub fn to_json_lines(result: &RunResult) -> String {
    let mut out = String::new();
    for row in &result.rows {
        let mut obj = serde_json::Map::new();
        for (col, &v) in result.columns.iter().zip(row) {
            obj.insert(col.clone(), json!(v));
        }
        out.push_str(&serde_json::Value::Object(obj).to_string());
        out.push('\n');
    }
    out
}

/// Summary document: provenance, fit, ledger snapshot, event timeline and
/// the per-kind extras.
pub fn summary_json(result: &RunResult, provenance: &Provenance) -> String {
    let doc = json!({
        "experiment": result.experiment,
        "provenance": provenance,
        "rows": result.rows.len(),
        "columns": result.columns,
        "fit": result.fit,
        "latency": result.latency,
        "events": result.events,
        "extras": result.extras,
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("serializable summary");
    text.push('\n');
    text
}

/// Persist data and summary; returns the written paths (data first).
pub fn write_outputs(
    result: &RunResult,
    provenance: &Provenance,
    out_dir: &Path,
    format: OutputFormat,
) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let (data_name, data_text) = match format {
        OutputFormat::Csv => (format!("{}.csv", result.experiment), to_csv(result)),
        OutputFormat::JsonLines => {
            (format!("{}.jsonl", result.experiment), to_json_lines(result))
        }
    };
    let data_path = out_dir.join(data_name);
    let summary_path = out_dir.join(format!("{}_summary.json", result.experiment));

    let mut data = std::fs::File::create(&data_path)?;
    data.write_all(data_text.as_bytes())?;
    let mut summary = std::fs::File::create(&summary_path)?;
    summary.write_all(summary_json(result, provenance).as_bytes())?;
    Ok(vec![data_path, summary_path])
}

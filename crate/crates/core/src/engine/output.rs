//! Run artifacts: metrics CSV, summary and model JSON, long-format reports.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::run::{RunResult, RunSummary};
use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Formats with at most 10 significant digits, shortest form.
pub fn fmt_sig(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let rounded: f64 = format!("{v:.9e}").parse().expect("valid float");
    rounded.to_string()
}

pub fn metrics_header(cfg: &RunConfig) -> Vec<String> {
    let mut h: Vec<String> =
        ["t", "sampled", "pi", "step_size", "cumulative_samples", "theta_norm"].iter().map(|s| s.to_string()).collect();
    h.extend(cfg.eval_losses.iter().map(|k| format!("loss_{}", k.name())));
    h
}

pub fn write_metrics_csv<W: Write>(out: W, cfg: &RunConfig, result: &RunResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(metrics_header(cfg)).map_err(csv_err)?;
    for r in &result.rows {
        let mut rec = vec![
            r.t.to_string(),
            u8::from(r.sampled).to_string(),
            fmt_sig(r.pi),
            fmt_sig(r.step_size),
            r.cumulative_samples.to_string(),
            fmt_sig(r.theta_norm),
        ];
        rec.extend(r.losses.iter().map(|v| fmt_sig(*v)));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SummaryFile {
    pub seed: u64,
    #[serde(flatten)]
    pub summary: RunSummary,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub final_theta: ModelParams,
    pub averaged_theta: ModelParams,
}

/// Writes `metrics.csv`, `summary.json` and `model.json` into `dir`.
pub fn write_run_outputs(dir: &Path, cfg: &RunConfig, result: &RunResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_metrics_csv(fs::File::create(dir.join("metrics.csv"))?, cfg, result)?;
    let summary = SummaryFile { seed: cfg.seed, summary: result.summary.clone() };
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    let model = ModelFile { final_theta: result.final_theta.clone(), averaged_theta: result.averaged_theta.clone() };
    fs::write(dir.join("model.json"), serde_json::to_string_pretty(&model)?)?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub t: usize,
    pub avg_progressive_loss: f64,
    pub cumulative_samples: usize,
}

/// Reads a metrics file and turns the chosen loss column (default
/// `loss_logistic`, else the first loss column) into prefix means.
pub fn report_rows(metrics: &Path, method: &str, loss_column: Option<&str>) -> Result<Vec<ReportRow>> {
    let parse_err = |line: usize, reason: String| Error::Parse { line, reason };
    let mut rdr = csv::Reader::from_path(metrics).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => parse_err(0, format!("{other:?}")),
    })?;
    let headers = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let loss_idx = match loss_column {
        Some(c) => find(c).ok_or_else(|| parse_err(1, format!("no column `{c}`")))?,
        None => find("loss_logistic")
            .or_else(|| headers.iter().position(|h| h.starts_with("loss_")))
            .ok_or_else(|| parse_err(1, "no loss column".into()))?,
    };
    let t_idx = find("t").ok_or_else(|| parse_err(1, "no `t` column".into()))?;
    let cs_idx = find("cumulative_samples").ok_or_else(|| parse_err(1, "no `cumulative_samples` column".into()))?;
    let mut rows = Vec::new();
    let mut total = 0.0;
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        let field = |i: usize| rec.get(i).ok_or_else(|| parse_err(line, "short row".into()));
        let t: usize = field(t_idx)?.parse().map_err(|e| parse_err(line, format!("t: {e}")))?;
        let loss: f64 = field(loss_idx)?.parse().map_err(|e| parse_err(line, format!("loss: {e}")))?;
        let cs: usize = field(cs_idx)?.parse().map_err(|e| parse_err(line, format!("cumulative_samples: {e}")))?;
        total += loss;
        rows.push(ReportRow {
            method: method.to_string(),
            t,
            avg_progressive_loss: total / (k + 1) as f64,
            cumulative_samples: cs,
        });
    }
    Ok(rows)
}

pub fn write_report<W: Write>(out: W, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "t", "avg_progressive_loss", "cumulative_samples"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([r.method.clone(), r.t.to_string(), fmt_sig(r.avg_progressive_loss), r.cumulative_samples.to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig_digits() {
        assert_eq!(fmt_sig(0.123456789012345), "0.123456789");
        assert_eq!(fmt_sig(0.98765432109876), "0.9876543211");
        assert_eq!(fmt_sig(1.0), "1");
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(2.5e-12), "0.0000000000025");
    }
}

use std::fs;
use std::path::Path;

use super::sweep::SweepResult;
use crate::Result;

pub const ROWS_HEADER: [&str; 14] = [
    "topology",
    "epsilon",
    "T",
    "trial",
    "agent",
    "emp_risk",
    "pop_risk",
    "pop_se",
    "gap",
    "bound",
    "eta_hat",
    "eta_se",
    "max_iterate_norm",
    "slem",
];

pub const SUMMARY_HEADER: [&str; 6] = ["topology", "epsilon", "T", "gap_mean", "gap_std", "bound_mean"];

/// 17 significant digits, scientific notation.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn optional(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

/// Writes `rows.csv` and `summary.csv` into `dir`, creating it if needed.
/// Absent stability values are empty fields.
pub fn emit_csv(result: &SweepResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;

    let mut rows = csv::Writer::from_path(dir.join("rows.csv"))?;
    rows.write_record(ROWS_HEADER)?;
    for r in &result.rows {
        rows.write_record([
            r.topology.token().to_string(),
            format_float(r.epsilon),
            r.iterations.to_string(),
            r.trial.to_string(),
            r.agent.to_string(),
            format_float(r.emp_risk),
            format_float(r.pop_risk),
            format_float(r.pop_se),
            format_float(r.gap),
            format_float(r.bound),
            optional(r.eta_hat),
            optional(r.eta_se),
            format_float(r.max_iterate_norm),
            format_float(r.slem),
        ])?;
    }
    rows.flush()?;

    let mut summary = csv::Writer::from_path(dir.join("summary.csv"))?;
    summary.write_record(SUMMARY_HEADER)?;
    for s in &result.summary {
        summary.write_record([
            s.topology.token().to_string(),
            format_float(s.epsilon),
            s.iterations.to_string(),
            format_float(s.gap_mean),
            format_float(s.gap_std),
            format_float(s.bound_mean),
        ])?;
    }
    summary.flush()?;
    Ok(())
}

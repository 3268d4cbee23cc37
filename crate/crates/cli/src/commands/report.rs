use std::fmt::Write;

use super::control::TransferSummary;
use crate::artifacts::Outputs;
use crate::config::ReportParams;
use crate::error::CliError;

pub const LADDER_HEADER: &str = "T,cost,endpoint_error,relative_error,baseline_cost";

pub fn run(p: &ReportParams, out: &mut Outputs) -> Result<(), CliError> {
    if p.runs.is_empty() {
        return Err(CliError::Config("report needs at least one run".into()));
    }
    let mut rows = Vec::with_capacity(p.runs.len());
    for run in &p.runs {
        let path = if run.is_dir() {
            run.join("transfer.json")
        } else {
            run.clone()
        };
        let data = out.read(&path)?;
        let s: TransferSummary = serde_json::from_slice(&data)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        rows.push(s);
    }
    rows.sort_by(|a, b| a.horizon.total_cmp(&b.horizon));
    let mut csv = format!("{LADDER_HEADER}\n");
    for r in &rows {
        writeln!(
            csv,
            "{:?},{:?},{:?},{:?},{:?}",
            r.horizon, r.cost, r.endpoint_error, r.relative_error, r.baseline_cost
        )
        .expect("write to string");
    }
    out.add(&p.out, csv.into_bytes())
}

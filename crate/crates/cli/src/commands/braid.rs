use rand::Rng;
use serde::{Deserialize, Serialize};
use shearlab::genflow::{
    braid_word, isotopy_invariants_equal, minimize_action, read_ensemble, write_ensemble,
    BraidRecord, CellGrid, DiscreteFlowProblem, Mode, TrajectoryEnsemble, Verdict,
};

use crate::artifacts::Outputs;
use crate::config::BraidParams;
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BraidSummary {
    #[serde(flatten)]
    pub record: BraidRecord,
    pub writhe: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<BraidRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
    /// Action of the solved ensemble, when one was solved.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<f64>,
}

fn ensemble(
    out: &mut Outputs,
    path: &std::path::Path,
    l: f64,
) -> Result<TrajectoryEnsemble, CliError> {
    Ok(read_ensemble(&out.read(path)?[..], l)?)
}

pub fn run(p: &BraidParams, rng: &mut impl Rng, out: &mut Outputs) -> Result<(), CliError> {
    let reference = match &p.reference {
        Some(path) => Some(braid_word(&ensemble(out, path, p.l)?)?),
        None => None,
    };
    let (record, action) = match (&p.input, &p.flow) {
        (Some(path), _) => (braid_word(&ensemble(out, path, p.l)?)?, None),
        (None, Some(f)) => {
            let grid = CellGrid::new(f.n1, f.n2, p.l)?;
            let mut problem =
                DiscreteFlowProblem::new(grid, f.endpoint.clone(), f.interior, f.horizon)?;
            if let Some(r) = &reference {
                problem = problem.with_reference(r.clone());
            }
            let mode = if f.exact {
                Mode::Exact
            } else {
                Mode::heuristic(rng.gen())
            };
            let found = minimize_action(&problem, mode)?;
            let mut csv = Vec::new();
            write_ensemble(&found.ensemble, &mut csv)?;
            out.add(&p.ensemble, csv)?;
            (braid_word(&found.ensemble)?, Some(found.action))
        }
        (None, None) => {
            return Err(CliError::Config(
                "braid needs --in or a flow problem in the config".into(),
            ))
        }
    };
    let verdict = match &reference {
        Some(r) => Some(isotopy_invariants_equal(&record, r)?),
        None => None,
    };
    let summary = BraidSummary {
        writhe: record.writhe(),
        record,
        reference,
        verdict,
        action,
    };
    out.add_json(&p.out, &summary)
}

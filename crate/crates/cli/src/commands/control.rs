use rand::Rng;
use serde::{Deserialize, Serialize};
use shearlab::control::{
    baseline_cost, baseline_ramp, collision_control, optimize_schedule, transposition_control,
    verify_transfer, write_schedule, ControlSetup, OptimizeOptions,
};
use shearlab::spectral::{DiagnosticsWriter, Grid};
use shearlab::Move;

use super::{profile_or_swap, read_profile};
use crate::artifacts::Outputs;
use crate::config::{ControlMode, ControlParams};
use crate::error::CliError;

/// Summary written beside every schedule; `report` reads these back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferSummary {
    pub mode: ControlMode,
    pub k: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub cost: f64,
    /// Closed-form cost of the straight ramp between the same endpoints.
    pub baseline_cost: f64,
    pub endpoint_error: f64,
    pub relative_error: f64,
    pub steps: usize,
    pub n_samples: usize,
    pub momentum_drift: f64,
    pub energy_drift: f64,
    pub admissibility_defect: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history: Option<Vec<f64>>,
}

pub fn run(p: &ControlParams, rng: &mut impl Rng, out: &mut Outputs) -> Result<(), CliError> {
    let u = profile_or_swap(out, p.profile.as_deref())?;
    let setup = ControlSetup {
        grid: Grid::new(p.n1, p.n2, p.l)?,
        width: p.mollify_width,
        gain: p.gain,
    };
    let target = |out: &mut Outputs| match &p.target {
        Some(path) => read_profile(out, path),
        None => Ok(u.apply(&Move::Transpose { k: p.k })?),
    };
    let (v, schedule, weights, history) = match p.mode {
        ControlMode::Ramp => {
            let v = target(out)?;
            let s = baseline_ramp(&u, &v, p.horizon, &setup)?;
            (v, s, None, None)
        }
        ControlMode::Transpose => {
            let s = transposition_control(&u, p.k, p.horizon, p.amplitude, &setup)?;
            (u.apply(&Move::Transpose { k: p.k })?, s, None, None)
        }
        ControlMode::Collide => {
            let s = collision_control(&u, p.k, p.horizon, p.amplitude, &setup)?;
            (u.apply(&Move::Collide { k: p.k })?, s, None, None)
        }
        ControlMode::Optimize => {
            let v = target(out)?;
            let opts = OptimizeOptions {
                amplitude: p.amplitude,
                basis_size: p.basis_size,
                penalty: p.penalty,
                seed: rng.gen(),
                max_sweeps: p.max_sweeps,
                ..OptimizeOptions::default()
            };
            let r = optimize_schedule(&u, &v, p.horizon, &opts, &setup)?;
            (v, r.schedule, Some(r.weights), Some(r.history))
        }
    };
    let report = verify_transfer(&u, &schedule, &v, &setup, p.stride)?;
    let (d0, d1) = (report.initial(), report.last());
    let summary = TransferSummary {
        mode: p.mode,
        k: p.k,
        horizon: report.horizon,
        cost: report.cost,
        baseline_cost: baseline_cost(&u, &v, setup.width, setup.grid.l),
        endpoint_error: report.endpoint_error,
        relative_error: report.relative_error(),
        steps: report.steps,
        n_samples: schedule.n_samples(),
        momentum_drift: d1.momentum - d0.momentum,
        energy_drift: d1.energy - d0.energy,
        admissibility_defect: schedule.admissibility_defect(),
        weights,
        history,
    };

    let mut bin = Vec::new();
    write_schedule(&schedule, &mut bin)?;
    out.add(&p.out, bin)?;
    out.add_json(&p.report, &summary)?;
    let mut csv = DiagnosticsWriter::new(Vec::new())?;
    for (d, c) in &report.series {
        csv.row(d, *c)?;
    }
    out.add(&p.series, csv.into_inner())
}

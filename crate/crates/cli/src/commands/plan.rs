use rand::Rng;
use shearlab::planner::{self, PlannerConfig};

use super::{read_profile, required};
use crate::artifacts::Outputs;
use crate::config::PlanParams;
use crate::error::CliError;

pub fn run(p: &PlanParams, rng: &mut impl Rng, out: &mut Outputs) -> Result<(), CliError> {
    let source = read_profile(out, required(p.source.as_deref(), "plan", "source")?)?;
    let target = read_profile(out, required(p.target.as_deref(), "plan", "target")?)?;
    let cfg = PlannerConfig {
        eps: p.eps,
        seed: rng.gen(),
        budget: p.budget,
        record_snapshots: p.snapshots,
    };
    let plan = planner::plan(&source, &target, &cfg)?;
    out.add_json(&p.out, &plan)
}

pub mod braid;
pub mod control;
pub mod plan;
pub mod report;
pub mod simulate;

use std::path::Path;

use shearlab::StepProfile;

use crate::artifacts::Outputs;
use crate::error::CliError;

pub(crate) fn read_profile(out: &mut Outputs, path: &Path) -> Result<StepProfile, CliError> {
    let data = out.read(path)?;
    serde_json::from_slice(&data).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// The profile given, or the two-layer swap profile [1, −1] on halves.
pub(crate) fn profile_or_swap(
    out: &mut Outputs,
    path: Option<&Path>,
) -> Result<StepProfile, CliError> {
    match path {
        Some(p) => read_profile(out, p),
        None => Ok(StepProfile::new(vec![0.0, 0.5, 1.0], vec![1.0, -1.0])?),
    }
}

pub(crate) fn required<'a>(
    path: Option<&'a Path>,
    command: &str,
    flag: &str,
) -> Result<&'a Path, CliError> {
    path.ok_or_else(|| CliError::Config(format!("{command} needs --{flag}")))
}

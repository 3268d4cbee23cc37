use shearlab::control::ControlError;
use shearlab::genflow::FlowError;
use shearlab::planner::PlanError;
use shearlab::profile::ProfileError;
use shearlab::spectral::SolverError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad config, flags, or input data.
    #[error("config: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<ProfileError> for CliError {
    fn from(e: ProfileError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<PlanError> for CliError {
    fn from(e: PlanError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::Cfl { .. }
            | SolverError::NonFinite { .. }
            | SolverError::BlowUp { .. } => CliError::Numerical(e.to_string()),
            SolverError::Io(e) => e.into(),
            e => CliError::Config(e.to_string()),
        }
    }
}

impl From<ControlError> for CliError {
    fn from(e: ControlError) -> Self {
        match e {
            ControlError::Solver(e) => e.into(),
            ControlError::Io(e) => e.into(),
            e => CliError::Config(e.to_string()),
        }
    }
}

impl From<FlowError> for CliError {
    fn from(e: FlowError) -> Self {
        match e {
            FlowError::Io(e) => e.into(),
            FlowError::Infeasible | FlowError::DegenerateCrossing { .. } => {
                CliError::Numerical(e.to_string())
            }
            e => CliError::Config(e.to_string()),
        }
    }
}

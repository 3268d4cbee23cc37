//! Run configuration. A config file sets any subset of the sections below;
//! command-line flags override single fields. The merged record, minus the
//! output directory, goes into the manifest, so a run is determined by it
//! and the seed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub plan: PlanParams,
    #[serde(default)]
    pub simulate: SimulateParams,
    #[serde(default)]
    pub control: ControlParams,
    #[serde(default)]
    pub braid: BraidParams,
    #[serde(default)]
    pub report: ReportParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: None,
            plan: PlanParams::default(),
            simulate: SimulateParams::default(),
            control: ControlParams::default(),
            braid: BraidParams::default(),
            report: ReportParams::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanParams {
    pub source: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub eps: f64,
    /// Move cap; unset means the planner default.
    pub budget: Option<usize>,
    /// Keep every intermediate profile in the plan file.
    pub snapshots: bool,
    pub out: PathBuf,
}

impl Default for PlanParams {
    fn default() -> Self {
        Self {
            source: None,
            target: None,
            eps: 1e-3,
            budget: None,
            snapshots: false,
            out: "plan.json".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateParams {
    /// Initial profile; unset means the two-layer swap profile [1, −1].
    pub profile: Option<PathBuf>,
    pub n1: usize,
    pub n2: usize,
    #[serde(rename = "L")]
    pub l: f64,
    /// Run length; unset means the schedule's horizon, or 10 without one.
    #[serde(rename = "T")]
    pub horizon: Option<f64>,
    /// Step size; unset means half the CFL limit of the initial state.
    pub dt: Option<f64>,
    pub mollify_width: f64,
    /// Peak vorticity of a seeded smooth perturbation added to the flow.
    pub perturbation: f64,
    /// CSFORCE1 forcing to apply.
    pub schedule: Option<PathBuf>,
    /// Write a diagnostics row every this many steps (and at the end).
    pub every: usize,
    pub out: PathBuf,
    pub snapshot: PathBuf,
}

impl Default for SimulateParams {
    fn default() -> Self {
        Self {
            profile: None,
            n1: 32,
            n2: 32,
            l: 2.0,
            horizon: None,
            dt: None,
            mollify_width: 0.1,
            perturbation: 0.0,
            schedule: None,
            every: 10,
            out: "diagnostics.csv".into(),
            snapshot: "final.flow".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ControlMode {
    Ramp,
    Transpose,
    Collide,
    Optimize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlParams {
    pub mode: ControlMode,
    /// Source profile; unset means the two-layer swap profile [1, −1].
    pub profile: Option<PathBuf>,
    /// Target for ramp and optimize; unset means Transpose(k) of the source.
    pub target: Option<PathBuf>,
    pub k: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub amplitude: f64,
    pub n1: usize,
    pub n2: usize,
    #[serde(rename = "L")]
    pub l: f64,
    pub mollify_width: f64,
    pub gain: f64,
    /// Diagnostics stride of the transfer check, in solver steps.
    pub stride: usize,
    pub basis_size: usize,
    pub penalty: f64,
    pub max_sweeps: usize,
    pub out: PathBuf,
    pub report: PathBuf,
    pub series: PathBuf,
}

impl Default for ControlParams {
    fn default() -> Self {
        Self {
            mode: ControlMode::Transpose,
            profile: None,
            target: None,
            k: 1,
            horizon: 100.0,
            amplitude: 1.0,
            n1: 16,
            n2: 32,
            l: 2.0,
            mollify_width: 0.2,
            gain: 10.0,
            stride: 100,
            basis_size: 4,
            penalty: 1e3,
            max_sweeps: 4,
            out: "sched.bin".into(),
            report: "transfer.json".into(),
            series: "transfer.csv".into(),
        }
    }
}

/// Least-action problem solved when no ensemble file is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowParams {
    pub n1: usize,
    pub n2: usize,
    /// Destination cell of the particle starting in each cell.
    pub endpoint: Vec<usize>,
    pub interior: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(default)]
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BraidParams {
    #[serde(rename = "in")]
    pub input: Option<PathBuf>,
    #[serde(rename = "ref")]
    pub reference: Option<PathBuf>,
    /// Channel length used to unwrap x₁.
    #[serde(rename = "L")]
    pub l: f64,
    pub flow: Option<FlowParams>,
    pub out: PathBuf,
    pub ensemble: PathBuf,
}

impl Default for BraidParams {
    fn default() -> Self {
        Self {
            input: None,
            reference: None,
            l: 2.0,
            flow: None,
            out: "braid.json".into(),
            ensemble: "ensemble.csv".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportParams {
    /// Transfer reports, or run directories holding `transfer.json`.
    pub runs: Vec<PathBuf>,
    pub out: PathBuf,
}

impl Default for ReportParams {
    fn default() -> Self {
        Self {
            runs: Vec::new(),
            out: "ladder.csv".into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = RunConfig::parse(r#"{"schema_version":1}"#).unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in [
            r#"{"schema_version":1,"colour":3}"#,
            r#"{"schema_version":1,"plan":{"epsilon":0.1}}"#,
            r#"{"schema_version":1,"braid":{"flow":{"n1":1,"n2":2,"endpoint":[1,0],"interior":1,"T":1,"x":0}}}"#,
        ] {
            assert!(
                matches!(RunConfig::parse(text), Err(CliError::Config(_))),
                "{text}"
            );
        }
    }

    #[test]
    fn version_is_required_and_checked() {
        assert!(RunConfig::parse("{}").is_err());
        assert!(RunConfig::parse(r#"{"schema_version":2}"#).is_err());
    }

    #[test]
    fn sections_parse_with_renamed_fields() {
        let cfg = RunConfig::parse(
            r#"{"schema_version":1,"seed":7,
                "control":{"mode":"collide","T":50,"k":1},
                "simulate":{"L":1.0,"n1":8}}"#,
        )
        .unwrap();
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.control.mode, ControlMode::Collide);
        assert_eq!(cfg.control.horizon, 50.0);
        assert_eq!(cfg.simulate.l, 1.0);
        assert_eq!(cfg.simulate.n2, 32);
    }
}

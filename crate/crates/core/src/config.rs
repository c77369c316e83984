//! Top-level run configuration. Every section falls back to the reference
//! parameters and unknown keys are rejected.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelParams;
use crate::error::Result;
use crate::evaluation::ExperimentConfig;
use crate::orchestrator::SolverConfig;
use crate::scenario::ScenarioSpec;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub scenario: ScenarioSpec,
    pub channel: ChannelParams,
    pub solver: SolverConfig,
    pub experiment: ExperimentConfig,
}

impl Config {
    /// Validates every section; errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.channel.validate()?;
        self.solver.validate()?;
        self.experiment.validate()?;
        Ok(())
    }
}

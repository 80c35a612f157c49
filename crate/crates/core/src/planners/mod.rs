//! Action planning: from the latest assessment to the next parameters.
//!
//! | planner            | update rule                                  |
//! |--------------------|----------------------------------------------|
//! | [`HeuristicTfPlanner`] | slide a fixed-width opacity window       |
//! | [`HalvingPlanner`]     | halve an opacity bracket by comparison   |
//! | [`LlmCentricPlanner`]  | take the model's proposed parameters     |

pub mod halving;
pub mod llm;
pub mod tf;

use serde::{Deserialize, Serialize};

use crate::config::{AgentConfig, ConfigError, PlannerKind};
use crate::params::{ParamSpace, ParamVector};
use crate::perception::Perceived;

pub use halving::{halving_step, HalvingMove, HalvingPlanner, HalvingState, StallRule};
pub use llm::{llm_plan_step, LlmCentricPlanner};
pub use tf::{tf_search_step, HeuristicTfPlanner, TfParamNames, TfSearchState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerStep {
    Next(ParamVector),
    Done(ParamVector),
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome {
    pub step: PlannerStep,
    /// Appended to the record's plan text.
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error("planner expected {expected}, got {got}")]
    WrongAssessmentKind { expected: &'static str, got: String },
    #[error("planner configuration: {0}")]
    Config(String),
    #[error("planner does not fit the tool: {0}")]
    Incompatible(String),
}

impl From<ConfigError> for PlanError {
    fn from(e: ConfigError) -> Self {
        PlanError::Config(e.to_string())
    }
}

pub trait Planner: Send {
    fn initial(&mut self, space: &ParamSpace) -> Result<ParamVector, PlanError>;

    /// Step of an earlier frame perception should compare against.
    fn baseline(&self) -> Option<u32> {
        None
    }

    /// How many recent records to hand to perception as context.
    fn history_window(&self) -> usize {
        0
    }

    fn step(
        &mut self,
        step: u32,
        perceived: &Perceived,
        current: &ParamVector,
        space: &ParamSpace,
    ) -> Result<PlanOutcome, PlanError>;

    /// Called when an operator replaces the next proposal.
    fn adopt(&mut self, _params: &ParamVector) {}
}

impl<P: Planner + ?Sized> Planner for Box<P> {
    fn initial(&mut self, space: &ParamSpace) -> Result<ParamVector, PlanError> {
        (**self).initial(space)
    }

    fn baseline(&self) -> Option<u32> {
        (**self).baseline()
    }

    fn history_window(&self) -> usize {
        (**self).history_window()
    }

    fn step(
        &mut self,
        step: u32,
        perceived: &Perceived,
        current: &ParamVector,
        space: &ParamSpace,
    ) -> Result<PlanOutcome, PlanError> {
        (**self).step(step, perceived, current, space)
    }

    fn adopt(&mut self, params: &ParamVector) {
        (**self).adopt(params)
    }
}

pub fn build_planner(config: &AgentConfig, space: &ParamSpace) -> Result<Box<dyn Planner>, PlanError> {
    Ok(match config.planner_kind {
        PlannerKind::HeuristicTf => Box::new(HeuristicTfPlanner::from_config(config, space)?),
        PlannerKind::HalvingOpacity => Box::new(HalvingPlanner::from_config(config, space)?),
        PlannerKind::LlmCentric => Box::new(LlmCentricPlanner::from_config(config)?),
    })
}

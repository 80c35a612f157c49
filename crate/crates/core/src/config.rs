//! Agent configuration files.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("max_iterations must be at least 1")]
    ZeroIterations,
    #[error("constraint {0} is empty")]
    EmptyConstraint(usize),
    #[error("stop_threshold must be a non-negative number")]
    BadStopThreshold,
    #[error("planner `{planner}` has no parameter `{name}` (expected one of {expected:?})")]
    UnknownPlannerParam {
        planner: &'static str,
        name: String,
        expected: &'static [&'static str],
    },
    #[error("perception `{perception}` has no parameter `{name}` (expected one of {expected:?})")]
    UnknownPerceptionParam {
        perception: &'static str,
        name: String,
        expected: &'static [&'static str],
    },
    #[error("parameter `{name}`: {detail}")]
    BadParamValue { name: String, detail: String },
    #[error("reading config: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing config: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerKind {
    HeuristicTf,
    HalvingOpacity,
    LlmCentric,
}

impl PlannerKind {
    pub fn name(self) -> &'static str {
        match self {
            PlannerKind::HeuristicTf => "heuristic_tf",
            PlannerKind::HalvingOpacity => "halving_opacity",
            PlannerKind::LlmCentric => "llm_centric",
        }
    }

    pub fn declared_params(self) -> &'static [&'static str] {
        match self {
            PlannerKind::HeuristicTf => &[
                "bins",
                "window_factor",
                "speed_reduction",
                "peak_opacity",
                "start_param",
                "end_param",
            ],
            PlannerKind::HalvingOpacity => {
                &["initial_opacity", "floor_opacity", "stall_rule", "param"]
            }
            PlannerKind::LlmCentric => &["history_window", "stop_labels", "initial", "frozen"],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerceptionKind {
    Oracle,
    Llm,
}

impl PerceptionKind {
    pub fn name(self) -> &'static str {
        match self {
            PerceptionKind::Oracle => "oracle",
            PerceptionKind::Llm => "llm",
        }
    }

    pub fn declared_params(self) -> &'static [&'static str] {
        match self {
            PerceptionKind::Oracle => &["target", "t_clear", "t_rec", "c_min", "t_faint"],
            PerceptionKind::Llm => &["max_images", "max_tokens", "model"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    #[serde(default)]
    pub scenario: String,
    pub task: String,
    /// Role prompt template; empty selects [`crate::prompt::DEFAULT_ROLE_TEMPLATE`].
    #[serde(default)]
    pub goal_template: String,
    #[serde(default)]
    pub approach: String,
    #[serde(default)]
    pub constraints: Vec<String>,
    pub planner_kind: PlannerKind,
    pub perception_kind: PerceptionKind,
    pub max_iterations: u32,
    /// Halving planner: bracket width at which the search stops. Unused by
    /// the other planners.
    #[serde(default)]
    pub stop_threshold: f64,
    #[serde(default)]
    pub planner_params: BTreeMap<String, serde_json::Value>,
    #[serde(default)]
    pub perception_params: BTreeMap<String, serde_json::Value>,
}

impl AgentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let config: AgentConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.max_iterations == 0 {
            return Err(ConfigError::ZeroIterations);
        }
        if let Some(i) = self.constraints.iter().position(|c| c.trim().is_empty()) {
            return Err(ConfigError::EmptyConstraint(i));
        }
        if !(self.stop_threshold >= 0.0 && self.stop_threshold.is_finite()) {
            return Err(ConfigError::BadStopThreshold);
        }
        let declared = self.planner_kind.declared_params();
        for name in self.planner_params.keys() {
            if !declared.contains(&name.as_str()) {
                return Err(ConfigError::UnknownPlannerParam {
                    planner: self.planner_kind.name(),
                    name: name.clone(),
                    expected: declared,
                });
            }
        }
        let declared = self.perception_kind.declared_params();
        for name in self.perception_params.keys() {
            if !declared.contains(&name.as_str()) {
                return Err(ConfigError::UnknownPerceptionParam {
                    perception: self.perception_kind.name(),
                    name: name.clone(),
                    expected: declared,
                });
            }
        }
        Ok(())
    }

    pub fn planner_f64(&self, name: &str) -> Result<Option<f64>, ConfigError> {
        param_f64(&self.planner_params, name)
    }

    pub fn planner_str(&self, name: &str) -> Result<Option<&str>, ConfigError> {
        param_str(&self.planner_params, name)
    }

    pub fn perception_f64(&self, name: &str) -> Result<Option<f64>, ConfigError> {
        param_f64(&self.perception_params, name)
    }

    pub fn perception_str(&self, name: &str) -> Result<Option<&str>, ConfigError> {
        param_str(&self.perception_params, name)
    }
}

fn param_f64(
    map: &BTreeMap<String, serde_json::Value>,
    name: &str,
) -> Result<Option<f64>, ConfigError> {
    match map.get(name) {
        None => Ok(None),
        Some(v) => v.as_f64().map(Some).ok_or_else(|| ConfigError::BadParamValue {
            name: name.to_string(),
            detail: format!("expected a number, got {v}"),
        }),
    }
}

fn param_str<'a>(
    map: &'a BTreeMap<String, serde_json::Value>,
    name: &str,
) -> Result<Option<&'a str>, ConfigError> {
    match map.get(name) {
        None => Ok(None),
        Some(v) => v.as_str().map(Some).ok_or_else(|| ConfigError::BadParamValue {
            name: name.to_string(),
            detail: format!("expected a string, got {v}"),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> AgentConfig {
        serde_json::from_str(
            r#"{
                "scenario": "Agent assists the user in volume rendering.",
                "task": "opacity transfer function design",
                "approach": "shifting a triangular opacity window",
                "constraints": ["keep the triangle shape"],
                "planner_kind": "heuristic_tf",
                "perception_kind": "oracle",
                "max_iterations": 12,
                "planner_params": {"bins": 10, "speed_reduction": 0.5},
                "perception_params": {"target": "inner"}
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn parses_and_validates() {
        let c = base();
        c.validate().unwrap();
        assert_eq!(c.planner_f64("bins").unwrap(), Some(10.0));
        assert_eq!(c.perception_str("target").unwrap(), Some("inner"));
        assert_eq!(c.goal_template, "");
    }

    #[test]
    fn zero_iterations_rejected() {
        let mut c = base();
        c.max_iterations = 0;
        assert!(matches!(c.validate(), Err(ConfigError::ZeroIterations)));
    }

    #[test]
    fn empty_constraint_rejected() {
        let mut c = base();
        c.constraints.push("  ".into());
        assert!(matches!(c.validate(), Err(ConfigError::EmptyConstraint(1))));
    }

    #[test]
    fn undeclared_planner_param_rejected() {
        let mut c = base();
        c.planner_params.insert("perplexity".into(), 30.into());
        assert!(matches!(c.validate(), Err(ConfigError::UnknownPlannerParam { .. })));
    }

    #[test]
    fn wrong_param_type_reported() {
        let mut c = base();
        c.planner_params.insert("bins".into(), "ten".into());
        assert!(matches!(c.planner_f64("bins"), Err(ConfigError::BadParamValue { .. })));
    }
}

//! Session memory.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::config::AgentConfig;
use crate::image::ImageRef;
use crate::params::ParamVector;
use crate::perception::{Assessment, TokenUsage};
use crate::tool::ToolStats;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "state", content = "reason")]
pub enum SessionStatus {
    Running,
    Paused,
    DoneSuccess,
    DoneBudgetExhausted,
    Failed(String),
}

impl SessionStatus {
    pub fn is_terminal(&self) -> bool {
        matches!(
            self,
            SessionStatus::DoneSuccess | SessionStatus::DoneBudgetExhausted | SessionStatus::Failed(_)
        )
    }

    pub fn name(&self) -> &'static str {
        match self {
            SessionStatus::Running => "running",
            SessionStatus::Paused => "paused",
            SessionStatus::DoneSuccess => "done_success",
            SessionStatus::DoneBudgetExhausted => "done_budget_exhausted",
            SessionStatus::Failed(_) => "failed",
        }
    }
}

impl fmt::Display for SessionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SessionStatus::Failed(reason) => write!(f, "failed({reason})"),
            other => f.write_str(other.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub step: u32,
    pub params: ParamVector,
    pub image_ref: ImageRef,
    pub reasoning: String,
    pub plan: String,
    pub assessment: Assessment,
    pub wall_time_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<ToolStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub goal: String,
    pub config: AgentConfig,
    /// Name of the tool from its descriptor.
    pub tool: String,
    pub records: Vec<IterationRecord>,
    pub status: SessionStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_params: Option<ParamVector>,
    #[serde(default)]
    pub usage: TokenUsage,
}

impl Session {
    pub fn new(id: impl Into<String>, goal: impl Into<String>, config: AgentConfig, tool: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            goal: goal.into(),
            config,
            tool: tool.into(),
            records: Vec::new(),
            status: SessionStatus::Running,
            final_params: None,
            usage: TokenUsage::default(),
        }
    }

    /// Checks the structural invariants a finished session must satisfy.
    pub fn check(&self) -> Result<(), String> {
        for (i, r) in self.records.iter().enumerate() {
            if r.step as usize != i {
                return Err(format!("record {i} has step {}", r.step));
            }
        }
        if self.records.len() > self.config.max_iterations as usize {
            return Err(format!(
                "{} records exceed max_iterations {}",
                self.records.len(),
                self.config.max_iterations
            ));
        }
        if self.status == SessionStatus::DoneSuccess {
            let Some(f) = &self.final_params else {
                return Err("done_success without final_params".into());
            };
            if self.records.last().map(|r| &r.params) != Some(f) {
                return Err("final_params differ from the last rendered params".into());
            }
        }
        Ok(())
    }
}

/// The last `k` records plus the best-ranked one (ties go to the lowest
/// step), without duplicates, in step order.
pub fn select_context(records: &[IterationRecord], k: usize) -> Vec<&IterationRecord> {
    let mut picked: Vec<usize> = (records.len().saturating_sub(k)..records.len()).collect();
    let best = records
        .iter()
        .enumerate()
        .max_by(|(i, a), (j, b)| a.assessment.rank().cmp(&b.assessment.rank()).then(j.cmp(i)))
        .map(|(i, _)| i);
    if let Some(b) = best {
        if !picked.contains(&b) {
            picked.push(b);
        }
    }
    picked.sort_unstable();
    picked.into_iter().map(|i| &records[i]).collect()
}

/// Plain-text memory handed to language models.
pub fn render_context(records: &[&IterationRecord]) -> String {
    records
        .iter()
        .map(|r| {
            let mut line = format!("Step {}: params {}; assessment: {}", r.step, r.params, r.assessment);
            if !r.plan.is_empty() {
                line.push_str("; plan: ");
                line.push_str(&r.plan.replace('\n', " "));
            }
            line
        })
        .collect::<Vec<_>>()
        .join("\n")
}

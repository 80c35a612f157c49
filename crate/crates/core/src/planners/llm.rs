//! Planning delegated to the model: its PARAMS section is the next action.

use super::{PlanError, PlanOutcome, Planner, PlannerStep};
use crate::config::AgentConfig;
use crate::params::{ClampNote, ParamSpace, ParamVector};
use crate::perception::{Assessment, Perceived, Verdict};
use crate::response::ParsedResponse;

pub const DEFAULT_HISTORY_WINDOW: usize = 3;

/// Parameters held at their rendered value unless configured otherwise:
/// the model moves the transfer function window, not its peak.
pub const DEFAULT_FROZEN: &[&str] = &["peak"];

/// `last` is the most recently rendered vector; partial proposals keep its
/// values for the parameters they leave out.
pub fn llm_plan_step(
    parsed: &ParsedResponse,
    space: &ParamSpace,
    last: &ParamVector,
    stop_labels: &[String],
) -> (PlannerStep, Vec<ClampNote>) {
    let label = parsed.assessment_label.trim().to_ascii_lowercase();
    let is_stop = Assessment::from_label(&parsed.assessment_label).verdict == Verdict::Clear
        || stop_labels.iter().any(|s| s.trim().eq_ignore_ascii_case(&label));
    if is_stop {
        return (PlannerStep::Done(last.clone()), Vec::new());
    }
    match &parsed.proposed_params {
        Some(p) => {
            let (clamped, notes) = space.clamp(p, Some(last));
            (PlannerStep::Next(clamped), notes)
        }
        None => (PlannerStep::Failed("no parameters proposed".into()), Vec::new()),
    }
}

#[derive(Debug, Clone)]
pub struct LlmCentricPlanner {
    pub history_window: usize,
    pub stop_labels: Vec<String>,
    pub initial: Option<ParamVector>,
    /// Names the model may not change; proposals for them are replaced by
    /// the current value.
    pub frozen: Vec<String>,
}

impl Default for LlmCentricPlanner {
    fn default() -> Self {
        Self {
            history_window: DEFAULT_HISTORY_WINDOW,
            stop_labels: Vec::new(),
            initial: None,
            frozen: DEFAULT_FROZEN.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl LlmCentricPlanner {
    pub fn from_config(config: &AgentConfig) -> Result<Self, PlanError> {
        let mut p = Self::default();
        if let Some(k) = config.planner_f64("history_window")? {
            if k < 0.0 || k.fract() != 0.0 {
                return Err(PlanError::Config(format!("history_window must be a count, got {k}")));
            }
            p.history_window = k as usize;
        }
        if let Some(v) = config.planner_params.get("stop_labels") {
            p.stop_labels = serde_json::from_value(v.clone())
                .map_err(|e| PlanError::Config(format!("stop_labels: {e}")))?;
        }
        if let Some(v) = config.planner_params.get("initial") {
            p.initial = Some(
                serde_json::from_value(v.clone())
                    .map_err(|e| PlanError::Config(format!("initial: {e}")))?,
            );
        }
        if let Some(v) = config.planner_params.get("frozen") {
            p.frozen = serde_json::from_value(v.clone()).map_err(|e| PlanError::Config(format!("frozen: {e}")))?;
        }
        Ok(p)
    }
}

impl Planner for LlmCentricPlanner {
    fn initial(&mut self, space: &ParamSpace) -> Result<ParamVector, PlanError> {
        let center = space.center();
        Ok(match &self.initial {
            Some(init) => space.clamp(init, Some(&center)).0,
            None => center,
        })
    }

    fn history_window(&self) -> usize {
        self.history_window
    }

    fn step(
        &mut self,
        _step: u32,
        perceived: &Perceived,
        current: &ParamVector,
        space: &ParamSpace,
    ) -> Result<PlanOutcome, PlanError> {
        let (mut step, notes) = llm_plan_step(&perceived.response, space, current, &self.stop_labels);
        let mut notes: Vec<String> = notes.iter().map(ToString::to_string).collect();
        if let PlannerStep::Next(p) = &mut step {
            for name in &self.frozen {
                let (Some(now), Some(proposed)) = (current.get(name), p.get(name)) else {
                    continue;
                };
                if now != proposed {
                    notes.push(format!("kept {name} at {now} (proposed {proposed})"));
                    p.set(name.clone(), now.clone());
                }
            }
        }
        Ok(PlanOutcome { step, notes })
    }
}

//! Sliding-window search for a triangular opacity transfer function.

use serde::{Deserialize, Serialize};

use super::{PlanError, PlanOutcome, Planner, PlannerStep};
use crate::config::AgentConfig;
use crate::params::{ParamSpace, ParamVector};
use crate::perception::{Perceived, Verdict};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfSearchState {
    pub min_val: f64,
    pub max_val: f64,
    pub bins: u32,
    pub window_factor: f64,
    pub speed_reduction: f64,
    pub start_point: f64,
    pub end_point: f64,
    pub fine_tuning: bool,
    pub iterations: u32,
}

impl TfSearchState {
    pub fn new(min_val: f64, max_val: f64, bins: u32) -> Result<Self, PlanError> {
        if !(min_val < max_val) || bins == 0 {
            return Err(PlanError::Config(format!(
                "need min < max and bins >= 1, got [{min_val}, {max_val}] with {bins} bins"
            )));
        }
        let mut s = Self {
            min_val,
            max_val,
            bins,
            window_factor: 1.0,
            speed_reduction: 0.5,
            start_point: min_val,
            end_point: 0.0,
            fine_tuning: false,
            iterations: 0,
        };
        s.end_point = s.start_point + s.window_width();
        Ok(s)
    }

    pub fn window_width(&self) -> f64 {
        (self.max_val - self.min_val) / self.bins as f64
    }

    pub fn step_size(&self) -> f64 {
        self.window_width() * self.window_factor
    }

    /// The window as rendered: the top is cut at `max_val`.
    pub fn window(&self) -> (f64, f64) {
        (self.start_point, self.end_point.min(self.max_val))
    }

    fn shifted(&self, by: f64) -> Self {
        let mut s = self.clone();
        s.start_point += by;
        s.end_point = s.start_point + s.window_width();
        s.iterations += 1;
        s
    }
}

/// Parameter names the search writes.
#[derive(Debug, Clone, PartialEq)]
pub struct TfParamNames {
    pub start: String,
    pub end: String,
    /// Set when the tool exposes peak opacity; it is held at `peak_opacity`.
    pub peak: Option<String>,
    pub peak_opacity: f64,
}

impl Default for TfParamNames {
    fn default() -> Self {
        Self {
            start: "start".into(),
            end: "end".into(),
            peak: None,
            peak_opacity: 1.0,
        }
    }
}

impl TfParamNames {
    pub fn vector(&self, state: &TfSearchState) -> ParamVector {
        let (s, e) = state.window();
        let mut v = ParamVector::new().with(self.start.clone(), s).with(self.end.clone(), e);
        if let Some(p) = &self.peak {
            v.set(p.clone(), self.peak_opacity);
        }
        v
    }
}

pub fn tf_search_step(
    state: &TfSearchState,
    verdict: &Verdict,
    names: &TfParamNames,
) -> Result<(TfSearchState, PlannerStep), PlanError> {
    let next = match verdict {
        Verdict::Clear => return Ok((state.clone(), PlannerStep::Done(names.vector(state)))),
        Verdict::NotRecognizable => state.shifted(state.step_size()),
        Verdict::Recognizable => {
            let mut s = state.shifted(state.step_size() * state.speed_reduction);
            s.fine_tuning = true;
            s
        }
        other => {
            return Err(PlanError::WrongAssessmentKind {
                expected: "a volume verdict",
                got: format!("{other:?}"),
            })
        }
    };
    if next.start_point >= next.max_val {
        return Ok((next, PlannerStep::Failed("swept range without clear".into())));
    }
    let params = names.vector(&next);
    Ok((next, PlannerStep::Next(params)))
}

#[derive(Debug, Clone)]
pub struct HeuristicTfPlanner {
    pub state: TfSearchState,
    pub names: TfParamNames,
}

impl HeuristicTfPlanner {
    /// The value range comes from the tool's start parameter bounds.
    pub fn from_config(config: &AgentConfig, space: &ParamSpace) -> Result<Self, PlanError> {
        let start = config.planner_str("start_param")?.unwrap_or("start").to_string();
        let end = config.planner_str("end_param")?.unwrap_or("end").to_string();
        let entry = space
            .get(&start)
            .ok_or_else(|| PlanError::Incompatible(format!("tool has no `{start}` parameter")))?;
        if space.get(&end).is_none() {
            return Err(PlanError::Incompatible(format!("tool has no `{end}` parameter")));
        }
        let bins = config.planner_f64("bins")?.unwrap_or(10.0);
        if bins < 1.0 || bins.fract() != 0.0 {
            return Err(PlanError::Config(format!("bins must be a positive integer, got {bins}")));
        }
        let mut state = TfSearchState::new(entry.lower, entry.upper, bins as u32)?;
        state.window_factor = config.planner_f64("window_factor")?.unwrap_or(1.0);
        state.speed_reduction = config.planner_f64("speed_reduction")?.unwrap_or(0.5);
        if !(state.window_factor > 0.0) {
            return Err(PlanError::Config("window_factor must be positive".into()));
        }
        if !(state.speed_reduction > 0.0 && state.speed_reduction <= 1.0) {
            return Err(PlanError::Config("speed_reduction must be in (0, 1]".into()));
        }
        let peak_opacity = config.planner_f64("peak_opacity")?.unwrap_or(1.0);
        let names = TfParamNames {
            start,
            end,
            peak: space.get("peak").map(|e| e.name.clone()),
            peak_opacity,
        };
        Ok(Self { state, names })
    }
}

impl Planner for HeuristicTfPlanner {
    fn initial(&mut self, _space: &ParamSpace) -> Result<ParamVector, PlanError> {
        Ok(self.names.vector(&self.state))
    }

    fn step(
        &mut self,
        _step: u32,
        perceived: &Perceived,
        _current: &ParamVector,
        _space: &ParamSpace,
    ) -> Result<PlanOutcome, PlanError> {
        let (next, step) = tf_search_step(&self.state, &perceived.assessment.verdict, &self.names)?;
        let note = match perceived.assessment.verdict {
            Verdict::NotRecognizable => format!("shift window by {}", self.state.step_size()),
            Verdict::Recognizable => format!(
                "fine tuning: shift window by {}",
                self.state.step_size() * self.state.speed_reduction
            ),
            _ => "stop: structure is clear".into(),
        };
        self.state = next;
        Ok(PlanOutcome {
            step,
            notes: vec![note],
        })
    }

    fn adopt(&mut self, params: &ParamVector) {
        if let Some(s) = params.number(&self.names.start) {
            self.state.start_point = s;
            self.state.end_point = s + self.state.window_width();
        }
    }
}

//! Bracket-halving search over a single opacity parameter.
//!
//! The bracket is `[floor, opacity]`. Each step renders the midpoint `O'`
//! and compares it (first image) against the frame rendered at `O` (second
//! image).

use serde::{Deserialize, Serialize};

use super::{PlanError, PlanOutcome, Planner, PlannerStep};
use crate::config::AgentConfig;
use crate::params::{ParamSpace, ParamVector};
use crate::perception::{Perceived, Verdict, Winner};

/// What to do when `O'` is neither too low nor better than `O`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StallRule {
    /// Treat `O'` as the new floor, so the bracket still halves.
    Floor,
    /// Keep `O` and raise the floor by a quarter of the bracket.
    Quarter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalvingState {
    pub opacity: f64,
    pub floor: f64,
    pub threshold: f64,
    pub stall_rule: StallRule,
}

impl HalvingState {
    pub fn new(opacity: f64, floor: f64, threshold: f64) -> Result<Self, PlanError> {
        if !(floor >= 0.0 && floor < opacity && opacity <= 1.0) || !(threshold > 0.0) {
            return Err(PlanError::Config(format!(
                "need 0 <= floor < opacity <= 1 and threshold > 0, got floor {floor}, opacity {opacity}, threshold {threshold}"
            )));
        }
        Ok(Self {
            opacity,
            floor,
            threshold,
            stall_rule: StallRule::Floor,
        })
    }

    pub fn proposal(&self) -> f64 {
        self.floor + (self.opacity - self.floor) / 2.0
    }

    pub fn width(&self) -> f64 {
        self.opacity - self.floor
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HalvingMove {
    Next(f64),
    Done(f64),
}

/// Applies one comparison of `render(O')` against `render(O)`.
pub fn halving_step(state: &HalvingState, verdict: &Verdict) -> Result<(HalvingState, HalvingMove), PlanError> {
    halving_step_at(state, state.proposal(), verdict)
}

/// Like [`halving_step`] for an arbitrary probe, e.g. an operator override.
pub fn halving_step_at(
    state: &HalvingState,
    probe: f64,
    verdict: &Verdict,
) -> Result<(HalvingState, HalvingMove), PlanError> {
    let &Verdict::Comparison { winner, too_low } = verdict else {
        return Err(PlanError::WrongAssessmentKind {
            expected: "a comparison",
            got: format!("{verdict:?}"),
        });
    };
    let mut next = state.clone();
    if too_low {
        next.floor = probe;
    } else if winner == Winner::First {
        next.opacity = probe;
    } else {
        match state.stall_rule {
            StallRule::Floor => next.floor = probe,
            StallRule::Quarter => next.floor += (next.opacity - next.floor) / 4.0,
        }
    }
    // an override outside the bracket must not invert it
    if next.floor >= next.opacity {
        next.floor = state.floor.min(next.opacity);
    }
    let mv = if next.width() <= next.threshold {
        HalvingMove::Done(next.opacity)
    } else {
        HalvingMove::Next(next.proposal())
    };
    Ok((next, mv))
}

#[derive(Debug, Clone)]
pub struct HalvingPlanner {
    pub state: HalvingState,
    pub param: String,
    /// Step at which the current `O` was rendered.
    opacity_step: Option<u32>,
    /// Probe value rendered in the latest frame.
    probe: f64,
}

impl HalvingPlanner {
    pub fn new(state: HalvingState, param: impl Into<String>) -> Self {
        let probe = state.opacity;
        Self {
            state,
            param: param.into(),
            opacity_step: None,
            probe,
        }
    }

    pub fn from_config(config: &AgentConfig, space: &ParamSpace) -> Result<Self, PlanError> {
        let param = config.planner_str("param")?.unwrap_or("opacity").to_string();
        if space.get(&param).is_none() {
            return Err(PlanError::Incompatible(format!("tool has no `{param}` parameter")));
        }
        let threshold = if config.stop_threshold > 0.0 { config.stop_threshold } else { 0.05 };
        let mut state = HalvingState::new(
            config.planner_f64("initial_opacity")?.unwrap_or(1.0),
            config.planner_f64("floor_opacity")?.unwrap_or(0.0),
            threshold,
        )?;
        state.stall_rule = match config.planner_str("stall_rule")? {
            None | Some("floor") => StallRule::Floor,
            Some("quarter") => StallRule::Quarter,
            Some(other) => {
                return Err(PlanError::Config(format!(
                    "stall_rule must be `floor` or `quarter`, got `{other}`"
                )))
            }
        };
        Ok(Self::new(state, param))
    }

    fn vector(&self, o: f64) -> ParamVector {
        ParamVector::new().with(self.param.clone(), o)
    }
}

impl Planner for HalvingPlanner {
    fn initial(&mut self, _space: &ParamSpace) -> Result<ParamVector, PlanError> {
        self.probe = self.state.opacity;
        Ok(self.vector(self.state.opacity))
    }

    fn baseline(&self) -> Option<u32> {
        self.opacity_step
    }

    fn step(
        &mut self,
        step: u32,
        perceived: &Perceived,
        _current: &ParamVector,
        _space: &ParamSpace,
    ) -> Result<PlanOutcome, PlanError> {
        let Some(_) = self.opacity_step else {
            // first frame shows O itself; nothing to compare yet
            self.opacity_step = Some(step);
            self.probe = self.state.proposal();
            return Ok(PlanOutcome {
                step: PlannerStep::Next(self.vector(self.probe)),
                notes: vec![format!(
                    "bracket [{}, {}], trying {}",
                    self.state.floor, self.state.opacity, self.probe
                )],
            });
        };
        let (next, mv) = halving_step_at(&self.state, self.probe, &perceived.assessment.verdict)?;
        if next.opacity != self.state.opacity {
            self.opacity_step = Some(step);
        }
        self.state = next;
        let note = format!("bracket [{}, {}]", self.state.floor, self.state.opacity);
        let step = match mv {
            HalvingMove::Next(o) => {
                self.probe = o;
                PlannerStep::Next(self.vector(o))
            }
            HalvingMove::Done(o) => PlannerStep::Done(self.vector(o)),
        };
        Ok(PlanOutcome {
            step,
            notes: vec![note],
        })
    }

    fn adopt(&mut self, params: &ParamVector) {
        if let Some(o) = params.number(&self.param) {
            if self.opacity_step.is_some() {
                self.probe = o;
            } else {
                self.state.opacity = o.max(self.state.floor + f64::EPSILON);
                self.probe = o;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cmp(winner: Winner, too_low: bool) -> Verdict {
        Verdict::Comparison { winner, too_low }
    }

    #[test]
    fn first_proposal_is_half() {
        let s = HalvingState::new(1.0, 0.0, 0.05).unwrap();
        assert_eq!(s.proposal(), 0.5);
    }

    #[test]
    fn too_low_raises_floor() {
        let s = HalvingState::new(1.0, 0.0, 0.05).unwrap();
        let (s, mv) = halving_step(&s, &cmp(Winner::Second, true)).unwrap();
        assert_eq!((s.floor, s.opacity), (0.5, 1.0));
        assert_eq!(mv, HalvingMove::Next(0.75));
    }

    #[test]
    fn winner_lowers_opacity() {
        let s = HalvingState::new(1.0, 0.0, 0.05).unwrap();
        let (s, mv) = halving_step(&s, &cmp(Winner::First, false)).unwrap();
        assert_eq!((s.floor, s.opacity), (0.0, 0.5));
        assert_eq!(mv, HalvingMove::Next(0.25));
    }

    #[test]
    fn quarter_rule_keeps_opacity() {
        let mut s = HalvingState::new(1.0, 0.0, 0.05).unwrap();
        s.stall_rule = StallRule::Quarter;
        let (s, mv) = halving_step(&s, &cmp(Winner::Second, false)).unwrap();
        assert_eq!((s.floor, s.opacity), (0.25, 1.0));
        assert_eq!(mv, HalvingMove::Next(0.625));
    }

    #[test]
    fn rejects_volume_verdicts() {
        let s = HalvingState::new(1.0, 0.0, 0.05).unwrap();
        assert!(halving_step(&s, &Verdict::Clear).is_err());
    }

    proptest! {
        #[test]
        fn halves_every_step(choices in proptest::collection::vec((any::<bool>(), any::<bool>()), 5)) {
            let mut s = HalvingState::new(1.0, 0.0, 0.05).unwrap();
            let mut halvings = 0;
            for (first, too_low) in choices {
                let w = if first { Winner::First } else { Winner::Second };
                let (next, mv) = halving_step(&s, &cmp(w, too_low)).unwrap();
                prop_assert_eq!(next.width(), s.width() / 2.0);
                prop_assert!(next.opacity <= s.opacity && next.floor >= s.floor);
                halvings += 1;
                s = next;
                if let HalvingMove::Done(o) = mv {
                    prop_assert_eq!(o, s.opacity);
                    break;
                }
            }
            prop_assert_eq!(halvings, 5);
        }
    }
}

//! The render → perceive → plan loop.

use std::collections::BTreeMap;
use std::time::Instant;

use crate::config::{AgentConfig, ConfigError, PerceptionKind};
use crate::image::ImageRef;
use crate::params::ParamVector;
use crate::perception::{
    ChatClient, ComparisonStub, LlmPerception, Observation, Perceived, Perception,
    PerceptionError, PerceptionInput, ScatterOracle, ScatterThresholds, VolumeOracle,
    VolumeThresholds,
};
use crate::planners::{PlanError, Planner, PlannerStep};
use crate::prompt::{render_role_prompt, PromptError};
use crate::session::{render_context, select_context, IterationRecord, Session, SessionStatus};
use crate::store::{ImageSink, StoreError};
use crate::tool::{ToolDescriptor, ToolError, VisTool};

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Extra attempts after a failed perception call.
    pub perception_retries: u32,
    /// Record zero wall time so identical runs serialize identically.
    pub deterministic: bool,
    /// Defaults to a hash of the config, goal and tool name.
    pub session_id: Option<String>,
    /// Extra template bindings for the role prompt.
    pub fields: BTreeMap<String, String>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            perception_retries: 1,
            deterministic: false,
            session_id: None,
            fields: BTreeMap::new(),
        }
    }
}

pub enum Checkpoint<'a> {
    /// The loop is about to render `params`. Blocking here pauses the run.
    BeforeRender {
        step: u32,
        params: &'a ParamVector,
        session: &'a Session,
    },
    Recorded {
        record: &'a IterationRecord,
        session: &'a Session,
    },
}

/// Instructions returned from a checkpoint. Only honoured at
/// [`Checkpoint::BeforeRender`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Directive {
    pub abort: Option<String>,
    pub override_params: Option<ParamVector>,
    pub amend_goal: Option<String>,
}

pub trait LoopObserver {
    fn checkpoint(&mut self, checkpoint: Checkpoint<'_>) -> Directive;
}

impl LoopObserver for () {
    fn checkpoint(&mut self, _: Checkpoint<'_>) -> Directive {
        Directive::default()
    }
}

impl<F: FnMut(Checkpoint<'_>) -> Directive> LoopObserver for F {
    fn checkpoint(&mut self, checkpoint: Checkpoint<'_>) -> Directive {
        self(checkpoint)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LoopError {
    #[error("tool unreachable: {0}")]
    ToolUnreachable(String),
    #[error("describing tool: {0}")]
    Describe(ToolError),
    #[error("invalid config: {0}")]
    Config(#[from] ConfigError),
    #[error("role prompt: {0}")]
    Prompt(#[from] PromptError),
    #[error("planner: {0}")]
    Setup(#[from] PlanError),
    #[error("render failed at step {}: {error}", session.records.len())]
    Tool { error: ToolError, session: Box<Session> },
    #[error("perception failed at step {}: {error}", session.records.len())]
    Perception {
        error: PerceptionError,
        session: Box<Session>,
    },
    #[error("planner failed at step {}: {error}", session.records.len())]
    Planner { error: PlanError, session: Box<Session> },
    #[error("storing image: {error}")]
    Store { error: StoreError, session: Box<Session> },
}

impl LoopError {
    /// The session as far as it got, for errors raised mid-run. Its status
    /// is `failed`.
    pub fn partial(&self) -> Option<&Session> {
        match self {
            LoopError::Tool { session, .. }
            | LoopError::Perception { session, .. }
            | LoopError::Planner { session, .. }
            | LoopError::Store { session, .. } => Some(session),
            _ => None,
        }
    }

    pub fn into_partial(self) -> Option<Session> {
        match self {
            LoopError::Tool { session, .. }
            | LoopError::Perception { session, .. }
            | LoopError::Planner { session, .. }
            | LoopError::Store { session, .. } => Some(*session),
            _ => None,
        }
    }
}

/// Describes the tool, mapping transport failures to
/// [`LoopError::ToolUnreachable`].
pub fn describe_tool(tool: &dyn VisTool) -> Result<ToolDescriptor, LoopError> {
    let d = tool.describe().map_err(|e| match e {
        ToolError::Unreachable(m) => LoopError::ToolUnreachable(m),
        other => LoopError::Describe(other),
    })?;
    d.validate().map_err(LoopError::Describe)?;
    Ok(d)
}

pub fn default_session_id(config: &AgentConfig, goal: &str, tool: &str) -> String {
    let mut bytes = serde_json::to_vec(config).expect("configs always serialize");
    bytes.extend_from_slice(goal.as_bytes());
    bytes.push(0);
    bytes.extend_from_slice(tool.as_bytes());
    ImageRef::of(&bytes).0[..16].to_string()
}

/// Builds the perception a config asks for. Oracle perception depends on
/// the tool's modality: volume tools need `target`, scatter tools compare
/// overplotting, embedding tools compare quality scores.
pub fn build_perception(
    config: &AgentConfig,
    descriptor: &ToolDescriptor,
) -> Result<Box<dyn Perception>, ConfigError> {
    match config.perception_kind {
        PerceptionKind::Llm => {
            let mut chat = crate::perception::ChatConfig::from_env();
            if let Some(m) = config.perception_str("model")? {
                chat.model = m.to_string();
            }
            if let Some(n) = config.perception_f64("max_tokens")? {
                chat.max_tokens = n as u32;
            }
            if let Some(n) = config.perception_f64("max_images")? {
                chat.max_images = n as usize;
            }
            Ok(Box::new(LlmPerception::new(Box::new(ChatClient::new(chat)))))
        }
        PerceptionKind::Oracle => match descriptor.metadata.modality.as_deref() {
            Some("scatter") => {
                let mut th = ScatterThresholds::default();
                if let Some(t) = config.perception_f64("t_faint")? {
                    th.t_faint = t;
                }
                Ok(Box::new(ScatterOracle { thresholds: th }))
            }
            Some("embedding") => Ok(Box::new(ComparisonStub::default())),
            _ => {
                let target = config.perception_str("target")?.ok_or_else(|| {
                    ConfigError::BadParamValue {
                        name: "target".into(),
                        detail: "volume oracle needs a target structure".into(),
                    }
                })?;
                let mut th = VolumeThresholds::default();
                if let Some(t) = config.perception_f64("t_clear")? {
                    th.t_clear = t;
                }
                if let Some(t) = config.perception_f64("t_rec")? {
                    th.t_rec = t;
                }
                if let Some(t) = config.perception_f64("c_min")? {
                    th.c_min = t;
                }
                Ok(Box::new(VolumeOracle {
                    target: target.to_string(),
                    thresholds: th,
                }))
            }
        },
    }
}

fn fail(session: &mut Session, reason: String) -> Box<Session> {
    session.status = SessionStatus::Failed(reason);
    Box::new(session.clone())
}

#[allow(clippy::too_many_arguments)]
pub fn run_loop(
    config: &AgentConfig,
    goal: &str,
    tool: &dyn VisTool,
    perception: &mut dyn Perception,
    planner: &mut dyn Planner,
    images: &mut dyn ImageSink,
    options: &RunOptions,
    observer: &mut dyn LoopObserver,
) -> Result<Session, LoopError> {
    config.validate()?;
    let descriptor = describe_tool(tool)?;
    let space = &descriptor.param_space;

    let mut fields = options.fields.clone();
    fields.insert("goal".into(), goal.to_string());
    let mut role_prompt = render_role_prompt(config, &fields)?;

    let id = options
        .session_id
        .clone()
        .unwrap_or_else(|| default_session_id(config, goal, &descriptor.name));
    let mut session = Session::new(id, goal, config.clone(), descriptor.name.clone());
    let mut observations: Vec<Observation> = Vec::new();

    let mut params = space.clamp(&planner.initial(space)?, None).0;
    // set once the planner is done with parameters it has not rendered last
    let mut confirming = false;

    loop {
        if session.records.len() >= config.max_iterations as usize {
            session.status = SessionStatus::DoneBudgetExhausted;
            break;
        }
        let step = session.records.len() as u32;
        let directive = observer.checkpoint(Checkpoint::BeforeRender {
            step,
            params: &params,
            session: &session,
        });
        if let Some(reason) = directive.abort {
            session.status = SessionStatus::Failed(reason);
            break;
        }
        if let Some(g) = directive.amend_goal {
            fields.insert("goal".into(), g.clone());
            role_prompt = render_role_prompt(config, &fields)?;
            session.goal = g;
        }
        let mut extra_notes = Vec::new();
        if let Some(p) = directive.override_params {
            let (clamped, notes) = space.clamp(&p, Some(&params));
            params = clamped;
            planner.adopt(&params);
            confirming = false;
            extra_notes.push(format!("operator override: {params}"));
            extra_notes.extend(notes.iter().map(ToString::to_string));
        }

        let started = Instant::now();
        let out = match tool.render(&params) {
            Ok(o) => o,
            Err(error) => {
                let reason = format!("render: {error}");
                return Err(LoopError::Tool {
                    error,
                    session: fail(&mut session, reason),
                });
            }
        };
        let image_ref = match images.put_image(&out.png) {
            Ok(r) => r,
            Err(error) => {
                let reason = format!("store: {error}");
                return Err(LoopError::Store {
                    error,
                    session: fail(&mut session, reason),
                });
            }
        };
        observations.push(Observation {
            step,
            params: params.clone(),
            png: out.png,
            stats: out.stats,
        });
        let current = &observations[step as usize];
        let baseline = planner
            .baseline()
            .filter(|&b| b < step)
            .map(|b| &observations[b as usize]);
        let context = render_context(&select_context(&session.records, planner.history_window()));
        let input = PerceptionInput {
            role_prompt: &role_prompt,
            context: &context,
            space,
            current,
            baseline,
        };
        let mut attempt = 0;
        let perceived: Perceived = loop {
            match perception.perceive(&input) {
                Ok(p) => break p,
                Err(error) if attempt >= options.perception_retries => {
                    session.usage = perception.usage();
                    let reason = format!("perception: {error}");
                    return Err(LoopError::Perception {
                        error,
                        session: fail(&mut session, reason),
                    });
                }
                Err(error) => {
                    tracing::warn!(step, attempt, %error, "perception failed; retrying");
                    attempt += 1;
                }
            }
        };
        session.usage = perception.usage();

        let outcome = if confirming {
            None
        } else {
            match planner.step(step, &perceived, &params, space) {
                Ok(o) => Some(o),
                Err(error) => {
                    let reason = format!("planner: {error}");
                    return Err(LoopError::Planner {
                        error,
                        session: fail(&mut session, reason),
                    });
                }
            }
        };

        let mut plan = perceived.response.plan.clone();
        let notes = extra_notes
            .into_iter()
            .chain(outcome.iter().flat_map(|o| o.notes.iter().cloned()))
            .chain(confirming.then(|| "confirming final parameters".to_string()));
        for note in notes {
            if !plan.is_empty() {
                plan.push('\n');
            }
            plan.push_str(&note);
        }
        let record = IterationRecord {
            step,
            params: params.clone(),
            image_ref,
            reasoning: perceived.response.reasoning.clone(),
            plan,
            assessment: perceived.assessment.clone(),
            wall_time_ms: if options.deterministic {
                0
            } else {
                started.elapsed().as_millis() as u64
            },
            stats: current.stats.clone(),
        };
        session.records.push(record);
        observer.checkpoint(Checkpoint::Recorded {
            record: session.records.last().unwrap(),
            session: &session,
        });

        let Some(outcome) = outcome else {
            session.status = SessionStatus::DoneSuccess;
            session.final_params = Some(params);
            break;
        };
        match outcome.step {
            PlannerStep::Next(p) => params = space.clamp(&p, Some(&params)).0,
            PlannerStep::Done(p) => {
                let p = space.clamp(&p, Some(&params)).0;
                if p == params {
                    session.status = SessionStatus::DoneSuccess;
                    session.final_params = Some(p);
                    break;
                }
                params = p;
                confirming = true;
            }
            PlannerStep::Failed(reason) => {
                session.status = SessionStatus::Failed(reason);
                break;
            }
        }
    }
    Ok(session)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PlannerKind;
    use crate::image::Image;
    use crate::params::{ParamEntry, ParamSpace};
    use crate::perception::Assessment;
    use crate::planners::LlmCentricPlanner;
    use crate::store::MemoryImages;
    use crate::tool::{RenderOutput, ToolMetadata};
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Dial {
        renders: AtomicUsize,
        reachable: bool,
    }

    impl VisTool for Dial {
        fn describe(&self) -> Result<ToolDescriptor, ToolError> {
            if !self.reachable {
                return Err(ToolError::Unreachable("connection refused".into()));
            }
            Ok(ToolDescriptor::new(
                "dial",
                ParamSpace::new(vec![ParamEntry::continuous("x", 0.0, 10.0)]).unwrap(),
                ToolMetadata::default(),
            ))
        }

        fn render(&self, params: &ParamVector) -> Result<RenderOutput, ToolError> {
            self.renders.fetch_add(1, Ordering::SeqCst);
            let v = params.number("x").unwrap() as u8;
            Ok(RenderOutput {
                png: Image::new(2, 2, [v, v, v, 255]).to_png().unwrap(),
                stats: None,
            })
        }
    }

    /// Proposes x + 1 until x reaches `stop_at`.
    struct Counter {
        stop_at: f64,
    }

    impl Perception for Counter {
        fn perceive(&mut self, input: &PerceptionInput<'_>) -> Result<Perceived, PerceptionError> {
            let x = input.current.params.number("x").unwrap();
            let mut p = Perceived::from_assessment(
                if x >= self.stop_at { Assessment::clear() } else { Assessment::not_recognizable() },
                format!("x is {x}"),
            );
            p.response.proposed_params = Some(ParamVector::new().with("x", x + 1.0));
            Ok(p)
        }
    }

    fn config(max: u32) -> AgentConfig {
        AgentConfig {
            scenario: String::new(),
            task: "dial turning".into(),
            goal_template: String::new(),
            approach: "turning the dial".into(),
            constraints: vec![],
            planner_kind: PlannerKind::LlmCentric,
            perception_kind: PerceptionKind::Oracle,
            max_iterations: max,
            stop_threshold: 0.0,
            planner_params: Default::default(),
            perception_params: Default::default(),
        }
    }

    fn run(max: u32, stop_at: f64, reachable: bool) -> (Result<Session, LoopError>, usize) {
        let tool = Dial {
            renders: AtomicUsize::new(0),
            reachable,
        };
        let mut planner = LlmCentricPlanner {
            initial: Some(ParamVector::new().with("x", 0.0)),
            ..Default::default()
        };
        let mut images = MemoryImages::default();
        let r = run_loop(
            &config(max),
            "reach the stop",
            &tool,
            &mut Counter { stop_at },
            &mut planner,
            &mut images,
            &RunOptions {
                deterministic: true,
                ..Default::default()
            },
            &mut (),
        );
        (r, tool.renders.load(Ordering::SeqCst))
    }

    #[test]
    fn runs_to_done() {
        let (s, renders) = run(10, 3.0, true);
        let s = s.unwrap();
        assert_eq!(s.status, SessionStatus::DoneSuccess);
        assert_eq!(s.records.len(), 4);
        assert_eq!(renders, 4);
        assert_eq!(s.final_params, Some(ParamVector::new().with("x", 3.0)));
        s.check().unwrap();
    }

    #[test]
    fn budget_of_one() {
        let (s, _) = run(1, 100.0, true);
        let s = s.unwrap();
        assert_eq!(s.status, SessionStatus::DoneBudgetExhausted);
        assert_eq!(s.records.len(), 1);
    }

    #[test]
    fn unreachable_tool() {
        let (r, renders) = run(5, 1.0, false);
        assert!(matches!(r, Err(LoopError::ToolUnreachable(_))));
        assert_eq!(renders, 0);
    }

    #[test]
    fn observer_override_and_abort() {
        let tool = Dial {
            renders: AtomicUsize::new(0),
            reachable: true,
        };
        let mut planner = LlmCentricPlanner {
            initial: Some(ParamVector::new().with("x", 0.0)),
            ..Default::default()
        };
        let mut observer = |cp: Checkpoint<'_>| match cp {
            Checkpoint::BeforeRender { step: 1, .. } => Directive {
                override_params: Some(ParamVector::new().with("x", 50.0)),
                ..Default::default()
            },
            Checkpoint::BeforeRender { step: 3, .. } => Directive {
                abort: Some("aborted".into()),
                ..Default::default()
            },
            _ => Directive::default(),
        };
        let s = run_loop(
            &config(10),
            "g",
            &tool,
            &mut Counter { stop_at: 100.0 },
            &mut planner,
            &mut MemoryImages::default(),
            &RunOptions::default(),
            &mut observer,
        )
        .unwrap();
        assert_eq!(s.status, SessionStatus::Failed("aborted".into()));
        assert_eq!(s.records.len(), 3);
        assert_eq!(s.records[1].params.number("x"), Some(10.0));
        assert!(s.records[1].plan.contains("operator override"));
        assert!(s.records[1].plan.contains("clamped x from 50 to 10"));
    }
}

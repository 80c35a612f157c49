//! Live and recovered sessions, their event logs and operator control.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};

use ava_core::agent::{build_perception, describe_tool, run_loop, Checkpoint, Directive, LoopError, RunOptions};
use ava_core::config::AgentConfig;
use ava_core::image::{ImageRef, Png};
use ava_core::params::ParamVector;
use ava_core::planners::build_planner;
use ava_core::session::{IterationRecord, Session, SessionStatus};
use ava_core::store::{SessionStore, StoreError};
use ava_core::tool::{ToolDescriptor, VisTool};
use serde::{Deserialize, Serialize};
use tokio::sync::watch;

/// Reason recorded for sessions that were running when the service stopped.
pub const INTERRUPTED: &str = "interrupted";
pub const ABORTED: &str = "aborted";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{code}: {message}")]
pub struct ApiError {
    pub status: u16,
    pub code: String,
    pub message: String,
}

impl ApiError {
    pub fn new(status: u16, code: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            status,
            code: code.into(),
            message: message.into(),
        }
    }

    fn not_found(id: &str) -> Self {
        Self::new(404, "unknown_session", format!("no session `{id}`"))
    }

    fn invalid(message: impl Into<String>) -> Self {
        Self::new(422, "invalid_request", message)
    }

    fn conflict(status: &SessionStatus, command: &str) -> Self {
        Self::new(409, "invalid_transition", format!("cannot {command} a session that is {status}"))
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(id) => ApiError::not_found(&id),
            StoreError::BadId(id) => ApiError::new(400, "bad_id", format!("invalid identifier `{id}`")),
            other => ApiError::new(500, "store", other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    pub config: AgentConfig,
    pub goal: String,
    /// `builtin:NAME` or an `http(s)://` tool endpoint.
    pub tool: String,
    /// Data file for built-in tools that need one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
    /// Records zero wall time so reruns serialize identically.
    #[serde(default)]
    pub deterministic: bool,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub fields: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControlCommand {
    Pause,
    Resume,
    Abort,
    OverrideParams { params: ParamVector },
    AmendGoal { goal: String },
}

impl ControlCommand {
    fn verb(&self) -> &'static str {
        match self {
            ControlCommand::Pause => "pause",
            ControlCommand::Resume => "resume",
            ControlCommand::Abort => "abort",
            ControlCommand::OverrideParams { .. } => "override",
            ControlCommand::AmendGoal { .. } => "amend",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventBody {
    Record { record: IterationRecord },
    Status { status: SessionStatus },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub seq: u64,
    #[serde(flatten)]
    pub body: EventBody,
}

impl SessionEvent {
    pub fn name(&self) -> &'static str {
        match self.body {
            EventBody::Record { .. } => "record",
            EventBody::Status { .. } => "status",
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(&self.body, EventBody::Status { status } if status.is_terminal())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: String,
    pub goal: String,
    pub tool: String,
    pub status: SessionStatus,
    pub steps: usize,
}

struct State {
    status: SessionStatus,
    snapshot: Session,
    events: Vec<SessionEvent>,
    /// The worker is blocked at a checkpoint waiting for resume.
    parked: bool,
    finished: bool,
    abort: bool,
    pending_override: Option<ParamVector>,
    pending_goal: Option<String>,
}

impl State {
    fn push(&mut self, body: EventBody) {
        let seq = self.events.len() as u64;
        self.events.push(SessionEvent { seq, body });
    }

    fn persisted(&self) -> Session {
        let mut s = self.snapshot.clone();
        s.status = self.status.clone();
        s
    }
}

pub(crate) struct Handle {
    id: String,
    space: Option<ToolDescriptor>,
    state: Mutex<State>,
    cond: Condvar,
    notify: watch::Sender<usize>,
}

impl Handle {
    fn new(snapshot: Session, descriptor: Option<ToolDescriptor>) -> Self {
        let (notify, _) = watch::channel(0);
        Self {
            id: snapshot.id.clone(),
            space: descriptor,
            state: Mutex::new(State {
                status: snapshot.status.clone(),
                snapshot,
                events: Vec::new(),
                parked: false,
                finished: false,
                abort: false,
                pending_override: None,
                pending_goal: None,
            }),
            cond: Condvar::new(),
            notify,
        }
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn wait<'a>(&self, guard: MutexGuard<'a, State>) -> MutexGuard<'a, State> {
        self.cond.wait(guard).unwrap_or_else(|p| p.into_inner())
    }

    /// Wakes condvar waiters and event subscribers.
    fn publish(&self, st: &State) {
        self.cond.notify_all();
        self.notify.send_replace(st.events.len());
    }

    /// Events from `cursor` on, and whether the log is complete.
    pub(crate) fn events_from(&self, cursor: usize) -> (Vec<SessionEvent>, bool) {
        let st = self.lock();
        (st.events.get(cursor..).unwrap_or_default().to_vec(), st.finished)
    }

    pub(crate) fn subscribe(&self) -> watch::Receiver<usize> {
        self.notify.subscribe()
    }
}

/// Every session the service knows about, backed by a [`SessionStore`].
pub struct Registry {
    store: SessionStore,
    sessions: Mutex<HashMap<String, Arc<Handle>>>,
}

impl Registry {
    /// Opens the store and loads every stored session read-only. Sessions
    /// that were still running are marked failed("interrupted").
    pub fn open(data_dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let store = SessionStore::open(data_dir)?;
        let mut sessions = HashMap::new();
        for id in store.list_sessions()? {
            let mut session = match store.load_session(&id) {
                Ok(s) => s,
                Err(e) => {
                    tracing::warn!(%id, "skipping unreadable session: {e}");
                    continue;
                }
            };
            if !session.status.is_terminal() {
                session.status = SessionStatus::Failed(INTERRUPTED.into());
                store.save_session(&session)?;
            }
            let handle = Handle::new(session.clone(), None);
            {
                let mut st = handle.lock();
                for r in &session.records {
                    st.push(EventBody::Record { record: r.clone() });
                }
                st.push(EventBody::Status {
                    status: session.status.clone(),
                });
                st.finished = true;
            }
            sessions.insert(id, Arc::new(handle));
        }
        tracing::info!(count = sessions.len(), root = %store.root().display(), "sessions recovered");
        Ok(Self {
            store,
            sessions: Mutex::new(sessions),
        })
    }

    pub fn store(&self) -> &SessionStore {
        &self.store
    }

    fn sessions(&self) -> MutexGuard<'_, HashMap<String, Arc<Handle>>> {
        self.sessions.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub(crate) fn handle(&self, id: &str) -> Result<Arc<Handle>, ApiError> {
        self.sessions().get(id).cloned().ok_or_else(|| ApiError::not_found(id))
    }

    /// Validates the request, describes the tool and starts the loop on a
    /// worker thread. Blocks for the describe call.
    pub fn create(self: &Arc<Self>, req: CreateSession) -> Result<String, ApiError> {
        req.config.validate().map_err(|e| ApiError::invalid(e.to_string()))?;
        if req.goal.trim().is_empty() {
            return Err(ApiError::invalid("goal must not be empty"));
        }
        let tool = ava_proto::open_tool(&req.tool, req.data.as_deref()).map_err(|e| match e {
            ava_core::tool::ToolError::Unreachable(m) => ApiError::new(502, "tool_unreachable", m),
            other => ApiError::invalid(other.to_string()),
        })?;
        let descriptor = describe_tool(tool.as_ref()).map_err(|e| match e {
            LoopError::ToolUnreachable(m) => ApiError::new(502, "tool_unreachable", m),
            other => ApiError::new(502, "tool_error", other.to_string()),
        })?;
        let perception = build_perception(&req.config, &descriptor).map_err(|e| ApiError::invalid(e.to_string()))?;
        let planner =
            build_planner(&req.config, &descriptor.param_space).map_err(|e| ApiError::invalid(e.to_string()))?;

        let id = req
            .session_id
            .clone()
            .unwrap_or_else(|| uuid::Uuid::new_v4().simple().to_string());
        let snapshot = Session::new(id.clone(), req.goal.clone(), req.config.clone(), descriptor.name.clone());
        let handle = Arc::new(Handle::new(snapshot, Some(descriptor)));
        {
            let mut sessions = self.sessions();
            if sessions.contains_key(&id) {
                return Err(ApiError::new(409, "session_exists", format!("session `{id}` already exists")));
            }
            let st = handle.lock();
            self.store.save_session(&st.persisted())?;
            drop(st);
            sessions.insert(id.clone(), handle.clone());
        }
        {
            let mut st = handle.lock();
            st.push(EventBody::Status {
                status: SessionStatus::Running,
            });
            handle.publish(&st);
        }

        let registry = self.clone();
        let options = RunOptions {
            deterministic: req.deterministic,
            session_id: Some(id.clone()),
            fields: req.fields.clone(),
            ..RunOptions::default()
        };
        std::thread::Builder::new()
            .name(format!("session-{}", &id[..id.len().min(8)]))
            .spawn(move || registry.work(handle, req, tool, perception, planner, options))
            .map_err(|e| ApiError::new(500, "spawn", e.to_string()))?;
        tracing::info!(%id, "session started");
        Ok(id)
    }

    fn work(
        &self,
        handle: Arc<Handle>,
        req: CreateSession,
        tool: Arc<dyn VisTool>,
        mut perception: Box<dyn ava_core::perception::Perception>,
        mut planner: Box<dyn ava_core::planners::Planner>,
        options: RunOptions,
    ) {
        let store = &self.store;
        let mut observer = |cp: Checkpoint<'_>| -> Directive {
            match cp {
                Checkpoint::BeforeRender { .. } => {
                    let mut st = handle.lock();
                    loop {
                        if st.abort {
                            st.parked = false;
                            return Directive {
                                abort: Some(ABORTED.into()),
                                ..Directive::default()
                            };
                        }
                        if st.status != SessionStatus::Paused {
                            break;
                        }
                        if !st.parked {
                            st.parked = true;
                            handle.publish(&st);
                        }
                        st = handle.wait(st);
                    }
                    st.parked = false;
                    Directive {
                        abort: None,
                        override_params: st.pending_override.take(),
                        amend_goal: st.pending_goal.take(),
                    }
                }
                Checkpoint::Recorded { record, session } => {
                    let mut st = handle.lock();
                    st.snapshot = session.clone();
                    st.push(EventBody::Record { record: record.clone() });
                    if let Err(e) = store.save_session(&st.persisted()) {
                        tracing::error!(id = %handle.id, "saving session: {e}");
                    }
                    handle.publish(&st);
                    Directive::default()
                }
            }
        };
        let mut images = store;
        let result = run_loop(
            &req.config,
            &req.goal,
            tool.as_ref(),
            perception.as_mut(),
            planner.as_mut(),
            &mut images,
            &options,
            &mut observer,
        );
        let mut st = handle.lock();
        let session = match result {
            Ok(s) => s,
            Err(e) => {
                let reason = e.to_string();
                e.into_partial().unwrap_or_else(|| {
                    let mut s = st.snapshot.clone();
                    s.status = SessionStatus::Failed(reason);
                    s
                })
            }
        };
        tracing::info!(id = %handle.id, status = %session.status, steps = session.records.len(), "session finished");
        st.status = session.status.clone();
        st.snapshot = session;
        st.finished = true;
        st.parked = false;
        let status = st.status.clone();
        st.push(EventBody::Status { status });
        if let Err(e) = store.save_session(&st.persisted()) {
            tracing::error!(id = %handle.id, "saving session: {e}");
        }
        handle.publish(&st);
    }

    /// Applies a command at the next iteration boundary. Pause returns once
    /// the worker is parked, abort once it has stopped, so no render happens
    /// after either acknowledgement.
    pub fn control(&self, id: &str, command: ControlCommand) -> Result<SessionStatus, ApiError> {
        let handle = self.handle(id)?;
        let mut st = handle.lock();
        let verb = command.verb();
        if st.finished || st.status.is_terminal() {
            return Err(ApiError::conflict(&st.status, verb));
        }
        match command {
            ControlCommand::Pause => {
                if st.status != SessionStatus::Running {
                    return Err(ApiError::conflict(&st.status, verb));
                }
                st.status = SessionStatus::Paused;
                st.push(EventBody::Status {
                    status: SessionStatus::Paused,
                });
                handle.publish(&st);
                while !st.parked && !st.finished {
                    st = handle.wait(st);
                }
            }
            ControlCommand::Resume => {
                if st.status != SessionStatus::Paused {
                    return Err(ApiError::conflict(&st.status, verb));
                }
                st.status = SessionStatus::Running;
                st.push(EventBody::Status {
                    status: SessionStatus::Running,
                });
                handle.publish(&st);
            }
            ControlCommand::Abort => {
                st.abort = true;
                handle.publish(&st);
                while !st.finished {
                    st = handle.wait(st);
                }
            }
            ControlCommand::OverrideParams { params } => {
                if st.status != SessionStatus::Paused {
                    return Err(ApiError::conflict(&st.status, verb));
                }
                if let Some(space) = handle.space.as_ref().map(|d| &d.param_space) {
                    if let Some(name) = params.values.keys().find(|n| space.get(n).is_none()) {
                        return Err(ApiError::invalid(format!("unknown parameter `{name}`")));
                    }
                }
                if params.is_empty() {
                    return Err(ApiError::invalid("override needs at least one parameter"));
                }
                st.pending_override = Some(params);
            }
            ControlCommand::AmendGoal { goal } => {
                if goal.trim().is_empty() {
                    return Err(ApiError::invalid("amended goal must not be empty"));
                }
                st.pending_goal = Some(goal);
            }
        }
        Ok(st.status.clone())
    }

    /// The latest snapshot, with the live status.
    pub fn session(&self, id: &str) -> Result<Session, ApiError> {
        Ok(self.handle(id)?.lock().persisted())
    }

    pub fn list(&self) -> Vec<SessionSummary> {
        let handles: Vec<Arc<Handle>> = self.sessions().values().cloned().collect();
        let mut out: Vec<SessionSummary> = handles
            .iter()
            .map(|h| {
                let st = h.lock();
                SessionSummary {
                    id: h.id.clone(),
                    goal: st.snapshot.goal.clone(),
                    tool: st.snapshot.tool.clone(),
                    status: st.status.clone(),
                    steps: st.snapshot.records.len(),
                }
            })
            .collect();
        out.sort_by(|a, b| a.id.cmp(&b.id));
        out
    }

    /// Blocks until the session reaches a terminal status.
    pub fn wait_finished(&self, id: &str) -> Result<Session, ApiError> {
        let handle = self.handle(id)?;
        let mut st = handle.lock();
        while !st.finished {
            st = handle.wait(st);
        }
        Ok(st.persisted())
    }

    pub fn image(&self, r: &ImageRef) -> Result<Option<Png>, ApiError> {
        Ok(self.store.get_image(r)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn control_command_wire_format() {
        let c: ControlCommand =
            serde_json::from_str(r#"{"kind": "override_params", "params": {"x": 1.5}}"#).unwrap();
        assert_eq!(
            c,
            ControlCommand::OverrideParams {
                params: ParamVector::new().with("x", 1.5)
            }
        );
        let c: ControlCommand = serde_json::from_str(r#"{"kind": "amend_goal", "goal": "g"}"#).unwrap();
        assert_eq!(c, ControlCommand::AmendGoal { goal: "g".into() });
        assert_eq!(serde_json::to_string(&ControlCommand::Pause).unwrap(), r#"{"kind":"pause"}"#);
    }

    #[test]
    fn event_wire_format() {
        let e = SessionEvent {
            seq: 3,
            body: EventBody::Status {
                status: SessionStatus::Failed("aborted".into()),
            },
        };
        let v: serde_json::Value = serde_json::to_value(&e).unwrap();
        assert_eq!(v["seq"], 3);
        assert_eq!(v["type"], "status");
        assert_eq!(v["status"]["state"], "failed");
        assert_eq!(v["status"]["reason"], "aborted");
        assert!(e.is_terminal());
        assert_eq!(serde_json::from_value::<SessionEvent>(v).unwrap(), e);
    }
}

use std::io::{BufRead, BufReader, Read};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use ava_core::params::ParamVector;
use ava_core::session::{Session, SessionStatus};
use ava_core::store::SessionStore;
use ava_core::tool::{RenderOutput, ToolDescriptor, ToolError, VisTool};
use ava_core::AgentConfig;
use ava_proto::{serve_tool, MockDrTool, ToolServer};
use ava_service::{serve, EventBody, Registry, ServiceServer, SessionEvent};
use serde_json::{json, Value};

/// mock-dr with a render delay, a render counter and an optional gate that
/// holds renders from a given index on until released.
struct SlowDr {
    inner: MockDrTool,
    delay: Duration,
    renders: AtomicUsize,
    gate: Mutex<Option<usize>>,
    opened: Condvar,
}

impl SlowDr {
    fn new(delay_ms: u64, gate_at: Option<usize>) -> Arc<Self> {
        Arc::new(Self {
            inner: MockDrTool::single(7),
            delay: Duration::from_millis(delay_ms),
            renders: AtomicUsize::new(0),
            gate: Mutex::new(gate_at),
            opened: Condvar::new(),
        })
    }

    fn renders(&self) -> usize {
        self.renders.load(Ordering::SeqCst)
    }

    fn release(&self) {
        *self.gate.lock().unwrap() = None;
        self.opened.notify_all();
    }
}

impl VisTool for SlowDr {
    fn describe(&self) -> Result<ToolDescriptor, ToolError> {
        self.inner.describe()
    }

    fn render(&self, params: &ParamVector) -> Result<RenderOutput, ToolError> {
        let index = self.renders.fetch_add(1, Ordering::SeqCst);
        let mut gate = self.gate.lock().unwrap();
        while gate.is_some_and(|g| index >= g) {
            gate = self.opened.wait(gate).unwrap();
        }
        drop(gate);
        std::thread::sleep(self.delay);
        self.inner.render(params)
    }
}

struct Fixture {
    _dir: tempfile::TempDir,
    service: ServiceServer,
    _tool: ToolServer,
    slow: Arc<SlowDr>,
    tool_url: String,
}

fn fixture(delay_ms: u64, gate_at: Option<usize>) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let registry = Arc::new(Registry::open(dir.path()).unwrap());
    let service = serve(registry, "127.0.0.1:0", None).unwrap();
    let slow = SlowDr::new(delay_ms, gate_at);
    let tool = serve_tool(slow.clone(), "127.0.0.1:0").unwrap();
    let tool_url = tool.url();
    Fixture {
        _dir: dir,
        service,
        _tool: tool,
        slow,
        tool_url,
    }
}

fn config(max_iterations: u32) -> Value {
    json!({
        "task": "embedding tuning",
        "planner_kind": "llm_centric",
        "perception_kind": "oracle",
        "max_iterations": max_iterations,
    })
}

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder().http_status_as_error(false).build().into()
}

fn post(url: &str, body: &Value) -> (u16, Value) {
    let mut resp = agent()
        .post(url)
        .header("Content-Type", "application/json")
        .send(serde_json::to_vec(body).unwrap().as_slice())
        .unwrap();
    let status = resp.status().as_u16();
    (status, serde_json::from_str(&resp.body_mut().read_to_string().unwrap()).unwrap())
}

fn get(url: &str) -> (u16, Vec<u8>) {
    let mut resp = agent().get(url).call().unwrap();
    let status = resp.status().as_u16();
    let mut bytes = Vec::new();
    resp.body_mut().as_reader().read_to_end(&mut bytes).unwrap();
    (status, bytes)
}

fn create(f: &Fixture, max_iterations: u32) -> String {
    let (status, body) = post(
        &format!("{}/sessions", f.service.url()),
        &json!({"config": config(max_iterations), "goal": "separate the clusters", "tool": f.tool_url}),
    );
    assert_eq!(status, 201, "{body}");
    body["id"].as_str().unwrap().to_string()
}

fn session(f: &Fixture, id: &str) -> Session {
    let (status, bytes) = get(&format!("{}/sessions/{id}", f.service.url()));
    assert_eq!(status, 200);
    serde_json::from_slice(&bytes).unwrap()
}

fn control(f: &Fixture, id: &str, command: Value) -> (u16, Value) {
    post(&format!("{}/sessions/{id}/control", f.service.url()), &command)
}

fn wait_for(mut cond: impl FnMut() -> bool) {
    let deadline = Instant::now() + Duration::from_secs(30);
    while !cond() {
        assert!(Instant::now() < deadline, "timed out");
        std::thread::sleep(Duration::from_millis(10));
    }
}

/// Reads server-sent events one at a time.
struct EventReader {
    lines: std::io::Lines<BufReader<Box<dyn Read + Send>>>,
}

impl EventReader {
    fn open(f: &Fixture, id: &str) -> Self {
        let resp = agent().get(&format!("{}/sessions/{id}/events", f.service.url())).call().unwrap();
        assert_eq!(resp.status().as_u16(), 200);
        let reader: Box<dyn Read + Send> = Box::new(resp.into_body().into_reader());
        Self {
            lines: BufReader::new(reader).lines(),
        }
    }

    fn next(&mut self) -> Option<(String, SessionEvent)> {
        let (mut name, mut data) = (String::new(), String::new());
        for line in self.lines.by_ref() {
            let line = line.ok()?;
            if line.is_empty() {
                if !data.is_empty() {
                    return Some((name, serde_json::from_str(&data).unwrap()));
                }
                continue;
            }
            if let Some(v) = line.strip_prefix("event:") {
                name = v.trim().to_string();
            } else if let Some(v) = line.strip_prefix("data:") {
                data.push_str(v.trim_start());
            }
        }
        None
    }

    fn rest(mut self) -> Vec<SessionEvent> {
        std::iter::from_fn(|| self.next().map(|(_, e)| e)).collect()
    }
}

fn steps(events: &[SessionEvent]) -> Vec<u32> {
    events
        .iter()
        .filter_map(|e| match &e.body {
            EventBody::Record { record } => Some(record.step),
            _ => None,
        })
        .collect()
}

#[test]
fn completed_session_replays_then_closes() {
    let f = fixture(0, None);
    let id = create(&f, 15);
    let done = f.service.registry().wait_finished(&id).unwrap();
    assert!(done.status.is_terminal());
    assert_eq!(session(&f, &id), done);

    let events = EventReader::open(&f, &id).rest();
    assert_eq!(events.first().map(|e| &e.body), Some(&EventBody::Status { status: SessionStatus::Running }));
    assert!(events.last().unwrap().is_terminal());
    assert_eq!(steps(&events), (0..done.records.len() as u32).collect::<Vec<_>>());
    let seqs: Vec<u64> = events.iter().map(|e| e.seq).collect();
    assert_eq!(seqs, (0..events.len() as u64).collect::<Vec<_>>());

    let r = &done.records[0].image_ref;
    let (status, png) = get(&format!("{}/images/{}", f.service.url(), r.0));
    assert_eq!(status, 200);
    assert_eq!(ava_core::image::ImageRef::of(&png), *r);
    assert_eq!(get(&format!("{}/images/{}", f.service.url(), "0".repeat(64))).0, 404);
}

#[test]
fn late_subscriber_gets_replay_before_live_events() {
    let f = fixture(0, Some(3));
    let id = create(&f, 15);
    wait_for(|| session(&f, &id).records.len() == 3);
    let mut reader = EventReader::open(&f, &id);
    let mut replayed = Vec::new();
    for _ in 0..4 {
        replayed.push(reader.next().unwrap().1);
    }
    assert_eq!(steps(&replayed), [0, 1, 2]);
    f.slow.release();
    let live = reader.rest();
    assert!(live.last().unwrap().is_terminal());
    let all: Vec<SessionEvent> = replayed.into_iter().chain(live).collect();
    let s = steps(&all);
    assert_eq!(s, (0..s.len() as u32).collect::<Vec<_>>());
    assert!(s.len() > 3);
}

#[test]
fn pause_resume_override_and_amend() {
    let f = fixture(80, None);
    let id = create(&f, 15);
    wait_for(|| !session(&f, &id).records.is_empty());

    let (status, body) = control(&f, &id, json!({"kind": "override_params", "params": {"perplexity": 20}}));
    assert_eq!(status, 409, "{body}");
    assert_eq!(body["error"]["code"], "invalid_transition");

    let (status, body) = control(&f, &id, json!({"kind": "pause"}));
    assert_eq!(status, 200);
    assert_eq!(body["status"]["state"], "paused");
    let at_pause = f.slow.renders();
    std::thread::sleep(Duration::from_millis(400));
    assert_eq!(f.slow.renders(), at_pause);
    let paused = session(&f, &id);
    assert_eq!(paused.status, SessionStatus::Paused);
    let next_step = paused.records.len();

    assert_eq!(control(&f, &id, json!({"kind": "pause"})).0, 409);
    let (status, _) = control(&f, &id, json!({"kind": "override_params", "params": {"bogus": 1}}));
    assert_eq!(status, 422);
    let (status, _) = control(&f, &id, json!({"kind": "amend_goal", "goal": "  "}));
    assert_eq!(status, 422);
    assert_eq!(control(&f, &id, json!({"kind": "override_params", "params": {"perplexity": 64}})).0, 200);
    assert_eq!(control(&f, &id, json!({"kind": "amend_goal", "goal": "tight clusters"})).0, 200);
    assert_eq!(f.slow.renders(), at_pause);

    let (status, body) = control(&f, &id, json!({"kind": "resume"}));
    assert_eq!(status, 200);
    assert_eq!(body["status"]["state"], "running");
    let done = f.service.registry().wait_finished(&id).unwrap();
    let overridden = &done.records[next_step];
    assert_eq!(overridden.params.number("perplexity"), Some(64.0));
    assert!(overridden.plan.contains("operator override"));
    assert_eq!(done.goal, "tight clusters");
    assert_eq!(control(&f, &id, json!({"kind": "resume"})).0, 409);
}

#[test]
fn abort_is_terminal_and_closes_the_stream() {
    let f = fixture(60, None);
    let id = create(&f, 15);
    wait_for(|| !session(&f, &id).records.is_empty());
    let (status, body) = control(&f, &id, json!({"kind": "abort"}));
    assert_eq!(status, 200);
    assert_eq!(body["status"], json!({"state": "failed", "reason": "aborted"}));
    let events = EventReader::open(&f, &id).rest();
    assert_eq!(
        events.last().unwrap().body,
        EventBody::Status {
            status: SessionStatus::Failed("aborted".into())
        }
    );
    assert_eq!(control(&f, &id, json!({"kind": "abort"})).0, 409);
}

#[test]
fn create_errors() {
    let f = fixture(0, None);
    let url = format!("{}/sessions", f.service.url());
    let (status, _) = post(&url, &json!({"config": config(0), "goal": "g", "tool": f.tool_url}));
    assert_eq!(status, 422);
    let (status, _) = post(&url, &json!({"goal": "g"}));
    assert_eq!(status, 422);
    let (status, _) = post(&url, &json!({"config": config(5), "goal": "g", "tool": "builtin:nope"}));
    assert_eq!(status, 422);

    let dead = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        format!("http://{}", l.local_addr().unwrap())
    };
    let (status, body) = post(&url, &json!({"config": config(5), "goal": "g", "tool": dead}));
    assert_eq!(status, 502);
    assert_eq!(body["error"]["code"], "tool_unreachable");
    assert!(f.service.registry().list().is_empty());
    assert!(f.service.registry().store().list_sessions().unwrap().is_empty());

    assert_eq!(get(&format!("{}/sessions/nope/events", f.service.url())).0, 404);
    assert_eq!(get(&format!("{}/sessions/nope", f.service.url())).0, 404);
    let (status, _) = control(&f, "nope", json!({"kind": "pause"}));
    assert_eq!(status, 404);
}

#[test]
fn builtin_tool_by_name() {
    let f = fixture(0, None);
    let (status, body) = post(
        &format!("{}/sessions", f.service.url()),
        &json!({"config": config(15), "goal": "g", "tool": "builtin:mock-dr", "deterministic": true}),
    );
    assert_eq!(status, 201, "{body}");
    let id = body["id"].as_str().unwrap();
    let done = f.service.registry().wait_finished(id).unwrap();
    assert!(done.records.iter().all(|r| r.wall_time_ms == 0));
}

#[test]
fn restart_marks_running_sessions_interrupted() {
    let dir = tempfile::tempdir().unwrap();
    let store = SessionStore::open(dir.path()).unwrap();
    let config: AgentConfig = serde_json::from_value(config(5)).unwrap();
    let mut running = Session::new("was-running", "g", config.clone(), "mock-dr");
    running.status = SessionStatus::Paused;
    store.save_session(&running).unwrap();
    let mut finished = Session::new("was-done", "g", config, "mock-dr");
    finished.status = SessionStatus::DoneBudgetExhausted;
    store.save_session(&finished).unwrap();

    let registry = Arc::new(Registry::open(dir.path()).unwrap());
    let s = registry.session("was-running").unwrap();
    assert_eq!(s.status, SessionStatus::Failed("interrupted".into()));
    assert_eq!(store.load_session("was-running").unwrap().status, s.status);
    assert_eq!(registry.session("was-done").unwrap().status, SessionStatus::DoneBudgetExhausted);
    let err = registry.control("was-done", ava_service::ControlCommand::Pause).unwrap_err();
    assert_eq!(err.status, 409);

    let service = serve(registry, "127.0.0.1:0", None).unwrap();
    let (status, bytes) = get(&format!("{}/sessions", service.url()));
    assert_eq!(status, 200);
    let list: Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(list.as_array().unwrap().len(), 2);
}

#[test]
fn static_files_are_served_from_the_ui_directory() {
    let dir = tempfile::tempdir().unwrap();
    let ui = tempfile::tempdir().unwrap();
    std::fs::write(ui.path().join("index.html"), "<html></html>").unwrap();
    let registry = Arc::new(Registry::open(dir.path()).unwrap());
    let service = serve(registry, "127.0.0.1:0", Some(ui.path().to_path_buf())).unwrap();
    assert_eq!(get(&format!("{}/", service.url())), (200, b"<html></html>".to_vec()));
    assert_eq!(get(&format!("{}/../secret", service.url())).0, 404);
}

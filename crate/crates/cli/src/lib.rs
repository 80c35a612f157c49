//! The `ava` command line.
//!
//! Exit codes: 0 on success, 1 on a domain error (including a run that ends
//! failed), 2 on a usage error.

use std::error::Error;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ava_bench::{
    run_benchmark, BenchPerception, BenchReport, CaseParams, FixedAnswer, GroundTruthStub, ModelPerception,
    PhantomSpec, RunOptions as BenchOptions, Task, Transcript,
};
use ava_core::agent::{build_perception, describe_tool, run_loop, RunOptions};
use ava_core::config::{AgentConfig, PerceptionKind, PlannerKind};
use ava_core::params::{ParamValue, ParamVector};
use ava_core::perception::ChatClient;
use ava_core::planners::build_planner;
use ava_core::session::SessionStatus;
use ava_core::store::SessionStore;
use clap::{Args, Parser, Subcommand};
use serde_json::{Map, Value};

type CliResult = Result<(), Box<dyn Error>>;

#[derive(Debug, Parser)]
#[command(name = "ava", version, about = "Autonomous visualization agent")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an agent session to completion.
    Run(RunArgs),
    /// Render once with the given parameters.
    Render(RenderArgs),
    /// Write a seeded volume phantom (raw file plus sidecar and masks).
    Phantom(PhantomArgs),
    /// Run perception benchmark tasks and write a report.
    Bench(BenchArgs),
    /// Serve the session API.
    Serve(ServeArgs),
    /// Expose a built-in tool over the wire protocol.
    ToolServe(ToolServeArgs),
}

/// Every config-file key has a flag; flags win.
#[derive(Debug, Args, Default)]
pub struct ConfigFlags {
    /// Agent config JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long)]
    pub goal_template: Option<String>,
    #[arg(long)]
    pub approach: Option<String>,
    /// Replaces the config's constraint list; repeatable.
    #[arg(long = "constraint")]
    pub constraints: Vec<String>,
    #[arg(long, visible_alias = "planner", value_parser = parse_planner)]
    pub planner_kind: Option<PlannerKind>,
    #[arg(long, visible_alias = "perception", value_parser = parse_perception)]
    pub perception_kind: Option<PerceptionKind>,
    #[arg(long)]
    pub max_iterations: Option<u32>,
    #[arg(long)]
    pub stop_threshold: Option<f64>,
    /// KEY=VALUE, VALUE parsed as JSON when possible; repeatable.
    #[arg(long = "planner-param", value_parser = parse_kv)]
    pub planner_params: Vec<(String, Value)>,
    /// KEY=VALUE, VALUE parsed as JSON when possible; repeatable.
    #[arg(long = "perception-param", value_parser = parse_kv)]
    pub perception_params: Vec<(String, Value)>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub config: ConfigFlags,
    #[arg(long)]
    pub goal: String,
    /// builtin:volume, builtin:scatter, builtin:mock-dr, builtin:mock-dr-5 or an http(s) URL.
    #[arg(long)]
    pub tool: String,
    /// Data file for the tool (volume raw file or points CSV).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Where sessions and images are stored; defaults to $AVA_DATA_DIR or ./ava-data.
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Also write the session JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub session_id: Option<String>,
    /// Record wall times even in oracle mode.
    #[arg(long)]
    pub wall_time: bool,
    /// KEY=VALUE binding for the role prompt template; repeatable.
    #[arg(long = "field", value_parser = parse_field)]
    pub fields: Vec<(String, String)>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub tool: String,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// NAME=VALUE; unset parameters take the middle of their range.
    #[arg(long = "param", value_parser = parse_kv)]
    pub params: Vec<(String, Value)>,
    #[arg(long)]
    pub out: PathBuf,
    /// Write the tool's measurements as JSON here.
    #[arg(long)]
    pub stats: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    /// Raw output path; the sidecar and masks go next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 32)]
    pub size: usize,
    #[arg(long, value_parser = parse_band, default_value = "60,85")]
    pub shell: (u16, u16),
    #[arg(long, value_parser = parse_band, default_value = "100,125")]
    pub inner: (u16, u16),
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Task name (dashes or underscores) or `all`; repeatable.
    #[arg(long = "task", default_value = "all")]
    pub tasks: Vec<String>,
    #[arg(long, default_value_t = ava_bench::DEFAULT_TRIALS)]
    pub trials: u32,
    /// stub:exact, stub:fixed:TEXT or llm.
    #[arg(long, default_value = "stub:exact")]
    pub perception: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write report.json, report.txt, transcripts.jsonl and images here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Rebuild the report from DIR/transcripts.jsonl without generating cases.
    #[arg(long, conflicts_with = "out")]
    pub rescore: Option<PathBuf>,
    #[arg(long)]
    pub clusters: Option<u32>,
    #[arg(long)]
    pub outliers: Option<u32>,
    #[arg(long)]
    pub spread: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub edge_probability: Option<f64>,
    #[arg(long)]
    pub peak_opacity: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Static files (the web dashboard) served under `/`.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ToolServeArgs {
    #[arg(long)]
    pub tool: String,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = 9000)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
}

fn parse_kv(s: &str) -> Result<(String, Value), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected KEY=VALUE, got `{s}`"))?;
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.trim().to_string(), value))
}

fn parse_field(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected KEY=VALUE, got `{s}`"))?;
    Ok((k.trim().to_string(), v.to_string()))
}

fn parse_band(s: &str) -> Result<(u16, u16), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected LO,HI, got `{s}`"))?;
    let lo = a.trim().parse().map_err(|e| format!("{a}: {e}"))?;
    let hi = b.trim().parse().map_err(|e| format!("{b}: {e}"))?;
    Ok((lo, hi))
}

fn parse_planner(s: &str) -> Result<PlannerKind, String> {
    serde_json::from_value(Value::String(s.replace('-', "_"))).map_err(|_| {
        format!("unknown planner `{s}` (heuristic_tf, halving_opacity, llm_centric)")
    })
}

fn parse_perception(s: &str) -> Result<PerceptionKind, String> {
    serde_json::from_value(Value::String(s.to_string())).map_err(|_| format!("unknown perception `{s}` (oracle, llm)"))
}

fn parse_task(s: &str) -> Result<Task, Box<dyn Error>> {
    Ok(s.replace('-', "_").parse::<Task>()?)
}

/// Overlays flags on the config file and validates the result.
pub fn resolve_config(flags: &ConfigFlags) -> Result<AgentConfig, Box<dyn Error>> {
    let mut obj: Map<String, Value> = match &flags.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            match serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))? {
                Value::Object(m) => m,
                _ => return Err(format!("{}: expected a JSON object", path.display()).into()),
            }
        }
        None => Map::new(),
    };
    let mut set = |k: &str, v: Value| {
        obj.insert(k.to_string(), v);
    };
    if let Some(v) = &flags.scenario {
        set("scenario", v.clone().into());
    }
    if let Some(v) = &flags.task {
        set("task", v.clone().into());
    }
    if let Some(v) = &flags.goal_template {
        set("goal_template", v.clone().into());
    }
    if let Some(v) = &flags.approach {
        set("approach", v.clone().into());
    }
    if !flags.constraints.is_empty() {
        set("constraints", flags.constraints.clone().into());
    }
    if let Some(v) = flags.planner_kind {
        set("planner_kind", v.name().into());
    }
    if let Some(v) = flags.max_iterations {
        set("max_iterations", v.into());
    }
    if let Some(v) = flags.stop_threshold {
        set("stop_threshold", v.into());
    }
    let switched_perception = flags
        .perception_kind
        .filter(|k| obj.get("perception_kind").and_then(Value::as_str) != Some(k.name()));
    if let Some(k) = flags.perception_kind {
        obj.insert("perception_kind".into(), k.name().into());
    }
    for (key, pairs) in [("planner_params", &flags.planner_params), ("perception_params", &flags.perception_params)] {
        let entry = obj.entry(key).or_insert_with(|| Value::Object(Map::new()));
        let Value::Object(m) = entry else {
            return Err(format!("`{key}` must be an object").into());
        };
        if key == "perception_params" {
            if let Some(kind) = switched_perception {
                // Parameters of the other perception kind no longer apply.
                m.retain(|k, _| {
                    let keep = kind.declared_params().contains(&k.as_str());
                    if !keep {
                        tracing::warn!("dropping perception parameter `{k}` for {}", kind.name());
                    }
                    keep
                });
            }
        }
        for (k, v) in pairs {
            m.insert(k.clone(), v.clone());
        }
    }
    let config: AgentConfig = serde_json::from_value(Value::Object(obj))?;
    config.validate()?;
    Ok(config)
}

fn data_dir(flag: &Option<PathBuf>) -> PathBuf {
    flag.clone().unwrap_or_else(ava_service::data_dir_from_env)
}

fn to_params(pairs: &[(String, Value)]) -> Result<ParamVector, Box<dyn Error>> {
    let mut p = ParamVector::new();
    for (k, v) in pairs {
        let value = match v {
            Value::Number(n) => ParamValue::Number(n.as_f64().ok_or("bad number")?),
            Value::String(s) => ParamValue::Choice(s.clone()),
            other => return Err(format!("parameter `{k}`: unsupported value {other}").into()),
        };
        p.set(k.clone(), value);
    }
    Ok(p)
}

fn cmd_run(args: RunArgs, out: &mut dyn std::io::Write) -> Result<i32, Box<dyn Error>> {
    let config = resolve_config(&args.config)?;
    let tool = ava_proto::open_tool(&args.tool, args.data.as_deref())?;
    let descriptor = describe_tool(tool.as_ref())?;
    let mut perception = build_perception(&config, &descriptor)?;
    let mut planner = build_planner(&config, &descriptor.param_space)?;
    let store = SessionStore::open(data_dir(&args.data_dir))?;
    let options = RunOptions {
        deterministic: config.perception_kind == PerceptionKind::Oracle && !args.wall_time,
        session_id: args.session_id.clone(),
        fields: args.fields.iter().cloned().collect(),
        ..RunOptions::default()
    };
    let mut images = &store;
    let session = match run_loop(
        &config,
        &args.goal,
        tool.as_ref(),
        perception.as_mut(),
        planner.as_mut(),
        &mut images,
        &options,
        &mut (),
    ) {
        Ok(s) => s,
        Err(e) => {
            let msg = e.to_string();
            match e.into_partial() {
                Some(s) => s,
                None => return Err(msg.into()),
            }
        }
    };
    let path = store.save_session(&session)?;
    if let Some(o) = &args.out {
        fs::copy(&path, o).map_err(|e| format!("{}: {e}", o.display()))?;
    }
    writeln!(out, "session {} {} after {} steps", session.id, session.status, session.records.len())?;
    let shown = session.final_params.as_ref().or(session.records.last().map(|r| &r.params));
    if let Some(p) = shown {
        let label = if session.final_params.is_some() { "final" } else { "last" };
        writeln!(out, "{label} params: {p}")?;
    }
    writeln!(out, "written to {}", args.out.as_deref().unwrap_or(&path).display())?;
    Ok(if matches!(session.status, SessionStatus::Failed(_)) { 1 } else { 0 })
}

fn cmd_render(args: RenderArgs, out: &mut dyn std::io::Write) -> CliResult {
    let tool = ava_proto::open_tool(&args.tool, args.data.as_deref())?;
    let d = tool.describe()?;
    let given = to_params(&args.params)?;
    let center = d.param_space.center();
    let (params, notes) = d.param_space.clamp(&given, Some(&center));
    for n in notes {
        writeln!(out, "note: {n}")?;
    }
    let rendered = tool.render(&params)?;
    fs::write(&args.out, rendered.png.bytes()).map_err(|e| format!("{}: {e}", args.out.display()))?;
    writeln!(out, "rendered {} with {params} to {}", d.name, args.out.display())?;
    if let Some(path) = &args.stats {
        let json = serde_json::to_string_pretty(&rendered.stats)?;
        fs::write(path, json + "\n").map_err(|e| format!("{}: {e}", path.display()))?;
    }
    Ok(())
}

fn cmd_phantom(args: PhantomArgs, out: &mut dyn std::io::Write) -> CliResult {
    let mut spec = PhantomSpec::nested(args.size, args.shell, args.inner);
    spec.seed = args.seed;
    let vol = ava_bench::gen_volume_phantom(&spec)?;
    let sidecar = ava_render::volren::write_volume(&args.out, &vol)?;
    writeln!(
        out,
        "wrote {}³ phantom with structures {} to {} ({})",
        args.size,
        vol.structures().join(", "),
        args.out.display(),
        sidecar.display()
    )?;
    Ok(())
}

fn bench_perception(spec: &str) -> Result<Box<dyn BenchPerception>, Box<dyn Error>> {
    Ok(match spec {
        "stub:exact" => Box::new(GroundTruthStub),
        "llm" => Box::new(ModelPerception {
            backend: Box::new(ChatClient::from_env()),
            label: "llm".into(),
        }),
        s => match s.strip_prefix("stub:fixed:") {
            Some(text) => Box::new(FixedAnswer(text.to_string())),
            None => return Err(format!("unknown bench perception `{s}` (stub:exact, stub:fixed:TEXT, llm)").into()),
        },
    })
}

fn write_lines(path: &Path, lines: impl IntoIterator<Item = String>) -> CliResult {
    let mut text = String::new();
    for l in lines {
        text.push_str(&l);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn cmd_bench(args: BenchArgs, out: &mut dyn std::io::Write) -> CliResult {
    if let Some(dir) = &args.rescore {
        let path = dir.join("transcripts.jsonl");
        let text = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        let transcripts = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str::<Transcript>)
            .collect::<Result<Vec<_>, _>>()?;
        let report = BenchReport::from_transcripts("rescored", &transcripts);
        write!(out, "{}", report.render_text())?;
        return Ok(());
    }
    let mut tasks = Vec::new();
    for t in &args.tasks {
        if t == "all" {
            tasks.extend(Task::ALL);
        } else {
            tasks.push(parse_task(t)?);
        }
    }
    tasks.dedup();
    let perception = bench_perception(&args.perception)?;
    let options = BenchOptions {
        base_seed: args.seed,
        params: CaseParams {
            clusters: args.clusters,
            outliers: args.outliers,
            spread: args.spread,
            points: args.points,
            nodes: args.nodes,
            edge_probability: args.edge_probability,
            peak_opacity: args.peak_opacity,
            ..CaseParams::default()
        },
    };
    let mut rows = Vec::new();
    let mut transcripts = Vec::new();
    let mut images = Vec::new();
    for task in tasks {
        let (row, trials) = run_benchmark(task, args.trials, perception.as_ref(), &options)?;
        tracing::info!(%task, rate = row.success_rate, "task finished");
        rows.push(row);
        for t in trials {
            images.extend(t.images);
            transcripts.push(t.transcript);
        }
    }
    let report = BenchReport {
        perception: perception.name(),
        rows,
    };
    let text = report.render_text();
    write!(out, "{text}")?;
    if let Some(dir) = &args.out {
        let img_dir = dir.join("images");
        fs::create_dir_all(&img_dir).map_err(|e| format!("{}: {e}", img_dir.display()))?;
        for png in &images {
            let p = img_dir.join(format!("{}.png", png.hash().0));
            fs::write(&p, png.bytes()).map_err(|e| format!("{}: {e}", p.display()))?;
        }
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)? + "\n")?;
        fs::write(dir.join("report.txt"), &text)?;
        write_lines(
            &dir.join("transcripts.jsonl"),
            transcripts.iter().map(|t| serde_json::to_string(t).expect("transcripts serialize")),
        )?;
        writeln!(out, "report written to {}", dir.display())?;
    }
    Ok(())
}

fn cmd_serve(args: ServeArgs) -> CliResult {
    let dir = data_dir(&args.data_dir);
    let registry = Arc::new(ava_service::Registry::open(&dir)?);
    let server = ava_service::serve(registry, &format!("{}:{}", args.host, args.port), args.static_dir)?;
    eprintln!("session service on {} (data in {})", server.url(), dir.display());
    server.wait();
    Ok(())
}

fn cmd_tool_serve(args: ToolServeArgs) -> CliResult {
    let tool = ava_proto::open_tool(&args.tool, args.data.as_deref())?;
    let name = tool.describe()?.name;
    let server = ava_proto::serve_tool(tool, &format!("{}:{}", args.host, args.port))?;
    eprintln!("tool {name} on {}", server.url());
    server.wait();
    Ok(())
}

fn init_logging(default: &str) {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

/// Parses `argv` (program name first), runs the command and returns the
/// exit code. Normal output goes to `out`; usage errors to stderr.
pub fn dispatch<I, T>(argv: I, out: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let server = matches!(cli.command, Command::Serve(_) | Command::ToolServe(_));
    init_logging(if server { "info" } else { "warn" });
    let result = match cli.command {
        Command::Run(a) => cmd_run(a, out),
        Command::Render(a) => cmd_render(a, out).map(|_| 0),
        Command::Phantom(a) => cmd_phantom(a, out).map(|_| 0),
        Command::Bench(a) => cmd_bench(a, out).map(|_| 0),
        Command::Serve(a) => cmd_serve(a).map(|_| 0),
        Command::ToolServe(a) => cmd_tool_serve(a).map(|_| 0),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

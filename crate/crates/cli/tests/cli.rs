use std::fs;
use std::process::Command;

use ava_bench::BenchReport;
use ava_core::session::{Session, SessionStatus};

fn ava(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let argv = std::iter::once("ava").chain(args.iter().copied());
    let code = ava_cli::dispatch(argv, &mut out);
    (code, String::from_utf8(out).unwrap())
}

const TF_CONFIG: &str = r#"{
  "task": "volume rendering",
  "approach": "adjusting the opacity transfer function",
  "planner_kind": "heuristic_tf",
  "perception_kind": "oracle",
  "max_iterations": 20,
  "planner_params": {"bins": 10, "window_factor": 1, "speed_reduction": 0.5},
  "perception_params": {"target": "inner"}
}"#;

#[test]
fn run_on_a_phantom_ends_done_success() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    fs::write(p("tf.json"), TF_CONFIG).unwrap();
    let (code, out) = ava(&["phantom", "--out", &p("phantom.raw"), "--size", "32"]);
    assert_eq!(code, 0, "{out}");

    let args = [
        "run", "--config", &p("tf.json"), "--goal", "render the inner sphere", "--tool", "builtin:volume",
        "--data", &p("phantom.raw"), "--perception", "oracle", "--data-dir", &p("data"), "--out", &p("session.json"),
    ];
    let (code, out) = ava(&args);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("final params:"), "{out}");
    let session: Session = serde_json::from_str(&fs::read_to_string(p("session.json")).unwrap()).unwrap();
    assert_eq!(session.status, SessionStatus::DoneSuccess);
    session.check().unwrap();
    for r in &session.records {
        assert!(dir.path().join("data/images").join(format!("{}.png", r.image_ref.0)).exists());
    }

    // Oracle runs are reproducible byte for byte.
    let first = fs::read(p("session.json")).unwrap();
    let (code, _) = ava(&args);
    assert_eq!(code, 0);
    assert_eq!(fs::read(p("session.json")).unwrap(), first);

    // A flag wins over the config file.
    let (code, out) = ava(&[
        "run", "--config", &p("tf.json"), "--goal", "g", "--tool", "builtin:volume", "--data", &p("phantom.raw"),
        "--data-dir", &p("data"), "--max-iterations", "1", "--out", &p("short.json"),
    ]);
    assert_eq!(code, 0, "{out}");
    let short: Session = serde_json::from_str(&fs::read_to_string(p("short.json")).unwrap()).unwrap();
    assert_eq!(short.records.len(), 1);
}

#[test]
fn bench_writes_a_perfect_report_and_rescoring_matches() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("bench");
    let out_str = out_dir.to_string_lossy().into_owned();
    let (code, text) = ava(&[
        "bench", "--task", "scatter-cluster-count", "--trials", "10", "--perception", "stub:exact", "--out", &out_str,
    ]);
    assert_eq!(code, 0, "{text}");
    let report: BenchReport = serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.rows.len(), 1);
    assert_eq!(report.rows[0].trials, 10);
    assert_eq!(report.rows[0].success_rate, 1.0);
    assert!(text.contains("scatter plot(success rate)"));
    assert_eq!(fs::read_to_string(out_dir.join("transcripts.jsonl")).unwrap().lines().count(), 10);

    let (code, rescored) = ava(&["bench", "--rescore", &out_str]);
    assert_eq!(code, 0);
    assert!(rescored.contains("| cluster count | 100%"), "{rescored}");

    let (code, _) = ava(&["bench", "--task", "no-such-task"]);
    assert_eq!(code, 1);
}

#[test]
fn render_writes_a_png() {
    let dir = tempfile::tempdir().unwrap();
    let png = dir.path().join("dr.png");
    let stats = dir.path().join("dr.json");
    let (code, out) = ava(&[
        "render", "--tool", "builtin:mock-dr", "--param", "perplexity=30", "--out", png.to_str().unwrap(), "--stats",
        stats.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{out}");
    assert!(fs::read(&png).unwrap().starts_with(b"\x89PNG"));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&stats).unwrap()).unwrap();
    assert_eq!(v["kind"], "embedding");

    let (code, _) = ava(&["render", "--tool", "builtin:volume", "--out", png.to_str().unwrap()]);
    assert_eq!(code, 1);
}

#[test]
fn exit_codes_of_the_binary() {
    let bin = env!("CARGO_BIN_EXE_ava");
    let out = Command::new(bin).arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
    let out = Command::new(bin).args(["run", "--goal", "g"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = Command::new(bin).arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let out = Command::new(bin)
        .args(["run", "--goal", "g", "--tool", "builtin:mock-dr", "--max-iterations", "0"])
        .args(["--task", "t", "--planner", "llm_centric", "--perception", "oracle"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

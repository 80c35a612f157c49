use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::net::TcpListener;
use std::sync::Arc;
use std::time::Duration;

use ava_core::image::Png;
use ava_core::params::ParamVector;
use ava_core::tool::{RenderOutput, ToolDescriptor, ToolError, VisTool};
use ava_proto::{serve_tool, MockDrTool, RemoteTool, ScatterTool, VolumeTool};
use ava_render::volren::{VolumeDataset, VoxelType};

fn shell_volume() -> Arc<VolumeDataset> {
    let n = 12usize;
    let c = (n as f64 - 1.0) / 2.0;
    let mut voxels = Vec::new();
    let mut inner = Vec::new();
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                let r = ((x as f64 - c).powi(2) + (y as f64 - c).powi(2) + (z as f64 - c).powi(2)).sqrt();
                let v = if r < 2.5 { 220 } else if r < 5.0 { 90 } else { 0 };
                voxels.push(if (x, y, z) == (0, 0, 0) { 255 } else { v });
                inner.push(r < 2.5);
            }
        }
    }
    Arc::new(
        VolumeDataset::new([n; 3], VoxelType::U8, [1.0; 3], voxels)
            .unwrap()
            .with_masks(BTreeMap::from([("inner".to_string(), inner)]))
            .unwrap(),
    )
}

fn post(url: &str, body: &str) -> (u16, serde_json::Value) {
    let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
    let mut resp = agent
        .post(&format!("{url}/render"))
        .header("Content-Type", "application/json")
        .send(body.as_bytes())
        .unwrap();
    let status = resp.status().as_u16();
    let text = resp.body_mut().read_to_string().unwrap();
    (status, serde_json::from_str(&text).unwrap())
}

#[test]
fn volume_describe_round_trips() {
    let tool = Arc::new(VolumeTool::with_size(shell_volume(), 32, 32).unwrap());
    let direct = tool.describe().unwrap();
    let server = serve_tool(tool, "127.0.0.1:0").unwrap();
    let remote = RemoteTool::new(&server.url()).describe().unwrap();
    assert_eq!(remote, direct);
    let start = remote.param_space.get("start").unwrap();
    assert_eq!((start.lower, start.upper), (0.0, 255.0));
    assert!(remote.param_space.get("end").is_some());
}

#[test]
fn error_codes_over_the_wire() {
    let tool = Arc::new(VolumeTool::with_size(shell_volume(), 16, 16).unwrap());
    let server = serve_tool(tool, "127.0.0.1:0").unwrap();
    let (status, body) = post(&server.url(), r#"{"params": {"start": -5, "end": 100, "peak": 1}}"#);
    assert_eq!(status, 400);
    assert_eq!(body["error"]["code"], "param_out_of_bounds");
    let (status, body) = post(&server.url(), r#"{"parameters": {}}"#);
    assert_eq!(status, 400);
    assert_eq!(body["error"]["code"], "malformed_request");
    let (status, body) = post(&server.url(), r#"{"params": {"start": 10}}"#);
    assert_eq!(status, 400);
    assert_eq!(body["error"]["code"], "missing_param");

    let err = RemoteTool::new(&server.url())
        .render(&ParamVector::new().with("start", 300.0).with("end", 310.0).with("peak", 1.0))
        .unwrap_err();
    assert_eq!(err.code(), "param_out_of_bounds");
}

#[test]
fn identical_requests_give_identical_payloads() {
    let tool = Arc::new(VolumeTool::with_size(shell_volume(), 24, 24).unwrap());
    let server = serve_tool(tool, "127.0.0.1:0").unwrap();
    let body = r#"{"params": {"start": 60, "end": 130, "peak": 0.8}}"#;
    let (_, a) = post(&server.url(), body);
    let (_, b) = post(&server.url(), body);
    assert_eq!(a["image"], b["image"]);
    assert_eq!(a["stats"]["kind"], "volume");
}

#[test]
fn loopback_matches_direct_render() {
    let tools: Vec<(Arc<dyn VisTool>, ParamVector)> = vec![
        (
            Arc::new(VolumeTool::with_size(shell_volume(), 32, 32).unwrap()),
            ParamVector::new().with("start", 180.0).with("end", 250.0).with("peak", 1.0),
        ),
        (Arc::new(ScatterTool::demo(800, 2).unwrap()), ParamVector::new().with("opacity", 0.2)),
        (Arc::new(MockDrTool::single(7)), ParamVector::new().with("perplexity", 42.0)),
    ];
    for (tool, params) in tools {
        let direct = tool.render(&params).unwrap();
        let server = serve_tool(tool.clone(), "127.0.0.1:0").unwrap();
        let remote = RemoteTool::new(&server.url()).render(&params).unwrap();
        assert_eq!(remote, direct);
    }
}

struct Concurrent;

impl VisTool for Concurrent {
    fn describe(&self) -> Result<ToolDescriptor, ToolError> {
        MockDrTool::single(1).describe()
    }

    fn render(&self, params: &ParamVector) -> Result<RenderOutput, ToolError> {
        std::thread::sleep(Duration::from_millis(300));
        MockDrTool::single(1).render(params)
    }
}

#[test]
fn server_handles_requests_concurrently() {
    let server = serve_tool(Arc::new(Concurrent), "127.0.0.1:0").unwrap();
    let url = server.url();
    let started = std::time::Instant::now();
    let handles: Vec<_> = (0..4)
        .map(|i| {
            let url = url.clone();
            std::thread::spawn(move || {
                RemoteTool::new(&url)
                    .render(&ParamVector::new().with("perplexity", 10.0 + i as f64))
                    .unwrap()
            })
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
    assert!(started.elapsed() < Duration::from_millis(1100), "{:?}", started.elapsed());
}

/// Serves canned HTTP responses, one per connection.
fn canned(responses: Vec<String>) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    std::thread::spawn(move || {
        for r in responses {
            let (mut s, _) = listener.accept().unwrap();
            let mut buf = [0u8; 8192];
            let _ = s.read(&mut buf);
            let _ = s.write_all(r.as_bytes());
        }
    });
    url
}

fn http_ok(body: &str) -> String {
    format!(
        "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
}

#[test]
fn truncated_payloads_are_protocol_errors() {
    let out = MockDrTool::single(7).render(&ParamVector::new().with("perplexity", 30.0)).unwrap();
    let full = serde_json::to_string(&ava_proto::RenderResponse::encode(&out)).unwrap();
    let cut_json = &full[..full.len() / 2];
    let png = out.png.bytes();
    let cut_png = serde_json::to_string(&ava_proto::RenderResponse::encode(&RenderOutput {
        png: Png(png[..png.len() - 40].to_vec()),
        stats: None,
    }))
    .unwrap();
    let url = canned(vec![http_ok(cut_json), http_ok(&cut_png)]);
    let client = RemoteTool::new(&url);
    let p = ParamVector::new().with("perplexity", 30.0);
    let e = client.render(&p).unwrap_err();
    assert!(matches!(e, ToolError::Protocol { ref code, .. } if code == "malformed_response"), "{e}");
    let e = client.render(&p).unwrap_err();
    assert!(matches!(e, ToolError::Protocol { ref code, .. } if code == "bad_image"), "{e}");
}

#[test]
fn unreachable_after_one_retry() {
    let port = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let client = RemoteTool::with_timeout(&format!("http://127.0.0.1:{port}"), Duration::from_secs(2));
    assert!(matches!(client.describe(), Err(ToolError::Unreachable(_))));
}

#[test]
fn retries_once_after_transport_failure() {
    let body = serde_json::to_string(&MockDrTool::single(7).describe().unwrap()).unwrap();
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    std::thread::spawn(move || {
        // First connection is dropped without a response.
        let (s, _) = listener.accept().unwrap();
        drop(s);
        let (mut s, _) = listener.accept().unwrap();
        let mut buf = [0u8; 4096];
        let _ = s.read(&mut buf);
        let _ = s.write_all(http_ok(&body).as_bytes());
    });
    let d = RemoteTool::new(&url).describe().unwrap();
    assert_eq!(d.name, "mock-dr");
}

#[test]
fn bind_error() {
    let held = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = held.local_addr().unwrap().to_string();
    assert!(serve_tool(Arc::new(MockDrTool::single(1)), &addr).is_err());
}

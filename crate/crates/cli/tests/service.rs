use std::io::{Read, Write};
use std::net::TcpStream;
use std::sync::Arc;

use base64::Engine;
use padfree::server::{run, ServiceState};
use padfree_core::net::{GeneratorConfig, GeneratorParams};
use serde_json::Value;

struct Reply {
    status: u16,
    headers: String,
    body: Vec<u8>,
}

fn start() -> u16 {
    let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
    let port = server.server_addr().to_ip().unwrap().port();
    let state = ServiceState { params: GeneratorParams::init(&GeneratorConfig::toy(), 3).unwrap(), max_resolution: 512 };
    std::thread::spawn(move || run(Arc::new(server), Arc::new(state), 2));
    port
}

fn call(port: u16, method: &str, path: &str, body: &str, origin: Option<&str>) -> Reply {
    let mut s = TcpStream::connect(("127.0.0.1", port)).unwrap();
    let origin = origin.map(|o| format!("Origin: {o}\r\n")).unwrap_or_default();
    write!(
        s,
        "{method} {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n{origin}Content-Type: application/json\r\nContent-Length: {}\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut raw = Vec::new();
    s.read_to_end(&mut raw).unwrap();
    let split = raw.windows(4).position(|w| w == b"\r\n\r\n").unwrap();
    let headers = String::from_utf8_lossy(&raw[..split]).into_owned();
    let status = headers.split(' ').nth(1).unwrap().parse().unwrap();
    Reply { status, headers, body: raw[split + 4..].to_vec() }
}

fn body(r: &Reply) -> Value {
    serde_json::from_slice(&r.body).unwrap()
}

#[test]
fn endpoints_over_http() {
    let port = start();

    let h = call(port, "GET", "/health", "", None);
    assert_eq!(h.status, 200);
    assert_eq!(body(&h)["status"], "ok");

    let g = call(port, "POST", "/api/grid", r#"{"latent_seed":0,"resolution":16,"n_pad":3}"#, None);
    assert_eq!(g.status, 200);
    let g = body(&g);
    assert_eq!(g["interior_points"].as_array().unwrap().len(), 16);
    assert_eq!(g["padding_points"].as_array().unwrap().len(), 84);
    assert_eq!(g["period"], serde_json::json!([0.5, 0.5]));

    let req = r#"{"latent_seed":4,"resolution":32,"center":[0.25,0],"noise":{"kind":"grid_sample","base_seed":1}}"#;
    let a = body(&call(port, "POST", "/api/generate", req, None));
    let b = body(&call(port, "POST", "/api/generate", req, None));
    assert_eq!(a["image_base64"], b["image_base64"]);
    let ppm = base64::engine::general_purpose::STANDARD.decode(a["image_base64"].as_str().unwrap()).unwrap();
    assert!(ppm.starts_with(b"P6\n32 32\n255\n"));
    assert_eq!(a["spec"]["resolution"], serde_json::json!([32, 32]));

    assert_eq!(call(port, "POST", "/api/generate", r#"{"latent_seed":1,"resolution":4096}"#, None).status, 413);
    assert_eq!(call(port, "POST", "/api/generate", r#"{"latent_seed":1,"resolution":18}"#, None).status, 422);
    let bad = call(port, "POST", "/api/generate", r#"{"latent_seed":1,"resolution":16,"center":[0,"x"]}"#, None);
    assert_eq!(bad.status, 400);
    assert_eq!(body(&bad)["field"], "center[1]");
}

#[test]
fn cors_only_for_local_origins() {
    let port = start();
    let local = call(port, "GET", "/health", "", Some("http://localhost:5173"));
    assert!(local.headers.contains("Access-Control-Allow-Origin: http://localhost:5173"));
    let remote = call(port, "GET", "/health", "", Some("https://example.org"));
    assert!(!remote.headers.contains("Access-Control-Allow-Origin"));
    let pre = call(port, "OPTIONS", "/api/generate", "", Some("http://127.0.0.1:3000"));
    assert_eq!(pre.status, 204);
    assert!(pre.headers.contains("Access-Control-Allow-Methods"));
}

#[test]
fn service_matches_cli_bytes() {
    let d = tempfile::tempdir().unwrap();
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_padfree"))
        .current_dir(d.path())
        .args(["--random-weights", "--seed", "3", "generate", "--resolution", "32", "--latent-seed", "8", "--out", "x.ppm"])
        .output()
        .unwrap();
    assert!(status.status.success());
    let port = start();
    let r = body(&call(port, "POST", "/api/generate", r#"{"latent_seed":8,"resolution":32}"#, None));
    let ppm = base64::engine::general_purpose::STANDARD.decode(r["image_base64"].as_str().unwrap()).unwrap();
    assert_eq!(ppm, std::fs::read(d.path().join("x.ppm")).unwrap());
}

//! Local HTTP service: `GET /health`, `POST /api/generate`, `POST /api/grid`.
//!
//! Handlers are pure functions of the shared read-only state and the
//! request, so worker threads never coordinate.

use std::io::Read;
use std::sync::Arc;
use std::time::Instant;

use base64::Engine;
use padfree_core::net::GeneratorParams;
use padfree_core::Error;
use serde::de::DeserializeOwned;
use serde_json::{json, Value};
use tiny_http::{Header, Method, Request, Response, Server};

use crate::ppm::Ppm;
use crate::request::{grid_points, render, GenerateRequest, RequestError};

/// Request bodies larger than this are refused outright.
pub const MAX_BODY_BYTES: u64 = 64 * 1024;

#[derive(Debug, Clone)]
pub struct ServiceState {
    pub params: GeneratorParams,
    pub max_resolution: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub status: u16,
    pub body: Value,
}

fn error(status: u16, message: impl Into<String>, field: Option<String>) -> Reply {
    Reply { status, body: json!({ "status": status, "error": message.into(), "field": field }) }
}

fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T, Reply> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let field = (path != ".").then_some(path);
        error(400, e.into_inner().to_string(), field)
    })
}

fn request_error(e: RequestError) -> Reply {
    match e {
        RequestError::TooLarge { .. } => error(413, e.to_string(), Some("resolution".into())),
        RequestError::Core(c @ Error::ShapeUnderflow { .. }) => error(422, c.to_string(), Some("resolution".into())),
        RequestError::Core(c) => error(400, c.to_string(), None),
    }
}

pub fn handle(state: &ServiceState, method: &str, path: &str, body: &[u8]) -> Reply {
    let path = path.split('?').next().unwrap_or(path);
    match (method, path) {
        ("GET", "/health") => {
            Reply { status: 200, body: json!({ "status": "ok", "version": env!("CARGO_PKG_VERSION") }) }
        }
        ("POST", "/api/generate") => {
            let req: GenerateRequest = match parse(body) {
                Ok(r) => r,
                Err(reply) => return reply,
            };
            let start = Instant::now();
            match render(&state.params, &req, state.max_resolution) {
                Ok(r) => {
                    let bytes = Ppm::from_patch(&r.patch).encode();
                    Reply {
                        status: 200,
                        body: json!({
                            "image_base64": base64::engine::general_purpose::STANDARD.encode(bytes),
                            "image_format": "ppm",
                            "spec": r.patch.spec,
                            "ms": start.elapsed().as_secs_f64() * 1e3,
                        }),
                    }
                }
                Err(e) => request_error(e),
            }
        }
        ("POST", "/api/grid") => {
            let req: GenerateRequest = match parse(body) {
                Ok(r) => r,
                Err(reply) => return reply,
            };
            match grid_points(&state.params, &req, state.max_resolution) {
                Ok(g) => Reply { status: 200, body: serde_json::to_value(g).expect("grid serializes") },
                Err(e) => request_error(e),
            }
        }
        (_, "/health" | "/api/generate" | "/api/grid") => error(405, format!("method {method} not allowed"), None),
        _ => error(404, format!("no route for {path}"), None),
    }
}

/// `Origin` values that get CORS headers: http(s) on localhost or loopback.
pub fn is_local_origin(origin: &str) -> bool {
    let rest = origin.strip_prefix("http://").or_else(|| origin.strip_prefix("https://"));
    let Some(rest) = rest else { return false };
    let host = rest.split('/').next().unwrap_or("");
    let host = match host.rsplit_once(':') {
        Some((h, port)) if port.chars().all(|c| c.is_ascii_digit()) && !h.is_empty() => h,
        _ => host,
    };
    matches!(host, "localhost" | "127.0.0.1" | "[::1]")
}

fn header(name: &str, value: &str) -> Header {
    Header::from_bytes(name.as_bytes(), value.as_bytes()).expect("valid header")
}

fn respond(state: &ServiceState, mut req: Request) {
    let origin = req
        .headers()
        .iter()
        .find(|h| h.field.equiv("Origin"))
        .map(|h| h.value.as_str().to_owned())
        .filter(|o| is_local_origin(o));
    let method = req.method().clone();
    let url = req.url().to_owned();

    let reply = if method == Method::Options {
        None
    } else if req.body_length().is_some_and(|n| n as u64 > MAX_BODY_BYTES) {
        Some(error(413, format!("request body exceeds {MAX_BODY_BYTES} bytes"), None))
    } else {
        let mut body = Vec::new();
        match req.as_reader().take(MAX_BODY_BYTES + 1).read_to_end(&mut body) {
            Ok(_) if body.len() as u64 > MAX_BODY_BYTES => {
                Some(error(413, format!("request body exceeds {MAX_BODY_BYTES} bytes"), None))
            }
            Ok(_) => Some(handle(state, method.as_str(), &url, &body)),
            Err(e) => Some(error(400, format!("could not read body: {e}"), None)),
        }
    };

    let mut response = match reply {
        None => Response::from_data(Vec::new()).with_status_code(204),
        Some(r) => Response::from_data(serde_json::to_vec(&r.body).expect("json"))
            .with_status_code(r.status)
            .with_header(header("Content-Type", "application/json")),
    };
    if let Some(o) = origin {
        response = response
            .with_header(header("Access-Control-Allow-Origin", &o))
            .with_header(header("Access-Control-Allow-Methods", "GET, POST, OPTIONS"))
            .with_header(header("Access-Control-Allow-Headers", "Content-Type"))
            .with_header(header("Vary", "Origin"));
    }
    let _ = req.respond(response);
}

/// Serve until the server is unblocked or dropped, with `threads` workers.
pub fn run(server: Arc<Server>, state: Arc<ServiceState>, threads: usize) {
    let workers: Vec<_> = (0..threads.max(1))
        .map(|_| {
            let server = Arc::clone(&server);
            let state = Arc::clone(&state);
            std::thread::spawn(move || {
                for req in server.incoming_requests() {
                    respond(&state, req);
                }
            })
        })
        .collect();
    for w in workers {
        let _ = w.join();
    }
}

//! Minimal in-process proposer server for tests and local experiments.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use tiny_http::{Header, Method, Response, Server};

use super::wire::{ProposeRequest, ProposeResponse, PROPOSE_PATH};

#[derive(Debug, Clone)]
pub enum StubReply {
    /// Always answer with this vector.
    Fixed(Vec<f64>),
    /// Answer with the request's `theta_best` (a zero step).
    Echo,
    /// Move `fraction` of the way to the box midpoint.
    TowardMidpoint(f64),
    /// Send this body verbatim.
    Raw(String),
}

#[derive(Debug, Clone)]
pub struct StubConfig {
    pub reply: StubReply,
    /// Sleep before answering each request.
    pub delay: Duration,
    /// Answer the first `n` requests with HTTP 503.
    pub fail_first: usize,
}

impl StubConfig {
    pub fn new(reply: StubReply) -> Self {
        Self {
            reply,
            delay: Duration::ZERO,
            fail_first: 0,
        }
    }
}

pub struct StubServer {
    server: Arc<Server>,
    addr: SocketAddr,
    requests: Arc<AtomicUsize>,
    worker: Option<JoinHandle<()>>,
}

impl StubServer {
    /// Binds `addr` (use port 0 for an ephemeral port) and serves in a
    /// background thread until dropped.
    pub fn start(addr: &str, config: StubConfig) -> std::io::Result<Self> {
        let server = Arc::new(Server::http(addr).map_err(std::io::Error::other)?);
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| std::io::Error::other("stub server is not bound to an IP socket"))?;
        let requests = Arc::new(AtomicUsize::new(0));
        let worker = {
            let server = Arc::clone(&server);
            let requests = Arc::clone(&requests);
            std::thread::spawn(move || {
                for request in server.incoming_requests() {
                    let n = requests.fetch_add(1, Ordering::SeqCst);
                    handle(request, &config, n);
                }
            })
        };
        Ok(Self {
            server,
            addr,
            requests,
            worker: Some(worker),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn endpoint(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    /// Blocks the calling thread for as long as the server runs.
    pub fn join(mut self) {
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

fn json_header() -> Header {
    Header::from_bytes("Content-Type", "application/json").expect("static header")
}

fn handle(mut request: tiny_http::Request, config: &StubConfig, n: usize) {
    if request.method() != &Method::Post || request.url() != PROPOSE_PATH {
        let _ = request.respond(Response::from_string("not found").with_status_code(404));
        return;
    }
    let mut body = String::new();
    if request.as_reader().read_to_string(&mut body).is_err() {
        let _ = request.respond(Response::from_string("unreadable body").with_status_code(400));
        return;
    }
    std::thread::sleep(config.delay);
    if n < config.fail_first {
        let _ = request.respond(Response::from_string("unavailable").with_status_code(503));
        return;
    }
    let parsed = serde_json::from_str::<ProposeRequest>(&body)
        .map_err(|e| e.to_string())
        .and_then(|r| r.validate().map(|_| r));
    let req = match parsed {
        Ok(r) => r,
        Err(e) => {
            let _ = request.respond(Response::from_string(e).with_status_code(400));
            return;
        }
    };
    let text = match &config.reply {
        StubReply::Raw(s) => s.clone(),
        other => {
            let theta = match other {
                StubReply::Fixed(v) => v.clone(),
                StubReply::Echo => req.theta_best.clone(),
                StubReply::TowardMidpoint(frac) => req
                    .theta_best
                    .iter()
                    .zip(&req.bounds)
                    .map(|(t, d)| t + frac * (d.midpoint() - t))
                    .collect(),
                StubReply::Raw(_) => unreachable!(),
            };
            serde_json::to_string(&ProposeResponse {
                theta_proposed: theta,
                rationale: format!("stub reply to round {}", req.round),
            })
            .expect("reply serializes")
        }
    };
    let _ = request.respond(Response::from_string(text).with_header(json_header()));
}

//! Tiny single-threaded HTTP server serving canned STAC search pages,
//! with optional failure injection for retry tests.

// shared across test targets; not every target uses every helper
#![allow(dead_code)]

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

/// How the server misbehaves before settling down.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FailureMode {
    None,
    /// respond 500 to the first n requests
    ServerError(usize),
    /// respond 429 + Retry-After: 0 to the first n requests
    RateLimited(usize),
}

pub struct MockStacServer {
    pub addr: String,
    pub requests: Arc<AtomicUsize>,
    shutdown: Arc<std::sync::atomic::AtomicBool>,
    handle: Option<thread::JoinHandle<()>>,
}

impl MockStacServer {
    /// Serve `pages` keyed by cursor (`None` → page 0, "pN" → page N).
    pub fn start(pages: Vec<serde_json::Value>, failure: FailureMode) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind");
        let addr = format!("http://{}", listener.local_addr().unwrap());
        listener.set_nonblocking(true).unwrap();
        let requests = Arc::new(AtomicUsize::new(0));
        let shutdown = Arc::new(std::sync::atomic::AtomicBool::new(false));
        let req_counter = Arc::clone(&requests);
        let stop = Arc::clone(&shutdown);
        let handle = thread::spawn(move || {
            while !stop.load(Ordering::SeqCst) {
                match listener.accept() {
                    Ok((stream, _)) => {
                        let n = req_counter.fetch_add(1, Ordering::SeqCst);
                        handle_request(stream, &pages, failure, n);
                    }
                    Err(ref e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                        thread::sleep(std::time::Duration::from_millis(2));
                    }
                    Err(_) => break,
                }
            }
        });
        MockStacServer {
            addr,
            requests,
            shutdown,
            handle: Some(handle),
        }
    }

    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}

impl Drop for MockStacServer {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

fn handle_request(
    mut stream: TcpStream,
    pages: &[serde_json::Value],
    failure: FailureMode,
    request_index: usize,
) {
    let mut buf = [0u8; 8192];
    let mut raw = Vec::new();
    // read until end of headers; GET requests carry no body
    loop {
        match stream.read(&mut buf) {
            Ok(0) => break,
            Ok(n) => {
                raw.extend_from_slice(&buf[..n]);
                if raw.windows(4).any(|w| w == b"\r\n\r\n") {
                    break;
                }
            }
            Err(_) => break,
        }
    }
    let request = String::from_utf8_lossy(&raw);
    let path = request
        .lines()
        .next()
        .and_then(|line| line.split_whitespace().nth(1))
        .unwrap_or("/")
        .to_string();

    match failure {
        FailureMode::ServerError(n) if request_index < n => {
            respond(&mut stream, 500, &[], b"{\"error\":\"boom\"}");
            return;
        }
        FailureMode::RateLimited(n) if request_index < n => {
            respond(&mut stream, 429, &[("Retry-After", "0")], b"{}");
            return;
        }
        _ => {}
    }

    if !path.starts_with("/search") {
        respond(&mut stream, 404, &[], b"{\"error\":\"not found\"}");
        return;
    }
    let cursor = path
        .split('?')
        .nth(1)
        .and_then(|q| q.split('&').find_map(|kv| kv.strip_prefix("cursor=")));
    let page_index = match cursor {
        None => 0,
        Some(token) => match token.strip_prefix('p').and_then(|n| n.parse::<usize>().ok()) {
            Some(i) => i,
            None => {
                respond(&mut stream, 400, &[], b"{\"error\":\"bad cursor\"}");
                return;
            }
        },
    };
    match pages.get(page_index) {
        Some(page) => {
            let body = serde_json::to_vec(page).unwrap();
            respond(&mut stream, 200, &[("Content-Type", "application/json")], &body);
        }
        None => respond(&mut stream, 404, &[], b"{\"error\":\"no such page\"}"),
    }
}

fn respond(stream: &mut TcpStream, status: u16, headers: &[(&str, &str)], body: &[u8]) {
    let reason = match status {
        200 => "OK",
        400 => "Bad Request",
        404 => "Not Found",
        429 => "Too Many Requests",
        _ => "Internal Server Error",
    };
    let mut resp = format!("HTTP/1.1 {status} {reason}\r\nContent-Length: {}\r\n", body.len());
    for (k, v) in headers {
        resp.push_str(&format!("{k}: {v}\r\n"));
    }
    resp.push_str("Connection: close\r\n\r\n");
    let _ = stream.write_all(resp.as_bytes());
    let _ = stream.write_all(body);
    let _ = stream.flush();
}

//! Shared test support: a minimal scripted HTTP stub server.
#![allow(dead_code)]

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

pub struct StubServer {
    pub addr: SocketAddr,
    pub bodies: Arc<Mutex<Vec<String>>>,
    pub hits: Arc<AtomicUsize>,
}

impl StubServer {
    pub fn url(&self) -> String {
        format!("http://{}/v1/chat/completions", self.addr)
    }
}

/// Spawns a one-thread HTTP stub that answers with the scripted
/// (status, body) responses in order, repeating the last one.
pub fn spawn_stub(responses: Vec<(u16, String)>) -> StubServer {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub");
    let addr = listener.local_addr().unwrap();
    let bodies = Arc::new(Mutex::new(Vec::new()));
    let hits = Arc::new(AtomicUsize::new(0));
    let thread_bodies = bodies.clone();
    let thread_hits = hits.clone();
    std::thread::spawn(move || {
        let mut queue = responses.into_iter();
        let mut current: Option<(u16, String)> = None;
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let mut buf = Vec::new();
            let mut chunk = [0u8; 4096];
            let header_end = loop {
                match stream.read(&mut chunk) {
                    Ok(0) => break None,
                    Ok(n) => {
                        buf.extend_from_slice(&chunk[..n]);
                        if let Some(pos) = buf.windows(4).position(|w| w == b"\r\n\r\n") {
                            break Some(pos + 4);
                        }
                    }
                    Err(_) => break None,
                }
            };
            let Some(header_end) = header_end else {
                continue;
            };
            let headers = String::from_utf8_lossy(&buf[..header_end]).to_string();
            let content_length = headers
                .lines()
                .find_map(|line| {
                    let (name, value) = line.split_once(':')?;
                    name.eq_ignore_ascii_case("content-length")
                        .then(|| value.trim().parse::<usize>().ok())?
                })
                .unwrap_or(0);
            while buf.len() < header_end + content_length {
                match stream.read(&mut chunk) {
                    Ok(0) => break,
                    Ok(n) => buf.extend_from_slice(&chunk[..n]),
                    Err(_) => break,
                }
            }
            let body = String::from_utf8_lossy(&buf[header_end..]).to_string();
            thread_bodies.lock().unwrap().push(body);
            thread_hits.fetch_add(1, Ordering::SeqCst);

            if let Some(next) = queue.next() {
                current = Some(next);
            }
            let (status, reply) = current.clone().unwrap_or((200, String::new()));
            let response = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{reply}",
                reply.len()
            );
            let _ = stream.write_all(response.as_bytes());
        }
    });
    StubServer { addr, bodies, hits }
}

pub fn ok_body(text: &str) -> String {
    format!(
        "{{\"choices\":[{{\"message\":{{\"content\":\"{text}\"}}}}],\"usage\":{{\"prompt_tokens\":9,\"completion_tokens\":4}}}}"
    )
}

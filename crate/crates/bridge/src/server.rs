use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use tungstenite::{Message as WsMessage, WebSocket};

use catsim_core::controllers::TeleopInbox;
use catsim_core::types::VelocityCommand;

use crate::hub::UiHub;
use crate::protocol::{ClientMessage, ServerMessage};

pub const LIVE_PATH: &str = "/live";

const INDEX_HTML: &str = include_str!("../assets/index.html");
const MAX_HEAD: usize = 16 * 1024;
const HEAD_TIMEOUT: Duration = Duration::from_secs(2);
const POLL: Duration = Duration::from_millis(10);

#[derive(Debug, Clone, Default)]
pub struct ServerConfig {
    /// Directory served at `/`. Without one, a built-in page is served.
    pub assets: Option<PathBuf>,
}

struct Shared {
    hub: UiHub,
    inbox: TeleopInbox,
    config: ServerConfig,
    stop: AtomicBool,
}

/// HTTP and WebSocket listener. Static files at `/`, the live feed at
/// [`LIVE_PATH`]. Each connection gets its own thread.
pub struct UiServer {
    addr: SocketAddr,
    shared: Arc<Shared>,
    accept: Option<JoinHandle<()>>,
}

impl UiServer {
    pub fn bind(addr: impl ToSocketAddrs, hub: UiHub, inbox: TeleopInbox, config: ServerConfig) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Shared {
            hub,
            inbox,
            config,
            stop: AtomicBool::new(false),
        });
        let s = shared.clone();
        let accept = thread::Builder::new()
            .name("ui-accept".into())
            .spawn(move || accept_loop(listener, s))?;
        Ok(Self {
            addr,
            shared,
            accept: Some(accept),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting and tells open connections to close.
    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.shared.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

impl Drop for UiServer {
    fn drop(&mut self) {
        self.stop();
    }
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>) {
    while !shared.stop.load(Ordering::Relaxed) {
        match listener.accept() {
            Ok((stream, _)) => {
                let s = shared.clone();
                let _ = thread::Builder::new()
                    .name("ui-conn".into())
                    .spawn(move || {
                        let _ = handle(stream, &s);
                    });
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(POLL),
            Err(_) => thread::sleep(POLL),
        }
    }
}

/// Returns the request head without consuming it from the socket.
fn peek_head(stream: &TcpStream) -> io::Result<Vec<u8>> {
    let deadline = Instant::now() + HEAD_TIMEOUT;
    let mut buf = vec![0u8; MAX_HEAD];
    loop {
        let n = stream.peek(&mut buf)?;
        if n == 0 {
            return Err(io::ErrorKind::UnexpectedEof.into());
        }
        if let Some(end) = buf[..n].windows(4).position(|w| w == b"\r\n\r\n") {
            buf.truncate(end + 4);
            return Ok(buf);
        }
        if n == MAX_HEAD || Instant::now() > deadline {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "request head too large or too slow"));
        }
        thread::sleep(Duration::from_millis(2));
    }
}

fn handle(mut stream: TcpStream, shared: &Shared) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(HEAD_TIMEOUT))?;
    let head = peek_head(&stream)?;
    let mut headers = [httparse::EMPTY_HEADER; 64];
    let mut req = httparse::Request::new(&mut headers);
    if !matches!(req.parse(&head), Ok(httparse::Status::Complete(_))) {
        return respond(&mut stream, 400, "text/plain", b"bad request");
    }
    let method = req.method.unwrap_or("");
    let path = req.path.unwrap_or("/").split('?').next().unwrap_or("/").to_string();
    let upgrade = req.headers.iter().any(|h| {
        h.name.eq_ignore_ascii_case("upgrade") && String::from_utf8_lossy(h.value).to_ascii_lowercase().contains("websocket")
    });

    if path == LIVE_PATH && upgrade {
        return live(stream, shared);
    }
    // Not a websocket: consume the head and answer plain HTTP.
    stream.read_exact(&mut vec![0u8; head.len()])?;
    if method != "GET" {
        return respond(&mut stream, 405, "text/plain", b"method not allowed");
    }
    if path == LIVE_PATH {
        return respond(&mut stream, 426, "text/plain", b"websocket upgrade required");
    }
    match static_file(&shared.config, &path) {
        Some((body, mime)) => respond(&mut stream, 200, mime, &body),
        None => respond(&mut stream, 404, "text/plain", b"not found"),
    }
}

fn respond(stream: &mut TcpStream, status: u16, mime: &str, body: &[u8]) -> io::Result<()> {
    let reason = match status {
        200 => "OK",
        400 => "Bad Request",
        404 => "Not Found",
        405 => "Method Not Allowed",
        426 => "Upgrade Required",
        _ => "",
    };
    write!(
        stream,
        "HTTP/1.1 {status} {reason}\r\nContent-Type: {mime}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        body.len()
    )?;
    stream.write_all(body)?;
    stream.flush()
}

fn mime_for(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js" | "mjs") => "text/javascript",
        Some("css") => "text/css",
        Some("json" | "map") => "application/json",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        Some("wasm") => "application/wasm",
        _ => "application/octet-stream",
    }
}

fn static_file(config: &ServerConfig, path: &str) -> Option<(Vec<u8>, &'static str)> {
    let rel = path.trim_start_matches('/');
    let rel = if rel.is_empty() { "index.html" } else { rel };
    let Some(root) = &config.assets else {
        return (rel == "index.html").then(|| (INDEX_HTML.as_bytes().to_vec(), "text/html; charset=utf-8"));
    };
    let rel = Path::new(rel);
    if !rel.components().all(|c| matches!(c, Component::Normal(_))) {
        return None;
    }
    let full = root.join(rel);
    std::fs::read(&full).ok().map(|b| (b, mime_for(&full)))
}

fn reply(text: &str, inbox: &TeleopInbox) -> ServerMessage {
    match serde_json::from_str::<ClientMessage>(text) {
        Ok(ClientMessage::Teleop(t)) => {
            let cmd = VelocityCommand {
                v_set: t.v_set,
                delta_set: t.delta_set,
            };
            match inbox.submit(&t.vehicle, cmd) {
                Ok(c) => ServerMessage::Ack {
                    vehicle: t.vehicle.clone(),
                    v_set: c.v_set,
                    delta_set: c.delta_set,
                },
                Err(e) => ServerMessage::Rejected {
                    vehicle: t.vehicle.clone(),
                    reason: e.to_string(),
                },
            }
        }
        Err(e) => ServerMessage::Error { reason: e.to_string() },
    }
}

fn send(ws: &mut WebSocket<TcpStream>, text: impl Into<String>) -> tungstenite::Result<()> {
    ws.send(WsMessage::text(text.into()))
}

fn live(stream: TcpStream, shared: &Shared) -> io::Result<()> {
    let mut ws = tungstenite::accept(stream).map_err(|e| io::Error::other(e.to_string()))?;
    ws.get_mut().set_read_timeout(Some(POLL))?;
    session(&mut ws, shared).map_err(|e| io::Error::other(e.to_string()))
}

fn session(ws: &mut WebSocket<TcpStream>, shared: &Shared) -> tungstenite::Result<()> {
    use tungstenite::Error as WsError;

    let mut roster_seen = shared.hub.roster_version();
    send(ws, shared.hub.hello())?;
    let mut frame_seen = 0;
    while !shared.stop.load(Ordering::Relaxed) {
        match ws.read() {
            Ok(WsMessage::Text(text)) => {
                let answer = reply(text.as_str(), &shared.inbox);
                send(ws, serde_json::to_string(&answer).expect("protocol messages serialize"))?;
            }
            Ok(WsMessage::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(WsError::Io(e)) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(WsError::ConnectionClosed | WsError::AlreadyClosed) => return Ok(()),
            Err(e) => return Err(e),
        }
        let update = shared.hub.wait_update(roster_seen, frame_seen, Duration::ZERO);
        if let Some((version, json)) = update.roster {
            roster_seen = version;
            send(ws, json)?;
        }
        if let Some((seq, json)) = update.frame {
            frame_seen = seq;
            send(ws, json.to_string())?;
        }
        if let Some(tick) = update.ended {
            send(ws, serde_json::to_string(&ServerMessage::End { tick }).expect("protocol messages serialize"))?;
            break;
        }
    }
    ws.close(None)?;
    // Give the peer a moment to acknowledge the close.
    let deadline = Instant::now() + Duration::from_millis(200);
    while Instant::now() < deadline {
        match ws.read() {
            Err(WsError::ConnectionClosed | WsError::AlreadyClosed) => break,
            Err(WsError::Io(e)) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(_) => break,
            Ok(_) => {}
        }
    }
    Ok(())
}

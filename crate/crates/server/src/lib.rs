//! Live play host. Each WebSocket connection owns one session: the client
//! sends `hello`, then `action` messages whenever it likes; the server steps
//! the episode on its own timer and pushes a `state` snapshot per tick and a
//! final `end` report.

pub mod protocol;
pub mod session;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::{Html, IntoResponse};
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use movingout::data_io::write_trajectory;
use movingout::env::LIVE_HORIZON;
use tokio::net::TcpListener;
use tokio::time::MissedTickBehavior;
use tower_http::services::ServeDir;

use protocol::{ClientMsg, Hello, ServerMsg};
use session::{Session, Tick};

pub const DEFAULT_PORT: u16 = 8808;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub addr: SocketAddr,
    pub max_sessions: usize,
    /// Built web client; a placeholder page is served at `/` without one.
    pub static_dir: Option<PathBuf>,
    /// Directory for per-session trajectory logs.
    pub log_dir: Option<PathBuf>,
    pub tick: Duration,
    pub horizon: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            addr: SocketAddr::from(([127, 0, 0, 1], DEFAULT_PORT)),
            max_sessions: 8,
            static_dir: None,
            log_dir: None,
            tick: Duration::from_millis(100),
            horizon: LIVE_HORIZON,
        }
    }
}

struct Shared {
    cfg: ServerConfig,
    active: AtomicUsize,
    next_id: AtomicU64,
}

/// Releases a session slot when dropped.
struct Slot(Arc<Shared>);

impl Slot {
    fn acquire(shared: &Arc<Shared>) -> Option<Slot> {
        let max = shared.cfg.max_sessions;
        shared
            .active
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| (n < max).then_some(n + 1))
            .ok()
            .map(|_| Slot(shared.clone()))
    }
}

impl Drop for Slot {
    fn drop(&mut self) {
        self.0.active.fetch_sub(1, Ordering::SeqCst);
    }
}

const PLACEHOLDER: &str = "<!doctype html><title>movingout</title>\
<p>No web client installed. Start the server with <code>--static-dir</code> \
pointing at the built client, or connect a WebSocket client to <code>/ws</code>.</p>";

pub fn router(cfg: ServerConfig) -> Router {
    let static_dir = cfg.static_dir.clone();
    let shared = Arc::new(Shared {
        cfg,
        active: AtomicUsize::new(0),
        next_id: AtomicU64::new(1),
    });
    let app = Router::new().route("/ws", get(upgrade)).with_state(shared);
    match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.route("/", get(|| async { Html(PLACEHOLDER) })),
    }
}

/// Serves on an already bound listener until the task is dropped.
pub async fn serve(listener: TcpListener, cfg: ServerConfig) -> std::io::Result<()> {
    axum::serve(listener, router(cfg)).await
}

pub async fn run(cfg: ServerConfig) -> std::io::Result<()> {
    let listener = TcpListener::bind(cfg.addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    serve(listener, cfg).await
}

async fn upgrade(ws: WebSocketUpgrade, State(shared): State<Arc<Shared>>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| connection(socket, shared))
}

async fn send(tx: &mut futures::stream::SplitSink<WebSocket, Message>, msg: &ServerMsg) -> bool {
    tx.send(Message::Text(msg.to_text().into())).await.is_ok()
}

fn error(message: impl Into<String>) -> ServerMsg {
    ServerMsg::Error {
        message: message.into(),
    }
}

async fn await_hello(
    tx: &mut futures::stream::SplitSink<WebSocket, Message>,
    rx: &mut futures::stream::SplitStream<WebSocket>,
) -> Option<Hello> {
    while let Some(Ok(msg)) = rx.next().await {
        match msg {
            Message::Text(text) => match serde_json::from_str::<ClientMsg>(&text) {
                Ok(ClientMsg::Hello(h)) => return Some(h),
                Ok(ClientMsg::Action(_)) => {
                    send(tx, &error("send hello before actions")).await;
                }
                Err(e) => {
                    send(tx, &error(format!("malformed message: {e}"))).await;
                }
            },
            Message::Close(_) => return None,
            _ => {}
        }
    }
    None
}

async fn connection(socket: WebSocket, shared: Arc<Shared>) {
    let (mut tx, mut rx) = socket.split();
    let Some(hello) = await_hello(&mut tx, &mut rx).await else { return };
    let Some(_slot) = Slot::acquire(&shared) else {
        send(&mut tx, &error("bad request: session limit reached")).await;
        return;
    };
    let id = shared.next_id.fetch_add(1, Ordering::SeqCst);
    let (mut session, first) = match Session::open(id, &hello, shared.cfg.horizon) {
        Ok(x) => x,
        Err(e) => {
            send(&mut tx, &error(e.to_string())).await;
            return;
        }
    };
    if !send(&mut tx, &ServerMsg::State(first)).await {
        return;
    }
    let period = shared.cfg.tick;
    let mut timer = tokio::time::interval_at(tokio::time::Instant::now() + period, period);
    timer.set_missed_tick_behavior(MissedTickBehavior::Delay);
    loop {
        tokio::select! {
            _ = timer.tick() => {
                let started = Instant::now();
                let tick = session.tick();
                if started.elapsed() > period {
                    session.overruns += 1;
                }
                match tick {
                    Ok(Tick::State(s)) => {
                        if !send(&mut tx, &ServerMsg::State(s)).await {
                            return;
                        }
                    }
                    Ok(Tick::End(s, mut end)) => {
                        end.overruns = session.overruns;
                        end.log = write_log(&shared.cfg, &session, &hello);
                        send(&mut tx, &ServerMsg::State(s)).await;
                        send(&mut tx, &ServerMsg::End(end)).await;
                        let _ = tx.send(Message::Close(None)).await;
                        // finish the closing handshake before dropping the socket
                        while let Ok(Some(Ok(m))) = tokio::time::timeout(Duration::from_secs(1), rx.next()).await {
                            if matches!(m, Message::Close(_)) {
                                break;
                            }
                        }
                        return;
                    }
                    Err(e) => {
                        send(&mut tx, &error(e.to_string())).await;
                        return;
                    }
                }
            }
            msg = rx.next() => match msg {
                Some(Ok(Message::Text(text))) => {
                    let reply = match serde_json::from_str::<ClientMsg>(&text) {
                        Ok(ClientMsg::Action(a)) => session.latch(a).err().map(|e| error(e.to_string())),
                        Ok(ClientMsg::Hello(_)) => Some(error("session already open")),
                        Err(e) => Some(error(format!("malformed message: {e}"))),
                    };
                    if let Some(r) = reply {
                        if !send(&mut tx, &r).await {
                            return;
                        }
                    }
                }
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => return,
                Some(Ok(_)) => {}
            },
        }
    }
}

fn write_log(cfg: &ServerConfig, session: &Session, hello: &Hello) -> Option<String> {
    let dir = cfg.log_dir.as_ref()?;
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0);
    let path = dir.join(format!("session-{}-{stamp}-seed{}.jsonl", session.id, hello.seed));
    match std::fs::create_dir_all(dir).map_err(|e| e.to_string()).and_then(|_| {
        write_trajectory(&session.trajectory(), &path).map_err(|e| e.to_string())
    }) {
        Ok(()) => Some(path.display().to_string()),
        Err(e) => {
            eprintln!("session {}: could not write log: {e}", session.id);
            None
        }
    }
}

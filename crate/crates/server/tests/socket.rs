use std::time::Duration;

use futures::{SinkExt, StreamExt};
use movingout::data_io::{read_trajectory, replay};
use movingout::metrics::{evaluate, AcDenominator, DistanceField};
use movingout_server::protocol::{ServerMsg, StateMsg};
use movingout_server::{serve, ServerConfig};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio_tungstenite::connect_async;
use tokio_tungstenite::tungstenite::Message;

async fn start(cfg: ServerConfig) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(serve(listener, cfg));
    addr.to_string()
}

fn fast(log_dir: Option<std::path::PathBuf>) -> ServerConfig {
    ServerConfig {
        tick: Duration::from_millis(2),
        log_dir,
        ..Default::default()
    }
}

const HELLO: &str = r#"{"type":"hello","map":3,"role":"j","policy":"scripted-greedy","mode":"raw","seed":5}"#;

fn parse(msg: Message) -> ServerMsg {
    serde_json::from_str(msg.to_text().unwrap()).unwrap()
}

#[tokio::test]
async fn headless_client_plays_a_full_session() {
    let dir = tempfile::tempdir().unwrap();
    let addr = start(fast(Some(dir.path().to_path_buf()))).await;
    let (mut ws, _) = connect_async(format!("ws://{addr}/ws")).await.unwrap();
    ws.send(Message::text(HELLO)).await.unwrap();
    let mut states: Vec<StateMsg> = Vec::new();
    let mut end = None;
    while let Some(msg) = ws.next().await {
        let msg = msg.unwrap();
        if msg.is_close() {
            break;
        }
        match parse(msg) {
            ServerMsg::State(s) => {
                let t = s.t;
                states.push(s);
                // steer west, toggling grasp now and then
                let grasp = t % 40 == 0;
                let text = format!(r#"{{"type":"action","move":0.03,"cos":-1.0,"sin":0.0,"grasp":{}}}"#, grasp as u8);
                let _ = ws.send(Message::text(text)).await;
            }
            ServerMsg::End(e) => end = Some(e),
            ServerMsg::Error { message } => panic!("server error: {message}"),
        }
    }
    let end = end.expect("end message");
    assert!(states[0].walls.is_some() && states[0].goals.is_some());
    assert!(states[1..].iter().all(|s| s.walls.is_none()));
    assert!(states.windows(2).all(|w| w[1].t == w[0].t + 1));
    assert_eq!(states.last().unwrap().t, end.steps);
    if end.reason == "timeout" {
        assert_eq!(end.steps, 500);
    }
    let traj = read_trajectory(std::path::Path::new(end.log.as_ref().unwrap())).unwrap();
    replay(&traj).unwrap();
    let ep = traj.to_episode().unwrap();
    let offline = evaluate(&ep, &DistanceField::build(&traj.header.map), AcDenominator::Joint).unwrap();
    assert_eq!(offline, end.metrics);
}

#[tokio::test]
async fn bad_hello_gets_an_error() {
    let addr = start(fast(None)).await;
    let (mut ws, _) = connect_async(format!("ws://{addr}/ws")).await.unwrap();
    ws.send(Message::text(r#"{"type":"action","move":0,"cos":1,"sin":0,"grasp":0}"#)).await.unwrap();
    assert!(matches!(parse(ws.next().await.unwrap().unwrap()), ServerMsg::Error { .. }));
    ws.send(Message::text(r#"{"type":"hello","map":3,"role":"i","policy":"nope.json","seed":0}"#)).await.unwrap();
    match parse(ws.next().await.unwrap().unwrap()) {
        ServerMsg::Error { message } => assert!(message.contains("bad request"), "{message}"),
        other => panic!("expected error, got {other:?}"),
    }
}

#[tokio::test]
async fn session_limit_is_enforced() {
    let addr = start(ServerConfig {
        max_sessions: 1,
        tick: Duration::from_millis(50),
        ..Default::default()
    })
    .await;
    let (mut a, _) = connect_async(format!("ws://{addr}/ws")).await.unwrap();
    a.send(Message::text(HELLO)).await.unwrap();
    assert!(matches!(parse(a.next().await.unwrap().unwrap()), ServerMsg::State(_)));
    let (mut b, _) = connect_async(format!("ws://{addr}/ws")).await.unwrap();
    b.send(Message::text(HELLO)).await.unwrap();
    match parse(b.next().await.unwrap().unwrap()) {
        ServerMsg::Error { message } => assert!(message.contains("limit")),
        other => panic!("expected error, got {other:?}"),
    }
}

async fn get(addr: &str, path: &str) -> String {
    let mut s = TcpStream::connect(addr).await.unwrap();
    s.write_all(format!("GET {path} HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n").as_bytes()).await.unwrap();
    let mut out = String::new();
    s.read_to_string(&mut out).await.unwrap();
    out
}

#[tokio::test]
async fn static_assets_are_served_at_root() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<p>client</p>").unwrap();
    let addr = start(ServerConfig {
        static_dir: Some(dir.path().to_path_buf()),
        ..Default::default()
    })
    .await;
    let page = get(&addr, "/").await;
    assert!(page.starts_with("HTTP/1.1 200") && page.contains("<p>client</p>"), "{page}");
    let bare = start(ServerConfig::default()).await;
    assert!(get(&bare, "/").await.contains("/ws"));
}

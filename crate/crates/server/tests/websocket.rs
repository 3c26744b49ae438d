use std::net::SocketAddr;
use std::path::Path;
use std::time::Duration;

use futures::{SinkExt, StreamExt};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio_tungstenite::tungstenite::Message as WsMessage;

use impactlab::market::{read_log_str, write_log_string, Action, Market};
use impactlab::risk::{read_responses, Scale, PAIRS};
use impactlab_server::hub::SessionStatus;
use impactlab_server::protocol::{Envelope, ErrorCode, LotteryChoice, Message};
use impactlab_server::scoring::EUR_PER_FRANC;
use impactlab_server::{http, Hub, HubConfig};

type Ws = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<TcpStream>>;

async fn serve(data_dir: &Path) -> SocketAddr {
    let hub = Hub::recover(HubConfig { data_dir: Some(data_dir.to_path_buf()), ..HubConfig::default() }).unwrap();
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, http::router(hub)).await.unwrap() });
    addr
}

async fn request(addr: SocketAddr, method: &str, path: &str, body: Option<&str>) -> (u16, String) {
    let mut s = TcpStream::connect(addr).await.unwrap();
    let head = match body {
        Some(b) => format!("Content-Type: application/json\r\nContent-Length: {}\r\n", b.len()),
        None => "Content-Length: 0\r\n".to_string(),
    };
    let req = format!("{method} {path} HTTP/1.1\r\nHost: test\r\nConnection: close\r\n{head}\r\n{}", body.unwrap_or(""));
    s.write_all(req.as_bytes()).await.unwrap();
    let mut buf = Vec::new();
    s.read_to_end(&mut buf).await.unwrap();
    let text = String::from_utf8(buf).unwrap();
    let status = text[9..12].parse().unwrap();
    let body = text.split_once("\r\n\r\n").map_or("", |(_, b)| b).to_string();
    (status, body)
}

fn session_body(id: &str, seed: u64) -> String {
    serde_json::json!({
        "session_id": id,
        "pair_id": "g1",
        "settle_early": true,
        "config": { "depth_n": 3, "seed": seed, "fixed_end_round": 3, "round_seconds": 0.3 },
        "roster": { "agents": [
            { "count": 1, "strategy": "human" },
            { "count": 2, "strategy": "buy_and_hold" }
        ] }
    })
    .to_string()
}

async fn connect(addr: SocketAddr) -> Ws {
    tokio_tungstenite::connect_async(format!("ws://{addr}/ws")).await.unwrap().0
}

async fn send(ws: &mut Ws, env: Envelope) {
    ws.send(WsMessage::Text(env.encode().into())).await.unwrap();
}

async fn recv(ws: &mut Ws) -> Envelope {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(5), ws.next()).await.expect("server message").unwrap().unwrap();
        if let WsMessage::Text(t) = msg {
            return Envelope::decode(t.as_str()).unwrap();
        }
    }
}

async fn join(addr: SocketAddr, session: &str, token: &str) -> Ws {
    let mut ws = connect(addr).await;
    send(&mut ws, Envelope::new(session, None, Message::Join { token: token.into() })).await;
    let env = recv(&mut ws).await;
    assert!(matches!(env.message, Message::Welcome(_)), "{env:?}");
    ws
}

/// Plays until SESSION_END. Buys at round 0; lets `skip` time out.
async fn play(ws: &mut Ws, session: &str, skip: Option<u32>) -> Vec<bool> {
    let mut carried = Vec::new();
    loop {
        let env = recv(ws).await;
        match env.message {
            Message::RoundOpen(open) => {
                let t = env.round.unwrap();
                assert!(env.ts_ms.is_some());
                if Some(t) == skip {
                    continue;
                }
                let action = if t == 0 { Action::Buy } else { open.legal_actions[0] };
                send(ws, Envelope::new(session, Some(t), Message::Forecast { price: open.prices[t as usize] })).await;
                send(ws, Envelope::new(session, Some(t), Message::Decision { action })).await;
            }
            Message::RoundResult(r) => carried.push(r.carried_over),
            Message::SessionEnd(_) => return carried,
            other => panic!("unexpected {other:?}"),
        }
    }
}

async fn export(addr: SocketAddr, id: &str) -> impactlab::market::SessionLog {
    let (code, body) = request(addr, "GET", &format!("/admin/sessions/{id}/export"), None).await;
    assert_eq!(code, 200);
    read_log_str(&body).unwrap()
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn paired_sessions_lottery_and_payout() {
    let dir = tempfile::tempdir().unwrap();
    let addr = serve(dir.path()).await;
    assert_eq!(request(addr, "GET", "/health", None).await, (200, "ok".into()));

    let (code, body) = request(addr, "POST", "/admin/sessions", Some(&session_body("a", 11))).await;
    assert_eq!(code, 201, "{body}");
    let a: SessionStatus = serde_json::from_str(&body).unwrap();
    let token = a.tokens[0].token.clone();
    // paired sessions must share the noise seed
    let (code, _) = request(addr, "POST", "/admin/sessions", Some(&session_body("b", 12))).await;
    assert_eq!(code, 409);
    let (code, body) = request(addr, "POST", "/admin/sessions", Some(&session_body("b", 11))).await;
    assert_eq!(code, 201);
    let b: SessionStatus = serde_json::from_str(&body).unwrap();
    assert_eq!(b.tokens, a.tokens);
    let (code, _) = request(addr, "POST", "/admin/sessions", Some(&session_body("c", 11))).await;
    assert_eq!(code, 409);
    assert_eq!(request(addr, "POST", "/admin/sessions/zz/start", None).await.0, 404);

    // first session, every round answered
    let mut ws = join(addr, "a", &token).await;
    assert_eq!(request(addr, "POST", "/admin/sessions/a/start", None).await.0, 200);
    assert_eq!(play(&mut ws, "a", None).await, vec![false; 4]);
    let log_a = export(addr, "a").await;
    assert_eq!(write_log_string(&Market::replay(&log_a).unwrap()), write_log_string(&log_a));
    assert_eq!(log_a.rounds[0].per_trader[0].action, Action::Buy);
    drop(ws);

    // second session, round 1 times out
    let mut ws = join(addr, "b", &token).await;
    assert_eq!(request(addr, "POST", "/admin/sessions/b/start", None).await.0, 200);
    assert_eq!(play(&mut ws, "b", Some(1)).await, vec![false, true, false, false]);
    let log_b = export(addr, "b").await;
    assert_eq!(log_a.etas(), log_b.etas());

    let env = recv(&mut ws).await;
    let Message::LotteryTask(task) = env.message else { panic!("{env:?}") };
    assert_eq!(task.pairs.len(), 2 * PAIRS);
    assert!(task.answered.is_empty());
    let choice = |scale, index| LotteryChoice { scale, index, risky: index > 4, submit: false };
    for index in 1..=5 {
        send(&mut ws, Envelope::new("b", None, Message::LotteryChoice(choice(Scale::X2, index)))).await;
    }
    let mut early = choice(Scale::X2, 6);
    early.submit = true;
    send(&mut ws, Envelope::new("b", None, Message::LotteryChoice(early))).await;
    let env = recv(&mut ws).await;
    assert!(matches!(&env.message, Message::Error(e) if e.code == ErrorCode::Incomplete), "{env:?}");
    drop(ws);

    // reconnecting resumes the task where it stopped
    let mut ws = join(addr, "b", &token).await;
    assert!(matches!(recv(&mut ws).await.message, Message::SessionEnd(_)));
    let Message::LotteryTask(task) = recv(&mut ws).await.message else { panic!("task expected") };
    assert_eq!(task.answered.len(), 6);
    let mut payout = None;
    for scale in Scale::ALL {
        for index in 1..=PAIRS {
            let mut c = choice(scale, index);
            c.submit = scale == Scale::X10 && index == PAIRS;
            send(&mut ws, Envelope::new("b", None, Message::LotteryChoice(c))).await;
        }
    }
    while payout.is_none() {
        if let Message::Payout(p) = recv(&mut ws).await.message {
            payout = Some(p);
        }
    }
    let p = payout.unwrap();
    let paid = if p.session_dice <= 3 { &log_a } else { &log_b };
    assert_eq!(p.selected_session, if p.session_dice <= 3 { "a" } else { "b" });
    assert_eq!(p.net_francs, paid.liquidation[0].net);
    let lottery = p.lottery.unwrap().payoff_eur;
    let want = (p.net_francs.max(0.0) + p.forecast_francs) * EUR_PER_FRANC + lottery;
    assert!((p.total_eur - want).abs() < 1e-12);

    let (code, csv) = request(addr, "GET", "/admin/pairs/g1/lottery", None).await;
    assert_eq!(code, 200);
    let responses = read_responses(csv.as_bytes()).unwrap();
    assert_eq!(responses.len(), 2);
    assert!(responses.iter().all(|r| r.subject_id == "g1:0" && r.safe_count() == 4));
    let (_, payouts) = request(addr, "GET", "/admin/pairs/g1/payouts", None).await;
    let rows: serde_json::Value = serde_json::from_str(&payouts).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 1);

    // a restarted server recovers sessions and the fixed payout
    let addr2 = serve(dir.path()).await;
    let (_, body) = request(addr2, "GET", "/admin/sessions", None).await;
    let list: Vec<SessionStatus> = serde_json::from_str(&body).unwrap();
    assert_eq!(list.iter().map(|s| s.session_id.as_str()).collect::<Vec<_>>(), vec!["a", "b"]);
    assert_eq!(write_log_string(&export(addr2, "b").await), write_log_string(&log_b));
    let (_, body2) = request(addr2, "GET", "/admin/pairs/g1/payouts", None).await;
    assert_eq!(body2, payouts);
}

#[tokio::test]
async fn protocol_errors_reach_the_client() {
    let dir = tempfile::tempdir().unwrap();
    let addr = serve(dir.path()).await;
    let (_, body) = request(addr, "POST", "/admin/sessions", Some(&session_body("x", 1))).await;
    let status: SessionStatus = serde_json::from_str(&body).unwrap();

    let mut ws = connect(addr).await;
    send(&mut ws, Envelope::new("x", Some(0), Message::Decision { action: Action::Buy })).await;
    assert!(matches!(recv(&mut ws).await.message, Message::Error(e) if e.code == ErrorCode::NotJoined));
    ws.send(WsMessage::Text(r#"{"schema_version":9,"session_id":"x","kind":"JOIN","payload":{"token":"t"}}"#.into()))
        .await
        .unwrap();
    assert!(matches!(recv(&mut ws).await.message, Message::Error(e) if e.code == ErrorCode::VersionMismatch));
    send(&mut ws, Envelope::new("x", None, Message::Join { token: "nope".into() })).await;
    assert!(matches!(recv(&mut ws).await.message, Message::Error(e) if e.code == ErrorCode::UnknownToken));

    send(&mut ws, Envelope::new("x", None, Message::Join { token: status.tokens[0].token.clone() })).await;
    assert!(matches!(recv(&mut ws).await.message, Message::Welcome(_)));
    send(&mut ws, Envelope::new("x", Some(0), Message::Decision { action: Action::Buy })).await;
    assert!(matches!(recv(&mut ws).await.message, Message::Error(e) if e.code == ErrorCode::NotRunning));
    let lottery = LotteryChoice { scale: Scale::X2, index: 1, risky: false, submit: false };
    send(&mut ws, Envelope::new("x", None, Message::LotteryChoice(lottery))).await;
    assert!(matches!(recv(&mut ws).await.message, Message::Error(e) if e.code == ErrorCode::LotteryNotOpen));

    let (code, body) = request(addr, "POST", "/admin/sessions/x/abort", Some(r#"{"reason":"test"}"#)).await;
    assert_eq!(code, 200, "{body}");
    assert!(matches!(recv(&mut ws).await.message, Message::SessionEnd(e) if e.aborted));
    assert_eq!(request(addr, "GET", "/admin/sessions/x/export", None).await.0, 409);
}

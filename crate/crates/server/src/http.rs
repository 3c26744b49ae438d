//! HTTP surface: the participant websocket and the admin endpoints.

use std::sync::Arc;

use axum::extract::ws::{Message as WsMessage, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use serde::Deserialize;
use tokio::sync::mpsc;

use impactlab::market::write_log_string;

use crate::hub::{now_ms, CreateSession, Hub, HubError};
use crate::protocol::{Envelope, ErrorCode, Message, ProtocolError};
use crate::session::SessionError;

pub fn router(hub: Arc<Hub>) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/ws", get(ws_upgrade))
        .route("/admin/sessions", post(create).get(list))
        .route("/admin/sessions/{id}", get(status))
        .route("/admin/sessions/{id}/start", post(start))
        .route("/admin/sessions/{id}/abort", post(abort))
        .route("/admin/sessions/{id}/export", get(export))
        .route("/admin/pairs/{pair}/lottery", get(lottery))
        .route("/admin/pairs/{pair}/payouts", get(payouts))
        .with_state(hub)
}

struct ApiError(HubError);

impl From<HubError> for ApiError {
    fn from(e: HubError) -> Self {
        Self(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let code = match &self.0 {
            HubError::NotFound(_) => StatusCode::NOT_FOUND,
            HubError::Conflict(_) => StatusCode::CONFLICT,
            HubError::Session(SessionError::Plan(_) | SessionError::Agents(_) | SessionError::Market(_)) => {
                StatusCode::BAD_REQUEST
            }
            HubError::Session(SessionError::Halted | SessionError::NotFinished) => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (code, Json(serde_json::json!({ "error": self.0.to_string() }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn create(State(hub): State<Arc<Hub>>, body: Option<Json<CreateSession>>) -> ApiResult<impl IntoResponse> {
    let req = body.map(|Json(b)| b).unwrap_or_default();
    Ok((StatusCode::CREATED, Json(hub.create_session(req)?)))
}

async fn list(State(hub): State<Arc<Hub>>) -> impl IntoResponse {
    Json(hub.list())
}

async fn status(State(hub): State<Arc<Hub>>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(hub.status(&id)?))
}

async fn start(State(hub): State<Arc<Hub>>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(hub.start(&id)?))
}

#[derive(Debug, Default, Deserialize)]
struct AbortBody {
    #[serde(default)]
    reason: Option<String>,
}

async fn abort(
    State(hub): State<Arc<Hub>>,
    Path(id): Path<String>,
    body: Option<Json<AbortBody>>,
) -> ApiResult<impl IntoResponse> {
    let reason = body.and_then(|Json(b)| b.reason).unwrap_or_else(|| "aborted by operator".into());
    Ok(Json(hub.abort(&id, &reason)?))
}

/// The session log as JSON lines: header, one line per round, then the
/// liquidation table.
async fn export(State(hub): State<Arc<Hub>>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let log = hub.export(&id)?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], write_log_string(&log)))
}

async fn lottery(State(hub): State<Arc<Hub>>, Path(pair): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(([(header::CONTENT_TYPE, "text/csv")], hub.lottery_csv(&pair)?))
}

async fn payouts(State(hub): State<Arc<Hub>>, Path(pair): Path<String>) -> ApiResult<impl IntoResponse> {
    let rows: Vec<serde_json::Value> = hub
        .payouts(&pair)?
        .into_iter()
        .map(|(subject_id, payout)| serde_json::json!({ "subject_id": subject_id, "payout": payout }))
        .collect();
    Ok(Json(rows))
}

async fn ws_upgrade(State(hub): State<Arc<Hub>>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| serve_socket(socket, hub))
}

fn error_envelope(session_id: &str, round: Option<u32>, e: ProtocolError) -> Envelope {
    Envelope::new(session_id, round, Message::Error(e)).stamped(now_ms())
}

/// One participant connection. The first message must be JOIN; afterwards
/// the connection is bound to one seat.
async fn serve_socket(socket: WebSocket, hub: Arc<Hub>) {
    let (mut sink, mut stream) = socket.split();
    let (tx, mut rx) = mpsc::unbounded_channel::<Envelope>();
    let writer = tokio::spawn(async move {
        while let Some(env) = rx.recv().await {
            if sink.send(WsMessage::Text(env.encode().into())).await.is_err() {
                break;
            }
        }
    });
    let conn = hub.next_conn_id();
    let mut seat: Option<(String, usize)> = None;
    while let Some(Ok(msg)) = stream.next().await {
        let text = match msg {
            WsMessage::Text(t) => t.to_string(),
            WsMessage::Close(_) => break,
            _ => continue,
        };
        let env = match Envelope::decode(&text) {
            Ok(env) => env,
            Err(e) => {
                let sid = seat.as_ref().map_or("", |(s, _)| s.as_str());
                let _ = tx.send(error_envelope(sid, None, e));
                continue;
            }
        };
        match (&seat, &env.message) {
            (_, Message::Join { token }) => {
                if let Some((sid, trader)) = seat.take() {
                    hub.disconnect(conn, &sid, trader);
                }
                match hub.join(conn, &env.session_id, token, tx.clone()) {
                    Ok(trader) => seat = Some((env.session_id.clone(), trader)),
                    Err(e) => {
                        let _ = tx.send(error_envelope(&env.session_id, None, e));
                    }
                }
            }
            (None, _) => {
                let e = ProtocolError::new(ErrorCode::NotJoined, "send JOIN first");
                let _ = tx.send(error_envelope(&env.session_id, env.round, e));
            }
            (Some((sid, trader)), _) => {
                if *sid != env.session_id {
                    let e = ProtocolError::new(ErrorCode::BadMessage, format!("connection is bound to session {sid}"));
                    let _ = tx.send(error_envelope(sid, env.round, e));
                } else {
                    hub.inbound(sid, *trader, env);
                }
            }
        }
    }
    if let Some((sid, trader)) = seat {
        hub.disconnect(conn, &sid, trader);
    }
    drop(tx);
    let _ = writer.await;
}

//! Telemetry and control over a WebSocket at `/ws`, plus optional static
//! assets for the console. Message schema: see [`crate::telemetry`].

use std::path::PathBuf;
use std::sync::mpsc::Sender;
use std::sync::{Arc, Mutex};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use tokio::sync::watch;
use tower_http::services::ServeDir;
use tracing::debug;

use crate::telemetry::{ClientMessage, ServerMessage, TelemetrySnapshot};

pub type SnapshotReceiver = watch::Receiver<Option<Arc<TelemetrySnapshot>>>;

/// Publishing end handed to the control loop.
pub fn snapshot_channel() -> (impl FnMut(Arc<TelemetrySnapshot>) + Send + 'static, SnapshotReceiver) {
    let (tx, rx) = watch::channel(None);
    (move |snap| tx.send_replace(Some(snap)).map_or((), |_| ()), rx)
}

#[derive(Clone)]
pub struct ServerState {
    snapshots: SnapshotReceiver,
    controls: Arc<Mutex<Sender<ClientMessage>>>,
}

impl ServerState {
    pub fn new(snapshots: SnapshotReceiver, controls: Sender<ClientMessage>) -> Self {
        ServerState {
            snapshots,
            controls: Arc::new(Mutex::new(controls)),
        }
    }
}

pub fn router(state: ServerState, assets: Option<PathBuf>) -> Router {
    let router = Router::new().route("/ws", get(upgrade)).route("/snapshot", get(latest));
    let router = match assets {
        Some(dir) => router.fallback_service(ServeDir::new(dir)),
        None => router.route("/", get(|| async { "wastive telemetry: open a WebSocket at /ws\n" })),
    };
    router.with_state(state)
}

async fn latest(State(state): State<ServerState>) -> Response {
    match state.snapshots.borrow().clone() {
        Some(snap) => Json(ServerMessage::Snapshot((*snap).clone())).into_response(),
        None => (StatusCode::SERVICE_UNAVAILABLE, "no snapshot yet").into_response(),
    }
}

async fn upgrade(ws: WebSocketUpgrade, State(state): State<ServerState>) -> Response {
    ws.on_upgrade(move |socket| session(socket, state))
}

async fn session(mut socket: WebSocket, state: ServerState) {
    let mut snapshots = state.snapshots.clone();
    snapshots.mark_changed();
    loop {
        tokio::select! {
            changed = snapshots.changed() => {
                if changed.is_err() {
                    break;
                }
                let snap = snapshots.borrow_and_update().clone();
                if let Some(snap) = snap {
                    let text = ServerMessage::Snapshot((*snap).clone()).to_json();
                    if socket.send(Message::Text(text.into())).await.is_err() {
                        break;
                    }
                }
            }
            incoming = socket.recv() => {
                let text = match incoming {
                    Some(Ok(Message::Text(text))) => text,
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => continue,
                };
                let reply = match ClientMessage::parse(&text) {
                    Ok(msg) => {
                        debug!(?msg, "control message");
                        match state.controls.lock().unwrap().send(msg) {
                            Ok(()) => None,
                            Err(_) => Some("control loop is not running".to_string()),
                        }
                    }
                    Err(e) => Some(e.to_string()),
                };
                if let Some(message) = reply {
                    let text = ServerMessage::Error { message }.to_json();
                    if socket.send(Message::Text(text.into())).await.is_err() {
                        break;
                    }
                }
            }
        }
    }
}

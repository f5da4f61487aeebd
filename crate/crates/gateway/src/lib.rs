//! HTTP and WebSocket front end for the digital twin entity.
//!
//! Handlers never touch twin state directly. Reads come from the shared
//! snapshot cell and writes go through the entity's command queue.

use std::future::Future;
use std::net::SocketAddr;
use std::sync::mpsc::RecvTimeoutError;
use std::time::Duration;

use axum::extract::ws::{Message as WsMessage, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use dts_core::gateway::{
    handle_command, report_bounds, CommandError, CommandReply, CommandRequest, GatewayLink, ReportRequest,
    ReportResponse, Snapshot, STREAM_PERIOD_MS,
};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::{oneshot, watch};

pub use dts_core::gateway::DEFAULT_HTTP_ADDR;

#[derive(Debug, Clone, Copy)]
pub struct GatewayConfig {
    pub stream_period: Duration,
    /// How long a request waits for the twin entity to answer.
    pub reply_timeout: Duration,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            stream_period: Duration::from_millis(STREAM_PERIOD_MS),
            reply_timeout: Duration::from_secs(5),
        }
    }
}

#[derive(Clone)]
struct AppState {
    link: GatewayLink,
    cfg: GatewayConfig,
    closing: Option<watch::Receiver<bool>>,
}

/// Body of every `/api/command` response and of report errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandResponse {
    pub accepted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<String>,
}

impl CommandResponse {
    fn ok() -> Self {
        Self {
            accepted: true,
            error: None,
            code: None,
        }
    }

    fn rejected(code: &str, error: impl Into<String>) -> Self {
        Self {
            accepted: false,
            error: Some(error.into()),
            code: Some(code.to_string()),
        }
    }
}

fn reject(status: StatusCode, code: &str, msg: impl Into<String>) -> Response {
    (status, Json(CommandResponse::rejected(code, msg))).into_response()
}

fn invalid(e: &CommandError) -> Response {
    let status = StatusCode::from_u16(e.http_status()).unwrap_or(StatusCode::BAD_REQUEST);
    reject(status, e.code(), e.to_string())
}

pub fn router(link: GatewayLink, cfg: GatewayConfig) -> Router {
    app_router(AppState {
        link,
        cfg,
        closing: None,
    })
}

fn app_router(state: AppState) -> Router {
    Router::new()
        .route("/api/state", get(get_state))
        .route("/api/command", post(post_command))
        .route("/api/report", post(post_report))
        .route("/ws/stream", get(ws_stream))
        .with_state(state)
}

async fn get_state(State(app): State<AppState>) -> Json<Snapshot> {
    Json((*app.link.snapshots.latest()).clone())
}

/// Queue `cmd` and wait off the async runtime for the entity's reply.
async fn dispatch(app: &AppState, cmd: CommandRequest) -> Result<CommandReply, Response> {
    let rx = app
        .link
        .submit(cmd)
        .map_err(|_| reject(StatusCode::SERVICE_UNAVAILABLE, "unavailable", "digital twin entity is not running"))?;
    let timeout = app.cfg.reply_timeout;
    let waited = tokio::task::spawn_blocking(move || rx.recv_timeout(timeout))
        .await
        .map_err(|e| reject(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
    match waited {
        Ok(reply) => Ok(reply),
        Err(RecvTimeoutError::Timeout) => Err(reject(
            StatusCode::GATEWAY_TIMEOUT,
            "timeout",
            "digital twin entity did not answer in time",
        )),
        Err(RecvTimeoutError::Disconnected) => Err(reject(
            StatusCode::SERVICE_UNAVAILABLE,
            "unavailable",
            "digital twin entity stopped",
        )),
    }
}

async fn post_command(State(app): State<AppState>, body: String) -> Response {
    let cmd = match handle_command(&body, &app.link.acc_params) {
        Ok(c) => c,
        Err(e) => return invalid(&e),
    };
    match dispatch(&app, cmd).await {
        Ok(CommandReply::Accepted | CommandReply::Report(_)) => (StatusCode::OK, Json(CommandResponse::ok())).into_response(),
        Ok(CommandReply::Failed(msg)) => reject(StatusCode::UNPROCESSABLE_ENTITY, "rejected", msg),
        Err(resp) => resp,
    }
}

async fn post_report(State(app): State<AppState>, body: String) -> Response {
    let req: ReportRequest = if body.trim().is_empty() {
        ReportRequest::default()
    } else {
        match serde_json::from_str(&body) {
            Ok(r) => r,
            Err(e) => return invalid(&CommandError::Malformed(e.to_string())),
        }
    };
    let cmd = match report_bounds(req.from_us, req.to_us) {
        Ok(c) => c,
        Err(e) => return invalid(&e),
    };
    match dispatch(&app, cmd).await {
        Ok(CommandReply::Report(summary)) => (StatusCode::OK, Json(ReportResponse::from(&summary))).into_response(),
        Ok(CommandReply::Accepted) => reject(StatusCode::INTERNAL_SERVER_ERROR, "internal", "no report produced"),
        Ok(CommandReply::Failed(msg)) => reject(StatusCode::INTERNAL_SERVER_ERROR, "report_failed", msg),
        Err(resp) => resp,
    }
}

async fn ws_stream(State(app): State<AppState>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| stream_snapshots(socket, app))
}

/// Resolves once the server begins shutting down.
async fn closing(rx: &mut Option<watch::Receiver<bool>>) {
    match rx {
        Some(rx) => {
            let _ = rx.wait_for(|c| *c).await;
        }
        None => std::future::pending().await,
    }
}

async fn stream_snapshots(mut socket: WebSocket, mut app: AppState) {
    let mut ticker = tokio::time::interval(app.cfg.stream_period);
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
    loop {
        tokio::select! {
            _ = ticker.tick() => {
                let snap = app.link.snapshots.latest();
                let text = match serde_json::to_string(&*snap) {
                    Ok(t) => t,
                    Err(e) => {
                        log::error!("snapshot encode failed: {e}");
                        continue;
                    }
                };
                if socket.send(WsMessage::Text(text.into())).await.is_err() {
                    break;
                }
            }
            _ = closing(&mut app.closing) => {
                let _ = socket.send(WsMessage::Close(None)).await;
                break;
            }
            incoming = socket.recv() => match incoming {
                None | Some(Err(_)) | Some(Ok(WsMessage::Close(_))) => break,
                Some(Ok(_)) => {}
            },
        }
    }
}

/// Serve until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    link: GatewayLink,
    cfg: GatewayConfig,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let (tx, closing) = watch::channel(false);
    let app = app_router(AppState {
        link,
        cfg,
        closing: Some(closing),
    });
    axum::serve(listener, app)
        .with_graceful_shutdown(async move {
            shutdown.await;
            let _ = tx.send(true);
        })
        .await
}

/// A gateway running on its own thread and runtime.
#[derive(Debug)]
pub struct GatewayHandle {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<std::io::Result<()>>>,
}

impl GatewayHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(mut self) -> std::io::Result<()> {
        self.stop_and_join()
    }

    fn stop_and_join(&mut self) -> std::io::Result<()> {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        match self.thread.take().map(|t| t.join()) {
            Some(Ok(r)) => r,
            Some(Err(_)) => Err(std::io::Error::other("gateway thread panicked")),
            None => Ok(()),
        }
    }
}

impl Drop for GatewayHandle {
    fn drop(&mut self) {
        if let Err(e) = self.stop_and_join() {
            log::warn!("gateway shutdown: {e}");
        }
    }
}

/// Bind `addr` and serve from a background thread.
pub fn spawn(addr: SocketAddr, link: GatewayLink, cfg: GatewayConfig) -> std::io::Result<GatewayHandle> {
    let std_listener = std::net::TcpListener::bind(addr)?;
    std_listener.set_nonblocking(true)?;
    let local = std_listener.local_addr()?;
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .thread_name("dts-gateway")
        .build()?;
    let (tx, rx) = oneshot::channel();
    let thread = std::thread::Builder::new().name("dts-gateway".into()).spawn(move || {
        rt.block_on(async move {
            let listener = TcpListener::from_std(std_listener)?;
            serve(listener, link, cfg, async {
                let _ = rx.await;
            })
            .await
        })
    })?;
    log::info!("gateway listening on http://{local}");
    Ok(GatewayHandle {
        addr: local,
        stop: Some(tx),
        thread: Some(thread),
    })
}

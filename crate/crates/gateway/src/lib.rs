//! HTTP and WebSocket front end for a running range.
//!
//! Routes:
//! - `GET /points`: configured SCADA points with their latest values
//! - `POST /points/{name}/command` with `{value, operator_id}`
//! - `GET /commands/{id}`: command status
//! - `GET /status`
//! - `GET /topology/power`, `GET /topology/cyber`
//! - `GET /stream` (WebSocket): one `{tick, updates:[{point,value}]}` per step,
//!   optionally filtered with `?points=a,b`

mod runner;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use sgcr_core::gateway::CommandError;
use sgcr_core::store::Value;
use tokio::net::TcpListener;
use tokio::sync::broadcast::error::RecvError;

pub use runner::{Pacing, RangeHandle, RunStatus, RunnerError};

#[derive(Debug, Deserialize)]
pub struct CommandBody {
    pub value: Value,
    pub operator_id: String,
}

#[derive(Debug, Deserialize)]
struct StreamQuery {
    points: Option<String>,
}

struct ApiError(RunnerError);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            RunnerError::Stopped => StatusCode::SERVICE_UNAVAILABLE,
            RunnerError::Command(CommandError::UnknownPoint(_)) => StatusCode::NOT_FOUND,
            RunnerError::Command(CommandError::NotWritable(_)) => StatusCode::FORBIDDEN,
            RunnerError::Command(_) => StatusCode::BAD_GATEWAY,
            RunnerError::Finished => StatusCode::CONFLICT,
            RunnerError::NoGateway => StatusCode::NOT_FOUND,
        };
        (status, Json(serde_json::json!({ "error": self.0.to_string() }))).into_response()
    }
}

impl From<RunnerError> for ApiError {
    fn from(e: RunnerError) -> Self {
        ApiError(e)
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn raw_json(body: String) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], body).into_response()
}

async fn points(State(h): State<RangeHandle>) -> ApiResult<Response> {
    match h.points().await? {
        Some(p) => Ok(Json(p).into_response()),
        None => Err(RunnerError::NoGateway.into()),
    }
}

async fn command(
    State(h): State<RangeHandle>,
    Path(name): Path<String>,
    Json(body): Json<CommandBody>,
) -> ApiResult<Response> {
    let id = h.command(&name, body.value, &body.operator_id).await?;
    let rec = h.command_record(id).await?;
    Ok((StatusCode::ACCEPTED, Json(rec)).into_response())
}

async fn command_status(State(h): State<RangeHandle>, Path(id): Path<u64>) -> ApiResult<Response> {
    Ok(match h.command_record(id).await? {
        Some(r) => Json(r).into_response(),
        None => (StatusCode::NOT_FOUND, Json(serde_json::json!({ "error": format!("no command {id}") }))).into_response(),
    })
}

async fn status(State(h): State<RangeHandle>) -> ApiResult<Json<RunStatus>> {
    Ok(Json(h.status().await?))
}

async fn power(State(h): State<RangeHandle>) -> ApiResult<Response> {
    Ok(raw_json(h.power_json().await?))
}

async fn cyber(State(h): State<RangeHandle>) -> ApiResult<Response> {
    Ok(raw_json(h.cyber_json().await?))
}

async fn stream(ws: WebSocketUpgrade, State(h): State<RangeHandle>, Query(q): Query<StreamQuery>) -> Response {
    let filter: Option<Vec<String>> = q
        .points
        .map(|p| p.split(',').filter(|s| !s.is_empty()).map(str::to_string).collect());
    ws.on_upgrade(move |socket| forward(socket, h, filter))
}

async fn forward(mut socket: WebSocket, h: RangeHandle, filter: Option<Vec<String>>) {
    let mut rx = h.subscribe();
    loop {
        tokio::select! {
            batch = rx.recv() => match batch {
                Ok(b) => {
                    let b = b.filtered(filter.as_deref());
                    let text = serde_json::to_string(&b).expect("batch serializes");
                    if socket.send(Message::Text(text.into())).await.is_err() {
                        return;
                    }
                }
                Err(RecvError::Lagged(n)) => log::warn!("stream client lagged by {n} batches"),
                Err(RecvError::Closed) => return,
            },
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                Some(Ok(_)) => {}
            },
        }
    }
}

pub fn router(handle: RangeHandle) -> Router {
    Router::new()
        .route("/points", get(points))
        .route("/points/{name}/command", post(command))
        .route("/commands/{id}", get(command_status))
        .route("/status", get(status))
        .route("/topology/power", get(power))
        .route("/topology/cyber", get(cyber))
        .route("/stream", get(stream))
        .with_state(handle)
}

/// Serve until the listener fails.
pub async fn serve(listener: TcpListener, handle: RangeHandle) -> std::io::Result<()> {
    axum::serve(listener, router(handle)).await
}

//! HTTP API for the annotation workflow.
//!
//! ```text
//! GET  /cases/next
//! GET  /cases/{id}
//! POST /cases/{id}/validate   {"perturbed": "..."}
//! POST /cases/{id}/submit     {"perturbed": "..."}
//! GET  /progress
//! ```

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::annotation::{AnnotationStore, Submission};
use crate::error::CliError;

#[derive(Debug, Deserialize)]
pub struct PerturbedBody {
    pub perturbed: String,
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({"error": message.into()}))).into_response()
}

fn not_found(id: &str) -> Response {
    error(StatusCode::NOT_FOUND, format!("unknown case {id:?}"))
}

fn body(payload: Result<Json<PerturbedBody>, JsonRejection>) -> Result<PerturbedBody, String> {
    payload.map(|Json(b)| b).map_err(|e| e.body_text())
}

async fn next_case(State(store): State<Arc<AnnotationStore>>) -> Response {
    match store.next_open() {
        Some(task) => Json(task).into_response(),
        None => error(StatusCode::NOT_FOUND, "no open tasks"),
    }
}

async fn get_case(State(store): State<Arc<AnnotationStore>>, Path(id): Path<String>) -> Response {
    match store.task(&id) {
        Some(task) => Json(task).into_response(),
        None => not_found(&id),
    }
}

async fn validate(
    State(store): State<Arc<AnnotationStore>>,
    Path(id): Path<String>,
    payload: Result<Json<PerturbedBody>, JsonRejection>,
) -> Response {
    let b = match body(payload) {
        Ok(b) => b,
        Err(msg) => return error(StatusCode::BAD_REQUEST, msg),
    };
    match store.validate(&id, &b.perturbed) {
        Some(check) => {
            let mut v = serde_json::to_value(&check).expect("checks serialize");
            v["passes"] = Value::Bool(check.audit.passes());
            Json(v).into_response()
        }
        None => not_found(&id),
    }
}

async fn submit(
    State(store): State<Arc<AnnotationStore>>,
    Path(id): Path<String>,
    payload: Result<Json<PerturbedBody>, JsonRejection>,
) -> Response {
    let b = match body(payload) {
        Ok(b) => b,
        Err(msg) => return error(StatusCode::BAD_REQUEST, msg),
    };
    let store2 = Arc::clone(&store);
    let id2 = id.clone();
    // the store does blocking file I/O under its lock
    let outcome = tokio::task::spawn_blocking(move || store2.submit(&id2, &b.perturbed)).await;
    match outcome {
        Ok(Ok(Some(Submission::Accepted(task)))) => Json(task).into_response(),
        Ok(Ok(Some(Submission::Rejected(violations)))) => (
            StatusCode::UNPROCESSABLE_ENTITY,
            Json(json!({"error": "structural audit failed", "violations": violations})),
        )
            .into_response(),
        Ok(Ok(None)) => not_found(&id),
        Ok(Err(CliError::TaskComplete(_))) => error(StatusCode::CONFLICT, format!("task {id:?} is already complete")),
        Ok(Err(e)) => {
            log::error!("submit {id}: {e}");
            error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
        }
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn progress(State(store): State<Arc<AnnotationStore>>) -> Response {
    Json(store.progress()).into_response()
}

pub fn router(store: Arc<AnnotationStore>) -> Router {
    Router::new()
        .route("/cases/next", get(next_case))
        .route("/cases/{id}", get(get_case))
        .route("/cases/{id}/validate", post(validate))
        .route("/cases/{id}/submit", post(submit))
        .route("/progress", get(progress))
        .with_state(store)
}

/// Serves until interrupted.
pub async fn serve(store: Arc<AnnotationStore>, bind: &str) -> Result<(), CliError> {
    let listener = tokio::net::TcpListener::bind(bind)
        .await
        .map_err(|e| CliError::Server(format!("cannot bind {bind}: {e}")))?;
    log::info!("listening on {}", listener.local_addr().map_err(|e| CliError::Server(e.to_string()))?);
    axum::serve(listener, router(store))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| CliError::Server(e.to_string()))
}

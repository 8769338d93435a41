use std::sync::Arc;

use adlift_core::engine::{Command, ExperimentConfig, Report};
use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};

use crate::error::ApiError;
use crate::service::Service;
use crate::wire::{CommandReply, HistoryReply, ListReply, ReportQuery, Summary, WinnerReply};

type Shared = State<Arc<Service>>;

pub fn router(svc: Arc<Service>) -> Router {
    Router::new()
        .route("/experiments", get(list).post(create))
        .route("/experiments/{id}", get(show))
        .route("/experiments/{id}/report", get(report))
        .route("/experiments/{id}/history", get(history))
        .route("/experiments/{id}/apply-winner", post(apply_winner))
        .route("/experiments/{id}/{command}", post(command))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "NoRoute", "no such endpoint") })
        .with_state(svc)
}

async fn create(State(svc): Shared, body: Bytes) -> Result<Json<Summary>, ApiError> {
    let config: ExperimentConfig = serde_json::from_slice(&body)
        .map_err(|e| ApiError::bad_request("MalformedConfig", e.to_string()))?;
    Ok(Json(svc.create(config).await?))
}

async fn list(State(svc): Shared) -> Json<ListReply> {
    Json(svc.list())
}

async fn show(State(svc): Shared, Path(id): Path<String>) -> Result<Json<Summary>, ApiError> {
    Ok(Json(svc.summary(&id)?))
}

async fn command(
    State(svc): Shared,
    Path((id, name)): Path<(String, String)>,
) -> Result<Json<CommandReply>, ApiError> {
    let command = Command::parse(&name)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "UnknownCommand", format!("no command {name:?}")))?;
    Ok(Json(svc.command(&id, command).await?))
}

async fn apply_winner(State(svc): Shared, Path(id): Path<String>) -> Result<Json<WinnerReply>, ApiError> {
    Ok(Json(svc.apply_winner(&id).await?))
}

async fn report(
    State(svc): Shared,
    Path(id): Path<String>,
    query: Result<Query<ReportQuery>, QueryRejection>,
) -> Result<Json<Report>, ApiError> {
    let Query(query) = query.map_err(|e| ApiError::bad_request("InvalidQuery", e.body_text()))?;
    Ok(Json(svc.report(&id, query).await?))
}

async fn history(State(svc): Shared, Path(id): Path<String>) -> Result<Json<HistoryReply>, ApiError> {
    Ok(Json(svc.history(&id)?))
}

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{HeaderMap, StatusCode};
use axum::routing::{get, post};
use axum::{Json, Router};

use crate::error::{Result, ServiceError};
use crate::store::{AppState, OutcomesRequest};

pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/campaigns", post(create).get(list))
        .route("/campaigns/{id}/next", get(next))
        .route("/campaigns/{id}/outcomes", post(outcomes))
        .route("/campaigns/{id}/estimates", get(estimates))
        .route("/campaigns/{id}/cost", get(cost))
        .route("/campaigns/{id}/history", get(history))
        .with_state(state)
}

async fn create(State(app): State<AppState>, headers: HeaderMap, body: Bytes) -> Result<(StatusCode, Json<serde_json::Value>)> {
    let key = match headers.get(IDEMPOTENCY_HEADER) {
        Some(v) => Some(
            v.to_str()
                .map_err(|_| ServiceError::BadRequest("idempotency key must be visible ASCII".into()))?
                .to_owned(),
        ),
        None => None,
    };
    let (created, response) = app.create(&body, key).await?;
    let status = if created { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(serde_json::to_value(response).map_err(|e| ServiceError::Core(e.into()))?)))
}

async fn list(State(app): State<AppState>) -> Json<Vec<String>> {
    Json(app.campaign_ids())
}

async fn next(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<activeeval_core::Suggestion>> {
    Ok(Json(app.next(&id).await?))
}

async fn outcomes(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<crate::store::OutcomesResponse>> {
    let request: OutcomesRequest =
        serde_json::from_slice(&body).map_err(|e| ServiceError::BadRequest(format!("outcomes body: {e}")))?;
    Ok(Json(app.record(&id, request).await?))
}

async fn estimates(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<activeeval_core::engine::Estimates>> {
    Ok(Json(app.estimates(&id).await?))
}

async fn cost(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<crate::store::CostResponse>> {
    Ok(Json(app.cost(&id)?))
}

async fn history(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<Vec<crate::events::CampaignEvent>>> {
    Ok(Json(app.history(&id).await?))
}

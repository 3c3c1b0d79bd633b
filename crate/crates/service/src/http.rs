//! HTTP routes over [`ReviewService`].

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use tagtriage_core::consensus::{ReviewMode, ReviewerAnnotation};

use crate::error::ServiceError;
use crate::service::{CreateSession, Report, ReviewService};

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        if self.status() >= 500 {
            log::error!("{self}");
        }
        let status = StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self.body())).into_response()
    }
}

type Shared = State<Arc<ReviewService>>;

/// Run `f` off the async workers; writes fsync the log.
async fn blocking<T, F>(svc: Arc<ReviewService>, f: F) -> Result<T, ServiceError>
where
    T: Send + 'static,
    F: FnOnce(&ReviewService) -> Result<T, ServiceError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&svc))
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?
}

fn json<T: Serialize>(r: Result<T, ServiceError>) -> Response {
    match r {
        Ok(v) => Json(v).into_response(),
        Err(e) => e.into_response(),
    }
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, ServiceError> {
    serde_json::from_slice(body).map_err(|e| ServiceError::InvalidPayload {
        field: None,
        message: e.to_string(),
    })
}

pub fn router(svc: Arc<ReviewService>) -> Router {
    Router::new()
        .route("/predict", post(predict))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(session))
        .route("/sessions/{id}/next", get(next_item))
        .route("/sessions/{id}/annotations", post(submit))
        .route("/sessions/{id}/refine", post(refine))
        .route("/reports/{kind}", get(report))
        .with_state(svc)
}

async fn predict(State(svc): Shared, body: Bytes) -> Response {
    json(blocking(svc, move |s| s.predict(&body)).await)
}

async fn create_session(State(svc): Shared, body: Bytes) -> Response {
    let req: CreateSession = match parse_body(&body) {
        Ok(r) => r,
        Err(e) => return e.into_response(),
    };
    json(blocking(svc, move |s| s.create_session(&req)).await)
}

async fn session(State(svc): Shared, Path(id): Path<String>) -> Response {
    json(svc.session(&id))
}

async fn next_item(State(svc): Shared, Path(id): Path<String>, Query(q): Query<BTreeMap<String, String>>) -> Response {
    let parsed = (|| {
        let reviewer = q.get("reviewer").cloned().ok_or_else(|| ServiceError::InvalidPayload {
            field: Some("reviewer".into()),
            message: "missing query parameter".into(),
        })?;
        let mode = match q.get("mode").map(String::as_str) {
            Some("open") => ReviewMode::Open,
            Some("blind") => ReviewMode::Blind,
            _ => {
                return Err(ServiceError::InvalidPayload {
                    field: Some("mode".into()),
                    message: "expected \"open\" or \"blind\"".into(),
                })
            }
        };
        Ok((reviewer, mode))
    })();
    let (reviewer, mode) = match parsed {
        Ok(p) => p,
        Err(e) => return e.into_response(),
    };
    json(blocking(svc, move |s| s.next_item(&id, &reviewer, mode)).await)
}

/// One annotation object, or several as JSON lines (answered with a list
/// of acks; processing stops at the first failure).
async fn submit(State(svc): Shared, Path(id): Path<String>, body: Bytes) -> Response {
    let text = match std::str::from_utf8(&body) {
        Ok(t) => t,
        Err(_) => {
            return ServiceError::InvalidPayload {
                field: None,
                message: "body is not UTF-8".into(),
            }
            .into_response()
        }
    };
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let single = lines.len() <= 1;
    let annotations = if single {
        parse_body::<ReviewerAnnotation>(&body).map(|a| vec![a])
    } else {
        lines
            .iter()
            .map(|l| parse_body::<ReviewerAnnotation>(l.as_bytes()))
            .collect()
    };
    let annotations = match annotations {
        Ok(a) => a,
        Err(e) => return e.into_response(),
    };
    let acks = blocking(svc, move |s| {
        annotations
            .iter()
            .map(|a| s.submit(&id, a))
            .collect::<Result<Vec<_>, _>>()
    })
    .await;
    match acks {
        Ok(mut acks) if single => Json(acks.remove(0)).into_response(),
        other => json(other),
    }
}

async fn refine(State(svc): Shared, Path(id): Path<String>) -> Response {
    json(blocking(svc, move |s| s.refine(&id)).await)
}

async fn report(State(svc): Shared, Path(kind): Path<String>, Query(q): Query<BTreeMap<String, String>>) -> Response {
    match blocking(svc, move |s| s.report(&kind, &q)).await {
        Ok(Report::Json(v)) => Json(v).into_response(),
        Ok(Report::Tsv(t)) => ([(header::CONTENT_TYPE, "text/tab-separated-values; charset=utf-8")], t).into_response(),
        Err(e) => e.into_response(),
    }
}

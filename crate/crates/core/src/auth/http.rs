//! JSON-over-HTTP front of [`AuthService`].
//!
//! | route             | body                    | success                       |
//! |-------------------|-------------------------|-------------------------------|
//! | `POST /api/enroll`    | `{email, images: [uri]}` | `{class_label, code}`     |
//! | `POST /api/recognize` | `{image}`                | `{predicted_code}`        |
//! | `POST /api/verify`    | `{email, code}`          | `{authenticated}`         |
//! | `POST /api/retrain`   |                          | `{classes, samples, training_accuracy}` |
//! | `GET /api/health`     |                          | `{status, users, model_loaded, classes}` |
//!
//! Errors are `{error, detail}` plus `index` for per-image failures.
//! `verify` answers 401 `{authenticated: false}` both for a wrong code and
//! an unknown email.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use super::{AuthError, AuthService, CryptoError};

#[derive(Debug, Deserialize)]
pub struct EnrollRequest {
    pub email: String,
    pub images: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EnrollResponse {
    pub class_label: String,
    pub code: String,
}

#[derive(Debug, Deserialize)]
pub struct RecognizeRequest {
    pub image: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RecognizeResponse {
    pub predicted_code: String,
}

#[derive(Debug, Deserialize)]
pub struct VerifyRequest {
    pub email: String,
    pub code: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct VerifyResponse {
    pub authenticated: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub users: usize,
    pub model_loaded: bool,
    pub classes: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub detail: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub index: Option<usize>,
}

pub struct ApiError(AuthError);

impl From<AuthError> for ApiError {
    fn from(e: AuthError) -> Self {
        Self(e)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self(AuthError::InvalidRequest(e.body_text()))
    }
}

fn status_of(e: &AuthError) -> StatusCode {
    match e {
        AuthError::AlreadyEnrolled | AuthError::SingleClass { .. } => StatusCode::CONFLICT,
        AuthError::TooFewImages { .. } | AuthError::InvalidImage { .. } | AuthError::InvalidRequest(_) => {
            StatusCode::BAD_REQUEST
        }
        AuthError::NoFaceFound { .. } | AuthError::MultipleFaces { .. } => StatusCode::UNPROCESSABLE_ENTITY,
        AuthError::NoModel => StatusCode::SERVICE_UNAVAILABLE,
        AuthError::NotRecognized | AuthError::UnknownEmail => StatusCode::UNAUTHORIZED,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = status_of(&self.0);
        let detail = match &self.0 {
            // internal failures are logged, not echoed
            AuthError::Crypto(CryptoError::AuthenticationFailed) => {
                log::error!("stored code failed authentication");
                "stored credential failed its integrity check".to_string()
            }
            e if status == StatusCode::INTERNAL_SERVER_ERROR => {
                log::error!("request failed: {e}");
                "internal error".to_string()
            }
            e => e.to_string(),
        };
        let body = ErrorBody {
            error: self.0.code().to_string(),
            detail,
            index: self.0.image_index(),
        };
        (status, Json(body)).into_response()
    }
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, AuthError> + Send + 'static,
) -> Result<T, ApiError> {
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(ApiError),
        Err(e) => Err(ApiError(AuthError::InvalidRequest(format!("worker failed: {e}")))),
    }
}

async fn enroll(
    State(svc): State<Arc<AuthService>>,
    req: Result<Json<EnrollRequest>, JsonRejection>,
) -> Result<Json<EnrollResponse>, ApiError> {
    let Json(req) = req?;
    let worker = svc.clone();
    let done = blocking(move || worker.enroll(&req.email, &req.images)).await?;
    if svc.user_count() >= 2 {
        tokio::task::spawn_blocking(move || {
            if let Err(e) = svc.retrain() {
                log::warn!("background retrain failed: {e}");
            }
        });
    }
    Ok(Json(EnrollResponse {
        class_label: done.class_label,
        code: done.code.to_hex(),
    }))
}

async fn recognize(
    State(svc): State<Arc<AuthService>>,
    req: Result<Json<RecognizeRequest>, JsonRejection>,
) -> Result<Json<RecognizeResponse>, ApiError> {
    let Json(req) = req?;
    let hit = blocking(move || svc.recognize(&req.image)).await?;
    Ok(Json(RecognizeResponse {
        predicted_code: hit.code.to_hex(),
    }))
}

async fn verify(
    State(svc): State<Arc<AuthService>>,
    req: Result<Json<VerifyRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(req) = req?;
    let verdict = match svc.verify(&req.email, &req.code) {
        Ok(ok) => ok,
        Err(AuthError::UnknownEmail) => false,
        Err(e) => return Err(e.into()),
    };
    let status = if verdict { StatusCode::OK } else { StatusCode::UNAUTHORIZED };
    Ok((status, Json(VerifyResponse { authenticated: verdict })).into_response())
}

async fn retrain(State(svc): State<Arc<AuthService>>) -> Result<Response, ApiError> {
    let summary = blocking(move || svc.retrain()).await?;
    Ok(Json(summary).into_response())
}

async fn health(State(svc): State<Arc<AuthService>>) -> Json<HealthResponse> {
    let model = svc.model();
    Json(HealthResponse {
        status: "ok".into(),
        users: svc.user_count(),
        model_loaded: model.is_some(),
        classes: model.map(|m| m.classes().len()).unwrap_or(0),
    })
}

pub fn router(svc: Arc<AuthService>, max_body_bytes: usize) -> Router {
    Router::new()
        .route("/api/enroll", post(enroll))
        .route("/api/recognize", post(recognize))
        .route("/api/verify", post(verify))
        .route("/api/retrain", post(retrain))
        .route("/api/health", get(health))
        .layer(DefaultBodyLimit::max(max_body_bytes))
        .with_state(svc)
}

/// Serves until Ctrl-C.
pub async fn serve(svc: Arc<AuthService>, addr: SocketAddr, max_body_bytes: usize) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(svc, max_body_bytes))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
            log::info!("shutting down");
        })
        .await
}

use axum::extract::rejection::JsonRejection;
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use cardloom_core::session::{ExportError, MetricsError};
use cardloom_core::{OrchestratorError, SessionError};
use serde::Serialize;
use serde_json::{json, Value};

/// Uniform error body: `{code, message, detail}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: String,
    pub message: String,
    pub detail: Value,
}

#[derive(Serialize)]
struct Body<'a> {
    code: &'a str,
    message: &'a str,
    detail: &'a Value,
}

impl ApiError {
    pub fn new(status: StatusCode, code: impl Into<String>, message: impl Into<String>) -> Self {
        Self { status, code: code.into(), message: message.into(), detail: json!({}) }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = detail;
        self
    }

    pub fn session_not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "SessionNotFound", format!("no session `{id}`"))
            .with_detail(json!({ "session_id": id }))
    }

    pub fn bad_request(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn unprocessable(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, code, message)
    }
}

/// Status class for a machine-readable error code.
pub fn status_for(code: &str) -> StatusCode {
    match code {
        "SessionNotFound" | "UnknownCard" | "UnknownHighlight" | "UnknownObject" | "UnknownAsset" => {
            StatusCode::NOT_FOUND
        }
        "CycleError" | "MultiParentError" | "DuplicateEdge" | "DuplicateCard" | "Stale" | "SessionExists" => {
            StatusCode::CONFLICT
        }
        "ProviderError" | "SchemaError" | "InvalidImage" | "InvalidCard" | "ModeConstraintViolation" => {
            StatusCode::BAD_GATEWAY
        }
        "ProviderTimeout" => StatusCode::GATEWAY_TIMEOUT,
        "RateLimited" => StatusCode::SERVICE_UNAVAILABLE,
        "MissingSlot" | "TemplateError" | "ImagingError" | "CyclicGraph" | "Overflow" => {
            StatusCode::INTERNAL_SERVER_ERROR
        }
        _ => StatusCode::UNPROCESSABLE_ENTITY,
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let code = e.code();
        let detail = match &e {
            SessionError::InvalidCard { card_id, issues } => json!({ "card_id": card_id, "issues": issues }),
            SessionError::Orchestrator(o) => orchestrator_detail(o),
            SessionError::UnknownCard(id) => json!({ "card_id": id }),
            SessionError::UnknownHighlight(id) => json!({ "highlight_id": id }),
            SessionError::Cluster(cardloom_core::cluster::ClusterError::UnknownObject(key)) => {
                json!({ "name": key.name, "kind": key.kind })
            }
            _ => json!({}),
        };
        ApiError::new(status_for(code), code, e.to_string()).with_detail(detail)
    }
}

fn orchestrator_detail(e: &OrchestratorError) -> Value {
    match e {
        OrchestratorError::ProviderTimeout { elapsed, timeout } => {
            json!({ "elapsed_ms": elapsed.as_millis() as u64, "timeout_ms": timeout.as_millis() as u64 })
        }
        OrchestratorError::RateLimited { retry_after_secs } => json!({ "retry_after_secs": retry_after_secs }),
        OrchestratorError::Schema { attempts, cause } => json!({ "attempts": attempts, "cause": cause.code() }),
        _ => json!({}),
    }
}

impl From<ExportError> for ApiError {
    fn from(e: ExportError) -> Self {
        let (code, detail) = match &e {
            ExportError::Parse(_) => ("BadJson", json!({})),
            ExportError::SchemaVersionMismatch { found } => {
                ("SchemaVersionMismatch", json!({ "found": found, "expected": 1 }))
            }
            ExportError::Schema(_) => ("InvalidDocument", json!({})),
            ExportError::CorruptAsset(id) => ("CorruptAsset", json!({ "asset_id": id })),
            ExportError::Inconsistent(_) => ("InconsistentSession", json!({})),
        };
        let status = if code == "BadJson" { StatusCode::BAD_REQUEST } else { StatusCode::UNPROCESSABLE_ENTITY };
        ApiError::new(status, code, e.to_string()).with_detail(detail)
    }
}

impl From<MetricsError> for ApiError {
    fn from(e: MetricsError) -> Self {
        let code = match e {
            MetricsError::CyclicGraph => "CyclicGraph",
            MetricsError::Overflow => "Overflow",
        };
        ApiError::new(status_for(code), code, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        match r {
            JsonRejection::JsonDataError(e) => ApiError::unprocessable("InvalidBody", e.body_text()),
            JsonRejection::MissingJsonContentType(e) => {
                ApiError::new(StatusCode::UNSUPPORTED_MEDIA_TYPE, "UnsupportedMediaType", e.body_text())
            }
            other => ApiError::bad_request("BadJson", other.body_text()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Body { code: &self.code, message: &self.message, detail: &self.detail };
        let mut response = (self.status, axum::Json(body)).into_response();
        if let Some(secs) = self.detail.get("retry_after_secs").and_then(Value::as_u64) {
            response.headers_mut().insert(header::RETRY_AFTER, HeaderValue::from(secs));
        }
        response
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_classes() {
        assert_eq!(status_for("EmptyRange"), StatusCode::UNPROCESSABLE_ENTITY);
        assert_eq!(status_for("UnknownCard"), StatusCode::NOT_FOUND);
        assert_eq!(status_for("CycleError"), StatusCode::CONFLICT);
        assert_eq!(status_for("SchemaError"), StatusCode::BAD_GATEWAY);
        assert_eq!(status_for("ProviderTimeout"), StatusCode::GATEWAY_TIMEOUT);
        assert_eq!(status_for("RateLimited"), StatusCode::SERVICE_UNAVAILABLE);
    }

    #[test]
    fn rate_limit_sets_retry_after() {
        let e: ApiError =
            SessionError::Orchestrator(OrchestratorError::RateLimited { retry_after_secs: Some(7) }).into();
        let response = e.into_response();
        assert_eq!(response.status(), StatusCode::SERVICE_UNAVAILABLE);
        assert_eq!(response.headers()[header::RETRY_AFTER], "7");
    }
}

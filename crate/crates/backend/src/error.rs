//! The one error shape every API endpoint returns.

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use serde::{Deserialize, Serialize};

use crate::executor::{CallbackError, ExecError, SubmitError};
use crate::registry::RegistryError;

/// Machine-readable error codes. The set is closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    BadRequest,
    Unauthorized,
    NotFound,
    MethodNotAllowed,
    ModuleNotFound,
    ModuleUnreachable,
    ModuleInvalid,
    VersionMismatch,
    EmptyUpload,
    UploadTooLarge,
    DuplicateDocId,
    CorpusInvalid,
    CorpusNotFound,
    NoCorpus,
    PipelineMalformed,
    PipelineNotFound,
    NodeNotFound,
    ValidationFailed,
    JobNotFound,
    PortNotFound,
    ResultNotReady,
    MalformedCallback,
    TokenMismatch,
    StaleToken,
    Internal,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 25] = [
        ErrorCode::BadRequest,
        ErrorCode::Unauthorized,
        ErrorCode::NotFound,
        ErrorCode::MethodNotAllowed,
        ErrorCode::ModuleNotFound,
        ErrorCode::ModuleUnreachable,
        ErrorCode::ModuleInvalid,
        ErrorCode::VersionMismatch,
        ErrorCode::EmptyUpload,
        ErrorCode::UploadTooLarge,
        ErrorCode::DuplicateDocId,
        ErrorCode::CorpusInvalid,
        ErrorCode::CorpusNotFound,
        ErrorCode::NoCorpus,
        ErrorCode::PipelineMalformed,
        ErrorCode::PipelineNotFound,
        ErrorCode::NodeNotFound,
        ErrorCode::ValidationFailed,
        ErrorCode::JobNotFound,
        ErrorCode::PortNotFound,
        ErrorCode::ResultNotReady,
        ErrorCode::MalformedCallback,
        ErrorCode::TokenMismatch,
        ErrorCode::StaleToken,
        ErrorCode::Internal,
    ];

    pub fn status(&self) -> StatusCode {
        use ErrorCode::*;
        match self {
            BadRequest | EmptyUpload | DuplicateDocId | CorpusInvalid | NoCorpus | PipelineMalformed
            | MalformedCallback => StatusCode::BAD_REQUEST,
            Unauthorized => StatusCode::UNAUTHORIZED,
            TokenMismatch => StatusCode::FORBIDDEN,
            NotFound | ModuleNotFound | CorpusNotFound | PipelineNotFound | NodeNotFound | JobNotFound
            | PortNotFound => StatusCode::NOT_FOUND,
            MethodNotAllowed => StatusCode::METHOD_NOT_ALLOWED,
            ResultNotReady | StaleToken => StatusCode::CONFLICT,
            UploadTooLarge => StatusCode::PAYLOAD_TOO_LARGE,
            ModuleInvalid | VersionMismatch | ValidationFailed => StatusCode::UNPROCESSABLE_ENTITY,
            ModuleUnreachable => StatusCode::BAD_GATEWAY,
            Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn as_str(&self) -> &'static str {
        use ErrorCode::*;
        match self {
            BadRequest => "BAD_REQUEST",
            Unauthorized => "UNAUTHORIZED",
            NotFound => "NOT_FOUND",
            MethodNotAllowed => "METHOD_NOT_ALLOWED",
            ModuleNotFound => "MODULE_NOT_FOUND",
            ModuleUnreachable => "MODULE_UNREACHABLE",
            ModuleInvalid => "MODULE_INVALID",
            VersionMismatch => "VERSION_MISMATCH",
            EmptyUpload => "EMPTY_UPLOAD",
            UploadTooLarge => "UPLOAD_TOO_LARGE",
            DuplicateDocId => "DUPLICATE_DOC_ID",
            CorpusInvalid => "CORPUS_INVALID",
            CorpusNotFound => "CORPUS_NOT_FOUND",
            NoCorpus => "NO_CORPUS",
            PipelineMalformed => "PIPELINE_MALFORMED",
            PipelineNotFound => "PIPELINE_NOT_FOUND",
            NodeNotFound => "NODE_NOT_FOUND",
            ValidationFailed => "VALIDATION_FAILED",
            JobNotFound => "JOB_NOT_FOUND",
            PortNotFound => "PORT_NOT_FOUND",
            ResultNotReady => "RESULT_NOT_READY",
            MalformedCallback => "MALFORMED_CALLBACK",
            TokenMismatch => "TOKEN_MISMATCH",
            StaleToken => "STALE_TOKEN",
            Internal => "INTERNAL",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub status: u16,
    pub code: ErrorCode,
    pub message: String,
    pub field: Option<String>,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self { status: code.status().as_u16(), code, message: message.into(), field: None }
    }

    pub fn with_field(mut self, field: impl Into<String>) -> Self {
        self.field = Some(field.into());
        self
    }

    pub fn internal(e: impl std::fmt::Display) -> Self {
        Self::new(ErrorCode::Internal, e.to_string())
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {}: {}", self.status, self.code.as_str(), self.message)?;
        if let Some(field) = &self.field {
            write!(f, " (field `{field}`)")?;
        }
        Ok(())
    }
}

impl std::error::Error for ApiError {}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.code.status();
        let body = serde_json::json!({ "error": self });
        (status, axum::Json(body)).into_response()
    }
}

impl From<RegistryError> for ApiError {
    fn from(e: RegistryError) -> Self {
        let message = e.to_string();
        match e {
            RegistryError::Unreachable { .. } | RegistryError::BadStatus { .. } => {
                ApiError::new(ErrorCode::ModuleUnreachable, message)
            }
            RegistryError::Malformed { .. } => ApiError::new(ErrorCode::ModuleInvalid, message),
            RegistryError::Descriptor(d) => ApiError::new(ErrorCode::ModuleInvalid, message).with_field(d.field),
            RegistryError::VersionMismatch { .. } => ApiError::new(ErrorCode::VersionMismatch, message),
            RegistryError::BadUrl(_) => ApiError::new(ErrorCode::BadRequest, message).with_field("url"),
            RegistryError::UnknownModule(_) => ApiError::new(ErrorCode::ModuleNotFound, message),
            RegistryError::Storage(_) => ApiError::internal(message),
        }
    }
}

impl From<SubmitError> for ApiError {
    fn from(e: SubmitError) -> Self {
        match &e {
            SubmitError::Invalid(diags) => {
                let lines: Vec<String> = diags.iter().map(ToString::to_string).collect();
                ApiError::new(ErrorCode::ValidationFailed, format!("{e}: {}", lines.join("; ")))
            }
            SubmitError::NoCorpus | SubmitError::SourcesDisagree => {
                ApiError::new(ErrorCode::NoCorpus, e.to_string()).with_field("corpus_id")
            }
            SubmitError::CorpusNotFound(_) => ApiError::new(ErrorCode::CorpusNotFound, e.to_string()),
            SubmitError::CorpusInvalid(_) => ApiError::new(ErrorCode::CorpusInvalid, e.to_string()),
            SubmitError::Storage(_) => ApiError::internal(e),
        }
    }
}

impl From<ExecError> for ApiError {
    fn from(e: ExecError) -> Self {
        let code = match e {
            ExecError::JobNotFound(_) => ErrorCode::JobNotFound,
            ExecError::NodeNotFound(_) => ErrorCode::NodeNotFound,
            ExecError::PortNotFound { .. } => ErrorCode::PortNotFound,
            ExecError::NotReady { .. } => ErrorCode::ResultNotReady,
            ExecError::Storage(_) => ErrorCode::Internal,
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<CallbackError> for ApiError {
    fn from(e: CallbackError) -> Self {
        let code = match e {
            CallbackError::JobNotFound(_) => ErrorCode::JobNotFound,
            CallbackError::NodeNotFound(_) => ErrorCode::NodeNotFound,
            CallbackError::Malformed(_) => ErrorCode::MalformedCallback,
            CallbackError::TokenMismatch => ErrorCode::TokenMismatch,
            CallbackError::StaleToken => ErrorCode::StaleToken,
        };
        ApiError::new(code, e.to_string())
    }
}

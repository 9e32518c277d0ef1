//! The Application API under `/api/v1/` and the Callback API at
//! `/callback/{job}/{node}`.
//!
//! Successful responses are envelopes: stored corpora, results and
//! pipeline files are returned byte for byte, everything else is wrapped as
//! `{"body", "data_model", "kind"}`. Failures are [`ApiError`]s.

use std::sync::Arc;

use angler_core::datamodel::envelope::canonical_bytes;
use angler_core::datamodel::{
    validate_corpus, Corpus, DecodeError, Document, Envelope, Metadata, Payload, TypeHierarchy,
    ViolationKind, DATA_MODEL_VERSION,
};
use angler_core::pipeline::{load, save, validate, NodeKind, Pipeline, PipelineFileError};
use axum::body::{to_bytes, Body, Bytes};
use axum::extract::{DefaultBodyLimit, Path, Query, Request, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use uuid::Uuid;

use crate::corpora::CorpusStore;
use crate::error::{ApiError, ErrorCode};
use crate::executor::Executor;
use crate::pipelines::PipelineStore;
use crate::registry::{Docs, Registry};

pub struct AppState {
    pub registry: Arc<Registry>,
    pub executor: Arc<Executor>,
    pub corpora: Arc<CorpusStore>,
    pub pipelines: Arc<PipelineStore>,
    pub token: Option<String>,
    pub upload_limit: usize,
    pub ui_dir: Option<std::path::PathBuf>,
}

type Shared = State<Arc<AppState>>;
type ApiResult = Result<Response, ApiError>;

/// Wraps a body as `{"body", "data_model", "kind"}`.
pub fn envelope(status: StatusCode, kind: &str, body: impl Serialize) -> Response {
    let value = serde_json::json!({
        "body": body,
        "data_model": DATA_MODEL_VERSION.to_string(),
        "kind": kind,
    });
    json_bytes(status, canonical_bytes(&value))
}

fn json_bytes(status: StatusCode, bytes: impl Into<Body>) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], bytes.into()).into_response()
}

fn parse_uuid(raw: &str, what: &str, missing: ErrorCode) -> Result<Uuid, ApiError> {
    Uuid::parse_str(raw).map_err(|_| ApiError::new(missing, format!("no {what} `{raw}`")))
}

fn parse_json<T: serde::de::DeserializeOwned>(bytes: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(bytes).map_err(|e| ApiError::new(ErrorCode::BadRequest, format!("malformed request body: {e}")))
}

pub fn router(state: Arc<AppState>) -> Router {
    let limit = state.upload_limit;
    let api = Router::new()
        .route("/about", get(about))
        .route("/types", get(types))
        .route("/modules", get(modules_list).post(modules_register))
        .route("/modules/{uuid}", get(modules_get))
        .route("/modules/{uuid}/health", get(modules_health))
        .route("/modules/{uuid}/docs", get(modules_docs))
        .route("/processors", get(processors_list))
        .route("/corpora", get(corpora_list).post(corpora_upload))
        .route("/corpora/{id}", get(corpora_get))
        .route("/pipelines", get(pipelines_list).post(pipelines_create))
        .route("/pipelines/import", post(pipelines_import))
        .route("/pipelines/{id}", get(pipelines_get).put(pipelines_update).delete(pipelines_delete))
        .route("/pipelines/{id}/export", get(pipelines_export))
        .route("/pipelines/{id}/validate", post(pipelines_validate))
        .route("/pipelines/{id}/nodes/{node}/settings", post(node_settings).put(node_settings))
        .route("/validate", post(validate_draft))
        .route("/jobs", get(jobs_list).post(jobs_submit))
        .route("/jobs/{id}", get(jobs_status))
        .route("/jobs/{id}/cancel", post(jobs_cancel))
        .route("/jobs/{id}/nodes/{node}/ports/{port}", get(jobs_results))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    Router::new()
        .nest("/api/v1", api)
        .route("/callback/{job}/{node}", post(callback))
        .route("/ui", get(|| async { axum::response::Redirect::permanent("/ui/") }))
        .route("/ui/", get(ui_index))
        .route("/ui/{*path}", get(ui_asset))
        .fallback(|| async { ApiError::new(ErrorCode::NotFound, "no such endpoint") })
        .method_not_allowed_fallback(|| async {
            ApiError::new(ErrorCode::MethodNotAllowed, "method not allowed on this endpoint")
        })
        .layer(DefaultBodyLimit::max(limit.saturating_mul(4).max(1 << 20)))
        .with_state(state)
}

async fn require_token(State(s): Shared, request: Request, next: Next) -> Response {
    if let Some(token) = &s.token {
        let expected = format!("Bearer {token}");
        let given = request.headers().get(header::AUTHORIZATION).and_then(|h| h.to_str().ok());
        if given != Some(expected.as_str()) {
            return ApiError::new(ErrorCode::Unauthorized, "missing or wrong bearer token").into_response();
        }
    }
    next.run(request).await
}

async fn about() -> Response {
    envelope(
        StatusCode::OK,
        "backend",
        serde_json::json!({
            "name": "angler",
            "version": env!("CARGO_PKG_VERSION"),
            "data_model": DATA_MODEL_VERSION.to_string(),
        }),
    )
}

async fn types() -> Response {
    let h = TypeHierarchy::shipped();
    let edges: Vec<(String, String)> = h.edges().map(|(c, p)| (c.to_string(), p.to_string())).collect();
    envelope(StatusCode::OK, "type_hierarchy", serde_json::json!({ "edges": edges }))
}

#[derive(Deserialize)]
struct RegisterRequest {
    url: String,
}

async fn modules_register(State(s): Shared, body: Bytes) -> ApiResult {
    let req: RegisterRequest = parse_json(&body)?;
    let record = s.registry.register(&req.url).await?;
    Ok(envelope(StatusCode::CREATED, "module", record))
}

async fn modules_list(State(s): Shared) -> Response {
    let catalog = s.registry.snapshot();
    let modules: Vec<_> = catalog.modules().collect();
    envelope(StatusCode::OK, "module_list", modules)
}

async fn modules_get(State(s): Shared, Path(uuid): Path<String>) -> ApiResult {
    let uuid = parse_uuid(&uuid, "module", ErrorCode::ModuleNotFound)?;
    let catalog = s.registry.snapshot();
    let record = catalog
        .module(&uuid)
        .ok_or_else(|| ApiError::new(ErrorCode::ModuleNotFound, format!("unknown module {uuid}")))?;
    Ok(envelope(StatusCode::OK, "module", record))
}

async fn modules_health(State(s): Shared, Path(uuid): Path<String>) -> ApiResult {
    let uuid = parse_uuid(&uuid, "module", ErrorCode::ModuleNotFound)?;
    let health = s.registry.health_check(&uuid).await?;
    Ok(envelope(StatusCode::OK, "module_health", serde_json::json!({ "uuid": uuid, "status": health })))
}

async fn modules_docs(State(s): Shared, Path(uuid): Path<String>) -> ApiResult {
    let uuid = parse_uuid(&uuid, "module", ErrorCode::ModuleNotFound)?;
    let docs: Docs = s.registry.fetch_docs(&uuid).await?;
    Ok(envelope(StatusCode::OK, "docs", docs))
}

#[derive(Deserialize)]
struct CategoryQuery {
    category: Option<String>,
}

async fn processors_list(State(s): Shared, Query(q): Query<CategoryQuery>) -> Response {
    envelope(StatusCode::OK, "processor_list", s.registry.list_processors(q.category.as_deref()))
}

#[derive(Deserialize)]
struct TextUpload {
    #[serde(default)]
    name: Option<String>,
    files: Vec<TextFile>,
}

#[derive(Deserialize)]
struct TextFile {
    filename: String,
    text: String,
}

#[derive(Serialize)]
struct CorpusRef {
    id: Uuid,
    name: String,
    documents: usize,
}

impl From<&Corpus> for CorpusRef {
    fn from(c: &Corpus) -> Self {
        Self { id: c.id, name: c.name.clone(), documents: c.documents.len() }
    }
}

/// Turns an upload body into a corpus: either a corpus envelope or
/// `{"name", "files": [{"filename", "text"}]}`, one document per file.
pub fn corpus_from_upload(bytes: &[u8]) -> Result<Corpus, ApiError> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Err(ApiError::new(ErrorCode::EmptyUpload, "upload is empty"));
    }
    let value: Value = parse_json(bytes)?;
    let corpus = if value.get("kind").is_some() {
        match Envelope::from_value(value) {
            Ok(Envelope { payload: Payload::Corpus(c), .. }) => c,
            Ok(other) => {
                return Err(ApiError::new(
                    ErrorCode::CorpusInvalid,
                    format!("expected a corpus envelope, got {}", other.payload.kind()),
                )
                .with_field("kind"))
            }
            Err(e) => {
                let err = ApiError::new(ErrorCode::CorpusInvalid, e.to_string());
                return Err(match e {
                    DecodeError::MissingField(f) => err.with_field(f),
                    _ => err,
                });
            }
        }
    } else {
        let upload: TextUpload = serde_json::from_value(value)
            .map_err(|e| ApiError::new(ErrorCode::CorpusInvalid, format!("malformed upload: {e}")))?;
        let documents = upload
            .files
            .into_iter()
            .map(|f| {
                let mut doc = Document::new(f.text);
                let mut metadata = Metadata::new();
                metadata
                    .insert("filename", f.filename)
                    .map_err(|e| ApiError::new(ErrorCode::CorpusInvalid, e.to_string()))?;
                doc.metadata = metadata;
                Ok(doc)
            })
            .collect::<Result<Vec<_>, ApiError>>()?;
        Corpus::new(upload.name.unwrap_or_else(|| "upload".into()), documents)
    };
    if corpus.documents.is_empty() {
        return Err(ApiError::new(ErrorCode::EmptyUpload, "a corpus needs at least one document").with_field("documents"));
    }
    let report = validate_corpus(&corpus);
    if let Some(v) = report.violations.first() {
        let code = if v.kind == ViolationKind::DuplicateDocumentId {
            ErrorCode::DuplicateDocId
        } else {
            ErrorCode::CorpusInvalid
        };
        return Err(ApiError::new(code, v.to_string()).with_field(v.path.clone()));
    }
    Ok(corpus)
}

async fn corpora_upload(State(s): Shared, request: Request) -> ApiResult {
    let limit = s.upload_limit;
    let bytes = to_bytes(request.into_body(), limit).await.map_err(|_| {
        ApiError::new(ErrorCode::UploadTooLarge, format!("upload exceeds the {limit}-byte limit"))
    })?;
    let corpus = corpus_from_upload(&bytes)?;
    s.corpora.insert(corpus.clone()).map_err(ApiError::internal)?;
    Ok(envelope(StatusCode::CREATED, "corpus_ref", CorpusRef::from(&corpus)))
}

async fn corpora_list(State(s): Shared) -> Response {
    let list: Vec<CorpusRef> = s.corpora.list().iter().map(CorpusRef::from).collect();
    envelope(StatusCode::OK, "corpus_list", list)
}

async fn corpora_get(State(s): Shared, Path(id): Path<String>) -> ApiResult {
    let id = parse_uuid(&id, "corpus", ErrorCode::CorpusNotFound)?;
    let corpus = s
        .corpora
        .get(&id)
        .ok_or_else(|| ApiError::new(ErrorCode::CorpusNotFound, format!("unknown corpus {id}")))?;
    Ok(json_bytes(StatusCode::OK, Envelope::new(corpus).to_bytes()))
}

fn file_error(e: PipelineFileError) -> ApiError {
    let err = ApiError::new(ErrorCode::PipelineMalformed, e.to_string());
    match e {
        PipelineFileError::MissingField(f) => err.with_field(f),
        PipelineFileError::UnknownFormat(_) => err.with_field("format"),
        _ => err,
    }
}

fn pipeline_response(status: StatusCode, p: &Pipeline) -> Response {
    json_bytes(status, save(p))
}

fn stored_pipeline(s: &AppState, raw: &str) -> Result<Pipeline, ApiError> {
    let id = parse_uuid(raw, "pipeline", ErrorCode::PipelineNotFound)?;
    s.pipelines
        .get(&id)
        .ok_or_else(|| ApiError::new(ErrorCode::PipelineNotFound, format!("unknown pipeline {id}")))
}

async fn pipelines_create(State(s): Shared, body: Bytes) -> ApiResult {
    let mut p = load(&body).map_err(file_error)?;
    p.id = Uuid::new_v4();
    s.pipelines.put(p.clone()).map_err(ApiError::internal)?;
    Ok(pipeline_response(StatusCode::CREATED, &p))
}

async fn pipelines_import(State(s): Shared, body: Bytes) -> ApiResult {
    let p = load(&body).map_err(file_error)?;
    s.pipelines.put(p.clone()).map_err(ApiError::internal)?;
    Ok(pipeline_response(StatusCode::CREATED, &p))
}

#[derive(Serialize)]
struct PipelineSummary {
    id: Uuid,
    name: String,
    nodes: usize,
    edges: usize,
}

async fn pipelines_list(State(s): Shared) -> Response {
    let list: Vec<PipelineSummary> = s
        .pipelines
        .list()
        .into_iter()
        .map(|p| PipelineSummary { id: p.id, name: p.name, nodes: p.nodes.len(), edges: p.edges.len() })
        .collect();
    envelope(StatusCode::OK, "pipeline_list", list)
}

async fn pipelines_get(State(s): Shared, Path(id): Path<String>) -> ApiResult {
    Ok(pipeline_response(StatusCode::OK, &stored_pipeline(&s, &id)?))
}

async fn pipelines_update(State(s): Shared, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let existing = stored_pipeline(&s, &id)?;
    let mut p = load(&body).map_err(file_error)?;
    p.id = existing.id;
    s.pipelines.put(p.clone()).map_err(ApiError::internal)?;
    Ok(pipeline_response(StatusCode::OK, &p))
}

async fn pipelines_delete(State(s): Shared, Path(id): Path<String>) -> ApiResult {
    let p = stored_pipeline(&s, &id)?;
    s.pipelines.delete(&p.id).map_err(ApiError::internal)?;
    Ok(envelope(StatusCode::OK, "deleted", serde_json::json!({ "id": p.id })))
}

async fn pipelines_export(State(s): Shared, Path(id): Path<String>) -> ApiResult {
    let p = stored_pipeline(&s, &id)?;
    let safe: String = p
        .name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    let disposition = format!("attachment; filename=\"{}.angler\"", if safe.is_empty() { "pipeline" } else { &safe });
    let mut response = pipeline_response(StatusCode::OK, &p);
    if let Ok(v) = HeaderValue::from_str(&disposition) {
        response.headers_mut().insert(header::CONTENT_DISPOSITION, v);
    }
    Ok(response)
}

fn diagnostics(s: &AppState, p: &Pipeline) -> Response {
    let catalog = s.registry.snapshot();
    let diags = validate(p, &*catalog, &TypeHierarchy::shipped());
    envelope(StatusCode::OK, "diagnostics", diags)
}

async fn pipelines_validate(State(s): Shared, Path(id): Path<String>) -> ApiResult {
    let p = stored_pipeline(&s, &id)?;
    Ok(diagnostics(&s, &p))
}

/// Validates an unsaved pipeline file, e.g. a tentative edit in the editor.
async fn validate_draft(State(s): Shared, body: Bytes) -> ApiResult {
    let p = load(&body).map_err(file_error)?;
    Ok(diagnostics(&s, &p))
}

#[derive(Deserialize)]
struct SettingsForm {
    settings: String,
}

/// Stores a node's settings. Accepts a JSON document, or the
/// `settings=<json>` form a module's settings page posts.
async fn node_settings(
    State(s): Shared,
    Path((id, node)): Path<(String, String)>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult {
    let mut p = stored_pipeline(&s, &id)?;
    let is_form = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("application/x-www-form-urlencoded"));
    let settings: Value = if is_form {
        let form: SettingsForm = serde_urlencoded_form(&body)?;
        parse_json(form.settings.as_bytes())?
    } else {
        parse_json(&body)?
    };
    let target = p
        .nodes
        .iter_mut()
        .find(|n| n.node_id == node)
        .ok_or_else(|| ApiError::new(ErrorCode::NodeNotFound, format!("pipeline has no node `{node}`")))?;
    match &mut target.kind {
        NodeKind::Processor(r) => r.settings = settings,
        NodeKind::Source { .. } => {
            return Err(ApiError::new(ErrorCode::BadRequest, format!("`{node}` is a source node and takes no settings")))
        }
    }
    s.pipelines.put(p.clone()).map_err(ApiError::internal)?;
    Ok(pipeline_response(StatusCode::OK, &p))
}

fn serde_urlencoded_form(body: &[u8]) -> Result<SettingsForm, ApiError> {
    let settings = url::form_urlencoded::parse(body)
        .find(|(k, _)| k == "settings")
        .map(|(_, v)| v.into_owned())
        .ok_or_else(|| ApiError::new(ErrorCode::BadRequest, "form has no `settings` field").with_field("settings"))?;
    Ok(SettingsForm { settings })
}

#[derive(Deserialize)]
struct SubmitRequest {
    pipeline_id: Uuid,
    #[serde(default)]
    corpus_id: Option<Uuid>,
}

async fn jobs_submit(State(s): Shared, body: Bytes) -> ApiResult {
    let req: SubmitRequest = parse_json(&body)?;
    let p = s
        .pipelines
        .get(&req.pipeline_id)
        .ok_or_else(|| ApiError::new(ErrorCode::PipelineNotFound, format!("unknown pipeline {}", req.pipeline_id)))?;
    let corpus = match req.corpus_id {
        Some(id) => Some(
            s.corpora
                .get(&id)
                .ok_or_else(|| ApiError::new(ErrorCode::CorpusNotFound, format!("unknown corpus {id}")))?,
        ),
        None => None,
    };
    let catalog = s.registry.snapshot();
    let corpora = s.corpora.clone();
    let job_id = s.executor.submit(&p, corpus, &catalog, |id| corpora.get(id)).await?;
    let view = s.executor.status(&job_id).await?;
    Ok(envelope(StatusCode::CREATED, "job", view))
}

async fn jobs_list(State(s): Shared) -> Response {
    envelope(StatusCode::OK, "job_list", s.executor.list().await)
}

async fn jobs_status(State(s): Shared, Path(id): Path<String>) -> ApiResult {
    let id = parse_uuid(&id, "job", ErrorCode::JobNotFound)?;
    Ok(envelope(StatusCode::OK, "job", s.executor.status(&id).await?))
}

async fn jobs_cancel(State(s): Shared, Path(id): Path<String>) -> ApiResult {
    let id = parse_uuid(&id, "job", ErrorCode::JobNotFound)?;
    Ok(envelope(StatusCode::OK, "job", s.executor.cancel(&id).await?))
}

async fn jobs_results(State(s): Shared, Path((id, node, port)): Path<(String, String, String)>) -> ApiResult {
    let id = parse_uuid(&id, "job", ErrorCode::JobNotFound)?;
    let bytes = s.executor.results(&id, &node, &port).await?;
    Ok(json_bytes(StatusCode::OK, bytes.to_string()))
}

#[derive(Deserialize)]
struct TokenQuery {
    token: Option<String>,
}

async fn callback(
    State(s): Shared,
    Path((job, node)): Path<(String, String)>,
    Query(q): Query<TokenQuery>,
    body: Bytes,
) -> ApiResult {
    let job = parse_uuid(&job, "job", ErrorCode::JobNotFound)?;
    let ack = s.executor.handle_callback(job, &node, q.token.as_deref(), &body).await?;
    Ok(envelope(StatusCode::OK, "callback_ack", serde_json::json!({ "result": ack })))
}

async fn ui_index(state: Shared) -> ApiResult {
    ui_asset(state, Path("index.html".to_string())).await
}

/// Serves the static web client from the configured directory.
async fn ui_asset(State(s): Shared, Path(path): Path<String>) -> ApiResult {
    let not_found = || ApiError::new(ErrorCode::NotFound, format!("no UI asset `{path}`"));
    let root = s.ui_dir.as_ref().ok_or_else(not_found)?;
    let relative = std::path::Path::new(&path);
    if relative.components().any(|c| !matches!(c, std::path::Component::Normal(_))) {
        return Err(not_found());
    }
    let mut file = root.join(relative);
    if file.is_dir() {
        file = file.join("index.html");
    }
    let bytes = tokio::fs::read(&file).await.map_err(|_| not_found())?;
    let mime = match file.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js" | "mjs") => "text/javascript",
        Some("css") => "text/css",
        Some("json" | "map") => "application/json",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        Some("ico") => "image/x-icon",
        Some("woff2") => "font/woff2",
        _ => "application/octet-stream",
    };
    Ok(([(header::CONTENT_TYPE, mime)], bytes).into_response())
}

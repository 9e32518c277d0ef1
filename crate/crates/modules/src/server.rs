//! A small HTTP host for processors speaking the Module and Callback API.
//!
//! A [`ModuleApp`] bundles the `/about` payload, the processors it serves and
//! their implementations. Dispatches are acknowledged with `202 Accepted`
//! and processed on a separate task that posts the result to the callback
//! URL carried in the dispatch.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use angler_core::datamodel::{Envelope, Payload};
use angler_core::descriptor::{ProcessorDescriptor, ABOUT_ENDPOINT, DOCS_ENDPOINT, PROCESSORS_ENDPOINT};
use angler_core::protocol::{raw_payload, token_from_callback_url, CallbackEnvelope, DispatchEnvelope};
use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::Value;
use tokio::net::TcpListener;
use tokio::task::JoinHandle;
use url::Url;
use uuid::Uuid;

/// Decoded inputs handed to a processor implementation.
#[derive(Debug, Clone)]
pub struct Request {
    pub node_id: String,
    pub settings: Value,
    pub inputs: BTreeMap<String, Envelope>,
}

impl Request {
    pub fn input(&self, port: &str) -> Result<&Payload, String> {
        self.inputs
            .get(port)
            .map(|e| &e.payload)
            .ok_or_else(|| format!("missing input `{port}`"))
    }
}

pub type Outputs = BTreeMap<String, Payload>;
pub type ProcessFn = Arc<dyn Fn(&Request) -> Result<Outputs, String> + Send + Sync>;

#[derive(Clone)]
pub struct ProcessorSpec {
    pub name: String,
    /// Exactly what `/processors` serves for this entry. Relative `icon`
    /// paths are made absolute per request from the `Host` header.
    pub wire: Value,
    pub inputs: Vec<String>,
    pub run: ProcessFn,
}

impl ProcessorSpec {
    pub fn new(
        descriptor: ProcessorDescriptor,
        run: impl Fn(&Request) -> Result<Outputs, String> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: descriptor.name.clone(),
            wire: descriptor.to_wire(),
            inputs: descriptor.inputs.iter().map(|p| p.name.clone()).collect(),
            run: Arc::new(run),
        }
    }
}

/// Deliberate protocol deviations, used by the broken fixture modules.
#[derive(Debug, Clone, Default)]
pub struct Quirks {
    /// Serve a fresh uuid on every `/about` request.
    pub uuid_per_request: bool,
    /// Accept dispatches and never call back.
    pub swallow_dispatches: bool,
    /// Hold back the very first dispatch this server receives.
    pub first_dispatch_delay: Option<Duration>,
}

#[derive(Clone)]
pub struct ModuleApp {
    pub about: Value,
    pub processors: Vec<ProcessorSpec>,
    /// `/docs` page; `None` answers 404.
    pub docs: Option<String>,
    pub quirks: Quirks,
}

struct Shared {
    app: ModuleApp,
    client: reqwest::Client,
    dispatches: AtomicUsize,
}

impl ModuleApp {
    pub fn router(self) -> Router {
        let shared = Arc::new(Shared {
            app: self,
            client: reqwest::Client::builder()
                .connect_timeout(Duration::from_secs(5))
                .timeout(Duration::from_secs(30))
                .build()
                .expect("http client"),
            dispatches: AtomicUsize::new(0),
        });
        Router::new()
            .route(ABOUT_ENDPOINT, get(about))
            .route(PROCESSORS_ENDPOINT, get(processors))
            .route(DOCS_ENDPOINT, get(docs))
            .route("/processors/{name}/data", post(data))
            .route("/processors/{name}/settings", get(settings_page))
            .route("/processors/{name}/ui", get(ui_page))
            .route("/icons/{file}", get(icon))
            .with_state(shared)
    }

    /// Serves on an already bound listener until the task is dropped or aborted.
    pub async fn serve(self, listener: TcpListener) -> std::io::Result<()> {
        axum::serve(listener, self.router()).await
    }

    /// Binds `addr` and serves in the background.
    pub async fn spawn(self, addr: SocketAddr) -> std::io::Result<RunningModule> {
        let listener = TcpListener::bind(addr).await?;
        let local = listener.local_addr()?;
        let handle = tokio::spawn(async move {
            if let Err(e) = self.serve(listener).await {
                tracing::error!("module server stopped: {e}");
            }
        });
        Ok(RunningModule {
            url: Url::parse(&format!("http://{local}/")).expect("loopback url"),
            handle,
        })
    }
}

/// A module served in the background. Dropping it stops the server.
pub struct RunningModule {
    pub url: Url,
    handle: JoinHandle<()>,
}

impl RunningModule {
    pub fn stop(&self) {
        self.handle.abort();
    }
}

impl Drop for RunningModule {
    fn drop(&mut self) {
        self.handle.abort();
    }
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(serde_json::json!({ "error": message.into() }))).into_response()
}

async fn about(State(s): State<Arc<Shared>>) -> Json<Value> {
    let mut about = s.app.about.clone();
    if s.app.quirks.uuid_per_request {
        about["uuid"] = Value::String(Uuid::new_v4().to_string());
    }
    Json(about)
}

async fn processors(State(s): State<Arc<Shared>>, headers: HeaderMap) -> Json<Value> {
    let host = headers
        .get(header::HOST)
        .and_then(|h| h.to_str().ok())
        .map(str::to_string);
    let list = s
        .app
        .processors
        .iter()
        .map(|p| {
            let mut wire = p.wire.clone();
            if let (Some(host), Some(Value::String(icon))) = (&host, wire.get_mut("icon")) {
                if !icon.contains("://") {
                    *icon = format!("http://{host}/{}", icon.trim_start_matches('/'));
                }
            }
            wire
        })
        .collect();
    Json(Value::Array(list))
}

async fn docs(State(s): State<Arc<Shared>>) -> Response {
    match &s.app.docs {
        Some(page) => Html(page.clone()).into_response(),
        None => error(StatusCode::NOT_FOUND, "no documentation"),
    }
}

async fn data(State(s): State<Arc<Shared>>, Path(name): Path<String>, body: Bytes) -> Response {
    let Some(spec) = s.app.processors.iter().find(|p| p.name == name).cloned() else {
        return error(StatusCode::NOT_FOUND, format!("unknown processor `{name}`"));
    };
    let dispatch: DispatchEnvelope = match serde_json::from_slice(&body) {
        Ok(d) => d,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed dispatch: {e}")),
    };
    let seq = s.dispatches.fetch_add(1, Ordering::SeqCst);
    if !s.app.quirks.swallow_dispatches {
        let delay = s.app.quirks.first_dispatch_delay.filter(|_| seq == 0);
        tokio::spawn(async move {
            if let Some(delay) = delay {
                tokio::time::sleep(delay).await;
            }
            let callback = process(&spec, &dispatch);
            deliver(&s.client, &dispatch.callback_url, &callback).await;
        });
    }
    StatusCode::ACCEPTED.into_response()
}

fn process(spec: &ProcessorSpec, dispatch: &DispatchEnvelope) -> CallbackEnvelope {
    let token = token_from_callback_url(&dispatch.callback_url).unwrap_or_default();
    match run(spec, dispatch) {
        Ok(outputs) => CallbackEnvelope::success(dispatch, token, outputs),
        Err(message) => CallbackEnvelope::failure(dispatch, token, message),
    }
}

fn run(
    spec: &ProcessorSpec,
    dispatch: &DispatchEnvelope,
) -> Result<BTreeMap<String, Box<serde_json::value::RawValue>>, String> {
    let mut inputs = BTreeMap::new();
    for port in &spec.inputs {
        let raw = dispatch
            .inputs
            .get(port)
            .ok_or_else(|| format!("missing input `{port}`"))?;
        let envelope = Envelope::from_bytes(raw.get().as_bytes())
            .map_err(|e| format!("input `{port}`: {e}"))?;
        inputs.insert(port.clone(), envelope);
    }
    let request = Request {
        node_id: dispatch.node_id.clone(),
        settings: dispatch.settings.clone(),
        inputs,
    };
    let outputs = (spec.run)(&request)?;
    outputs
        .into_iter()
        .map(|(port, payload)| {
            let payload = match payload {
                Payload::Annotation(a) => Payload::Annotation(a.with_producer(&dispatch.node_id)),
                corpus => corpus,
            };
            let raw = raw_payload(Envelope::new(payload).to_bytes()).map_err(|e| e.to_string())?;
            Ok((port, raw))
        })
        .collect()
}

async fn deliver(client: &reqwest::Client, url: &str, callback: &CallbackEnvelope) {
    let body = serde_json::to_vec(callback).expect("callback serializes");
    let result = client
        .post(url)
        .header(header::CONTENT_TYPE.as_str(), "application/json")
        .body(body)
        .send()
        .await;
    match result {
        Ok(r) if r.status().is_success() => {}
        Ok(r) => tracing::warn!(status = %r.status(), "callback rejected"),
        Err(e) => tracing::warn!("callback delivery failed: {e}"),
    }
}

#[derive(serde::Deserialize)]
struct PageQuery {
    /// Where the settings form posts to, normally the backend's node endpoint.
    target: Option<String>,
    /// Job result to show on the visualization page.
    results: Option<String>,
}

async fn settings_page(
    State(s): State<Arc<Shared>>,
    Path(name): Path<String>,
    Query(q): Query<PageQuery>,
) -> Response {
    if !s.app.processors.iter().any(|p| p.name == name) {
        return error(StatusCode::NOT_FOUND, format!("unknown processor `{name}`"));
    }
    let action = q.target.as_deref().map(escape).unwrap_or_default();
    Html(format!(
        "<!doctype html>\n<html><head><meta charset=\"utf-8\"><title>{name} settings</title></head>\n\
         <body><form method=\"post\" action=\"{action}\">\n\
         <label for=\"settings\">Settings (JSON)</label>\n\
         <textarea id=\"settings\" name=\"settings\" rows=\"12\" cols=\"60\">{{}}</textarea>\n\
         <button type=\"submit\">Save</button>\n</form></body></html>\n"
    ))
    .into_response()
}

async fn ui_page(
    State(s): State<Arc<Shared>>,
    Path(name): Path<String>,
    Query(q): Query<PageQuery>,
) -> Response {
    if !s.app.processors.iter().any(|p| p.name == name) {
        return error(StatusCode::NOT_FOUND, format!("unknown processor `{name}`"));
    }
    let source = q.results.as_deref().map(escape).unwrap_or_default();
    Html(format!(
        "<!doctype html>\n<html><head><meta charset=\"utf-8\"><title>{name} results</title></head>\n\
         <body><pre id=\"out\" data-source=\"{source}\"></pre>\n<script>\n\
         const out = document.getElementById('out');\n\
         const src = out.dataset.source;\n\
         if (src) fetch(src).then(r => r.json()).then(v => out.textContent = JSON.stringify(v.body, null, 2));\n\
         </script></body></html>\n"
    ))
    .into_response()
}

async fn icon(Path(file): Path<String>) -> Response {
    let Some(stem) = file.strip_suffix(".svg") else {
        return error(StatusCode::NOT_FOUND, "icons are svg");
    };
    let letter = stem.chars().find(char::is_ascii_alphanumeric).unwrap_or('?').to_ascii_uppercase();
    let svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"32\" height=\"32\">\
         <rect width=\"32\" height=\"32\" rx=\"6\" fill=\"#2d6a8f\"/>\
         <text x=\"16\" y=\"22\" font-size=\"16\" text-anchor=\"middle\" fill=\"#fff\">{letter}</text></svg>"
    );
    ([(header::CONTENT_TYPE, "image/svg+xml")], svg).into_response()
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('"', "&quot;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

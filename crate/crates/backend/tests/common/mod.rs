#![allow(dead_code)]

use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::time::{Duration, Instant};

use angler_backend::{Config, RunningBackend, Server};
use angler_core::pipeline::{load, save, Pipeline};
use angler_core::protocol::DispatchEnvelope;
use angler_modules::fixtures;
use angler_modules::server::{ModuleApp, RunningModule};
use axum::body::Bytes;
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::{json, Value};
use tempfile::TempDir;
use tokio::sync::mpsc;
use url::Url;
use uuid::Uuid;

pub const LOOPBACK: SocketAddr = SocketAddr::new(IpAddr::V4(Ipv4Addr::LOCALHOST), 0);

pub struct Harness {
    pub backend: RunningBackend,
    pub dir: TempDir,
    pub http: reqwest::Client,
}

pub fn quick_config(dir: &std::path::Path) -> Config {
    Config {
        port: 0,
        state_dir: dir.to_path_buf(),
        sweep_interval: Duration::from_millis(50),
        connect_timeout: Duration::from_secs(2),
        read_timeout: Duration::from_secs(10),
        ..Config::default()
    }
}

pub async fn start(tweak: impl FnOnce(&mut Config)) -> Harness {
    let dir = TempDir::new().unwrap();
    start_in(dir, tweak).await
}

pub async fn start_in(dir: TempDir, tweak: impl FnOnce(&mut Config)) -> Harness {
    let mut config = quick_config(dir.path());
    tweak(&mut config);
    let server = Server::bind(&config).await.unwrap();
    Harness { backend: server.spawn(), dir, http: reqwest::Client::new() }
}

pub struct Reply {
    pub status: u16,
    pub body: Value,
    pub bytes: Vec<u8>,
}

impl Reply {
    pub fn code(&self) -> &str {
        self.body["error"]["code"].as_str().unwrap_or("")
    }

    pub fn kind(&self) -> &str {
        self.body["kind"].as_str().unwrap_or("")
    }
}

impl Harness {
    pub fn url(&self, path: &str) -> String {
        self.backend.endpoint(path)
    }

    async fn reply(r: reqwest::Response) -> Reply {
        let status = r.status().as_u16();
        let bytes = r.bytes().await.unwrap().to_vec();
        let body = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
        Reply { status, body, bytes }
    }

    pub async fn get(&self, path: &str) -> Reply {
        Self::reply(self.http.get(self.url(path)).send().await.unwrap()).await
    }

    pub async fn delete(&self, path: &str) -> Reply {
        Self::reply(self.http.delete(self.url(path)).send().await.unwrap()).await
    }

    pub async fn post(&self, path: &str, body: &Value) -> Reply {
        self.post_bytes(path, serde_json::to_vec(body).unwrap()).await
    }

    pub async fn post_bytes(&self, path: &str, body: Vec<u8>) -> Reply {
        let r = self
            .http
            .post(self.url(path))
            .header("content-type", "application/json")
            .body(body)
            .send()
            .await
            .unwrap();
        Self::reply(r).await
    }

    pub async fn put_bytes(&self, path: &str, body: Vec<u8>) -> Reply {
        Self::reply(self.http.put(self.url(path)).body(body).send().await.unwrap()).await
    }

    pub async fn register(&self, module: &Url) -> Value {
        let r = self.post("api/v1/modules", &json!({ "url": module.as_str() })).await;
        assert_eq!(r.status, 201, "{}", r.body);
        r.body["body"].clone()
    }

    /// Uploads plain-text documents and returns the corpus id.
    pub async fn upload(&self, name: &str, texts: &[(&str, &str)]) -> Uuid {
        let files: Vec<Value> = texts.iter().map(|(f, t)| json!({"filename": f, "text": t})).collect();
        let r = self.post("api/v1/corpora", &json!({ "name": name, "files": files })).await;
        assert_eq!(r.status, 201, "{}", r.body);
        r.body["body"]["id"].as_str().unwrap().parse().unwrap()
    }

    pub async fn create_pipeline(&self, p: &Pipeline) -> Uuid {
        let r = self.post_bytes("api/v1/pipelines", save(p)).await;
        assert_eq!(r.status, 201, "{}", r.body);
        load(&r.bytes).unwrap().id
    }

    pub async fn submit(&self, pipeline: Uuid, corpus: Uuid) -> Reply {
        self.post("api/v1/jobs", &json!({ "pipeline_id": pipeline, "corpus_id": corpus })).await
    }

    pub async fn submit_ok(&self, pipeline: Uuid, corpus: Uuid) -> Uuid {
        let r = self.submit(pipeline, corpus).await;
        assert_eq!(r.status, 201, "{}", r.body);
        r.body["body"]["job_id"].as_str().unwrap().parse().unwrap()
    }

    pub async fn job(&self, job: Uuid) -> Value {
        let r = self.get(&format!("api/v1/jobs/{job}")).await;
        assert_eq!(r.status, 200, "{}", r.body);
        r.body["body"].clone()
    }

    pub async fn wait_until(&self, job: Uuid, limit: Duration, done: impl Fn(&Value) -> bool) -> Value {
        let start = Instant::now();
        loop {
            let view = self.job(job).await;
            if done(&view) {
                return view;
            }
            assert!(start.elapsed() < limit, "job {job} did not settle: {view:#}");
            tokio::time::sleep(Duration::from_millis(20)).await;
        }
    }

    pub async fn wait_terminal(&self, job: Uuid, limit: Duration) -> Value {
        self.wait_until(job, limit, |v| v["terminal"] == true).await
    }

    pub async fn result(&self, job: Uuid, node: &str, port: &str) -> Reply {
        self.get(&format!("api/v1/jobs/{job}/nodes/{node}/ports/{port}")).await
    }
}

pub async fn module(app: ModuleApp) -> RunningModule {
    app.spawn(LOOPBACK).await.unwrap()
}

pub fn fixture(name: &str) -> Pipeline {
    let path = format!("{}/../../fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    load(&std::fs::read(&path).unwrap()).unwrap()
}

pub fn fixture_texts() -> Vec<(String, String)> {
    ["a.txt", "b.txt", "c.txt"]
        .iter()
        .map(|f| {
            let path = format!("{}/../../fixtures/corpus/{f}", env!("CARGO_MANIFEST_DIR"));
            (f.to_string(), std::fs::read_to_string(path).unwrap())
        })
        .collect()
}

/// A tokenizer module that records every dispatch and never calls back,
/// so a test can play the module's side of the callback protocol by hand.
pub struct Recorder {
    pub url: Url,
    _server: AbortOnDrop,
    pub dispatches: mpsc::UnboundedReceiver<DispatchEnvelope>,
}

impl Recorder {
    pub async fn next(&mut self) -> DispatchEnvelope {
        tokio::time::timeout(Duration::from_secs(5), self.dispatches.recv())
            .await
            .expect("a dispatch within 5 s")
            .expect("recorder alive")
    }
}

pub async fn recorder() -> Recorder {
    let template = fixtures::black_hole();
    let about = template.about.clone();
    let listed = Value::Array(template.processors.iter().map(|p| p.wire.clone()).collect());
    let (tx, rx) = mpsc::unbounded_channel();
    let router = Router::new()
        .route("/about", get(move || async move { Json(about) }))
        .route("/processors", get(move || async move { Json(listed) }))
        .route(
            "/processors/{name}/data",
            post(move |body: Bytes| async move {
                let d: DispatchEnvelope = serde_json::from_slice(&body).unwrap();
                let _ = tx.send(d);
                StatusCode::ACCEPTED
            }),
        );
    let listener = tokio::net::TcpListener::bind(LOOPBACK).await.unwrap();
    let local = listener.local_addr().unwrap();
    let handle = tokio::spawn(async move {
        axum::serve(listener, router).await.unwrap();
    });
    Recorder {
        url: Url::parse(&format!("http://{local}/")).unwrap(),
        _server: AbortOnDrop(handle),
        dispatches: rx,
    }
}

struct AbortOnDrop(tokio::task::JoinHandle<()>);

impl Drop for AbortOnDrop {
    fn drop(&mut self) {
        self.0.abort();
    }
}

/// Gazetteer hits in `fixtures/corpus/*.txt` under `fixtures/ner.angler`,
/// worked out by hand: (file, start char, end char, label).
pub fn expected_ner_tags() -> std::collections::BTreeSet<(String, usize, usize, String)> {
    [
        ("a.txt", 0, 3, "PER"),
        ("a.txt", 12, 21, "LOC"),
        ("a.txt", 37, 42, "PER"),
        ("b.txt", 10, 14, "LOC"),
        ("b.txt", 29, 38, "LOC"),
        ("b.txt", 46, 52, "LOC"),
    ]
    .into_iter()
    .map(|(f, s, e, t)| (f.to_string(), s, e, t.to_string()))
    .collect()
}

/// Decodes a stored sequence-tagging result into the same shape as
/// [`expected_ner_tags`], naming documents by their `filename` metadata.
pub fn observed_tags(
    result: &[u8],
    corpus: &angler_core::datamodel::Corpus,
) -> std::collections::BTreeSet<(String, usize, usize, String)> {
    use angler_core::datamodel::{AnnotationBody, Envelope, Payload};
    let Payload::Annotation(a) = Envelope::from_bytes(result).unwrap().payload else { panic!("not an annotation") };
    let AnnotationBody::SequenceTagging(body) = a.body else { panic!("not sequence tagging: {:?}", a.type_id) };
    body.tags
        .iter()
        .map(|t| {
            let doc = corpus.document(&t.document_id).expect("tag points into the corpus");
            let name = doc.metadata.get("filename").unwrap_or_default().to_string();
            (name, t.span.start(), t.span.end(), t.tag.clone())
        })
        .collect()
}

pub async fn corpus(h: &Harness, id: Uuid) -> angler_core::datamodel::Corpus {
    use angler_core::datamodel::{Envelope, Payload};
    let r = h.get(&format!("api/v1/corpora/{id}")).await;
    assert_eq!(r.status, 200, "{}", r.body);
    let Payload::Corpus(c) = Envelope::from_bytes(&r.bytes).unwrap().payload else { panic!("not a corpus") };
    c
}

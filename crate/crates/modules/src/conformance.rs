//! Black-box protocol checks for a module reachable over HTTP.
//!
//! The checker plays the backend: it performs the `/about` and
//! `/processors` handshake, dispatches a sample input to every processor,
//! receives the callbacks on its own loopback server and inspects them.
//! Module misbehaviour is reported, never raised.

use std::collections::BTreeMap;
use std::fmt;
use std::time::Duration;

use angler_core::datamodel::{
    validate_corpus, validate_object, AnnotationBody, AnnotationObject, AnnotationTypeId,
    ClassificationTarget, ClustersBody, ComparisonBody, Corpus, DiscourseBody, Document,
    DocumentFeaturesBody, Envelope, FeatureValue, Location, ParsingBody, Payload, PortType,
    PreprocessedDocumentBody, QuestionAnsweringBody, RelationshipBody, EntityRef,
    RewrittenDocument, SequenceClassificationBody, SequenceTaggingBody, Span, SummarizationBody,
    TokenGroup, TokensBody, TypeHierarchy, DATA_MODEL_VERSION,
};
use angler_core::descriptor::{
    resolve, ModuleDescriptor, Problem, ProcessorDescriptor, ABOUT_ENDPOINT, DOCS_ENDPOINT,
    PROCESSORS_ENDPOINT,
};
use angler_core::protocol::{callback_url, raw_payload, CallbackEnvelope, CallbackStatus, DispatchEnvelope};
use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::routing::post;
use axum::Router;
use serde::Serialize;
use serde_json::Value;
use tokio::sync::mpsc;
use url::Url;
use uuid::Uuid;

use crate::algorithms;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    AboutSchema,
    ProcessorsSchema,
    RequiredAttributes,
    DataModel,
    DataEndpoint,
    CallbackDelivered,
    CallbackTypes,
    Redispatch,
    Docs,
}

impl Check {
    pub const ALL: [Check; 9] = [
        Check::AboutSchema,
        Check::ProcessorsSchema,
        Check::RequiredAttributes,
        Check::DataModel,
        Check::DataEndpoint,
        Check::CallbackDelivered,
        Check::CallbackTypes,
        Check::Redispatch,
        Check::Docs,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Check::AboutSchema => "about_schema",
            Check::ProcessorsSchema => "processors_schema",
            Check::RequiredAttributes => "required_attributes",
            Check::DataModel => "data_model",
            Check::DataEndpoint => "data_endpoint",
            Check::CallbackDelivered => "callback_delivered",
            Check::CallbackTypes => "callback_types",
            Check::Redispatch => "redispatch",
            Check::Docs => "docs",
        }
    }

    /// `/docs` is optional; everything else must pass.
    pub fn mandatory(&self) -> bool {
        !matches!(self, Check::Docs)
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", content = "message", rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    Fail(String),
    Skipped(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CheckResult {
    pub check: Check,
    pub mandatory: bool,
    #[serde(flatten)]
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConformanceReport {
    pub base_url: String,
    pub module: Option<Uuid>,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

impl ConformanceReport {
    pub fn outcome(&self, check: Check) -> Option<&Outcome> {
        self.checks.iter().find(|c| c.check == check).map(|c| &c.outcome)
    }

    /// The first mandatory check that did not pass, in check order.
    pub fn first_failure(&self) -> Option<(Check, &str)> {
        self.checks.iter().find_map(|c| match &c.outcome {
            Outcome::Fail(m) if c.mandatory => Some((c.check, m.as_str())),
            _ => None,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ConformanceOptions {
    /// How long to wait for each callback.
    pub callback_timeout: Duration,
    pub request_timeout: Duration,
}

impl Default for ConformanceOptions {
    fn default() -> Self {
        Self {
            callback_timeout: Duration::from_secs(10),
            request_timeout: Duration::from_secs(30),
        }
    }
}

/// Two short documents that exercise tokens, sentences and a gazetteer hit.
pub fn sample_corpus() -> Corpus {
    let mut corpus = Corpus::new(
        "conformance",
        vec![Document::new("Ljubljana is nice. Dogs bark!"), Document::new("Dogs bark.")],
    );
    corpus.id = Uuid::from_u128(0xc0f0_0001);
    corpus.documents[0].id = Uuid::from_u128(0xc0f0_0002);
    corpus.documents[1].id = Uuid::from_u128(0xc0f0_0003);
    corpus
}

/// A small valid payload of the given port type over `corpus`. The abstract
/// root type is served as tokens, which every root port accepts.
pub fn sample_payload(port_type: PortType, corpus: &Corpus) -> Payload {
    use AnnotationTypeId as T;
    let ty = match port_type {
        PortType::Corpus => return Payload::Corpus(corpus.clone()),
        PortType::Annotation(t) => t,
    };
    let first = corpus.documents.first();
    let first_id = first.map(|d| d.id).unwrap_or_default();
    let first_char = first
        .filter(|d| d.char_len() > 0)
        .map(|d| Location { document_id: d.id, span: Span::new(0, 1).expect("valid") });
    let tokens: Vec<_> = corpus.documents.iter().flat_map(algorithms::whitespace_tokens).collect();
    let body = match ty {
        T::AnnotationObject | T::Tokens => AnnotationBody::Tokens(TokensBody { tokens }),
        T::Parsing => AnnotationBody::Parsing(ParsingBody {
            groups: if tokens.len() >= 2 {
                vec![TokenGroup { label: "NP".into(), members: vec![0, 1] }]
            } else {
                Vec::new()
            },
            tokens,
        }),
        T::PreprocessedDocument => AnnotationBody::PreprocessedDocument(PreprocessedDocumentBody {
            documents: corpus
                .documents
                .iter()
                .map(|d| RewrittenDocument {
                    document_id: d.id,
                    new_text: algorithms::sentence_per_line(&d.text),
                })
                .collect(),
        }),
        T::DocumentFeatures => AnnotationBody::DocumentFeatures(DocumentFeaturesBody {
            features: corpus
                .documents
                .iter()
                .map(|d| {
                    let f = BTreeMap::from([("length".to_string(), FeatureValue::Number(d.char_len() as f64))]);
                    (d.id, f)
                })
                .collect(),
        }),
        T::SequenceClassification => AnnotationBody::SequenceClassification(SequenceClassificationBody {
            target: ClassificationTarget { document_id: first_id, span: None },
            label: "neutral".into(),
            confidence: 1.0,
        }),
        T::SequenceTagging => AnnotationBody::SequenceTagging(SequenceTaggingBody::default()),
        T::Relationship => match first_char {
            Some(loc) => AnnotationBody::Relationship(RelationshipBody {
                source: EntityRef::Span(loc),
                target: EntityRef::Span(loc),
                relation: "same".into(),
            }),
            None => AnnotationBody::SequenceTagging(SequenceTaggingBody::default()),
        },
        T::Discourse => AnnotationBody::Discourse(DiscourseBody::default()),
        T::Summarization => AnnotationBody::Summarization(SummarizationBody {
            document_id: first_id,
            summary: first
                .and_then(|d| algorithms::split_sentences(&d.text).first().map(|s| s.to_string()))
                .unwrap_or_default(),
        }),
        T::QuestionAnswering => AnnotationBody::QuestionAnswering(QuestionAnsweringBody::default()),
        T::Comparison => AnnotationBody::Comparison(ComparisonBody::default()),
        T::Clusters => AnnotationBody::Clusters(ClustersBody {
            clusters: vec![corpus.documents.iter().map(|d| d.id).collect()],
        }),
    };
    Payload::Annotation(AnnotationObject::new(corpus.id, body))
}

struct Received {
    node_id: String,
    query_token: Option<String>,
    body: Bytes,
}

#[derive(serde::Deserialize)]
struct TokenQuery {
    token: Option<String>,
}

async fn callback_sink(
    State(tx): State<mpsc::UnboundedSender<Received>>,
    Path((_job, node_id)): Path<(String, String)>,
    Query(q): Query<TokenQuery>,
    body: Bytes,
) -> &'static str {
    let _ = tx.send(Received { node_id, query_token: q.token, body });
    "{}"
}

struct Sink {
    public: Url,
    rx: mpsc::UnboundedReceiver<Received>,
    pending: Vec<Received>,
    server: tokio::task::JoinHandle<()>,
}

impl Sink {
    async fn start() -> std::io::Result<Self> {
        let (tx, rx) = mpsc::unbounded_channel();
        let listener = tokio::net::TcpListener::bind(("127.0.0.1", 0)).await?;
        let addr = listener.local_addr()?;
        let app = Router::new()
            .route("/callback/{job}/{node}", post(callback_sink))
            .with_state(tx);
        let server = tokio::spawn(async move {
            let _ = axum::serve(listener, app).await;
        });
        Ok(Self {
            public: Url::parse(&format!("http://{addr}/")).expect("loopback url"),
            rx,
            pending: Vec::new(),
            server,
        })
    }

    /// Waits until `deadline` for a callback addressed to `node_id`.
    async fn take(&mut self, node_id: &str, deadline: tokio::time::Instant) -> Option<Received> {
        if let Some(i) = self.pending.iter().position(|r| r.node_id == node_id) {
            return Some(self.pending.remove(i));
        }
        loop {
            match tokio::time::timeout_at(deadline, self.rx.recv()).await {
                Ok(Some(r)) if r.node_id == node_id => return Some(r),
                Ok(Some(r)) => self.pending.push(r),
                Ok(None) | Err(_) => return None,
            }
        }
    }
}

impl Drop for Sink {
    fn drop(&mut self) {
        self.server.abort();
    }
}

struct Dispatched {
    processor: ProcessorDescriptor,
    node_id: String,
    token: String,
}

struct Checker {
    client: reqwest::Client,
    base: Url,
    job_id: Uuid,
    corpus: Corpus,
    options: ConformanceOptions,
    results: BTreeMap<Check, Outcome>,
}

impl Checker {
    fn set(&mut self, check: Check, outcome: Outcome) {
        self.results.insert(check, outcome);
    }

    fn skip_rest(&mut self, reason: &str) {
        for check in Check::ALL {
            self.results
                .entry(check)
                .or_insert_with(|| Outcome::Skipped(reason.to_string()));
        }
    }

    async fn get_json(&self, endpoint: &str) -> Result<Value, String> {
        let url = resolve(&self.base, endpoint).map_err(|e| format!("bad URL for {endpoint}: {e}"))?;
        let response = self
            .client
            .get(url)
            .send()
            .await
            .map_err(|e| format!("GET {endpoint} failed: {e}"))?;
        let status = response.status();
        if !status.is_success() {
            return Err(format!("GET {endpoint} returned {status}"));
        }
        let bytes = response.bytes().await.map_err(|e| format!("GET {endpoint}: {e}"))?;
        serde_json::from_slice(&bytes).map_err(|e| format!("GET {endpoint}: body is not JSON: {e}"))
    }

    fn dispatch_for(&self, p: &ProcessorDescriptor, node_id: &str, token: &str, public: &Url) -> Result<Vec<u8>, String> {
        let mut inputs = BTreeMap::new();
        for port in &p.inputs {
            let ty = port.types[0];
            let bytes = Envelope::new(sample_payload(ty, &self.corpus)).to_bytes();
            inputs.insert(port.name.clone(), raw_payload(bytes).map_err(|e| e.to_string())?);
        }
        let dispatch = DispatchEnvelope {
            job_id: self.job_id,
            node_id: node_id.to_string(),
            callback_url: callback_url(public, self.job_id, node_id, token).to_string(),
            settings: Value::Object(Default::default()),
            inputs,
        };
        serde_json::to_vec(&dispatch).map_err(|e| e.to_string())
    }

    async fn post_dispatch(&self, p: &ProcessorDescriptor, body: Vec<u8>) -> Result<(), String> {
        let response = self
            .client
            .post(&p.data_endpoint)
            .header("content-type", "application/json")
            .body(body)
            .send()
            .await
            .map_err(|e| format!("`{}`: dispatch failed: {e}", p.name))?;
        match response.status().as_u16() {
            202 => Ok(()),
            code => Err(format!("`{}`: expected 202 Accepted, got {code}", p.name)),
        }
    }

    /// Checks one callback; returns its normalised outputs when it is a
    /// well-typed success.
    fn inspect(&self, d: &Dispatched, r: &Received) -> Result<BTreeMap<String, Value>, (Check, String)> {
        let name = &d.processor.name;
        let delivered = |m: String| (Check::CallbackDelivered, format!("`{name}`: {m}"));
        let typed = |m: String| (Check::CallbackTypes, format!("`{name}`: {m}"));
        let cb: CallbackEnvelope = serde_json::from_slice(&r.body)
            .map_err(|e| delivered(format!("callback body is malformed: {e}")))?;
        if cb.job_id != self.job_id || cb.node_id != d.node_id {
            return Err(delivered(format!(
                "callback addressed to {}/{}, expected {}/{}",
                cb.job_id, cb.node_id, self.job_id, d.node_id
            )));
        }
        if cb.callback_token != d.token || r.query_token.as_deref() != Some(d.token.as_str()) {
            return Err(delivered("callback does not carry the dispatch token".into()));
        }
        if cb.status == CallbackStatus::Failure {
            return Err(typed(format!(
                "module reported failure: {}",
                cb.message.as_deref().unwrap_or("no message")
            )));
        }
        let hierarchy = TypeHierarchy::shipped();
        let mut normalised = BTreeMap::new();
        for port in &d.processor.outputs {
            let raw = cb
                .outputs
                .get(&port.name)
                .ok_or_else(|| typed(format!("output `{}` missing", port.name)))?;
            let envelope = Envelope::from_bytes(raw.get().as_bytes())
                .map_err(|e| typed(format!("output `{}`: {e}", port.name)))?;
            let actual = match &envelope.payload {
                Payload::Corpus(_) => PortType::Corpus,
                Payload::Annotation(a) => PortType::Annotation(a.type_id),
            };
            if !hierarchy.port_type_matches(actual, port.port_type) {
                return Err(typed(format!(
                    "output `{}` is {actual}, declared {}",
                    port.name, port.port_type
                )));
            }
            let report = match &envelope.payload {
                Payload::Corpus(c) => validate_corpus(c),
                Payload::Annotation(a) => validate_object(a, &self.corpus),
            };
            if let Some(v) = report.violations.first() {
                return Err(typed(format!("output `{}` is invalid: {v}", port.name)));
            }
            let mut value: Value = serde_json::from_str(raw.get()).expect("decoded above");
            if let Some(body) = value.get_mut("body").and_then(Value::as_object_mut) {
                if actual != PortType::Corpus {
                    body.insert("id".into(), Value::Null);
                }
            }
            normalised.insert(port.name.clone(), value);
        }
        if let Some(extra) = cb.outputs.keys().find(|k| d.processor.output(k).is_none()) {
            return Err(typed(format!("undeclared output `{extra}`")));
        }
        Ok(normalised)
    }
}

fn token() -> String {
    Uuid::new_v4().simple().to_string()
}

fn join(failures: &[String]) -> Outcome {
    if failures.is_empty() {
        Outcome::Pass
    } else {
        Outcome::Fail(failures.join("; "))
    }
}

pub async fn conformance_check(base_url: &Url, options: &ConformanceOptions) -> ConformanceReport {
    let client = reqwest::Client::builder()
        .connect_timeout(Duration::from_secs(5))
        .timeout(options.request_timeout)
        .build()
        .expect("http client");
    let mut c = Checker {
        client,
        base: base_url.clone(),
        job_id: Uuid::new_v4(),
        corpus: sample_corpus(),
        options: options.clone(),
        results: BTreeMap::new(),
    };
    let module = run_checks(&mut c).await;
    let checks: Vec<CheckResult> = Check::ALL
        .into_iter()
        .map(|check| CheckResult {
            check,
            mandatory: check.mandatory(),
            outcome: c
                .results
                .remove(&check)
                .unwrap_or_else(|| Outcome::Skipped("not reached".into())),
        })
        .collect();
    ConformanceReport {
        base_url: base_url.to_string(),
        module,
        passed: checks.iter().all(|r| !r.mandatory || r.outcome == Outcome::Pass),
        checks,
    }
}

async fn run_checks(c: &mut Checker) -> Option<Uuid> {
    let mut missing = Vec::new();

    let about = match c.get_json(ABOUT_ENDPOINT).await {
        Ok(v) => Some(v),
        Err(e) => {
            c.set(Check::AboutSchema, Outcome::Fail(e));
            c.skip_rest("module unreachable or /about unusable");
            return None;
        }
    };
    let module = match ModuleDescriptor::from_about(about.as_ref().expect("set")) {
        Ok(m) => {
            c.set(Check::AboutSchema, Outcome::Pass);
            Some(m)
        }
        Err(e) if e.problem == Problem::Missing => {
            c.set(Check::AboutSchema, Outcome::Pass);
            missing.push(e.to_string());
            None
        }
        Err(e) => {
            c.set(Check::AboutSchema, Outcome::Fail(e.to_string()));
            None
        }
    };

    let processors = match c.get_json(PROCESSORS_ENDPOINT).await {
        Err(e) => {
            c.set(Check::ProcessorsSchema, Outcome::Fail(e));
            None
        }
        Ok(v) => match ProcessorDescriptor::list_from_wire(&v) {
            Ok(list) => {
                c.set(Check::ProcessorsSchema, Outcome::Pass);
                Some(list)
            }
            Err(e) if e.problem == Problem::Missing => {
                c.set(Check::ProcessorsSchema, Outcome::Pass);
                missing.push(e.to_string());
                None
            }
            Err(e) => {
                c.set(Check::ProcessorsSchema, Outcome::Fail(e.to_string()));
                None
            }
        },
    };
    c.set(Check::RequiredAttributes, join(&missing));

    match &module {
        Some(m) if m.data_model.compatible_with(&DATA_MODEL_VERSION) => c.set(Check::DataModel, Outcome::Pass),
        Some(m) => c.set(
            Check::DataModel,
            Outcome::Fail(format!("module speaks data model {}, checker speaks {DATA_MODEL_VERSION}", m.data_model)),
        ),
        None => {}
    }

    docs(c).await;

    let (Some(_), Some(mut processors)) = (&module, processors) else {
        c.skip_rest("descriptor unusable");
        return module.map(|m| m.uuid);
    };
    for p in &mut processors {
        if let Err(e) = p.resolve_endpoints(&c.base) {
            c.set(Check::DataEndpoint, Outcome::Fail(format!("`{}`: bad data_endpoint: {e}", p.name)));
            c.skip_rest("data endpoints unusable");
            return module.map(|m| m.uuid);
        }
    }

    let mut sink = match Sink::start().await {
        Ok(s) => s,
        Err(e) => {
            c.set(Check::DataEndpoint, Outcome::Skipped(format!("cannot start callback receiver: {e}")));
            c.skip_rest("callback receiver unavailable");
            return module.map(|m| m.uuid);
        }
    };

    // First round: one dispatch per processor.
    let mut endpoint_failures = Vec::new();
    let mut accepted = Vec::new();
    for p in processors {
        let d = Dispatched {
            node_id: format!("conformance-{}", p.name),
            token: token(),
            processor: p,
        };
        let body = match c.dispatch_for(&d.processor, &d.node_id, &d.token, &sink.public) {
            Ok(b) => b,
            Err(e) => {
                endpoint_failures.push(format!("`{}`: cannot build dispatch: {e}", d.processor.name));
                continue;
            }
        };
        match c.post_dispatch(&d.processor, body).await {
            Ok(()) => accepted.push(d),
            Err(e) => endpoint_failures.push(e),
        }
    }
    c.set(Check::DataEndpoint, join(&endpoint_failures));

    let wait = c.options.callback_timeout;
    let deadline = tokio::time::Instant::now() + wait;
    let mut delivery_failures = Vec::new();
    let mut type_failures = Vec::new();
    let mut good = Vec::new();
    for d in accepted {
        match sink.take(&d.node_id, deadline).await {
            None => delivery_failures.push(format!(
                "`{}`: no callback within {:.1}s",
                d.processor.name,
                wait.as_secs_f64()
            )),
            Some(r) => match c.inspect(&d, &r) {
                Ok(outputs) => good.push((d, outputs)),
                Err((Check::CallbackDelivered, m)) => delivery_failures.push(m),
                Err((_, m)) => type_failures.push(m),
            },
        }
    }
    c.set(Check::CallbackDelivered, join(&delivery_failures));
    if delivery_failures.is_empty() {
        c.set(Check::CallbackTypes, join(&type_failures));
    } else {
        c.set(
            Check::CallbackTypes,
            if type_failures.is_empty() {
                Outcome::Skipped("callbacks missing".into())
            } else {
                Outcome::Fail(type_failures.join("; "))
            },
        );
    }
    if !delivery_failures.is_empty() || !type_failures.is_empty() || !endpoint_failures.is_empty() {
        c.set(Check::Redispatch, Outcome::Skipped("first dispatch did not succeed".into()));
        return module.map(|m| m.uuid);
    }

    // Second round: the same node again under a fresh token, as a backend
    // retry would send it.
    let mut redispatch_failures = Vec::new();
    let mut second = Vec::new();
    for (mut d, first) in good {
        d.token = token();
        let body = match c.dispatch_for(&d.processor, &d.node_id, &d.token, &sink.public) {
            Ok(b) => b,
            Err(e) => {
                redispatch_failures.push(e);
                continue;
            }
        };
        match c.post_dispatch(&d.processor, body).await {
            Ok(()) => second.push((d, first)),
            Err(e) => redispatch_failures.push(e),
        }
    }
    let deadline = tokio::time::Instant::now() + wait;
    for (d, first) in second {
        match sink.take(&d.node_id, deadline).await {
            None => redispatch_failures.push(format!("`{}`: no callback for the repeated dispatch", d.processor.name)),
            Some(r) => match c.inspect(&d, &r) {
                Ok(outputs) if outputs == first => {}
                Ok(_) => redispatch_failures.push(format!(
                    "`{}`: repeated dispatch produced different outputs",
                    d.processor.name
                )),
                Err((_, m)) => redispatch_failures.push(format!("repeated dispatch: {m}")),
            },
        }
    }
    c.set(Check::Redispatch, join(&redispatch_failures));
    module.map(|m| m.uuid)
}

async fn docs(c: &mut Checker) {
    let outcome = match resolve(&c.base, DOCS_ENDPOINT) {
        Err(e) => Outcome::Fail(e.to_string()),
        Ok(url) => match c.client.get(url).send().await {
            Err(e) => Outcome::Fail(format!("GET /docs failed: {e}")),
            Ok(r) if r.status().as_u16() == 404 => Outcome::Pass,
            Ok(r) if r.status().is_success() => match r.bytes().await {
                Ok(b) if !b.is_empty() => Outcome::Pass,
                Ok(_) => Outcome::Fail("/docs page is empty".into()),
                Err(e) => Outcome::Fail(format!("GET /docs: {e}")),
            },
            Ok(r) => Outcome::Fail(format!("GET /docs returned {}", r.status())),
        },
    };
    c.set(Check::Docs, outcome);
}

//! Runs pipelines against registered modules.
//!
//! Each job is a state machine guarded by its own lock, so dispatches,
//! callbacks and timeout sweeps for one job are serialized while different
//! jobs proceed independently. HTTP traffic to modules always happens
//! outside the lock.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::sync::{Arc, RwLock};
use std::time::Duration;

use angler_core::datamodel::{
    validate_corpus, validate_object, Corpus, Envelope, Payload, PortType, TypeHierarchy,
};
use angler_core::descriptor::ProcessorDescriptor;
use angler_core::pipeline::{
    plan, validate, Diagnostic, NodeKind, Pipeline, SourceCorpus, Stages, SOURCE_PORT,
};
use angler_core::protocol::{callback_url, CallbackEnvelope, CallbackStatus, DispatchEnvelope};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use tokio::sync::Mutex;
use url::Url;
use uuid::Uuid;

use crate::jobs::JobStore;
use crate::registry::{http_client, Catalog};

#[derive(Debug, Clone)]
pub struct ExecutorSettings {
    /// Base for callback URLs; must be reachable from the modules.
    pub public_url: Url,
    pub node_timeout: Duration,
    pub retry_limit: u32,
    pub connect_timeout: Duration,
    pub read_timeout: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeState {
    Pending,
    Dispatched,
    Completed,
    Failed,
    Cancelled,
}

impl NodeState {
    pub fn is_active(&self) -> bool {
        matches!(self, NodeState::Pending | NodeState::Dispatched)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FailureCode {
    /// No callback after the last permitted dispatch.
    Timeout,
    /// An output's type is not the declared port type or a descendant.
    TypeViolation,
    /// An output does not decode or does not fit the job's corpus.
    InvalidOutput,
    MissingOutput,
    /// The module reported a failure.
    ModuleFailure,
    /// The module did not accept the dispatch with 202.
    DispatchRejected,
    /// The backend restarted while the node was dispatched.
    Restart,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeFailure {
    pub code: FailureCode,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Running,
    Completed,
    Failed,
    Cancelled,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct NodeRecord {
    state: NodeState,
    attempts: u32,
    dispatched_at: Option<DateTime<Utc>>,
    completed_at: Option<DateTime<Utc>>,
    failure: Option<NodeFailure>,
    outputs: Vec<String>,
    token: Option<String>,
    stale_tokens: Vec<String>,
}

impl NodeRecord {
    fn pending() -> Self {
        Self {
            state: NodeState::Pending,
            attempts: 0,
            dispatched_at: None,
            completed_at: None,
            failure: None,
            outputs: Vec::new(),
            token: None,
            stale_tokens: Vec::new(),
        }
    }
}

/// What `job_status` reports about one node. Carries no payloads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeView {
    pub state: NodeState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub processor: Option<String>,
    pub attempts: u32,
    pub dispatched_at: Option<DateTime<Utc>>,
    pub completed_at: Option<DateTime<Utc>>,
    pub failure: Option<NodeFailure>,
    /// Output ports with stored results.
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobView {
    pub job_id: Uuid,
    pub pipeline_id: Uuid,
    pub pipeline_name: String,
    pub corpus_id: Uuid,
    pub state: JobState,
    /// No node is pending or dispatched any more.
    pub terminal: bool,
    pub created_at: DateTime<Utc>,
    pub stages: Stages,
    pub nodes: BTreeMap<String, NodeView>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Job {
    job_id: Uuid,
    pipeline: Pipeline,
    corpus: Corpus,
    processors: BTreeMap<String, ProcessorDescriptor>,
    stages: Stages,
    nodes: BTreeMap<String, NodeRecord>,
    created_at: DateTime<Utc>,
    #[serde(skip)]
    outputs: HashMap<(String, String), Arc<str>>,
}

/// A dispatch prepared under the job lock, sent after releasing it.
struct Outgoing {
    job_id: Uuid,
    node_id: String,
    token: String,
    url: String,
    body: Vec<u8>,
}

impl Job {
    fn overall(&self) -> (JobState, bool) {
        let states: Vec<NodeState> = self.nodes.values().map(|n| n.state).collect();
        let terminal = !states.iter().any(NodeState::is_active);
        let state = if states.contains(&NodeState::Failed) {
            JobState::Failed
        } else if states.iter().all(|s| *s == NodeState::Completed) {
            JobState::Completed
        } else if terminal {
            JobState::Cancelled
        } else {
            JobState::Running
        };
        (state, terminal)
    }

    fn view(&self) -> JobView {
        let (state, terminal) = self.overall();
        JobView {
            job_id: self.job_id,
            pipeline_id: self.pipeline.id,
            pipeline_name: self.pipeline.name.clone(),
            corpus_id: self.corpus.id,
            state,
            terminal,
            created_at: self.created_at,
            stages: self.stages.clone(),
            nodes: self
                .nodes
                .iter()
                .map(|(id, n)| {
                    (
                        id.clone(),
                        NodeView {
                            state: n.state,
                            processor: self.processors.get(id).map(|p| p.name.clone()),
                            attempts: n.attempts,
                            dispatched_at: n.dispatched_at,
                            completed_at: n.completed_at,
                            failure: n.failure.clone(),
                            outputs: n.outputs.clone(),
                        },
                    )
                })
                .collect(),
        }
    }

    fn producers<'a>(&'a self, node: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.pipeline
            .edges
            .iter()
            .filter(move |e| e.to_node == node)
            .map(|e| e.from_node.as_str())
    }

    /// Pending nodes whose producers have all completed, in stage order.
    fn ready(&self) -> Vec<String> {
        self.stages
            .iter()
            .flatten()
            .filter(|id| self.nodes[id.as_str()].state == NodeState::Pending)
            .filter(|id| self.producers(id).all(|p| self.nodes[p].state == NodeState::Completed))
            .cloned()
            .collect()
    }

    fn descendants(&self, node: &str) -> BTreeSet<String> {
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([node.to_string()]);
        while let Some(n) = queue.pop_front() {
            for e in self.pipeline.edges.iter().filter(|e| e.from_node == n) {
                if seen.insert(e.to_node.clone()) {
                    queue.push_back(e.to_node.clone());
                }
            }
        }
        seen
    }

    fn fail(&mut self, node: &str, code: FailureCode, message: impl Into<String>) {
        let message = message.into();
        tracing::warn!(job = %self.job_id, node, ?code, "{message}");
        let now = Utc::now();
        if let Some(n) = self.nodes.get_mut(node) {
            n.state = NodeState::Failed;
            n.completed_at = Some(now);
            n.failure = Some(NodeFailure { code, message });
        }
        for d in self.descendants(node) {
            let n = self.nodes.get_mut(&d).expect("edge targets exist");
            if n.state == NodeState::Pending {
                n.state = NodeState::Cancelled;
                n.completed_at = Some(now);
            }
        }
    }

    fn output(&mut self, store: &JobStore, node: &str, port: &str) -> std::io::Result<Arc<str>> {
        let key = (node.to_string(), port.to_string());
        if let Some(bytes) = self.outputs.get(&key) {
            return Ok(bytes.clone());
        }
        let text: Arc<str> = store.load_output(self.job_id, node, port)?.into();
        self.outputs.insert(key, text.clone());
        Ok(text)
    }

    fn store_output(&mut self, store: &JobStore, node: &str, port: &str, bytes: &str) -> std::io::Result<()> {
        store.save_output(self.job_id, node, port, bytes.as_bytes())?;
        self.outputs.insert((node.to_string(), port.to_string()), bytes.into());
        Ok(())
    }

    /// Marks `node` dispatched under a fresh token and builds its request.
    /// An earlier token becomes stale.
    fn begin_dispatch(&mut self, store: &JobStore, public: &Url, node: &str) -> Result<Outgoing, String> {
        let processor = self.processors.get(node).cloned().ok_or("not a processor node")?;
        let mut inputs = BTreeMap::new();
        let edges: Vec<_> = self
            .pipeline
            .edges
            .iter()
            .filter(|e| e.to_node == node)
            .cloned()
            .collect();
        for e in edges {
            let bytes = self
                .output(store, &e.from_node, &e.from_port)
                .map_err(|err| format!("input `{}` unavailable: {err}", e.to_port))?;
            let raw = RawValue::from_string(bytes.to_string()).map_err(|err| err.to_string())?;
            inputs.insert(e.to_port.clone(), raw);
        }
        let settings = match &self.pipeline.node(node).map(|n| &n.kind) {
            Some(NodeKind::Processor(r)) => r.settings.clone(),
            _ => serde_json::Value::Null,
        };
        let token = Uuid::new_v4().simple().to_string();
        let dispatch = DispatchEnvelope {
            job_id: self.job_id,
            node_id: node.to_string(),
            callback_url: callback_url(public, self.job_id, node, &token).to_string(),
            settings,
            inputs,
        };
        let body = serde_json::to_vec(&dispatch).map_err(|e| e.to_string())?;
        let n = self.nodes.get_mut(node).expect("node exists");
        if let Some(old) = n.token.replace(token.clone()) {
            n.stale_tokens.push(old);
        }
        n.state = NodeState::Dispatched;
        n.attempts += 1;
        n.dispatched_at = Some(Utc::now());
        Ok(Outgoing {
            job_id: self.job_id,
            node_id: node.to_string(),
            token,
            url: processor.data_endpoint.clone(),
            body,
        })
    }

    /// Dispatches every ready node; nodes whose request cannot be built fail.
    fn advance(&mut self, store: &JobStore, public: &Url) -> Vec<Outgoing> {
        let mut out = Vec::new();
        loop {
            let ready = self.ready();
            if ready.is_empty() {
                return out;
            }
            let mut progressed = false;
            for node in ready {
                match self.begin_dispatch(store, public, &node) {
                    Ok(o) => out.push(o),
                    Err(e) => {
                        self.fail(&node, FailureCode::DispatchRejected, e);
                        progressed = true;
                    }
                }
            }
            if !progressed {
                return out;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SubmitError {
    #[error("pipeline is not runnable ({} problem(s))", .0.len())]
    Invalid(Vec<Diagnostic>),
    #[error("no corpus given and the source nodes name none")]
    NoCorpus,
    #[error("source nodes refer to different corpora")]
    SourcesDisagree,
    #[error("unknown corpus {0}")]
    CorpusNotFound(Uuid),
    #[error("corpus is invalid: {0}")]
    CorpusInvalid(String),
    #[error("cannot persist job: {0}")]
    Storage(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExecError {
    #[error("unknown job {0}")]
    JobNotFound(Uuid),
    #[error("job has no node `{0}`")]
    NodeNotFound(String),
    #[error("node `{node}` has no output `{port}`")]
    PortNotFound { node: String, port: String },
    #[error("node `{node}` is {state:?}, results are not available")]
    NotReady { node: String, state: NodeState },
    #[error("cannot read stored result: {0}")]
    Storage(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CallbackError {
    #[error("unknown job {0}")]
    JobNotFound(Uuid),
    #[error("job has no node `{0}`")]
    NodeNotFound(String),
    #[error("malformed callback: {0}")]
    Malformed(String),
    #[error("callback token does not match")]
    TokenMismatch,
    #[error("callback token belongs to an earlier dispatch")]
    StaleToken,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallbackAck {
    /// The callback changed the node's state.
    Applied,
    /// The node already left the dispatched state; nothing changed.
    Ignored,
}

pub struct Executor {
    jobs: RwLock<BTreeMap<Uuid, Arc<Mutex<Job>>>>,
    store: JobStore,
    client: reqwest::Client,
    settings: ExecutorSettings,
    hierarchy: TypeHierarchy,
}

impl Executor {
    /// Loads stored jobs. Nodes that were dispatched when the previous
    /// process stopped are failed with [`FailureCode::Restart`].
    pub fn open(store: JobStore, settings: ExecutorSettings) -> std::io::Result<Arc<Self>> {
        let mut jobs = BTreeMap::new();
        for mut job in store.load_all::<Job>()? {
            let interrupted: Vec<String> = job
                .nodes
                .iter()
                .filter(|(_, n)| n.state == NodeState::Dispatched)
                .map(|(id, _)| id.clone())
                .collect();
            for node in &interrupted {
                job.fail(node, FailureCode::Restart, "backend restarted while the node was dispatched");
            }
            if !interrupted.is_empty() {
                store.save_job(job.job_id, &job)?;
            }
            jobs.insert(job.job_id, Arc::new(Mutex::new(job)));
        }
        Ok(Arc::new(Self {
            jobs: RwLock::new(jobs),
            store,
            client: http_client(settings.connect_timeout, settings.read_timeout),
            settings,
            hierarchy: TypeHierarchy::shipped(),
        }))
    }

    pub fn settings(&self) -> &ExecutorSettings {
        &self.settings
    }

    fn job(&self, id: &Uuid) -> Option<Arc<Mutex<Job>>> {
        self.jobs.read().expect("jobs lock").get(id).cloned()
    }

    fn persist(&self, job: &Job) {
        if let Err(e) = self.store.save_job(job.job_id, job) {
            tracing::error!(job = %job.job_id, "cannot persist job state: {e}");
        }
    }

    /// Starts a job and dispatches its first processor stage. `corpus`
    /// overrides the source nodes; without it every source must name the
    /// same corpus, looked up through `corpora` when given by reference.
    pub async fn submit(
        self: &Arc<Self>,
        pipeline: &Pipeline,
        corpus: Option<Corpus>,
        catalog: &Catalog,
        corpora: impl Fn(&Uuid) -> Option<Corpus>,
    ) -> Result<Uuid, SubmitError> {
        let diagnostics = validate(pipeline, catalog, &self.hierarchy);
        if !diagnostics.is_empty() {
            return Err(SubmitError::Invalid(diagnostics));
        }
        let stages = plan(pipeline).map_err(|e| SubmitError::Invalid(vec![cycle_diagnostic(e)]))?;
        let corpus = match corpus {
            Some(c) => c,
            None => source_corpus(pipeline, corpora)?,
        };
        let report = validate_corpus(&corpus);
        if let Some(v) = report.violations.first() {
            return Err(SubmitError::CorpusInvalid(v.to_string()));
        }

        let mut processors = BTreeMap::new();
        let mut nodes = BTreeMap::new();
        for node in &pipeline.nodes {
            if let Some(r) = node.processor_ref() {
                let p = angler_core::pipeline::ProcessorCatalog::processor(catalog, &r.module, &r.processor)
                    .expect("validated against this catalog");
                processors.insert(node.node_id.clone(), p.clone());
            }
            nodes.insert(node.node_id.clone(), NodeRecord::pending());
        }
        let mut job = Job {
            job_id: Uuid::new_v4(),
            pipeline: pipeline.clone(),
            corpus,
            processors,
            stages,
            nodes,
            created_at: Utc::now(),
            outputs: HashMap::new(),
        };
        let corpus_bytes = String::from_utf8(Envelope::new(job.corpus.clone()).to_bytes()).expect("JSON is UTF-8");
        let now = Utc::now();
        let sources: Vec<String> = pipeline.nodes.iter().filter(|n| n.is_source()).map(|n| n.node_id.clone()).collect();
        for id in sources {
            job.store_output(&self.store, &id, SOURCE_PORT, &corpus_bytes)
                .map_err(|e| SubmitError::Storage(e.to_string()))?;
            let n = job.nodes.get_mut(&id).expect("node exists");
            n.state = NodeState::Completed;
            n.completed_at = Some(now);
            n.outputs = vec![SOURCE_PORT.to_string()];
        }
        let outgoing = job.advance(&self.store, &self.settings.public_url);
        self.store
            .save_job(job.job_id, &job)
            .map_err(|e| SubmitError::Storage(e.to_string()))?;
        let id = job.job_id;
        tracing::info!(job = %id, pipeline = %pipeline.id, "job submitted");
        self.jobs.write().expect("jobs lock").insert(id, Arc::new(Mutex::new(job)));
        self.send_all(outgoing);
        Ok(id)
    }

    fn send_all(self: &Arc<Self>, outgoing: Vec<Outgoing>) {
        for o in outgoing {
            let this = self.clone();
            tokio::spawn(async move { this.send(o).await });
        }
    }

    async fn send(self: Arc<Self>, o: Outgoing) {
        let result = self
            .client
            .post(&o.url)
            .header("content-type", "application/json")
            .body(o.body)
            .send()
            .await;
        let problem = match result {
            Ok(r) if r.status().as_u16() == 202 => return,
            Ok(r) => format!("module answered {} instead of 202 Accepted", r.status()),
            Err(e) => format!("dispatch to {} failed: {e}", o.url),
        };
        let Some(job) = self.job(&o.job_id) else { return };
        let mut job = job.lock().await;
        let n = &job.nodes[&o.node_id];
        if n.state == NodeState::Dispatched && n.token.as_deref() == Some(o.token.as_str()) {
            job.fail(&o.node_id, FailureCode::DispatchRejected, problem);
            self.persist(&job);
        }
    }

    /// Applies a module's callback. `query_token` is the token carried in
    /// the callback URL; it must agree with the one in the body.
    pub async fn handle_callback(
        self: &Arc<Self>,
        job_id: Uuid,
        node_id: &str,
        query_token: Option<&str>,
        body: &[u8],
    ) -> Result<CallbackAck, CallbackError> {
        let job = self.job(&job_id).ok_or(CallbackError::JobNotFound(job_id))?;
        let cb: CallbackEnvelope =
            serde_json::from_slice(body).map_err(|e| CallbackError::Malformed(e.to_string()))?;
        if cb.job_id != job_id || cb.node_id != node_id {
            return Err(CallbackError::Malformed(format!(
                "body addresses {}/{}, URL addresses {job_id}/{node_id}",
                cb.job_id, cb.node_id
            )));
        }
        if query_token.is_some_and(|t| t != cb.callback_token) {
            tracing::warn!(job = %job_id, node = node_id, "callback URL and body tokens differ");
            return Err(CallbackError::TokenMismatch);
        }

        let mut job = job.lock().await;
        let node = job
            .nodes
            .get(node_id)
            .ok_or_else(|| CallbackError::NodeNotFound(node_id.to_string()))?;
        if node.token.as_deref() != Some(cb.callback_token.as_str()) {
            let stale = node.stale_tokens.contains(&cb.callback_token);
            tracing::warn!(job = %job_id, node = node_id, stale, "callback rejected");
            return Err(if stale { CallbackError::StaleToken } else { CallbackError::TokenMismatch });
        }
        if node.state != NodeState::Dispatched {
            return Ok(CallbackAck::Ignored);
        }

        match cb.status {
            CallbackStatus::Failure => {
                let message = cb.message.unwrap_or_else(|| "module reported failure".into());
                job.fail(node_id, FailureCode::ModuleFailure, message);
            }
            CallbackStatus::Success => {
                if let Err((code, message)) = self.accept_outputs(&mut job, node_id, &cb.outputs) {
                    job.fail(node_id, code, message);
                }
            }
        }
        let outgoing = job.advance(&self.store, &self.settings.public_url);
        self.persist(&job);
        drop(job);
        self.send_all(outgoing);
        Ok(CallbackAck::Applied)
    }

    fn accept_outputs(
        &self,
        job: &mut Job,
        node_id: &str,
        outputs: &BTreeMap<String, Box<RawValue>>,
    ) -> Result<(), (FailureCode, String)> {
        let processor = job.processors[node_id].clone();
        let mut accepted = Vec::new();
        for port in &processor.outputs {
            let raw = outputs
                .get(&port.name)
                .ok_or((FailureCode::MissingOutput, format!("output `{}` missing", port.name)))?;
            let envelope = Envelope::from_bytes(raw.get().as_bytes())
                .map_err(|e| (FailureCode::InvalidOutput, format!("output `{}`: {e}", port.name)))?;
            let (actual, report) = match &envelope.payload {
                Payload::Corpus(c) => (PortType::Corpus, validate_corpus(c)),
                Payload::Annotation(a) => (PortType::Annotation(a.type_id), validate_object(a, &job.corpus)),
            };
            if !self.hierarchy.port_type_matches(actual, port.port_type) {
                return Err((
                    FailureCode::TypeViolation,
                    format!("output `{}` is {actual}, declared {}", port.name, port.port_type),
                ));
            }
            if let Some(v) = report.violations.first() {
                return Err((FailureCode::InvalidOutput, format!("output `{}`: {v}", port.name)));
            }
            accepted.push((port.name.clone(), raw.get()));
        }
        for extra in outputs.keys().filter(|k| processor.output(k).is_none()) {
            tracing::warn!(job = %job.job_id, node = node_id, "ignoring undeclared output `{extra}`");
        }
        for (port, bytes) in &accepted {
            job.store_output(&self.store, node_id, port, bytes)
                .map_err(|e| (FailureCode::InvalidOutput, format!("cannot store output `{port}`: {e}")))?;
        }
        let n = job.nodes.get_mut(node_id).expect("node exists");
        n.state = NodeState::Completed;
        n.completed_at = Some(Utc::now());
        n.outputs = accepted.into_iter().map(|(p, _)| p).collect();
        Ok(())
    }

    pub async fn status(&self, job_id: &Uuid) -> Result<JobView, ExecError> {
        let job = self.job(job_id).ok_or(ExecError::JobNotFound(*job_id))?;
        let view = job.lock().await.view();
        Ok(view)
    }

    pub async fn list(&self) -> Vec<JobView> {
        let jobs: Vec<_> = self.jobs.read().expect("jobs lock").values().cloned().collect();
        let mut out = Vec::with_capacity(jobs.len());
        for j in jobs {
            out.push(j.lock().await.view());
        }
        out.sort_by(|a, b| a.created_at.cmp(&b.created_at).then(a.job_id.cmp(&b.job_id)));
        out
    }

    /// The stored envelope bytes for a completed node's output port.
    pub async fn results(&self, job_id: &Uuid, node: &str, port: &str) -> Result<Arc<str>, ExecError> {
        let job = self.job(job_id).ok_or(ExecError::JobNotFound(*job_id))?;
        let mut job = job.lock().await;
        let n = job.nodes.get(node).ok_or_else(|| ExecError::NodeNotFound(node.to_string()))?;
        if n.state != NodeState::Completed {
            return Err(ExecError::NotReady { node: node.to_string(), state: n.state });
        }
        if !n.outputs.iter().any(|p| p == port) {
            return Err(ExecError::PortNotFound { node: node.to_string(), port: port.to_string() });
        }
        job.output(&self.store, node, port).map_err(|e| ExecError::Storage(e.to_string()))
    }

    /// Cancels every pending or dispatched node. Late callbacks for them
    /// are acknowledged and ignored.
    pub async fn cancel(&self, job_id: &Uuid) -> Result<JobView, ExecError> {
        let job = self.job(job_id).ok_or(ExecError::JobNotFound(*job_id))?;
        let mut job = job.lock().await;
        let now = Utc::now();
        for n in job.nodes.values_mut().filter(|n| n.state.is_active()) {
            n.state = NodeState::Cancelled;
            n.completed_at = Some(now);
        }
        self.persist(&job);
        Ok(job.view())
    }

    /// Retries dispatched nodes older than the node timeout, or fails them
    /// with [`FailureCode::Timeout`] once the retry limit is spent. Returns
    /// the nodes newly failed.
    pub async fn timeout_sweep(self: &Arc<Self>) -> Vec<(Uuid, String)> {
        let jobs: Vec<_> = self.jobs.read().expect("jobs lock").values().cloned().collect();
        let timeout = chrono::Duration::from_std(self.settings.node_timeout).unwrap_or(chrono::Duration::MAX);
        let mut failed = Vec::new();
        for job in jobs {
            let mut job = job.lock().await;
            let now = Utc::now();
            let overdue: Vec<String> = job
                .nodes
                .iter()
                .filter(|(_, n)| n.state == NodeState::Dispatched)
                .filter(|(_, n)| n.dispatched_at.is_some_and(|t| now - t >= timeout))
                .map(|(id, _)| id.clone())
                .collect();
            if overdue.is_empty() {
                continue;
            }
            let mut outgoing = Vec::new();
            for node in overdue {
                let attempts = job.nodes[&node].attempts;
                if attempts <= self.settings.retry_limit {
                    tracing::info!(job = %job.job_id, node, attempts, "no callback, dispatching again");
                    match job.begin_dispatch(&self.store, &self.settings.public_url, &node) {
                        Ok(o) => outgoing.push(o),
                        Err(e) => job.fail(&node, FailureCode::DispatchRejected, e),
                    }
                } else {
                    job.fail(
                        &node,
                        FailureCode::Timeout,
                        format!("no callback after {attempts} dispatch attempt(s)"),
                    );
                    failed.push((job.job_id, node));
                }
            }
            self.persist(&job);
            drop(job);
            self.send_all(outgoing);
        }
        failed
    }

    /// Runs [`Executor::timeout_sweep`] every `interval` until aborted.
    pub fn spawn_sweeper(self: &Arc<Self>, interval: Duration) -> tokio::task::JoinHandle<()> {
        let this = self.clone();
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(interval);
            tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
            loop {
                tick.tick().await;
                this.timeout_sweep().await;
            }
        })
    }
}

fn cycle_diagnostic(e: angler_core::pipeline::PlanError) -> Diagnostic {
    Diagnostic {
        severity: angler_core::pipeline::Severity::Error,
        code: angler_core::pipeline::DiagnosticCode::Cycle,
        node: None,
        edge: None,
        message: e.to_string(),
    }
}

fn source_corpus(pipeline: &Pipeline, corpora: impl Fn(&Uuid) -> Option<Corpus>) -> Result<Corpus, SubmitError> {
    let mut found: Option<Corpus> = None;
    for node in &pipeline.nodes {
        let NodeKind::Source { corpus } = &node.kind else { continue };
        let c = match corpus {
            None => return Err(SubmitError::NoCorpus),
            Some(SourceCorpus::Ref(id)) => corpora(id).ok_or(SubmitError::CorpusNotFound(*id))?,
            Some(SourceCorpus::Inline(c)) => c.clone(),
        };
        match &found {
            Some(prev) if prev.id != c.id => return Err(SubmitError::SourcesDisagree),
            Some(_) => {}
            None => found = Some(c),
        }
    }
    found.ok_or(SubmitError::NoCorpus)
}

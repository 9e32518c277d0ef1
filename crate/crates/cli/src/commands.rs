use std::collections::{BTreeMap, BTreeSet};
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use angler_backend::{Config, Server};
use angler_core::pipeline::{load, Pipeline};
use angler_modules::{conformance_check, ConformanceOptions, ModuleKind, Outcome};
use serde_json::{json, Value};
use tokio::io::{AsyncBufReadExt, BufReader};
use tokio::process::Command as Process;
use url::Url;

use crate::args::*;
use crate::client::Client;
use crate::output::Out;
use crate::{CliError, ExitStatus};

type Result<T> = std::result::Result<T, CliError>;

pub(crate) async fn dispatch(cli: Cli) -> Result<ExitStatus> {
    let out = Out { format: cli.format };
    let client = || Client::new(&cli.url, cli.token.clone());
    match cli.command {
        Command::Serve(args) => serve(args, cli.token.clone(), out).await,
        Command::Module(ModuleCommand::Register { module_url }) => {
            module_register(&client()?, &module_url, out).await
        },
        Command::Module(ModuleCommand::List) => module_list(&client()?, out).await,
        Command::Module(ModuleCommand::Conformance { module_url, callback_timeout }) => {
            conformance(&module_url, callback_timeout, out).await
        }
        Command::Corpus(CorpusCommand::Import { files, name }) => {
            corpus_import(&client()?, &files, &name, out).await
        }
        Command::Corpus(CorpusCommand::List) => corpus_list(&client()?, out).await,
        Command::Pipeline(PipelineCommand::Validate { file }) => pipeline_validate(&client()?, &file, out).await,
        Command::Pipeline(PipelineCommand::Run(args)) => pipeline_run(&client()?, args, out).await,
        Command::Pipeline(PipelineCommand::List) => pipeline_list(&client()?, out).await,
        Command::Job(JobCommand::Status { id }) => {
            let job = client()?.get(&format!("api/v1/jobs/{id}")).await?;
            print_job(&job, out);
            Ok(ExitStatus::Success)
        }
        Command::Job(JobCommand::Cancel { id }) => {
            let job = client()?.post(&format!("api/v1/jobs/{id}/cancel"), &json!({})).await?;
            print_job(&job, out);
            Ok(ExitStatus::Success)
        }
        Command::Job(JobCommand::List) => job_list(&client()?, out).await,
        Command::Builtins(BuiltinsCommand::Start { ports, host, register }) => {
            builtins_start(&ports, host, register.then(client).transpose()?, out).await
        }
        Command::Builtins(BuiltinsCommand::Run { kind, port, host, delay_ms, lifeline }) => {
            builtins_run(&kind, SocketAddr::new(host, port), Duration::from_millis(delay_ms), lifeline, out).await
        }
    }
}

fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        match signal(SignalKind::terminate()) {
            Ok(mut term) => {
                tokio::select! {
                    _ = tokio::signal::ctrl_c() => {}
                    _ = term.recv() => {}
                }
            }
            Err(_) => {
                let _ = tokio::signal::ctrl_c().await;
            }
        }
    }
    #[cfg(not(unix))]
    {
        let _ = tokio::signal::ctrl_c().await;
    }
}

fn reachable(addr: SocketAddr) -> String {
    let ip = if addr.ip().is_unspecified() { IpAddr::V4(Ipv4Addr::LOCALHOST) } else { addr.ip() };
    format!("http://{}/", SocketAddr::new(ip, addr.port()))
}

async fn serve(args: ServeArgs, token: Option<String>, out: Out) -> Result<ExitStatus> {
    init_logging();
    let mut config = Config::from_env().map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(p) = args.port {
        config.port = p;
    }
    if let Some(d) = args.state_dir {
        config.state_dir = d;
    }
    if let Some(b) = args.bind {
        config.bind = b;
    }
    if token.is_some() {
        config.token = token;
    }
    let server = Server::bind(&config).await.map_err(|e| CliError::io("starting backend", e))?;
    let url = reachable(server.local_addr);
    out.emit(&["listening", &url], &json!({"event": "listening", "url": url}));
    server.run(shutdown_signal()).await.map_err(|e| CliError::io("backend", e))?;
    Ok(ExitStatus::Success)
}

fn str_at<'a>(v: &'a Value, pointer: &str) -> &'a str {
    v.pointer(pointer).and_then(Value::as_str).unwrap_or("")
}

fn print_module(record: &Value, out: Out) {
    let processors = record["processors"].as_array().map_or(0, Vec::len);
    out.emit(
        &[
            str_at(record, "/module/uuid"),
            str_at(record, "/module/name"),
            str_at(record, "/module/version"),
            str_at(record, "/module/base_url"),
            &processors.to_string(),
        ],
        record,
    );
}

async fn module_register(client: &Client, url: &Url, out: Out) -> Result<ExitStatus> {
    let record = client.post("api/v1/modules", &json!({ "url": url })).await?;
    print_module(&record, out);
    Ok(ExitStatus::Success)
}

async fn module_list(client: &Client, out: Out) -> Result<ExitStatus> {
    let list = client.get("api/v1/modules").await?;
    for record in list.as_array().into_iter().flatten() {
        print_module(record, out);
    }
    Ok(ExitStatus::Success)
}

async fn conformance(url: &Url, callback_timeout: f64, out: Out) -> Result<ExitStatus> {
    if !(callback_timeout.is_finite() && callback_timeout > 0.0) {
        return Err(CliError::Usage("--callback-timeout must be positive".into()));
    }
    let options = ConformanceOptions {
        callback_timeout: Duration::from_secs_f64(callback_timeout),
        ..ConformanceOptions::default()
    };
    let report = conformance_check(url, &options).await;
    for c in &report.checks {
        let (status, message) = match &c.outcome {
            Outcome::Pass => ("pass", ""),
            Outcome::Fail(m) => ("fail", m.as_str()),
            Outcome::Skipped(m) => ("skipped", m.as_str()),
        };
        let value = serde_json::to_value(c).unwrap_or(Value::Null);
        out.emit(&[c.check.as_str(), status, message], &value);
    }
    let verdict = if report.passed { "passed" } else { "failed" };
    let module = report.module.map(|u| u.to_string()).unwrap_or_default();
    out.emit(
        &[verdict, &report.base_url, &module],
        &json!({"passed": report.passed, "base_url": report.base_url, "module": report.module}),
    );
    Ok(if report.passed { ExitStatus::Success } else { ExitStatus::Failures })
}

async fn corpus_import(client: &Client, files: &[PathBuf], name: &str, out: Out) -> Result<ExitStatus> {
    let mut uploads = Vec::with_capacity(files.len());
    for path in files {
        let bytes = tokio::fs::read(path).await.map_err(|e| CliError::io(path.display(), e))?;
        let text = String::from_utf8(bytes)
            .map_err(|_| CliError::Invalid(format!("{}: not UTF-8 text", path.display())))?;
        let filename = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
        uploads.push(json!({ "filename": filename, "text": text }));
    }
    let corpus = client.post("api/v1/corpora", &json!({ "name": name, "files": uploads })).await?;
    out.emit(&[str_at(&corpus, "/id")], &corpus);
    Ok(ExitStatus::Success)
}

async fn corpus_list(client: &Client, out: Out) -> Result<ExitStatus> {
    for c in client.get("api/v1/corpora").await?.as_array().into_iter().flatten() {
        let docs = c["documents"].as_u64().unwrap_or(0).to_string();
        out.emit(&[str_at(c, "/id"), str_at(c, "/name"), &docs], c);
    }
    Ok(ExitStatus::Success)
}

async fn read_file(path: &Path) -> Result<Vec<u8>> {
    tokio::fs::read(path).await.map_err(|e| CliError::io(path.display(), e))
}

async fn pipeline_validate(client: &Client, file: &Path, out: Out) -> Result<ExitStatus> {
    let bytes = read_file(file).await?;
    let diags = client.post_bytes("api/v1/validate", bytes).await?;
    let diags = crate::client::envelope_body(&diags)?;
    let mut errors = false;
    for d in diags.as_array().into_iter().flatten() {
        errors |= str_at(d, "/severity") == "error";
        out.emit(
            &[str_at(d, "/code"), str_at(d, "/severity"), str_at(d, "/node"), str_at(d, "/message")],
            d,
        );
    }
    Ok(if errors { ExitStatus::Failures } else { ExitStatus::Success })
}

async fn pipeline_list(client: &Client, out: Out) -> Result<ExitStatus> {
    for p in client.get("api/v1/pipelines").await?.as_array().into_iter().flatten() {
        out.emit(&[str_at(p, "/id"), str_at(p, "/name")], p);
    }
    Ok(ExitStatus::Success)
}

fn node_fields(name: &str, node: &Value) -> Vec<String> {
    vec![
        "node".into(),
        name.into(),
        str_at(node, "/state").into(),
        node["attempts"].as_u64().unwrap_or(0).to_string(),
        str_at(node, "/failure/code").into(),
        str_at(node, "/failure/message").into(),
    ]
}

fn print_job_line(job: &Value, out: Out) {
    out.emit(
        &["job", str_at(job, "/job_id"), str_at(job, "/state")],
        &json!({"event": "job", "job_id": job["job_id"], "state": job["state"], "terminal": job["terminal"]}),
    );
}

fn print_node(name: &str, node: &Value, out: Out) {
    out.emit(&node_fields(name, node), &json!({"event": "node", "node": name, "status": node}));
}

fn print_job(job: &Value, out: Out) {
    print_job_line(job, out);
    for (name, node) in job["nodes"].as_object().into_iter().flatten() {
        print_node(name, node, out);
    }
}

async fn job_list(client: &Client, out: Out) -> Result<ExitStatus> {
    for job in client.get("api/v1/jobs").await?.as_array().into_iter().flatten() {
        print_job_line(job, out);
    }
    Ok(ExitStatus::Success)
}

/// Processor nodes nothing else consumes from.
fn final_nodes(p: &Pipeline) -> BTreeSet<&str> {
    let feeding: BTreeSet<&str> = p.edges.iter().map(|e| e.from_node.as_str()).collect();
    p.nodes
        .iter()
        .filter(|n| !n.is_source() && !feeding.contains(n.node_id.as_str()))
        .map(|n| n.node_id.as_str())
        .collect()
}

async fn pipeline_run(client: &Client, args: RunArgs, out: Out) -> Result<ExitStatus> {
    let bytes = read_file(&args.file).await?;
    let stored = client.post_bytes("api/v1/pipelines/import", bytes).await?;
    let pipeline = load(&stored).map_err(|e| CliError::Remote(format!("backend returned a bad pipeline: {e}")))?;
    let mut request = json!({ "pipeline_id": pipeline.id });
    if let Some(c) = args.corpus {
        request["corpus_id"] = json!(c);
    }
    let mut job = client.post("api/v1/jobs", &request).await?;
    let job_id = str_at(&job, "/job_id").to_string();
    print_job_line(&job, out);
    if !args.watch && args.out.is_none() {
        return Ok(ExitStatus::Success);
    }

    let mut seen: BTreeMap<String, (String, u64)> = BTreeMap::new();
    let poll = Duration::from_millis(args.poll_ms.max(1));
    loop {
        for (name, node) in job["nodes"].as_object().into_iter().flatten() {
            let key = (str_at(node, "/state").to_string(), node["attempts"].as_u64().unwrap_or(0));
            if seen.get(name) != Some(&key) {
                print_node(name, node, out);
                seen.insert(name.clone(), key);
            }
        }
        if job["terminal"].as_bool().unwrap_or(false) {
            break;
        }
        tokio::time::sleep(poll).await;
        job = client.get(&format!("api/v1/jobs/{job_id}")).await?;
    }
    print_job_line(&job, out);

    if let Some(dir) = &args.out {
        tokio::fs::create_dir_all(dir).await.map_err(|e| CliError::io(dir.display(), e))?;
        for node in final_nodes(&pipeline) {
            let ports = job.pointer(&format!("/nodes/{node}/outputs")).and_then(Value::as_array);
            for port in ports.into_iter().flatten().filter_map(Value::as_str) {
                let data = client.get_bytes(&format!("api/v1/jobs/{job_id}/nodes/{node}/ports/{port}")).await?;
                let path = dir.join(format!("{node}.{port}.json"));
                tokio::fs::write(&path, data).await.map_err(|e| CliError::io(path.display(), e))?;
                let shown = path.display().to_string();
                out.emit(
                    &["output", node, port, &shown],
                    &json!({"event": "output", "node": node, "port": port, "path": shown}),
                );
            }
        }
    }
    match str_at(&job, "/state") {
        "completed" => Ok(ExitStatus::Success),
        state => Err(CliError::Remote(format!("job {job_id} ended {state}"))),
    }
}

async fn builtins_run(kind: &str, addr: SocketAddr, delay: Duration, lifeline: bool, out: Out) -> Result<ExitStatus> {
    let kind = ModuleKind::from_str(kind).map_err(|e| CliError::Usage(e.to_string()))?;
    init_logging();
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| CliError::io(format!("binding {addr}"), e))?;
    let local = listener.local_addr().map_err(|e| CliError::io("listener", e))?;
    let url = reachable(local);
    out.emit(&[kind.as_str(), &url], &json!({"kind": kind.as_str(), "url": url}));
    if lifeline {
        std::thread::spawn(|| {
            let mut buf = [0u8; 64];
            let mut stdin = std::io::stdin();
            while matches!(std::io::Read::read(&mut stdin, &mut buf), Ok(n) if n > 0) {}
            std::process::exit(0);
        });
    }
    tokio::select! {
        r = kind.app(delay).serve(listener) => r.map_err(|e| CliError::io("module server", e))?,
        _ = shutdown_signal() => {}
    }
    Ok(ExitStatus::Success)
}

/// Spawns each builtin as `angler builtins run` and relays its URL. The
/// children watch their stdin, so they exit with this process however it ends.
async fn builtins_start(ports: &[u16], host: IpAddr, register: Option<Client>, out: Out) -> Result<ExitStatus> {
    if ports.len() != ModuleKind::BUILTIN.len() {
        return Err(CliError::Usage(format!("--ports takes {} ports", ModuleKind::BUILTIN.len())));
    }
    let exe = std::env::current_exe().map_err(|e| CliError::io("locating angler", e))?;
    let (exited_tx, mut exited) = tokio::sync::mpsc::unbounded_channel();
    let mut started = Vec::new();
    for (kind, port) in ModuleKind::BUILTIN.into_iter().zip(ports) {
        let mut child = Process::new(&exe)
            .args(["--format", "plain", "builtins", "run", kind.as_str(), "--lifeline"])
            .args(["--port", &port.to_string(), "--host", &host.to_string()])
            .stdin(std::process::Stdio::piped())
            .stdout(std::process::Stdio::piped())
            .kill_on_drop(true)
            .spawn()
            .map_err(|e| CliError::io(format!("spawning {kind}"), e))?;
        let stdout = child.stdout.take().expect("piped stdout");
        let mut lines = BufReader::new(stdout).lines();
        let line = tokio::time::timeout(Duration::from_secs(10), lines.next_line())
            .await
            .ok()
            .and_then(|l| l.ok().flatten())
            .ok_or_else(|| CliError::Remote(format!("{kind} module did not start")))?;
        let url = line
            .split('\t')
            .nth(1)
            .and_then(|u| Url::parse(u).ok())
            .ok_or_else(|| CliError::Remote(format!("{kind} module printed `{line}`")))?;
        out.emit(&[kind.as_str(), url.as_str()], &json!({"kind": kind.as_str(), "url": url}));
        let tx = exited_tx.clone();
        tokio::spawn(async move {
            // `wait` would close stdin, which the child reads as its cue to exit.
            let _lifeline = child.stdin.take();
            let _lines = lines;
            let status = child.wait().await;
            let _ = tx.send((kind, status));
        });
        started.push(url);
    }
    if let Some(client) = register {
        for url in &started {
            let record = client.post("api/v1/modules", &json!({ "url": url })).await?;
            print_module(&record, out);
        }
    }
    tokio::select! {
        _ = shutdown_signal() => Ok(ExitStatus::Success),
        Some((kind, status)) = exited.recv() => {
            let how = status.map(|s| s.to_string()).unwrap_or_else(|e| e.to_string());
            Err(CliError::Remote(format!("{kind} module exited ({how})")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use angler_core::pipeline::PipelineNode;
    use uuid::Uuid;

    #[test]
    fn final_nodes_are_unconsumed_processors() {
        let module = Uuid::from_u128(1);
        let mut p = Pipeline::new("p");
        p.add_node(PipelineNode::source("corpus"))
            .add_node(PipelineNode::processor("tok", module, "t"))
            .add_node(PipelineNode::processor("ner", module, "n"))
            .add_node(PipelineNode::processor("split", module, "s"));
        p.connect("corpus", "corpus", "tok", "corpus");
        p.connect("corpus", "corpus", "split", "corpus");
        p.connect("tok", "tokens", "ner", "tokens");
        assert_eq!(final_nodes(&p), BTreeSet::from(["ner", "split"]));
    }

    #[test]
    fn unspecified_addresses_print_as_loopback() {
        assert_eq!(reachable("0.0.0.0:80".parse().unwrap()), "http://127.0.0.1:80/");
        assert_eq!(reachable("10.0.0.2:9".parse().unwrap()), "http://10.0.0.2:9/");
    }
}

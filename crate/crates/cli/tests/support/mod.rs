//! Drives the `angler` binary and a backend over HTTP.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::Stdio;
use std::time::Duration;

use angler_core::datamodel::{AnnotationBody, Corpus, Envelope, Payload};
use anyhow::{anyhow, bail, Context, Result};
use serde_json::Value;
use tokio::io::{AsyncBufReadExt, BufReader, Lines};
use tokio::process::{Child, ChildStdout, Command};
use url::Url;
use uuid::Uuid;

pub const BIN: &str = env!("CARGO_BIN_EXE_angler");

/// Settings a test must not inherit from the calling shell.
const SCRUBBED: [&str; 10] = [
    "ANGLER_URL",
    "ANGLER_TOKEN",
    "ANGLER_BIND",
    "ANGLER_PORT",
    "ANGLER_STATE_DIR",
    "ANGLER_PUBLIC_URL",
    "ANGLER_NODE_TIMEOUT_SECS",
    "ANGLER_RETRY_LIMIT",
    "ANGLER_SWEEP_INTERVAL_MS",
    "ANGLER_UI_DIR",
];

pub fn repo(path: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(path)
}

fn command(args: &[&str], env: &[(&str, &str)]) -> Command {
    let mut cmd = Command::new(BIN);
    for var in SCRUBBED {
        cmd.env_remove(var);
    }
    cmd.env("RUST_LOG", "warn").args(args).envs(env.iter().copied()).kill_on_drop(true);
    cmd
}

#[derive(Debug)]
pub struct Run {
    pub code: Option<i32>,
    pub stdout: String,
    pub stderr: String,
}

impl Run {
    pub fn lines(&self) -> Vec<Vec<&str>> {
        self.stdout.lines().map(|l| l.split('\t').collect()).collect()
    }
}

/// Runs one command to completion.
pub async fn angler(args: &[&str], env: &[(&str, &str)]) -> Result<Run> {
    let out = tokio::time::timeout(Duration::from_secs(60), command(args, env).stdin(Stdio::null()).output())
        .await
        .map_err(|_| anyhow!("`angler {}` did not finish within 60 s", args.join(" ")))??;
    Ok(Run {
        code: out.status.code(),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    })
}

/// A long-running `angler` process, killed on drop.
pub struct Daemon {
    _child: Child,
    lines: Lines<BufReader<ChildStdout>>,
}

impl Daemon {
    pub async fn spawn(args: &[&str], env: &[(&str, &str)]) -> Result<Self> {
        let mut child = command(args, env)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .context("spawning angler")?;
        let stdout = child.stdout.take().expect("piped");
        Ok(Self { _child: child, lines: BufReader::new(stdout).lines() })
    }

    pub async fn line(&mut self) -> Result<Vec<String>> {
        let line = tokio::time::timeout(Duration::from_secs(15), self.lines.next_line())
            .await
            .map_err(|_| anyhow!("no output within 15 s"))??
            .ok_or_else(|| anyhow!("process exited"))?;
        Ok(line.split('\t').map(str::to_string).collect())
    }
}

/// `angler serve` on a free port with its own state directory.
pub struct Backend {
    pub url: Url,
    pub http: reqwest::Client,
    _daemon: Daemon,
    _state: tempfile::TempDir,
}

impl Backend {
    pub async fn start(env: &[(&str, &str)]) -> Result<Self> {
        let state = tempfile::tempdir()?;
        let dir = state.path().to_str().context("utf-8 temp path")?.to_string();
        let mut daemon = Daemon::spawn(&["serve", "--port", "0", "--state-dir", &dir], env).await?;
        let line = daemon.line().await?;
        if line[0] != "listening" {
            bail!("unexpected serve output {line:?}");
        }
        Ok(Self { url: Url::parse(&line[1])?, http: reqwest::Client::new(), _daemon: daemon, _state: state })
    }

    pub fn env(&self) -> [(&'static str, &str); 1] {
        [("ANGLER_URL", self.url.as_str())]
    }

    pub async fn cli(&self, args: &[&str]) -> Result<Run> {
        angler(args, &self.env()).await
    }

    pub async fn get(&self, path: &str) -> Result<(u16, Vec<u8>)> {
        let r = self.http.get(self.url.join(path)?).send().await?;
        Ok((r.status().as_u16(), r.bytes().await?.to_vec()))
    }

    pub async fn post(&self, path: &str, body: Vec<u8>) -> Result<(u16, Vec<u8>)> {
        let r = self
            .http
            .post(self.url.join(path)?)
            .header("content-type", "application/json")
            .body(body)
            .send()
            .await?;
        Ok((r.status().as_u16(), r.bytes().await?.to_vec()))
    }

    /// The body of an enveloped 200 response.
    pub async fn body(&self, path: &str) -> Result<Value> {
        let (status, bytes) = self.get(path).await?;
        if status != 200 {
            bail!("GET {path}: {status} {}", String::from_utf8_lossy(&bytes));
        }
        let mut v: Value = serde_json::from_slice(&bytes)?;
        Ok(v["body"].take())
    }

    pub async fn job(&self, id: &str) -> Result<Value> {
        self.body(&format!("api/v1/jobs/{id}")).await
    }

    pub async fn wait_terminal(&self, id: &str, within: Duration) -> Result<Value> {
        let deadline = tokio::time::Instant::now() + within;
        loop {
            let job = self.job(id).await?;
            if job["terminal"] == true {
                return Ok(job);
            }
            if tokio::time::Instant::now() > deadline {
                bail!("job {id} not terminal after {within:?}: {job}");
            }
            tokio::time::sleep(Duration::from_millis(50)).await;
        }
    }

    pub async fn result(&self, job: &str, node: &str, port: &str) -> Result<Vec<u8>> {
        let (status, bytes) = self.get(&format!("api/v1/jobs/{job}/nodes/{node}/ports/{port}")).await?;
        if status != 200 {
            bail!("result {node}.{port}: {status}");
        }
        Ok(bytes)
    }

    pub async fn corpus(&self, id: &str) -> Result<Corpus> {
        let (status, bytes) = self.get(&format!("api/v1/corpora/{id}")).await?;
        if status != 200 {
            bail!("corpus {id}: {status}");
        }
        match Envelope::from_bytes(&bytes)?.payload {
            Payload::Corpus(c) => Ok(c),
            other => bail!("corpus {id} is a {}", other.kind()),
        }
    }

    /// Imports files through `angler corpus import`, returning the corpus id.
    pub async fn import(&self, files: &[PathBuf]) -> Result<String> {
        let mut args = vec!["corpus", "import"];
        args.extend(files.iter().map(|f| f.to_str().expect("utf-8 path")));
        let run = self.cli(&args).await?;
        if run.code != Some(0) {
            bail!("corpus import failed: {}", run.stderr);
        }
        Ok(run.stdout.trim().to_string())
    }

    pub async fn register(&self, url: &str) -> Result<()> {
        let run = self.cli(&["module", "register", url]).await?;
        if run.code != Some(0) {
            bail!("registering {url}: {}", run.stderr);
        }
        Ok(())
    }
}

/// Serves one module kind through `angler builtins run`.
pub async fn module(kind: &str) -> Result<(Daemon, String)> {
    let mut d = Daemon::spawn(&["builtins", "run", kind, "--port", "0"], &[]).await?;
    let line = d.line().await?;
    Ok((d, line[1].clone()))
}

/// (document filename, start, end, label)
pub type TagSet = BTreeSet<(String, usize, usize, String)>;

/// Gazetteer hits in `fixtures/corpus/*.txt` under `fixtures/ner.angler`, by hand.
pub fn hand_tags() -> TagSet {
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

/// Decodes a sequence-tagging result, naming documents by filename.
pub fn tags_of(result: &[u8], corpus: &Corpus) -> Result<TagSet> {
    let Payload::Annotation(a) = Envelope::from_bytes(result)?.payload else { bail!("not an annotation") };
    let AnnotationBody::SequenceTagging(body) = a.body else { bail!("not sequence tagging but {}", a.type_id) };
    body.tags
        .iter()
        .map(|t| {
            let doc = corpus.document(&t.document_id).ok_or_else(|| anyhow!("tag outside the corpus"))?;
            let name = doc.metadata.get("filename").unwrap_or_default().to_string();
            Ok((name, t.span.start(), t.span.end(), t.tag.clone()))
        })
        .collect()
}

/// Node states from `pipeline run --watch` output, last one wins.
pub fn watched_states(run: &Run) -> BTreeMap<String, Vec<String>> {
    run.lines()
        .into_iter()
        .filter(|l| l[0] == "node")
        .map(|l| (l[1].to_string(), l[2..].iter().map(|s| s.to_string()).collect()))
        .collect()
}

pub fn job_id(run: &Run) -> Result<Uuid> {
    let line = run.lines().into_iter().find(|l| l[0] == "job").ok_or_else(|| anyhow!("no job line"))?;
    Ok(line[1].parse()?)
}

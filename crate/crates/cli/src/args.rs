//! Command-line grammar.

use std::net::IpAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use url::Url;
use uuid::Uuid;

use crate::output::Format;

#[derive(Debug, Parser)]
#[command(name = "angler", version, about = "Run, script and inspect the angler pipeline backend")]
pub struct Cli {
    /// Backend to talk to.
    #[arg(long, global = true, env = "ANGLER_URL", default_value = "http://127.0.0.1:8080")]
    pub url: Url,

    /// Bearer token for `/api/v1/`.
    #[arg(long, global = true, env = "ANGLER_TOKEN", hide_env_values = true)]
    pub token: Option<String>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Plain)]
    pub format: Format,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Start the backend. Other settings come from `ANGLER_*` variables.
    Serve(ServeArgs),
    /// Register, list and check processing modules.
    #[command(subcommand)]
    Module(ModuleCommand),
    /// Upload and list corpora.
    #[command(subcommand)]
    Corpus(CorpusCommand),
    /// Validate, run and list pipelines.
    #[command(subcommand)]
    Pipeline(PipelineCommand),
    /// Inspect and cancel jobs.
    #[command(subcommand)]
    Job(JobCommand),
    /// Serve the builtin modules.
    #[command(subcommand)]
    Builtins(BuiltinsCommand),
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Overrides `ANGLER_PORT`. Port 0 picks a free port.
    #[arg(long)]
    pub port: Option<u16>,
    /// Overrides `ANGLER_STATE_DIR`.
    #[arg(long)]
    pub state_dir: Option<PathBuf>,
    /// Overrides `ANGLER_BIND`.
    #[arg(long)]
    pub bind: Option<IpAddr>,
}

#[derive(Debug, Subcommand)]
pub enum ModuleCommand {
    /// Register the module served at URL.
    Register {
        #[arg(value_name = "URL")]
        module_url: Url,
    },
    List,
    /// Check the module at URL against the module protocol. Needs no backend.
    Conformance {
        #[arg(value_name = "URL")]
        module_url: Url,
        /// Seconds to wait for each callback.
        #[arg(long, default_value_t = 10.0)]
        callback_timeout: f64,
    },
}

#[derive(Debug, Subcommand)]
pub enum CorpusCommand {
    /// Upload text files as one corpus, one document per file. Prints the corpus id.
    Import {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long, default_value = "corpus")]
        name: String,
    },
    List,
}

#[derive(Debug, Subcommand)]
pub enum PipelineCommand {
    /// Print the diagnostics of a pipeline file. Exits 1 if any is an error.
    Validate { file: PathBuf },
    /// Import a pipeline file and submit a job for it.
    Run(RunArgs),
    List,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub file: PathBuf,
    /// Corpus to process. Required unless the pipeline's source nodes carry one.
    #[arg(long)]
    pub corpus: Option<Uuid>,
    /// Poll until the job is terminal, printing node state changes.
    #[arg(long)]
    pub watch: bool,
    /// Write the outputs of the final nodes here. Implies --watch.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 500, hide = true)]
    pub poll_ms: u64,
}

#[derive(Debug, Subcommand)]
pub enum JobCommand {
    Status { id: Uuid },
    Cancel { id: Uuid },
    List,
}

#[derive(Debug, Subcommand)]
pub enum BuiltinsCommand {
    /// Spawn the preproc, ner and cluster modules as child processes.
    Start {
        /// Ports for preproc, ner and cluster. 0 picks a free port.
        #[arg(long, value_delimiter = ',', default_values_t = [9101u16, 9102, 9103])]
        ports: Vec<u16>,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        /// Also register each module with the backend.
        #[arg(long)]
        register: bool,
    },
    /// Serve one module in this process: a builtin or a broken test fixture.
    Run {
        /// preproc, ner, cluster, missing-uuid, missing-icon, black-hole,
        /// wrong-output-type, changing-uuid, no-docs or delayed.
        kind: String,
        #[arg(long, default_value_t = 0)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        /// Callback delay of the `delayed` fixture.
        #[arg(long, default_value_t = 0)]
        delay_ms: u64,
        /// Exit when stdin closes. Used by `builtins start`.
        #[arg(long, hide = true)]
        lifeline: bool,
    },
}

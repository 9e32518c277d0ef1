//! Wires the stores, registry and executor together and serves the API.

use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::sync::Arc;

use tokio::net::TcpListener;
use tokio::task::JoinHandle;
use url::Url;

use crate::api::{router, AppState};
use crate::config::Config;
use crate::corpora::CorpusStore;
use crate::executor::{Executor, ExecutorSettings};
use crate::jobs::JobStore;
use crate::pipelines::PipelineStore;
use crate::registry::Registry;

/// A bound, not yet serving backend.
pub struct Server {
    listener: TcpListener,
    state: Arc<AppState>,
    sweep_interval: std::time::Duration,
    pub local_addr: SocketAddr,
    pub public_url: Url,
}

impl Server {
    /// Binds the listener and opens the state directory. Callback URLs use
    /// the configured public URL, or the bound loopback address.
    pub async fn bind(config: &Config) -> std::io::Result<Self> {
        let ip = config.bind;
        let listener = TcpListener::bind(SocketAddr::new(ip, config.port)).await?;
        let local_addr = listener.local_addr()?;
        let public_url = match &config.public_url {
            Some(u) => u.clone(),
            None => {
                let host = if ip.is_unspecified() { IpAddr::V4(Ipv4Addr::LOCALHOST) } else { ip };
                Url::parse(&format!("http://{}/", SocketAddr::new(host, local_addr.port()))).expect("valid URL")
            }
        };
        let dir = &config.state_dir;
        std::fs::create_dir_all(dir)?;
        let registry = Registry::open(dir.join("registry"), config.connect_timeout, config.read_timeout)?;
        let executor = Executor::open(
            JobStore::at(dir.join("jobs")),
            ExecutorSettings {
                public_url: public_url.clone(),
                node_timeout: config.node_timeout,
                retry_limit: config.retry_limit,
                connect_timeout: config.connect_timeout,
                read_timeout: config.read_timeout,
            },
        )?;
        let state = Arc::new(AppState {
            registry: Arc::new(registry),
            executor,
            corpora: Arc::new(CorpusStore::open(dir.join("corpora"))?),
            pipelines: Arc::new(PipelineStore::open(dir.join("pipelines"))?),
            token: config.token.clone(),
            upload_limit: config.upload_limit,
            ui_dir: config.ui_dir.clone(),
        });
        Ok(Self { listener, state, sweep_interval: config.sweep_interval, local_addr, public_url })
    }

    pub fn state(&self) -> &Arc<AppState> {
        &self.state
    }

    /// Serves until `shutdown` resolves.
    pub async fn run(self, shutdown: impl std::future::Future<Output = ()> + Send + 'static) -> std::io::Result<()> {
        let _sweeper = AbortOnDrop(self.state.executor.spawn_sweeper(self.sweep_interval));
        axum::serve(self.listener, router(self.state))
            .with_graceful_shutdown(shutdown)
            .await
    }

    /// Serves in the background; dropping the handle stops the server.
    pub fn spawn(self) -> RunningBackend {
        let url = Url::parse(&format!("http://{}/", self.local_addr)).expect("valid URL");
        let state = self.state.clone();
        let handle = tokio::spawn(async move {
            if let Err(e) = self.run(std::future::pending()).await {
                tracing::error!("backend stopped: {e}");
            }
        });
        RunningBackend { url, state, handle }
    }
}

pub struct RunningBackend {
    pub url: Url,
    pub state: Arc<AppState>,
    handle: JoinHandle<()>,
}

impl RunningBackend {
    /// `path` relative to the server root, e.g. `api/v1/modules`.
    pub fn endpoint(&self, path: &str) -> String {
        format!("{}{}", self.url, path.trim_start_matches('/'))
    }
}

impl Drop for RunningBackend {
    fn drop(&mut self) {
        self.handle.abort();
    }
}

/// Stops the sweeper however `run` ends, including when its task is aborted.
struct AbortOnDrop(JoinHandle<()>);

impl Drop for AbortOnDrop {
    fn drop(&mut self) {
        self.0.abort();
    }
}

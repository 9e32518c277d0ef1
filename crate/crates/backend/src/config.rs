//! Backend settings, read from `ANGLER_*` environment variables.

use std::net::{IpAddr, Ipv4Addr};
use std::path::PathBuf;
use std::time::Duration;

use url::Url;

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    /// `ANGLER_BIND`, default 127.0.0.1. Use 0.0.0.0 inside containers.
    pub bind: IpAddr,
    /// `ANGLER_PORT`, default 8080. Port 0 picks a free port.
    pub port: u16,
    /// `ANGLER_STATE_DIR`, default `./state`.
    pub state_dir: PathBuf,
    /// `ANGLER_PUBLIC_URL`: base for callback URLs handed to modules.
    /// Defaults to the loopback address the server is bound to.
    pub public_url: Option<Url>,
    /// `ANGLER_TOKEN`: when set, `/api/v1/` requires this bearer token.
    pub token: Option<String>,
    /// `ANGLER_NODE_TIMEOUT_SECS`, default 120.
    pub node_timeout: Duration,
    /// `ANGLER_RETRY_LIMIT`, default 1.
    pub retry_limit: u32,
    /// `ANGLER_SWEEP_INTERVAL_MS`, default 1000.
    pub sweep_interval: Duration,
    /// `ANGLER_UPLOAD_LIMIT_BYTES`, default 50 MB.
    pub upload_limit: usize,
    /// `ANGLER_UI_DIR`: static web client served under `/ui/`.
    pub ui_dir: Option<PathBuf>,
    pub connect_timeout: Duration,
    pub read_timeout: Duration,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            bind: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port: 8080,
            state_dir: PathBuf::from("./state"),
            public_url: None,
            token: None,
            node_timeout: Duration::from_secs(120),
            retry_limit: 1,
            sweep_interval: Duration::from_secs(1),
            upload_limit: 50 * 1024 * 1024,
            ui_dir: None,
            connect_timeout: Duration::from_secs(5),
            read_timeout: Duration::from_secs(30),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid value for {var}: {message}")]
pub struct ConfigError {
    pub var: &'static str,
    pub message: String,
}

impl Config {
    pub fn from_env() -> Result<Self, ConfigError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    /// Reads settings through `lookup`, falling back to defaults.
    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let get = |var: &'static str| lookup(var).filter(|v| !v.trim().is_empty());
        fn parse<T: std::str::FromStr>(var: &'static str, raw: String) -> Result<T, ConfigError>
        where
            T::Err: std::fmt::Display,
        {
            raw.trim().parse().map_err(|e: T::Err| ConfigError { var, message: e.to_string() })
        }
        let mut c = Config::default();
        if let Some(v) = get("ANGLER_BIND") {
            c.bind = parse("ANGLER_BIND", v)?;
        }
        if let Some(v) = get("ANGLER_PORT") {
            c.port = parse("ANGLER_PORT", v)?;
        }
        if let Some(v) = get("ANGLER_STATE_DIR") {
            c.state_dir = PathBuf::from(v);
        }
        if let Some(v) = get("ANGLER_PUBLIC_URL") {
            let url: Url = parse("ANGLER_PUBLIC_URL", v)?;
            if url.cannot_be_a_base() {
                return Err(ConfigError { var: "ANGLER_PUBLIC_URL", message: "not a base URL".into() });
            }
            c.public_url = Some(url);
        }
        c.token = get("ANGLER_TOKEN");
        if let Some(v) = get("ANGLER_NODE_TIMEOUT_SECS") {
            c.node_timeout = Duration::from_secs_f64(parse::<f64>("ANGLER_NODE_TIMEOUT_SECS", v).and_then(positive("ANGLER_NODE_TIMEOUT_SECS"))?);
        }
        if let Some(v) = get("ANGLER_RETRY_LIMIT") {
            c.retry_limit = parse("ANGLER_RETRY_LIMIT", v)?;
        }
        if let Some(v) = get("ANGLER_SWEEP_INTERVAL_MS") {
            c.sweep_interval = Duration::from_millis(parse::<u64>("ANGLER_SWEEP_INTERVAL_MS", v)?.max(1));
        }
        if let Some(v) = get("ANGLER_UPLOAD_LIMIT_BYTES") {
            c.upload_limit = parse("ANGLER_UPLOAD_LIMIT_BYTES", v)?;
        }
        c.ui_dir = get("ANGLER_UI_DIR").map(PathBuf::from);
        Ok(c)
    }
}

fn positive(var: &'static str) -> impl Fn(f64) -> Result<f64, ConfigError> {
    move |v| {
        if v.is_finite() && v > 0.0 {
            Ok(v)
        } else {
            Err(ConfigError { var, message: "must be a positive number".into() })
        }
    }
}

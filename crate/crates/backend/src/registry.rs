//! The module catalog: registration handshake, persistence and probes.
//!
//! Reads go through immutable [`Catalog`] snapshots; registrations are
//! serialized and each one replaces the snapshot and rewrites the state
//! file. Handshakes for different modules may run concurrently.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};
use std::time::Duration;

use angler_core::datamodel::{versions_compatible, DataModelVersion, DATA_MODEL_VERSION};
use angler_core::descriptor::{
    normalize_base, resolve, DescriptorError, ModuleDescriptor, ProcessorDescriptor, ABOUT_ENDPOINT,
    DOCS_ENDPOINT, PROCESSORS_ENDPOINT,
};
use angler_core::pipeline::ProcessorCatalog;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use url::Url;
use uuid::Uuid;

use crate::store;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleRecord {
    pub module: ModuleDescriptor,
    pub processors: Vec<ProcessorDescriptor>,
}

/// An immutable view of every registered module.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Catalog {
    modules: BTreeMap<Uuid, ModuleRecord>,
    index: BTreeMap<(Uuid, String), ProcessorDescriptor>,
}

impl Catalog {
    fn from_records(records: impl IntoIterator<Item = ModuleRecord>) -> Self {
        let mut c = Catalog::default();
        for r in records {
            c.insert(r);
        }
        c
    }

    fn insert(&mut self, record: ModuleRecord) {
        let uuid = record.module.uuid;
        if let Some(old) = self.modules.remove(&uuid) {
            for p in old.processors {
                self.index.remove(&(uuid, p.name));
            }
        }
        for p in &record.processors {
            self.index.insert((uuid, p.name.clone()), p.clone());
        }
        self.modules.insert(uuid, record);
    }

    pub fn module(&self, uuid: &Uuid) -> Option<&ModuleRecord> {
        self.modules.get(uuid)
    }

    /// Modules ordered by uuid.
    pub fn modules(&self) -> impl Iterator<Item = &ModuleRecord> {
        self.modules.values()
    }

    /// Processors ordered by module uuid, then name; optionally one category.
    pub fn processors(&self, category: Option<&str>) -> Vec<ProcessorDescriptor> {
        self.index
            .values()
            .filter(|p| category.is_none_or(|c| p.category == c))
            .cloned()
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.modules.is_empty()
    }
}

impl ProcessorCatalog for Catalog {
    fn processor(&self, module: &Uuid, name: &str) -> Option<&ProcessorDescriptor> {
        self.index.get(&(*module, name.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistryError {
    #[error("module at {url} is unreachable: {message}")]
    Unreachable { url: String, message: String },
    #[error("GET {endpoint} returned HTTP {status}")]
    BadStatus { endpoint: &'static str, status: u16 },
    #[error("malformed payload from {endpoint}: {message}")]
    Malformed { endpoint: &'static str, message: String },
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
    #[error("module speaks data model {module}, backend speaks {backend}")]
    VersionMismatch { module: DataModelVersion, backend: DataModelVersion },
    #[error("bad module URL: {0}")]
    BadUrl(String),
    #[error("unknown module {0}")]
    UnknownModule(Uuid),
    #[error("cannot persist the catalog: {0}")]
    Storage(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Health {
    Reachable,
    Unreachable,
    /// Answers, but with a different uuid than the one registered.
    Degraded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "html", rename_all = "snake_case")]
pub enum Docs {
    Page(String),
    Unavailable,
}

#[derive(Serialize, Deserialize)]
struct StateFile {
    data_model: DataModelVersion,
    modules: Vec<ModuleRecord>,
}

pub struct Registry {
    state_file: Option<PathBuf>,
    snapshot: RwLock<Arc<Catalog>>,
    writes: tokio::sync::Mutex<()>,
    client: reqwest::Client,
}

impl Registry {
    /// A catalog kept only in memory.
    pub fn in_memory(connect_timeout: Duration, read_timeout: Duration) -> Self {
        Self {
            state_file: None,
            snapshot: RwLock::new(Arc::new(Catalog::default())),
            writes: tokio::sync::Mutex::new(()),
            client: http_client(connect_timeout, read_timeout),
        }
    }

    /// Loads the catalog from `state_file` if it exists.
    pub fn open(state_file: PathBuf, connect_timeout: Duration, read_timeout: Duration) -> std::io::Result<Self> {
        let catalog = match store::read_json::<StateFile>(&state_file) {
            Ok(state) => Catalog::from_records(state.modules),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Catalog::default(),
            Err(e) => return Err(e),
        };
        Ok(Self {
            state_file: Some(state_file),
            snapshot: RwLock::new(Arc::new(catalog)),
            writes: tokio::sync::Mutex::new(()),
            client: http_client(connect_timeout, read_timeout),
        })
    }

    pub fn snapshot(&self) -> Arc<Catalog> {
        self.snapshot.read().expect("catalog lock").clone()
    }

    pub fn list_processors(&self, category: Option<&str>) -> Vec<ProcessorDescriptor> {
        self.snapshot().processors(category)
    }

    /// Handshake with the module at `base_url` (`/about`, then `/processors`)
    /// and store the result, replacing any record with the same uuid.
    pub async fn register(&self, base_url: &str) -> Result<ModuleRecord, RegistryError> {
        let base = Url::parse(base_url).map_err(|e| RegistryError::BadUrl(format!("{base_url}: {e}")))?;
        if base.cannot_be_a_base() || !matches!(base.scheme(), "http" | "https") {
            return Err(RegistryError::BadUrl(format!("{base_url}: expected an http(s) URL")));
        }
        let base = normalize_base(&base);

        let about = self.get_json(&base, ABOUT_ENDPOINT).await?;
        let mut module = ModuleDescriptor::from_about(&about)?;
        if !versions_compatible(&module.data_model, &DATA_MODEL_VERSION) {
            return Err(RegistryError::VersionMismatch {
                module: module.data_model,
                backend: DATA_MODEL_VERSION,
            });
        }
        let listed = self.get_json(&base, PROCESSORS_ENDPOINT).await?;
        let mut processors = ProcessorDescriptor::list_from_wire(&listed)?;
        for p in &mut processors {
            p.resolve_endpoints(&base).map_err(|e| RegistryError::Malformed {
                endpoint: PROCESSORS_ENDPOINT,
                message: format!("processor `{}`: {e}", p.name),
            })?;
            p.module = Some(module.uuid);
        }
        processors.sort_by(|a, b| a.name.cmp(&b.name));
        module.base_url = Some(base);
        let record = ModuleRecord { module, processors };

        let _guard = self.writes.lock().await;
        let mut next = (*self.snapshot()).clone();
        next.insert(record.clone());
        self.persist(&next)?;
        *self.snapshot.write().expect("catalog lock") = Arc::new(next);
        Ok(record)
    }

    fn persist(&self, catalog: &Catalog) -> Result<(), RegistryError> {
        let Some(path) = &self.state_file else { return Ok(()) };
        let state = StateFile {
            data_model: DATA_MODEL_VERSION,
            modules: catalog.modules().cloned().collect(),
        };
        store::write_json(path, &state).map_err(|e| RegistryError::Storage(e.to_string()))
    }

    fn base_of(&self, uuid: &Uuid) -> Result<Url, RegistryError> {
        let catalog = self.snapshot();
        let record = catalog.module(uuid).ok_or(RegistryError::UnknownModule(*uuid))?;
        record
            .module
            .base_url
            .clone()
            .ok_or_else(|| RegistryError::BadUrl(format!("module {uuid} has no address")))
    }

    pub async fn health_check(&self, uuid: &Uuid) -> Result<Health, RegistryError> {
        let base = self.base_of(uuid)?;
        Ok(match self.get_json(&base, ABOUT_ENDPOINT).await {
            Err(_) => Health::Unreachable,
            Ok(about) => match ModuleDescriptor::from_about(&about) {
                Ok(m) if m.uuid == *uuid => Health::Reachable,
                Ok(_) => Health::Degraded,
                Err(_) => Health::Unreachable,
            },
        })
    }

    /// The module's `/docs` page, passed through unparsed. A 404 means the
    /// module has none, which is not an error.
    pub async fn fetch_docs(&self, uuid: &Uuid) -> Result<Docs, RegistryError> {
        let base = self.base_of(uuid)?;
        let url = resolve(&base, DOCS_ENDPOINT).map_err(|e| RegistryError::BadUrl(e.to_string()))?;
        let response = self.client.get(url.clone()).send().await.map_err(|e| RegistryError::Unreachable {
            url: url.to_string(),
            message: e.to_string(),
        })?;
        match response.status().as_u16() {
            404 => Ok(Docs::Unavailable),
            s if (200..300).contains(&s) => {
                let text = response.text().await.map_err(|e| RegistryError::Unreachable {
                    url: url.to_string(),
                    message: e.to_string(),
                })?;
                Ok(if text.is_empty() { Docs::Unavailable } else { Docs::Page(text) })
            }
            status => Err(RegistryError::BadStatus { endpoint: DOCS_ENDPOINT, status }),
        }
    }

    async fn get_json(&self, base: &Url, endpoint: &'static str) -> Result<Value, RegistryError> {
        let url = resolve(base, endpoint).map_err(|e| RegistryError::BadUrl(e.to_string()))?;
        let unreachable = |e: reqwest::Error| RegistryError::Unreachable {
            url: url.to_string(),
            message: e.to_string(),
        };
        let response = self.client.get(url.clone()).send().await.map_err(unreachable)?;
        let status = response.status();
        if !status.is_success() {
            return Err(RegistryError::BadStatus { endpoint, status: status.as_u16() });
        }
        let bytes = response.bytes().await.map_err(unreachable)?;
        serde_json::from_slice(&bytes).map_err(|e| RegistryError::Malformed {
            endpoint,
            message: e.to_string(),
        })
    }
}

pub(crate) fn http_client(connect: Duration, read: Duration) -> reqwest::Client {
    reqwest::Client::builder()
        .connect_timeout(connect)
        .timeout(read)
        .build()
        .expect("http client")
}

//! Saved pipelines, one `.angler` file each under `pipelines/`.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::RwLock;

use angler_core::pipeline::{load, save, Pipeline, FILE_EXTENSION};
use uuid::Uuid;

use crate::store;

pub struct PipelineStore {
    dir: Option<PathBuf>,
    pipelines: RwLock<BTreeMap<Uuid, Pipeline>>,
}

impl PipelineStore {
    pub fn memory() -> Self {
        Self { dir: None, pipelines: RwLock::default() }
    }

    pub fn open(dir: PathBuf) -> std::io::Result<Self> {
        let mut pipelines = BTreeMap::new();
        for path in store::list_files(&dir, FILE_EXTENSION)? {
            match load(&std::fs::read(&path)?) {
                Ok(p) => {
                    pipelines.insert(p.id, p);
                }
                Err(e) => tracing::warn!(path = %path.display(), "skipping unreadable pipeline: {e}"),
            }
        }
        Ok(Self { dir: Some(dir), pipelines: RwLock::new(pipelines) })
    }

    fn path(&self, id: &Uuid) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{id}.{FILE_EXTENSION}")))
    }

    /// Inserts or replaces the pipeline stored under `p.id`.
    pub fn put(&self, p: Pipeline) -> std::io::Result<()> {
        if let Some(path) = self.path(&p.id) {
            store::write_atomic(&path, &save(&p))?;
        }
        self.pipelines.write().expect("pipeline lock").insert(p.id, p);
        Ok(())
    }

    pub fn get(&self, id: &Uuid) -> Option<Pipeline> {
        self.pipelines.read().expect("pipeline lock").get(id).cloned()
    }

    pub fn contains(&self, id: &Uuid) -> bool {
        self.pipelines.read().expect("pipeline lock").contains_key(id)
    }

    pub fn list(&self) -> Vec<Pipeline> {
        self.pipelines.read().expect("pipeline lock").values().cloned().collect()
    }

    pub fn delete(&self, id: &Uuid) -> std::io::Result<bool> {
        let removed = self.pipelines.write().expect("pipeline lock").remove(id).is_some();
        if removed {
            if let Some(path) = self.path(id) {
                match std::fs::remove_file(path) {
                    Err(e) if e.kind() != std::io::ErrorKind::NotFound => return Err(e),
                    _ => {}
                }
            }
        }
        Ok(removed)
    }
}

//! On-disk job store: `jobs/{job_id}/job.json` plus one file per completed
//! `(node, port)` output, holding the envelope bytes exactly as received.

use std::path::{Path, PathBuf};

use uuid::Uuid;

use crate::store::{self, encode_name};

#[derive(Debug, Clone)]
pub struct JobStore {
    root: Option<PathBuf>,
}

impl JobStore {
    /// Keeps nothing on disk.
    pub fn memory() -> Self {
        Self { root: None }
    }

    pub fn at(root: impl Into<PathBuf>) -> Self {
        Self { root: Some(root.into()) }
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    fn job_dir(&self, job: Uuid) -> Option<PathBuf> {
        self.root.as_ref().map(|r| r.join(job.to_string()))
    }

    pub fn output_path(&self, job: Uuid, node: &str, port: &str) -> Option<PathBuf> {
        self.job_dir(job)
            .map(|d| d.join(format!("{}.{}.json", encode_name(node), encode_name(port))))
    }

    pub(crate) fn save_job<T: serde::Serialize>(&self, job: Uuid, state: &T) -> std::io::Result<()> {
        match self.job_dir(job) {
            Some(dir) => store::write_json(&dir.join("job.json"), state),
            None => Ok(()),
        }
    }

    pub(crate) fn save_output(&self, job: Uuid, node: &str, port: &str, bytes: &[u8]) -> std::io::Result<()> {
        match self.output_path(job, node, port) {
            Some(path) => store::write_atomic(&path, bytes),
            None => Ok(()),
        }
    }

    pub(crate) fn load_output(&self, job: Uuid, node: &str, port: &str) -> std::io::Result<String> {
        match self.output_path(job, node, port) {
            Some(path) => std::fs::read_to_string(path),
            None => Err(std::io::ErrorKind::NotFound.into()),
        }
    }

    pub(crate) fn load_all<T: serde::de::DeserializeOwned>(&self) -> std::io::Result<Vec<T>> {
        let Some(root) = &self.root else { return Ok(Vec::new()) };
        let mut dirs = Vec::new();
        match std::fs::read_dir(root) {
            Ok(entries) => {
                for entry in entries {
                    let path = entry?.path();
                    if path.join("job.json").is_file() {
                        dirs.push(path);
                    }
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(e),
        }
        dirs.sort();
        dirs.into_iter()
            .map(|d| store::read_json(&d.join("job.json")))
            .collect()
    }
}

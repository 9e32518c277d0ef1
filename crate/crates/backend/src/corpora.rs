//! Uploaded corpora, stored as data model envelopes under `corpora/`.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::RwLock;

use angler_core::datamodel::{Corpus, Envelope, Payload};
use uuid::Uuid;

use crate::store;

pub struct CorpusStore {
    dir: Option<PathBuf>,
    corpora: RwLock<BTreeMap<Uuid, Corpus>>,
}

impl CorpusStore {
    pub fn memory() -> Self {
        Self { dir: None, corpora: RwLock::default() }
    }

    pub fn open(dir: PathBuf) -> std::io::Result<Self> {
        let mut corpora = BTreeMap::new();
        for path in store::list_files(&dir, "json")? {
            let bytes = std::fs::read(&path)?;
            match Envelope::from_bytes(&bytes) {
                Ok(Envelope { payload: Payload::Corpus(c), .. }) => {
                    corpora.insert(c.id, c);
                }
                _ => tracing::warn!(path = %path.display(), "skipping unreadable corpus file"),
            }
        }
        Ok(Self { dir: Some(dir), corpora: RwLock::new(corpora) })
    }

    pub fn insert(&self, corpus: Corpus) -> std::io::Result<()> {
        if let Some(dir) = &self.dir {
            let bytes = Envelope::new(corpus.clone()).to_bytes();
            store::write_atomic(&dir.join(format!("{}.json", corpus.id)), &bytes)?;
        }
        self.corpora.write().expect("corpus lock").insert(corpus.id, corpus);
        Ok(())
    }

    pub fn get(&self, id: &Uuid) -> Option<Corpus> {
        self.corpora.read().expect("corpus lock").get(id).cloned()
    }

    pub fn list(&self) -> Vec<Corpus> {
        self.corpora.read().expect("corpus lock").values().cloned().collect()
    }
}

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use uuid::Uuid;

/// Half-open character range `[start, end)` counted in Unicode scalar values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawSpan")]
pub struct Span {
    start: usize,
    end: usize,
}

#[derive(Deserialize)]
struct RawSpan {
    start: usize,
    end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("span start {start} is after end {end}")]
pub struct InvalidSpan {
    pub start: usize,
    pub end: usize,
}

impl TryFrom<RawSpan> for Span {
    type Error = InvalidSpan;

    fn try_from(raw: RawSpan) -> Result<Self, Self::Error> {
        Span::new(raw.start, raw.end)
    }
}

impl Span {
    pub fn new(start: usize, end: usize) -> Result<Self, InvalidSpan> {
        if start > end {
            return Err(InvalidSpan { start, end });
        }
        Ok(Self { start, end })
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn end(&self) -> usize {
        self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    /// Whether the span lies within a text of `len` characters.
    pub fn fits(&self, len: usize) -> bool {
        self.end <= len
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    /// The covered substring, or `None` when the span runs past the text.
    pub fn slice<'a>(&self, text: &'a str) -> Option<&'a str> {
        let mut indices = text.char_indices().map(|(i, _)| i).chain([text.len()]);
        let start = indices.nth(self.start)?;
        let end = if self.is_empty() {
            start
        } else {
            indices.nth(self.len() - 1)?
        };
        Some(&text[start..end])
    }
}

/// Key-value metadata attached at every level of the model. Keys are non-empty.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, String>", into = "BTreeMap<String, String>")]
pub struct Metadata(BTreeMap<String, String>);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("metadata keys must be non-empty")]
pub struct EmptyMetadataKey;

impl TryFrom<BTreeMap<String, String>> for Metadata {
    type Error = EmptyMetadataKey;

    fn try_from(entries: BTreeMap<String, String>) -> Result<Self, Self::Error> {
        if entries.keys().any(String::is_empty) {
            return Err(EmptyMetadataKey);
        }
        Ok(Self(entries))
    }
}

impl From<Metadata> for BTreeMap<String, String> {
    fn from(m: Metadata) -> Self {
        m.0
    }
}

impl Metadata {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        key: impl Into<String>,
        value: impl Into<String>,
    ) -> Result<Option<String>, EmptyMetadataKey> {
        let key = key.into();
        if key.is_empty() {
            return Err(EmptyMetadataKey);
        }
        Ok(self.0.insert(key, value.into()))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Fields a reader did not recognise. Kept so they survive a read/write cycle.
pub type UnknownFields = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: Uuid,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentences: Option<Vec<Span>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<Span>>,
    #[serde(default)]
    pub metadata: Metadata,
    #[serde(flatten)]
    pub extra: UnknownFields,
}

impl Document {
    pub fn new(text: impl Into<String>) -> Self {
        Self {
            id: Uuid::new_v4(),
            text: text.into(),
            sentences: None,
            tokens: None,
            metadata: Metadata::new(),
            extra: UnknownFields::new(),
        }
    }

    /// Text length in characters, the unit every [`Span`] is measured in.
    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub id: Uuid,
    pub name: String,
    pub documents: Vec<Document>,
    #[serde(default)]
    pub metadata: Metadata,
    #[serde(flatten)]
    pub extra: UnknownFields,
}

impl Corpus {
    pub fn new(name: impl Into<String>, documents: Vec<Document>) -> Self {
        Self {
            id: Uuid::new_v4(),
            name: name.into(),
            documents,
            metadata: Metadata::new(),
            extra: UnknownFields::new(),
        }
    }

    pub fn document(&self, id: &Uuid) -> Option<&Document> {
        self.documents.iter().find(|d| d.id == *id)
    }

    /// Character lengths keyed by document id.
    pub fn document_lengths(&self) -> BTreeMap<Uuid, usize> {
        self.documents
            .iter()
            .map(|d| (d.id, d.char_len()))
            .collect()
    }

    pub fn duplicate_document_ids(&self) -> Vec<Uuid> {
        let mut seen = BTreeSet::new();
        let mut dups = BTreeSet::new();
        for doc in &self.documents {
            if !seen.insert(doc.id) {
                dups.insert(doc.id);
            }
        }
        dups.into_iter().collect()
    }
}

//! The deterministic text algorithms behind the builtin processors.

use std::collections::{BTreeMap, BTreeSet};

use angler_core::datamodel::{Document, Span, Tag, Token};
use uuid::Uuid;

/// Splits on Unicode whitespace. Each maximal non-whitespace run becomes a
/// token whose span counts characters.
pub fn whitespace_tokens(doc: &Document) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut start: Option<usize> = None;
    let mut surface = String::new();
    let mut emit = |start: usize, end: usize, surface: &mut String| {
        tokens.push(Token {
            document_id: doc.id,
            span: Span::new(start, end).expect("run is non-empty"),
            surface: std::mem::take(surface),
        });
    };
    let mut len = 0;
    for (i, c) in doc.text.chars().enumerate() {
        len = i + 1;
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                emit(s, i, &mut surface);
            }
        } else {
            start.get_or_insert(i);
            surface.push(c);
        }
    }
    if let Some(s) = start {
        emit(s, len, &mut surface);
    }
    tokens
}

/// Sentence boundaries fall after `.`, `!` or `?` when whitespace follows.
/// Sentences come back trimmed; blank ones are dropped.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut prev_terminal = false;
    for (i, c) in text.char_indices() {
        if prev_terminal && c.is_whitespace() {
            out.push(&text[start..i]);
            start = i;
        }
        prev_terminal = matches!(c, '.' | '!' | '?');
    }
    out.push(&text[start..]);
    out.into_iter().map(str::trim).filter(|s| !s.is_empty()).collect()
}

/// One sentence per line.
pub fn sentence_per_line(text: &str) -> String {
    split_sentences(text).join("\n")
}

/// Case-folds gazetteer keys once so lookups are a single map probe.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Gazetteer(BTreeMap<String, String>);

impl Gazetteer {
    pub fn new<K: AsRef<str>, V: Into<String>>(entries: impl IntoIterator<Item = (K, V)>) -> Self {
        Self(
            entries
                .into_iter()
                .map(|(k, v)| (k.as_ref().to_lowercase(), v.into()))
                .collect(),
        )
    }

    pub fn label(&self, surface: &str) -> Option<&str> {
        self.0.get(&surface.to_lowercase()).map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn tag_tokens(tokens: &[Token], gazetteer: &Gazetteer) -> Vec<Tag> {
    tokens
        .iter()
        .filter_map(|t| {
            gazetteer.label(&t.surface).map(|label| Tag {
                document_id: t.document_id,
                span: t.span,
                tag: label.to_string(),
                confidence: 1.0,
            })
        })
        .collect()
}

pub fn jaccard(a: &BTreeSet<&str>, b: &BTreeSet<&str>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Surface sets per document, in order of each document's first token.
pub fn surface_sets(tokens: &[Token]) -> Vec<(Uuid, BTreeSet<&str>)> {
    let mut order: Vec<(Uuid, BTreeSet<&str>)> = Vec::new();
    let mut index = BTreeMap::new();
    for t in tokens {
        let i = *index.entry(t.document_id).or_insert_with(|| {
            order.push((t.document_id, BTreeSet::new()));
            order.len() - 1
        });
        order[i].1.insert(t.surface.as_str());
    }
    order
}

/// Greedy single-link clustering: each document joins, and merges, every
/// existing cluster holding a member at or above `threshold` overlap.
/// Clusters are ordered by their first member, members by document order.
pub fn single_link_clusters(tokens: &[Token], threshold: f64) -> Vec<Vec<Uuid>> {
    let docs = surface_sets(tokens);
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for (i, (_, set)) in docs.iter().enumerate() {
        let (linked, rest): (Vec<_>, Vec<_>) = clusters
            .into_iter()
            .partition(|c| c.iter().any(|&j| jaccard(set, &docs[j].1) >= threshold));
        let mut merged: Vec<usize> = linked.into_iter().flatten().chain([i]).collect();
        merged.sort_unstable();
        clusters = rest;
        clusters.push(merged);
    }
    clusters.sort_by_key(|c| c[0]);
    clusters
        .into_iter()
        .map(|c| c.into_iter().map(|i| docs[i].0).collect())
        .collect()
}

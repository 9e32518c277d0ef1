use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;
use uuid::Uuid;

use super::annotation::{AnnotationBody, AnnotationObject, EntityRef, Location};
use super::corpus::{Corpus, Span};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationKind {
    /// Declared type differs from the body, or the abstract root was used.
    TypeMismatch,
    /// Object points at a different corpus than the one it is checked against.
    CorpusMismatch,
    DanglingDocument,
    SpanOutOfBounds,
    ConfidenceOutOfRange,
    NonFiniteNumber,
    ClustersNotDisjoint,
    GroupMemberOutOfRange,
    DuplicateDocumentId,
    SentencesOverlap,
    SpansUnsorted,
}

impl ViolationKind {
    pub fn message(&self) -> &'static str {
        match self {
            Self::TypeMismatch => "body does not match declared type",
            Self::CorpusMismatch => "object refers to another corpus",
            Self::DanglingDocument => "unknown document",
            Self::SpanOutOfBounds => "span out of bounds",
            Self::ConfidenceOutOfRange => "confidence outside [0, 1]",
            Self::NonFiniteNumber => "number is not finite",
            Self::ClustersNotDisjoint => "clusters not disjoint",
            Self::GroupMemberOutOfRange => "group member index out of range",
            Self::DuplicateDocumentId => "duplicate document id",
            Self::SentencesOverlap => "sentences overlap",
            Self::SpansUnsorted => "spans not sorted by start",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Dotted path to the offending field, e.g. `tags[3].span`.
    pub path: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}", self.kind.message(), self.path)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn kinds(&self) -> Vec<ViolationKind> {
        self.violations.iter().map(|v| v.kind).collect()
    }

    fn push(&mut self, kind: ViolationKind, path: impl Into<String>) {
        self.violations.push(Violation {
            kind,
            path: path.into(),
        });
    }
}

struct Checker<'a> {
    lengths: BTreeMap<Uuid, usize>,
    report: &'a mut ValidationReport,
}

impl Checker<'_> {
    /// Returns false when the document is unknown.
    fn document(&mut self, id: &Uuid, path: &str) -> bool {
        if self.lengths.contains_key(id) {
            true
        } else {
            self.report.push(ViolationKind::DanglingDocument, path);
            false
        }
    }

    fn span(&mut self, doc: &Uuid, span: &Span, path: &str) {
        if let Some(len) = self.lengths.get(doc) {
            if !span.fits(*len) {
                self.report.push(ViolationKind::SpanOutOfBounds, path);
            }
        }
    }

    fn location(&mut self, loc: &Location, path: &str) {
        if self.document(&loc.document_id, &format!("{path}.document_id")) {
            self.span(&loc.document_id, &loc.span, &format!("{path}.span"));
        }
    }

    fn confidence(&mut self, c: f64, path: &str) {
        if !(0.0..=1.0).contains(&c) {
            self.report.push(ViolationKind::ConfidenceOutOfRange, path);
        }
    }

    fn finite(&mut self, x: f64, path: &str) {
        if !x.is_finite() {
            self.report.push(ViolationKind::NonFiniteNumber, path);
        }
    }
}

/// Checks an annotation object against the corpus it annotates. Problems are
/// reported, never raised.
pub fn validate_object(obj: &AnnotationObject, corpus: &Corpus) -> ValidationReport {
    let mut report = ValidationReport::default();
    if obj.type_id != obj.body.type_id() {
        report.push(ViolationKind::TypeMismatch, "type");
    }
    if obj.corpus_id != corpus.id {
        report.push(ViolationKind::CorpusMismatch, "corpus_id");
    }
    let mut c = Checker {
        lengths: corpus.document_lengths(),
        report: &mut report,
    };

    match &obj.body {
        AnnotationBody::PreprocessedDocument(b) => {
            for (i, d) in b.documents.iter().enumerate() {
                c.document(&d.document_id, &format!("documents[{i}].document_id"));
            }
        }
        AnnotationBody::DocumentFeatures(b) => {
            for (doc, features) in &b.features {
                c.document(doc, &format!("features.{doc}"));
                for (name, value) in features {
                    if let super::annotation::FeatureValue::Number(x) = value {
                        c.finite(*x, &format!("features.{doc}.{name}"));
                    }
                }
            }
        }
        AnnotationBody::SequenceClassification(b) => {
            if c.document(&b.target.document_id, "target.document_id") {
                if let Some(span) = &b.target.span {
                    c.span(&b.target.document_id, span, "target.span");
                }
            }
            c.confidence(b.confidence, "confidence");
        }
        AnnotationBody::SequenceTagging(b) => {
            for (i, t) in b.tags.iter().enumerate() {
                if c.document(&t.document_id, &format!("tags[{i}].document_id")) {
                    c.span(&t.document_id, &t.span, &format!("tags[{i}].span"));
                }
                c.confidence(t.confidence, &format!("tags[{i}].confidence"));
            }
        }
        AnnotationBody::Relationship(b) => {
            for (side, entity) in [("source", &b.source), ("target", &b.target)] {
                // References to other objects cannot be resolved from the corpus alone.
                if let EntityRef::Span(loc) = entity {
                    c.location(loc, side);
                }
            }
        }
        AnnotationBody::Discourse(b) => {
            for (i, e) in b.entities.iter().enumerate() {
                for (j, m) in e.mentions.iter().enumerate() {
                    c.location(m, &format!("entities[{i}].mentions[{j}]"));
                }
            }
        }
        AnnotationBody::Tokens(b) => {
            for (i, t) in b.tokens.iter().enumerate() {
                if c.document(&t.document_id, &format!("tokens[{i}].document_id")) {
                    c.span(&t.document_id, &t.span, &format!("tokens[{i}].span"));
                }
            }
        }
        AnnotationBody::Parsing(b) => {
            for (i, t) in b.tokens.iter().enumerate() {
                if c.document(&t.document_id, &format!("tokens[{i}].document_id")) {
                    c.span(&t.document_id, &t.span, &format!("tokens[{i}].span"));
                }
            }
            for (i, g) in b.groups.iter().enumerate() {
                for (j, m) in g.members.iter().enumerate() {
                    if *m >= b.tokens.len() {
                        c.report.push(
                            ViolationKind::GroupMemberOutOfRange,
                            format!("groups[{i}].members[{j}]"),
                        );
                    }
                }
            }
        }
        AnnotationBody::Summarization(b) => {
            c.document(&b.document_id, "document_id");
        }
        AnnotationBody::QuestionAnswering(b) => {
            for (i, qa) in b.pairs.iter().enumerate() {
                if let Some(loc) = &qa.support {
                    c.location(loc, &format!("pairs[{i}].support"));
                }
            }
        }
        AnnotationBody::Comparison(b) => {
            for (i, p) in b.pairs.iter().enumerate() {
                c.location(&p.part_a, &format!("pairs[{i}].part_a"));
                c.location(&p.part_b, &format!("pairs[{i}].part_b"));
                c.finite(p.similarity, &format!("pairs[{i}].similarity"));
            }
        }
        AnnotationBody::Clusters(b) => {
            let mut seen = BTreeSet::new();
            for (i, cluster) in b.clusters.iter().enumerate() {
                for (j, doc) in cluster.iter().enumerate() {
                    let path = format!("clusters[{i}][{j}]");
                    c.document(doc, &path);
                    if !seen.insert(*doc) {
                        c.report.push(ViolationKind::ClustersNotDisjoint, path);
                    }
                }
            }
        }
    }
    report
}

/// Checks the corpus-level invariants: unique document ids, sentence spans
/// sorted and non-overlapping, token spans sorted, every span inside its text.
pub fn validate_corpus(corpus: &Corpus) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut seen = BTreeSet::new();
    for (i, doc) in corpus.documents.iter().enumerate() {
        if !seen.insert(doc.id) {
            report.push(ViolationKind::DuplicateDocumentId, format!("documents[{i}].id"));
        }
        let len = doc.char_len();
        for (field, spans) in [("sentences", &doc.sentences), ("tokens", &doc.tokens)] {
            let Some(spans) = spans else { continue };
            for (j, span) in spans.iter().enumerate() {
                let path = format!("documents[{i}].{field}[{j}]");
                if !span.fits(len) {
                    report.push(ViolationKind::SpanOutOfBounds, path.clone());
                }
                if j > 0 {
                    let prev = spans[j - 1];
                    if prev.start() > span.start() {
                        report.push(ViolationKind::SpansUnsorted, path);
                    } else if field == "sentences" && prev.overlaps(span) {
                        report.push(ViolationKind::SentencesOverlap, path);
                    }
                }
            }
        }
    }
    report
}

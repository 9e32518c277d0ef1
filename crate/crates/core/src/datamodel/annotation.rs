use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use uuid::Uuid;

use super::corpus::{Metadata, Span, UnknownFields};
use super::types::AnnotationTypeId;

fn full_confidence() -> f64 {
    1.0
}

/// A span inside one document of the corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Location {
    pub document_id: Uuid,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewrittenDocument {
    pub document_id: Uuid,
    pub new_text: String,
}

/// New versions of corpus documents after preprocessing.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PreprocessedDocumentBody {
    pub documents: Vec<RewrittenDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureValue {
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DocumentFeaturesBody {
    pub features: BTreeMap<Uuid, BTreeMap<String, FeatureValue>>,
}

/// A whole document, or part of one when `span` is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationTarget {
    pub document_id: Uuid,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span: Option<Span>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceClassificationBody {
    pub target: ClassificationTarget,
    pub label: String,
    #[serde(default = "full_confidence")]
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tag {
    pub document_id: Uuid,
    pub span: Span,
    pub tag: String,
    #[serde(default = "full_confidence")]
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SequenceTaggingBody {
    pub tags: Vec<Tag>,
}

/// One side of a relation: a text span, or another annotation object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EntityRef {
    Span(Location),
    Annotation { annotation_id: Uuid },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationshipBody {
    pub source: EntityRef,
    pub target: EntityRef,
    pub relation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub label: String,
    pub mentions: Vec<Location>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DiscourseBody {
    pub entities: Vec<Entity>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub document_id: Uuid,
    pub span: Span,
    pub surface: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokensBody {
    pub tokens: Vec<Token>,
}

/// Tokens linked together, e.g. a chunk. Members index into the token list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenGroup {
    pub label: String,
    pub members: Vec<usize>,
}

/// Everything [`TokensBody`] carries plus token groups.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ParsingBody {
    pub tokens: Vec<Token>,
    pub groups: Vec<TokenGroup>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummarizationBody {
    pub document_id: Uuid,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionAnswer {
    pub question: String,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<Location>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct QuestionAnsweringBody {
    pub pairs: Vec<QuestionAnswer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Similarity {
    pub part_a: Location,
    pub part_b: Location,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ComparisonBody {
    pub pairs: Vec<Similarity>,
}

/// Disjoint groups of document ids. Documents left out are unclustered.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClustersBody {
    pub clusters: Vec<Vec<Uuid>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnnotationBody {
    PreprocessedDocument(PreprocessedDocumentBody),
    DocumentFeatures(DocumentFeaturesBody),
    SequenceClassification(SequenceClassificationBody),
    SequenceTagging(SequenceTaggingBody),
    Relationship(RelationshipBody),
    Discourse(DiscourseBody),
    Parsing(ParsingBody),
    Tokens(TokensBody),
    Summarization(SummarizationBody),
    QuestionAnswering(QuestionAnsweringBody),
    Comparison(ComparisonBody),
    Clusters(ClustersBody),
}

impl AnnotationBody {
    /// The concrete type this body encodes.
    pub fn type_id(&self) -> AnnotationTypeId {
        use AnnotationTypeId as T;
        match self {
            Self::PreprocessedDocument(_) => T::PreprocessedDocument,
            Self::DocumentFeatures(_) => T::DocumentFeatures,
            Self::SequenceClassification(_) => T::SequenceClassification,
            Self::SequenceTagging(_) => T::SequenceTagging,
            Self::Relationship(_) => T::Relationship,
            Self::Discourse(_) => T::Discourse,
            Self::Parsing(_) => T::Parsing,
            Self::Tokens(_) => T::Tokens,
            Self::Summarization(_) => T::Summarization,
            Self::QuestionAnswering(_) => T::QuestionAnswering,
            Self::Comparison(_) => T::Comparison,
            Self::Clusters(_) => T::Clusters,
        }
    }
}

/// A typed processor result.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationObject {
    pub id: Uuid,
    /// Declared type; [`validate_object`](super::validate_object) checks it
    /// against the body.
    pub type_id: AnnotationTypeId,
    pub producer_node: Option<String>,
    pub corpus_id: Uuid,
    pub metadata: Metadata,
    pub body: AnnotationBody,
    pub extra: UnknownFields,
}

impl AnnotationObject {
    /// A fresh object whose declared type follows the body.
    pub fn new(corpus_id: Uuid, body: AnnotationBody) -> Self {
        Self {
            id: Uuid::new_v4(),
            type_id: body.type_id(),
            producer_node: None,
            corpus_id,
            metadata: Metadata::new(),
            body,
            extra: UnknownFields::new(),
        }
    }

    pub fn with_producer(mut self, node: impl Into<String>) -> Self {
        self.producer_node = Some(node.into());
        self
    }

    /// Token records of a `tokens` object or of any descendant carrying them.
    pub fn tokens(&self) -> Option<&[Token]> {
        match &self.body {
            AnnotationBody::Tokens(b) => Some(&b.tokens),
            AnnotationBody::Parsing(b) => Some(&b.tokens),
            _ => None,
        }
    }
}

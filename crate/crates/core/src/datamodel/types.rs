use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// The closed set of annotation types: the abstract root plus twelve concrete types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AnnotationTypeId {
    AnnotationObject,
    PreprocessedDocument,
    DocumentFeatures,
    SequenceClassification,
    SequenceTagging,
    Relationship,
    Discourse,
    Parsing,
    Tokens,
    Summarization,
    QuestionAnswering,
    Comparison,
    Clusters,
}

impl AnnotationTypeId {
    pub const ALL: [AnnotationTypeId; 13] = [
        Self::AnnotationObject,
        Self::PreprocessedDocument,
        Self::DocumentFeatures,
        Self::SequenceClassification,
        Self::SequenceTagging,
        Self::Relationship,
        Self::Discourse,
        Self::Parsing,
        Self::Tokens,
        Self::Summarization,
        Self::QuestionAnswering,
        Self::Comparison,
        Self::Clusters,
    ];

    /// Every type an object can actually carry (all but the root).
    pub const CONCRETE: [AnnotationTypeId; 12] = [
        Self::PreprocessedDocument,
        Self::DocumentFeatures,
        Self::SequenceClassification,
        Self::SequenceTagging,
        Self::Relationship,
        Self::Discourse,
        Self::Parsing,
        Self::Tokens,
        Self::Summarization,
        Self::QuestionAnswering,
        Self::Comparison,
        Self::Clusters,
    ];

    /// Wire name, snake_case.
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::AnnotationObject => "annotation_object",
            Self::PreprocessedDocument => "preprocessed_document",
            Self::DocumentFeatures => "document_features",
            Self::SequenceClassification => "sequence_classification",
            Self::SequenceTagging => "sequence_tagging",
            Self::Relationship => "relationship",
            Self::Discourse => "discourse",
            Self::Parsing => "parsing",
            Self::Tokens => "tokens",
            Self::Summarization => "summarization",
            Self::QuestionAnswering => "question_answering",
            Self::Comparison => "comparison",
            Self::Clusters => "clusters",
        }
    }

    pub fn is_root(&self) -> bool {
        *self == Self::AnnotationObject
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown annotation type `{0}`")]
pub struct UnknownType(pub String);

impl FromStr for AnnotationTypeId {
    type Err = UnknownType;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| UnknownType(s.to_string()))
    }
}

impl fmt::Display for AnnotationTypeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for AnnotationTypeId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for AnnotationTypeId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A type that can flow along a pipeline edge: a raw corpus or an annotation type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PortType {
    Corpus,
    Annotation(AnnotationTypeId),
}

impl PortType {
    pub const CORPUS_NAME: &'static str = "corpus";

    pub fn as_str(&self) -> &'static str {
        match self {
            PortType::Corpus => Self::CORPUS_NAME,
            PortType::Annotation(t) => t.as_str(),
        }
    }

    /// Corpus plus the thirteen annotation types.
    pub fn universe() -> impl Iterator<Item = PortType> {
        std::iter::once(PortType::Corpus).chain(AnnotationTypeId::ALL.map(PortType::Annotation))
    }
}

impl From<AnnotationTypeId> for PortType {
    fn from(t: AnnotationTypeId) -> Self {
        PortType::Annotation(t)
    }
}

impl FromStr for PortType {
    type Err = UnknownType;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == Self::CORPUS_NAME {
            Ok(PortType::Corpus)
        } else {
            s.parse().map(PortType::Annotation)
        }
    }
}

impl fmt::Display for PortType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for PortType {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for PortType {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HierarchyError {
    #[error("root type must not have a parent")]
    RootHasParent,
    #[error("type `{0}` has no parent")]
    MissingParent(AnnotationTypeId),
    #[error("parent chain of `{0}` does not reach the root")]
    Cycle(AnnotationTypeId),
}

/// Parent table over the closed type set. Always a tree rooted at
/// [`AnnotationTypeId::AnnotationObject`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeHierarchy {
    parents: BTreeMap<AnnotationTypeId, AnnotationTypeId>,
}

impl Default for TypeHierarchy {
    fn default() -> Self {
        Self::shipped()
    }
}

impl TypeHierarchy {
    /// The hierarchy every component ships with: `parsing` refines `tokens`,
    /// every other concrete type hangs directly off the root.
    pub fn shipped() -> Self {
        use AnnotationTypeId::*;
        let edges = AnnotationTypeId::CONCRETE.map(|t| match t {
            Parsing => (Parsing, Tokens),
            other => (other, AnnotationObject),
        });
        Self::from_edges(edges).expect("shipped hierarchy is a tree")
    }

    pub fn from_edges(
        edges: impl IntoIterator<Item = (AnnotationTypeId, AnnotationTypeId)>,
    ) -> Result<Self, HierarchyError> {
        let parents: BTreeMap<_, _> = edges.into_iter().collect();
        if parents.contains_key(&AnnotationTypeId::AnnotationObject) {
            return Err(HierarchyError::RootHasParent);
        }
        for t in AnnotationTypeId::CONCRETE {
            if !parents.contains_key(&t) {
                return Err(HierarchyError::MissingParent(t));
            }
        }
        let hierarchy = Self { parents };
        for t in AnnotationTypeId::CONCRETE {
            if hierarchy.ancestors(t).last() != Some(AnnotationTypeId::AnnotationObject) {
                return Err(HierarchyError::Cycle(t));
            }
        }
        Ok(hierarchy)
    }

    pub fn parent(&self, t: AnnotationTypeId) -> Option<AnnotationTypeId> {
        self.parents.get(&t).copied()
    }

    /// `t` followed by its parent chain. Bounded by the size of the type set,
    /// so it terminates even on a malformed table.
    pub fn ancestors(&self, t: AnnotationTypeId) -> impl Iterator<Item = AnnotationTypeId> + '_ {
        std::iter::successors(Some(t), |cur| self.parent(*cur)).take(AnnotationTypeId::ALL.len())
    }

    pub fn depth(&self, t: AnnotationTypeId) -> usize {
        self.ancestors(t).count() - 1
    }

    /// Whether `candidate` is `ancestor` or one of its descendants.
    pub fn is_descendant(&self, candidate: AnnotationTypeId, ancestor: AnnotationTypeId) -> bool {
        self.ancestors(candidate).any(|t| t == ancestor)
    }

    /// Port-level compatibility. `corpus` only matches itself.
    pub fn port_type_matches(&self, produced: PortType, wanted: PortType) -> bool {
        match (produced, wanted) {
            (PortType::Corpus, PortType::Corpus) => true,
            (PortType::Annotation(p), PortType::Annotation(w)) => self.is_descendant(p, w),
            _ => false,
        }
    }

    /// Whether an input port listing `accepted` takes a value of type `produced`.
    pub fn accepts(&self, accepted: &[PortType], produced: PortType) -> bool {
        accepted
            .iter()
            .any(|wanted| self.port_type_matches(produced, *wanted))
    }

    pub fn edges(&self) -> impl Iterator<Item = (AnnotationTypeId, AnnotationTypeId)> + '_ {
        self.parents.iter().map(|(c, p)| (*c, *p))
    }
}

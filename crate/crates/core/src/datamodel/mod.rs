//! The versioned data model exchanged between the backend and modules.
//!
//! A [`Corpus`] holds the documents being processed. Processor results are
//! [`AnnotationObject`]s of one of twelve concrete types arranged in a
//! [`TypeHierarchy`]; a consumer of a type also accepts its descendants.
//! All character offsets count Unicode scalar values.

mod annotation;
mod corpus;
pub mod envelope;
mod types;
mod validate;
mod version;

pub use annotation::{
    AnnotationBody, AnnotationObject, ClassificationTarget, ClustersBody, ComparisonBody,
    DiscourseBody, DocumentFeaturesBody, Entity, EntityRef, FeatureValue, Location, ParsingBody,
    PreprocessedDocumentBody, QuestionAnswer, QuestionAnsweringBody, RelationshipBody,
    RewrittenDocument, SequenceClassificationBody, SequenceTaggingBody, Similarity,
    SummarizationBody, Tag, Token, TokenGroup, TokensBody,
};
pub use corpus::{Corpus, Document, EmptyMetadataKey, InvalidSpan, Metadata, Span, UnknownFields};
pub use envelope::{deserialize, serialize, DecodeError, Envelope, Payload};
pub use types::{AnnotationTypeId, HierarchyError, PortType, TypeHierarchy, UnknownType};
pub use validate::{validate_corpus, validate_object, ValidationReport, Violation, ViolationKind};
pub use version::{versions_compatible, DataModelVersion, ParseVersionError, DATA_MODEL_VERSION};

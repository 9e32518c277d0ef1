//! Core types for the angler pipeline backend.
//!
//! * [`datamodel`] holds the versioned corpus and annotation model shared by
//!   the backend and every processing module, including the annotation type
//!   hierarchy and the canonical envelope encoding.
//! * [`descriptor`] parses the self-description a module serves on `/about`
//!   and `/processors`.
//! * [`pipeline`] models typed processing graphs: validation against a
//!   processor catalog, stage planning, and the `.angler` file format.
//! * [`protocol`] defines the dispatch and callback envelopes exchanged with
//!   modules.

pub mod datamodel;
pub mod descriptor;
pub mod pipeline;
pub mod protocol;

pub use datamodel::{
    AnnotationObject, AnnotationTypeId, Corpus, DataModelVersion, Document, Metadata, PortType,
    Span, TypeHierarchy, DATA_MODEL_VERSION,
};

#[cfg(feature = "test-support")]
pub mod testing;

//! Canonical textual encoding shared by every API.
//!
//! An envelope is a JSON object `{"data_model": "1.0.0", "kind": ..., "body": ...}`
//! where `kind` is `corpus` or the snake_case name of a concrete annotation
//! type. Output is compact with object keys sorted, so equal values always
//! encode to identical bytes. Fields a reader does not know are carried
//! through unchanged.

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use super::annotation::{AnnotationBody, AnnotationObject};
use super::corpus::{Corpus, Metadata, UnknownFields};
use super::types::AnnotationTypeId;
use super::version::{DataModelVersion, DATA_MODEL_VERSION};

/// Fields every annotation body carries regardless of type.
pub const ROOT_FIELDS: [&str; 4] = ["corpus_id", "id", "metadata", "producer_node"];

pub const CORPUS_KIND: &str = "corpus";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error("unknown type `{0}`")]
    UnknownType(String),
    #[error("missing required field `{0}`")]
    MissingField(String),
    #[error("data model {found} is not compatible with {supported}")]
    IncompatibleVersion {
        found: DataModelVersion,
        supported: DataModelVersion,
    },
    #[error("invalid value: {0}")]
    InvalidValue(String),
}

impl DecodeError {
    /// Classifies a serde_json failure into the kinds above.
    pub fn from_json(err: serde_json::Error) -> Self {
        use serde_json::error::Category;
        match err.classify() {
            Category::Syntax | Category::Eof | Category::Io => Self::Malformed(err.to_string()),
            Category::Data => {
                let msg = err.to_string();
                if let Some(rest) = msg.strip_prefix("missing field `") {
                    let field = rest.split('`').next().unwrap_or_default();
                    Self::MissingField(field.to_string())
                } else if let Some(rest) = msg.strip_prefix("unknown annotation type `") {
                    Self::UnknownType(rest.split('`').next().unwrap_or_default().to_string())
                } else {
                    Self::InvalidValue(msg)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Corpus(Corpus),
    Annotation(AnnotationObject),
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Corpus(_) => CORPUS_KIND,
            Payload::Annotation(a) => a.type_id.as_str(),
        }
    }
}

impl From<Corpus> for Payload {
    fn from(c: Corpus) -> Self {
        Payload::Corpus(c)
    }
}

impl From<AnnotationObject> for Payload {
    fn from(a: AnnotationObject) -> Self {
        Payload::Annotation(a)
    }
}

/// A decoded envelope, keeping the version it was written with and any
/// unrecognised top-level fields.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub data_model: DataModelVersion,
    pub payload: Payload,
    pub extra: UnknownFields,
}

impl Envelope {
    pub fn new(payload: impl Into<Payload>) -> Self {
        Self {
            data_model: DATA_MODEL_VERSION,
            payload: payload.into(),
            extra: UnknownFields::new(),
        }
    }

    pub fn to_value(&self) -> Value {
        let body = match &self.payload {
            Payload::Corpus(c) => to_value(c),
            Payload::Annotation(a) => annotation_to_value(a),
        };
        let mut map = Map::new();
        for (k, v) in &self.extra {
            map.insert(k.clone(), v.clone());
        }
        map.insert("data_model".into(), Value::String(self.data_model.to_string()));
        map.insert("kind".into(), Value::String(self.payload.kind().into()));
        map.insert("body".into(), body);
        Value::Object(map)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        canonical_bytes(&self.to_value())
    }

    /// Decodes an envelope readable by a consumer at [`DATA_MODEL_VERSION`].
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let value: Value = serde_json::from_slice(bytes).map_err(DecodeError::from_json)?;
        Self::from_value(value)
    }

    pub fn from_value(value: Value) -> Result<Self, DecodeError> {
        let Value::Object(mut map) = value else {
            return Err(DecodeError::Malformed("envelope must be an object".into()));
        };
        let version = take_string(&mut map, "data_model")?;
        let data_model: DataModelVersion = version
            .parse()
            .map_err(|e: super::version::ParseVersionError| DecodeError::InvalidValue(e.to_string()))?;
        if !data_model.compatible_with(&DATA_MODEL_VERSION) {
            return Err(DecodeError::IncompatibleVersion {
                found: data_model,
                supported: DATA_MODEL_VERSION,
            });
        }
        let kind = take_string(&mut map, "kind")?;
        let body = map
            .remove("body")
            .ok_or_else(|| DecodeError::MissingField("body".into()))?;
        let payload = if kind == CORPUS_KIND {
            Payload::Corpus(serde_json::from_value(body).map_err(DecodeError::from_json)?)
        } else {
            let type_id: AnnotationTypeId = kind
                .parse()
                .map_err(|_| DecodeError::UnknownType(kind.clone()))?;
            Payload::Annotation(annotation_from_value(type_id, body)?)
        };
        Ok(Self {
            data_model,
            payload,
            extra: map.into_iter().collect(),
        })
    }
}

/// Encodes a value at the current data model version.
pub fn serialize(payload: &Payload) -> Vec<u8> {
    canonical_bytes(&Envelope::new(payload.clone()).to_value())
}

pub fn deserialize(bytes: &[u8]) -> Result<Payload, DecodeError> {
    Envelope::from_bytes(bytes).map(|e| e.payload)
}

/// Compact JSON with every object's keys in ascending order.
pub fn canonical_bytes(value: &Value) -> Vec<u8> {
    serde_json::to_vec(&sorted(value.clone())).expect("JSON values always serialize")
}

/// Rebuilds objects with sorted keys. Needed when `serde_json` is built with
/// `preserve_order` somewhere in the dependency graph.
pub fn sorted(value: Value) -> Value {
    match value {
        Value::Object(map) => {
            let mut entries: Vec<_> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(entries.into_iter().map(|(k, v)| (k, sorted(v))).collect())
        }
        Value::Array(items) => Value::Array(items.into_iter().map(sorted).collect()),
        other => other,
    }
}

fn to_value<T: Serialize>(value: &T) -> Value {
    serde_json::to_value(value).expect("data model types always serialize")
}

fn take_string(map: &mut Map<String, Value>, field: &str) -> Result<String, DecodeError> {
    match map.remove(field) {
        Some(Value::String(s)) => Ok(s),
        Some(other) => Err(DecodeError::InvalidValue(format!(
            "`{field}` must be a string, got {other}"
        ))),
        None => Err(DecodeError::MissingField(field.into())),
    }
}

fn body_to_value(body: &AnnotationBody) -> Value {
    match body {
        AnnotationBody::PreprocessedDocument(b) => to_value(b),
        AnnotationBody::DocumentFeatures(b) => to_value(b),
        AnnotationBody::SequenceClassification(b) => to_value(b),
        AnnotationBody::SequenceTagging(b) => to_value(b),
        AnnotationBody::Relationship(b) => to_value(b),
        AnnotationBody::Discourse(b) => to_value(b),
        AnnotationBody::Parsing(b) => to_value(b),
        AnnotationBody::Tokens(b) => to_value(b),
        AnnotationBody::Summarization(b) => to_value(b),
        AnnotationBody::QuestionAnswering(b) => to_value(b),
        AnnotationBody::Comparison(b) => to_value(b),
        AnnotationBody::Clusters(b) => to_value(b),
    }
}

pub(crate) fn annotation_to_value(obj: &AnnotationObject) -> Value {
    let mut map = Map::new();
    for (k, v) in &obj.extra {
        map.insert(k.clone(), v.clone());
    }
    if let Value::Object(fields) = body_to_value(&obj.body) {
        map.extend(fields);
    }
    map.insert("id".into(), Value::String(obj.id.to_string()));
    map.insert("corpus_id".into(), Value::String(obj.corpus_id.to_string()));
    map.insert(
        "producer_node".into(),
        obj.producer_node
            .clone()
            .map(Value::String)
            .unwrap_or(Value::Null),
    );
    map.insert("metadata".into(), to_value(&obj.metadata));
    Value::Object(map)
}

fn parse_body<T: DeserializeOwned>(fields: &Map<String, Value>) -> Result<T, DecodeError> {
    serde_json::from_value(Value::Object(fields.clone())).map_err(DecodeError::from_json)
}

fn annotation_from_value(
    type_id: AnnotationTypeId,
    body: Value,
) -> Result<AnnotationObject, DecodeError> {
    use AnnotationTypeId as T;
    let Value::Object(mut fields) = body else {
        return Err(DecodeError::Malformed("annotation body must be an object".into()));
    };
    let parsed = match type_id {
        T::AnnotationObject => {
            return Err(DecodeError::InvalidValue(
                "`annotation_object` is abstract and cannot be instantiated".into(),
            ))
        }
        T::PreprocessedDocument => AnnotationBody::PreprocessedDocument(parse_body(&fields)?),
        T::DocumentFeatures => AnnotationBody::DocumentFeatures(parse_body(&fields)?),
        T::SequenceClassification => AnnotationBody::SequenceClassification(parse_body(&fields)?),
        T::SequenceTagging => AnnotationBody::SequenceTagging(parse_body(&fields)?),
        T::Relationship => AnnotationBody::Relationship(parse_body(&fields)?),
        T::Discourse => AnnotationBody::Discourse(parse_body(&fields)?),
        T::Parsing => AnnotationBody::Parsing(parse_body(&fields)?),
        T::Tokens => AnnotationBody::Tokens(parse_body(&fields)?),
        T::Summarization => AnnotationBody::Summarization(parse_body(&fields)?),
        T::QuestionAnswering => AnnotationBody::QuestionAnswering(parse_body(&fields)?),
        T::Comparison => AnnotationBody::Comparison(parse_body(&fields)?),
        T::Clusters => AnnotationBody::Clusters(parse_body(&fields)?),
    };

    let id = parse_field(&mut fields, "id")?;
    let corpus_id = parse_field(&mut fields, "corpus_id")?;
    let producer_node: Option<String> = match fields.remove("producer_node") {
        None | Some(Value::Null) => None,
        Some(v) => Some(serde_json::from_value(v).map_err(DecodeError::from_json)?),
    };
    let metadata: Metadata = match fields.remove("metadata") {
        None => Metadata::new(),
        Some(v) => serde_json::from_value(v).map_err(DecodeError::from_json)?,
    };
    // Everything the typed body consumed is known; the rest is carried along.
    if let Value::Object(known) = body_to_value(&parsed) {
        for key in known.keys() {
            fields.remove(key);
        }
    }
    Ok(AnnotationObject {
        id,
        type_id,
        producer_node,
        corpus_id,
        metadata,
        body: parsed,
        extra: fields.into_iter().collect(),
    })
}

fn parse_field<T: DeserializeOwned>(
    fields: &mut Map<String, Value>,
    name: &str,
) -> Result<T, DecodeError> {
    let value = fields
        .remove(name)
        .ok_or_else(|| DecodeError::MissingField(name.into()))?;
    serde_json::from_value(value).map_err(|e| DecodeError::InvalidValue(format!("`{name}`: {e}")))
}

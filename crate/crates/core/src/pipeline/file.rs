use serde::{Deserialize, Serialize};
use serde_json::Value;
use uuid::Uuid;

use super::{Pipeline, PipelineEdge, PipelineNode};
use crate::datamodel::envelope::{sorted, DecodeError};
use crate::datamodel::DataModelVersion;

pub const FORMAT: &str = "angler-pipeline/1";
pub const FILE_EXTENSION: &str = "angler";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PipelineFileError {
    #[error("malformed pipeline file: {0}")]
    Malformed(String),
    #[error("unknown pipeline format `{0}`, expected `{FORMAT}`")]
    UnknownFormat(String),
    #[error("missing required field `{0}`")]
    MissingField(String),
    #[error("invalid value: {0}")]
    InvalidValue(String),
}

impl From<DecodeError> for PipelineFileError {
    fn from(e: DecodeError) -> Self {
        match e {
            DecodeError::Malformed(m) => Self::Malformed(m),
            DecodeError::MissingField(f) => Self::MissingField(f),
            DecodeError::UnknownType(t) => Self::InvalidValue(format!("unknown type `{t}`")),
            other => Self::InvalidValue(other.to_string()),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Body {
    id: Uuid,
    name: String,
    nodes: Vec<PipelineNode>,
    edges: Vec<PipelineEdge>,
}

/// Encodes a pipeline as a `.angler` file: pretty-printed JSON with sorted
/// keys and a trailing newline, so saving the same pipeline twice yields the
/// same bytes.
pub fn save(p: &Pipeline) -> Vec<u8> {
    let body = Body {
        id: p.id,
        name: p.name.clone(),
        nodes: p.nodes.clone(),
        edges: p.edges.clone(),
    };
    let file = serde_json::json!({
        "format": FORMAT,
        "data_model": p.created_with.to_string(),
        "pipeline": body,
    });
    let mut bytes = serde_json::to_vec_pretty(&sorted(file)).expect("pipelines serialize");
    bytes.push(b'\n');
    bytes
}

/// Decodes a `.angler` file. Only shape is checked here; semantic problems
/// (including an incompatible data model) are left to validation.
pub fn load(bytes: &[u8]) -> Result<Pipeline, PipelineFileError> {
    let value: Value = serde_json::from_slice(bytes).map_err(DecodeError::from_json)?;
    let Value::Object(mut map) = value else {
        return Err(PipelineFileError::Malformed("pipeline file must be an object".into()));
    };
    match map.remove("format") {
        Some(Value::String(f)) if f == FORMAT => {}
        Some(Value::String(f)) => return Err(PipelineFileError::UnknownFormat(f)),
        Some(other) => return Err(PipelineFileError::UnknownFormat(other.to_string())),
        None => return Err(PipelineFileError::MissingField("format".into())),
    }
    let created_with: DataModelVersion = match map.remove("data_model") {
        Some(Value::String(v)) => v
            .parse()
            .map_err(|e: crate::datamodel::ParseVersionError| PipelineFileError::InvalidValue(e.to_string()))?,
        Some(other) => return Err(PipelineFileError::InvalidValue(format!("data_model: {other}"))),
        None => return Err(PipelineFileError::MissingField("data_model".into())),
    };
    let body = map
        .remove("pipeline")
        .ok_or_else(|| PipelineFileError::MissingField("pipeline".into()))?;
    let body: Body = serde_json::from_value(body).map_err(DecodeError::from_json)?;
    Ok(Pipeline {
        id: body.id,
        name: body.name,
        nodes: body.nodes,
        edges: body.edges,
        created_with,
    })
}

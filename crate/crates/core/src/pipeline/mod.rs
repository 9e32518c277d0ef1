//! Typed processing graphs.
//!
//! A [`Pipeline`] wires source nodes (which emit a corpus) and processor
//! nodes (which reference a catalog entry by module uuid and processor name)
//! through port-to-port edges. [`validate`] reports everything that would
//! stop it from running, [`plan`] orders it into stages, and [`save`] /
//! [`load`] handle the portable `.angler` file.

mod file;
mod plan;
mod validate;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use uuid::Uuid;

use crate::datamodel::{Corpus, DataModelVersion, DATA_MODEL_VERSION};
use crate::descriptor::ProcessorDescriptor;

pub use file::{load, save, PipelineFileError, FILE_EXTENSION, FORMAT};
pub use plan::{plan, PlanError, Stages};
pub use validate::{
    validate, validate_with_version, Diagnostic, DiagnosticCode, Severity,
};

/// Name of the single output port every source node exposes.
pub const SOURCE_PORT: &str = "corpus";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    pub id: Uuid,
    pub name: String,
    pub nodes: Vec<PipelineNode>,
    pub edges: Vec<PipelineEdge>,
    /// Written to and read from the file's top-level `data_model` field.
    #[serde(skip, default = "current_version")]
    pub created_with: DataModelVersion,
}

fn current_version() -> DataModelVersion {
    DATA_MODEL_VERSION
}

impl Pipeline {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            id: Uuid::new_v4(),
            name: name.into(),
            nodes: Vec::new(),
            edges: Vec::new(),
            created_with: DATA_MODEL_VERSION,
        }
    }

    pub fn node(&self, node_id: &str) -> Option<&PipelineNode> {
        self.nodes.iter().find(|n| n.node_id == node_id)
    }

    pub fn add_node(&mut self, node: PipelineNode) -> &mut Self {
        self.nodes.push(node);
        self
    }

    pub fn connect(
        &mut self,
        from_node: &str,
        from_port: &str,
        to_node: &str,
        to_port: &str,
    ) -> &mut Self {
        self.edges.push(PipelineEdge {
            from_node: from_node.into(),
            from_port: from_port.into(),
            to_node: to_node.into(),
            to_port: to_port.into(),
        });
        self
    }

    /// Edges feeding `node_id`, keyed by input port.
    pub fn inputs_of(&self, node_id: &str) -> BTreeMap<&str, &PipelineEdge> {
        self.edges
            .iter()
            .filter(|e| e.to_node == node_id)
            .map(|e| (e.to_port.as_str(), e))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineNode {
    pub node_id: String,
    #[serde(flatten)]
    pub kind: NodeKind,
    /// Canvas placement. Carried in files, ignored by validation and planning.
    #[serde(default)]
    pub position: Position,
}

impl PipelineNode {
    /// A source bound to whatever corpus the job is submitted with.
    pub fn source(node_id: impl Into<String>) -> Self {
        Self {
            node_id: node_id.into(),
            kind: NodeKind::Source { corpus: None },
            position: Position::default(),
        }
    }

    pub fn processor(node_id: impl Into<String>, module: Uuid, processor: impl Into<String>) -> Self {
        Self {
            node_id: node_id.into(),
            kind: NodeKind::Processor(ProcessorRef {
                module,
                processor: processor.into(),
                settings: Value::Object(Default::default()),
            }),
            position: Position::default(),
        }
    }

    pub fn with_settings(mut self, settings: Value) -> Self {
        if let NodeKind::Processor(p) = &mut self.kind {
            p.settings = settings;
        }
        self
    }

    pub fn at(mut self, x: f64, y: f64) -> Self {
        self.position = Position { x, y };
        self
    }

    pub fn processor_ref(&self) -> Option<&ProcessorRef> {
        match &self.kind {
            NodeKind::Processor(p) => Some(p),
            NodeKind::Source { .. } => None,
        }
    }

    pub fn is_source(&self) -> bool {
        matches!(self.kind, NodeKind::Source { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeKind {
    Source {
        #[serde(default)]
        corpus: Option<SourceCorpus>,
    },
    Processor(ProcessorRef),
}

/// A catalog reference. Files never carry module URLs, only these keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessorRef {
    pub module: Uuid,
    pub processor: String,
    /// Opaque to the backend; handed to the module verbatim.
    #[serde(default)]
    pub settings: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceCorpus {
    Ref(Uuid),
    Inline(Corpus),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PipelineEdge {
    pub from_node: String,
    pub from_port: String,
    pub to_node: String,
    pub to_port: String,
}

/// Read access to processor descriptors by `(module uuid, processor name)`.
pub trait ProcessorCatalog {
    fn processor(&self, module: &Uuid, name: &str) -> Option<&ProcessorDescriptor>;
}

impl ProcessorCatalog for [ProcessorDescriptor] {
    fn processor(&self, module: &Uuid, name: &str) -> Option<&ProcessorDescriptor> {
        self.iter()
            .find(|p| p.module.as_ref() == Some(module) && p.name == name)
    }
}

impl ProcessorCatalog for Vec<ProcessorDescriptor> {
    fn processor(&self, module: &Uuid, name: &str) -> Option<&ProcessorDescriptor> {
        self.as_slice().processor(module, name)
    }
}

impl ProcessorCatalog for BTreeMap<(Uuid, String), ProcessorDescriptor> {
    fn processor(&self, module: &Uuid, name: &str) -> Option<&ProcessorDescriptor> {
        self.get(&(*module, name.to_string()))
    }
}

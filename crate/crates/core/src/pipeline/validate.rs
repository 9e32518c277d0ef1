use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use petgraph::graph::{DiGraph, NodeIndex};
use serde::{Deserialize, Serialize};

use super::{NodeKind, Pipeline, ProcessorCatalog, SOURCE_PORT};
use crate::datamodel::{DataModelVersion, PortType, TypeHierarchy, DATA_MODEL_VERSION};
use crate::descriptor::ProcessorDescriptor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

/// Stable diagnostic codes. The set is closed; tooling may match on them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DiagnosticCode {
    /// Processor node names a (module, processor) pair missing from the catalog.
    UnknownProcessor,
    /// Edge endpoint names a node that does not exist.
    UnknownNode,
    /// Edge names a port the node does not declare.
    UnknownPort,
    /// A declared input port has no incoming edge. Every input is required.
    UnconnectedInput,
    /// The producing port's type is not accepted by the consuming port.
    TypeMismatch,
    Cycle,
    /// More than one edge feeds the same input port.
    DuplicateInput,
    NoSource,
    /// The pipeline was written under an incompatible data model.
    VersionMismatch,
    /// Two nodes share a node id.
    DuplicateNode,
}

impl DiagnosticCode {
    pub const ALL: [DiagnosticCode; 10] = [
        Self::UnknownProcessor,
        Self::UnknownNode,
        Self::UnknownPort,
        Self::UnconnectedInput,
        Self::TypeMismatch,
        Self::Cycle,
        Self::DuplicateInput,
        Self::NoSource,
        Self::VersionMismatch,
        Self::DuplicateNode,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::UnknownProcessor => "UNKNOWN_PROCESSOR",
            Self::UnknownNode => "UNKNOWN_NODE",
            Self::UnknownPort => "UNKNOWN_PORT",
            Self::UnconnectedInput => "UNCONNECTED_INPUT",
            Self::TypeMismatch => "TYPE_MISMATCH",
            Self::Cycle => "CYCLE",
            Self::DuplicateInput => "DUPLICATE_INPUT",
            Self::NoSource => "NO_SOURCE",
            Self::VersionMismatch => "VERSION_MISMATCH",
            Self::DuplicateNode => "DUPLICATE_NODE",
        }
    }
}

impl fmt::Display for DiagnosticCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: DiagnosticCode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<String>,
    /// Index into the pipeline's edge list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge: Option<usize>,
    pub message: String,
}

impl Diagnostic {
    fn error(code: DiagnosticCode, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Error,
            code,
            node: None,
            edge: None,
            message: message.into(),
        }
    }

    fn on_node(mut self, node: &str) -> Self {
        self.node = Some(node.to_string());
        self
    }

    fn on_edge(mut self, edge: usize) -> Self {
        self.edge = Some(edge);
        self
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code)?;
        if let Some(node) = &self.node {
            write!(f, " node={node}")?;
        }
        if let Some(edge) = self.edge {
            write!(f, " edge={edge}")?;
        }
        write!(f, " {}", self.message)
    }
}

/// What a node looks like from the outside: its input and output port types.
enum Resolved<'a> {
    Source,
    Processor(&'a ProcessorDescriptor),
    Unknown,
}

impl Resolved<'_> {
    fn output(&self, port: &str) -> Option<PortType> {
        match self {
            Resolved::Source => (port == SOURCE_PORT).then_some(PortType::Corpus),
            Resolved::Processor(p) => p.output(port).map(|o| o.port_type),
            Resolved::Unknown => None,
        }
    }

    fn input(&self, port: &str) -> Option<&[PortType]> {
        match self {
            Resolved::Source | Resolved::Unknown => None,
            Resolved::Processor(p) => p.input(port).map(|i| i.types.as_slice()),
        }
    }
}

/// Validates against the data model version of this build.
pub fn validate<C: ProcessorCatalog + ?Sized>(
    p: &Pipeline,
    catalog: &C,
    hierarchy: &TypeHierarchy,
) -> Vec<Diagnostic> {
    validate_with_version(p, catalog, hierarchy, &DATA_MODEL_VERSION)
}

/// Every problem that would stop `p` from running, in a deterministic order.
/// An empty result means the pipeline is runnable.
pub fn validate_with_version<C: ProcessorCatalog + ?Sized>(
    p: &Pipeline,
    catalog: &C,
    hierarchy: &TypeHierarchy,
    backend: &DataModelVersion,
) -> Vec<Diagnostic> {
    use DiagnosticCode::*;
    let mut out = Vec::new();

    if !p.created_with.compatible_with(backend) {
        out.push(Diagnostic::error(
            VersionMismatch,
            format!("pipeline uses data model {}, backend speaks {backend}", p.created_with),
        ));
    }

    // First occurrence wins for lookups.
    let mut nodes: BTreeMap<&str, Resolved> = BTreeMap::new();
    for node in &p.nodes {
        if nodes.contains_key(node.node_id.as_str()) {
            out.push(
                Diagnostic::error(DuplicateNode, format!("node id `{}` is used more than once", node.node_id))
                    .on_node(&node.node_id),
            );
            continue;
        }
        let resolved = match &node.kind {
            NodeKind::Source { .. } => Resolved::Source,
            NodeKind::Processor(r) => match catalog.processor(&r.module, &r.processor) {
                Some(desc) => Resolved::Processor(desc),
                None => {
                    out.push(
                        Diagnostic::error(
                            UnknownProcessor,
                            format!("processor `{}` of module {} is not registered", r.processor, r.module),
                        )
                        .on_node(&node.node_id),
                    );
                    Resolved::Unknown
                }
            },
        };
        nodes.insert(&node.node_id, resolved);
    }

    if !p.nodes.iter().any(|n| n.is_source()) {
        out.push(Diagnostic::error(NoSource, "pipeline has no source node"));
    }

    let mut fed: BTreeSet<(&str, &str)> = BTreeSet::new();
    for (i, edge) in p.edges.iter().enumerate() {
        let from = nodes.get(edge.from_node.as_str());
        let to = nodes.get(edge.to_node.as_str());
        for (end, node) in [(&edge.from_node, from), (&edge.to_node, to)] {
            if node.is_none() {
                out.push(
                    Diagnostic::error(UnknownNode, format!("edge refers to missing node `{end}`"))
                        .on_edge(i),
                );
            }
        }
        let (Some(from), Some(to)) = (from, to) else { continue };

        let produced = match from {
            Resolved::Unknown => None,
            resolved => {
                let t = resolved.output(&edge.from_port);
                if t.is_none() {
                    out.push(
                        Diagnostic::error(
                            UnknownPort,
                            format!("node `{}` has no output port `{}`", edge.from_node, edge.from_port),
                        )
                        .on_node(&edge.from_node)
                        .on_edge(i),
                    );
                }
                t
            }
        };
        let accepted = match to {
            Resolved::Unknown => None,
            resolved => {
                let t = resolved.input(&edge.to_port);
                if t.is_none() {
                    out.push(
                        Diagnostic::error(
                            UnknownPort,
                            format!("node `{}` has no input port `{}`", edge.to_node, edge.to_port),
                        )
                        .on_node(&edge.to_node)
                        .on_edge(i),
                    );
                }
                t
            }
        };
        if let (Some(produced), Some(accepted)) = (produced, accepted) {
            if !hierarchy.accepts(accepted, produced) {
                let wanted: Vec<_> = accepted.iter().map(|t| t.as_str()).collect();
                out.push(
                    Diagnostic::error(
                        TypeMismatch,
                        format!(
                            "`{}.{}` produces {produced}, `{}.{}` accepts [{}]",
                            edge.from_node,
                            edge.from_port,
                            edge.to_node,
                            edge.to_port,
                            wanted.join(", ")
                        ),
                    )
                    .on_node(&edge.to_node)
                    .on_edge(i),
                );
            }
        }
        if !fed.insert((&edge.to_node, &edge.to_port)) {
            out.push(
                Diagnostic::error(
                    DuplicateInput,
                    format!("input `{}.{}` already has a producer", edge.to_node, edge.to_port),
                )
                .on_node(&edge.to_node)
                .on_edge(i),
            );
        }
    }

    for (id, resolved) in &nodes {
        if let Resolved::Processor(desc) = resolved {
            for port in &desc.inputs {
                if !fed.contains(&(*id, port.name.as_str())) {
                    out.push(
                        Diagnostic::error(
                            UnconnectedInput,
                            format!("input `{id}.{}` is not connected", port.name),
                        )
                        .on_node(id),
                    );
                }
            }
        }
    }

    for cycle in cycles(p, nodes.keys().copied()) {
        out.push(
            Diagnostic::error(Cycle, format!("cycle through {}", cycle.join(" -> ")))
                .on_node(&cycle[0]),
        );
    }
    out
}

/// Strongly connected components that contain a cycle, each sorted, ordered
/// by their first node id.
pub(crate) fn cycles<'a>(p: &'a Pipeline, ids: impl Iterator<Item = &'a str>) -> Vec<Vec<String>> {
    let mut graph = DiGraph::<&str, ()>::new();
    let index: BTreeMap<&str, NodeIndex> = ids.map(|id| (id, graph.add_node(id))).collect();
    for e in &p.edges {
        if let (Some(a), Some(b)) = (index.get(e.from_node.as_str()), index.get(e.to_node.as_str())) {
            graph.update_edge(*a, *b, ());
        }
    }
    let mut found: Vec<Vec<String>> = petgraph::algo::tarjan_scc(&graph)
        .into_iter()
        .filter(|scc| scc.len() > 1 || graph.contains_edge(scc[0], scc[0]))
        .map(|scc| {
            let mut ids: Vec<String> = scc.iter().map(|i| graph[*i].to_string()).collect();
            ids.sort();
            ids
        })
        .collect();
    found.sort();
    found
}

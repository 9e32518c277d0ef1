use std::collections::{BTreeMap, BTreeSet};

use super::validate::cycles;
use super::Pipeline;

/// Execution stages in order. Every node in a stage depends only on nodes in
/// earlier stages, so a stage's nodes may run concurrently.
pub type Stages = Vec<Vec<String>>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanError {
    #[error("pipeline contains a cycle through {}", .0.join(", "))]
    Cycle(Vec<String>),
    #[error("edge refers to missing node `{0}`")]
    UnknownNode(String),
    #[error("node id `{0}` is used more than once")]
    DuplicateNode(String),
}

/// Layers the graph: a node lands in the first stage after all of its
/// producers. Nodes within a stage are sorted by node id.
pub fn plan(p: &Pipeline) -> Result<Stages, PlanError> {
    let mut preds: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for node in &p.nodes {
        if preds.insert(&node.node_id, BTreeSet::new()).is_some() {
            return Err(PlanError::DuplicateNode(node.node_id.clone()));
        }
    }
    for e in &p.edges {
        for end in [&e.from_node, &e.to_node] {
            if !preds.contains_key(end.as_str()) {
                return Err(PlanError::UnknownNode(end.clone()));
            }
        }
        preds.get_mut(e.to_node.as_str()).unwrap().insert(&e.from_node);
    }

    let mut placed: BTreeSet<&str> = BTreeSet::new();
    let mut stages = Stages::new();
    while placed.len() < preds.len() {
        // BTreeMap iteration keeps each stage sorted.
        let stage: Vec<&str> = preds
            .iter()
            .filter(|(id, ps)| !placed.contains(*id) && ps.iter().all(|p| placed.contains(p)))
            .map(|(id, _)| *id)
            .collect();
        if stage.is_empty() {
            let ids = preds.keys().copied().filter(|id| !placed.contains(id));
            let cycle = cycles(p, ids).into_iter().next().unwrap_or_default();
            return Err(PlanError::Cycle(cycle));
        }
        placed.extend(stage.iter().copied());
        stages.push(stage.into_iter().map(String::from).collect());
    }
    Ok(stages)
}

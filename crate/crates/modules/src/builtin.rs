//! The three shipped modules: `angler-preproc`, `angler-dict-ner` and
//! `angler-cluster`.

use std::collections::BTreeMap;

use angler_core::datamodel::{
    AnnotationBody, AnnotationObject, AnnotationTypeId, ClustersBody, Payload, PortType,
    PreprocessedDocumentBody, RewrittenDocument, SequenceTaggingBody, TokensBody,
    DATA_MODEL_VERSION,
};
use angler_core::descriptor::{InputPort, ModuleDescriptor, OutputPort, ProcessorDescriptor};
use serde_json::Value;
use uuid::{uuid, Uuid};

use crate::algorithms::{self, Gazetteer};
use crate::server::{ModuleApp, Outputs, ProcessorSpec, Quirks, Request};

pub const PREPROC_UUID: Uuid = uuid!("5d1c8a52-2b8e-4c1f-9a57-0e2f4b6d7a01");
pub const NER_UUID: Uuid = uuid!("5d1c8a52-2b8e-4c1f-9a57-0e2f4b6d7a02");
pub const CLUSTER_UUID: Uuid = uuid!("5d1c8a52-2b8e-4c1f-9a57-0e2f4b6d7a03");

pub const TOKENIZER: &str = "whitespace-tokenizer";
pub const SENTENCE_SPLITTER: &str = "regex-sentence-splitter";
pub const DICTIONARY_NER: &str = "dictionary-ner";
pub const OVERLAP_CLUSTERER: &str = "overlap-clusterer";

pub const DEFAULT_THRESHOLD: f64 = 0.5;

pub(crate) fn about(uuid: Uuid, name: &str, desc: &str) -> ModuleDescriptor {
    ModuleDescriptor {
        uuid,
        name: name.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        data_model: DATA_MODEL_VERSION,
        desc: Some(desc.into()),
        authors: vec!["angler contributors".into()],
        organisation: None,
        url: None,
        base_url: None,
    }
}

/// A descriptor whose endpoints follow this crate's server layout.
pub(crate) fn descriptor(
    name: &str,
    short_name: &str,
    category: &str,
    inputs: &[(&str, &[PortType])],
    outputs: &[(&str, PortType)],
) -> ProcessorDescriptor {
    ProcessorDescriptor {
        name: name.into(),
        short_name: Some(short_name.into()),
        data_endpoint: format!("processors/{name}/data"),
        settings_endpoint: Some(format!("processors/{name}/settings")),
        ui_endpoint: Some(format!("processors/{name}/ui")),
        icon: format!("icons/{name}.svg"),
        category: category.into(),
        inputs: inputs
            .iter()
            .map(|(n, types)| InputPort { name: n.to_string(), types: types.to_vec() })
            .collect(),
        outputs: outputs
            .iter()
            .map(|(n, t)| OutputPort { name: n.to_string(), port_type: *t })
            .collect(),
        module: None,
    }
}

fn docs_page(title: &str, body: &str) -> String {
    format!(
        "<!doctype html>\n<html><head><meta charset=\"utf-8\"><title>{title}</title></head>\n\
         <body><h1>{title}</h1>\n{body}\n</body></html>\n"
    )
}

fn single(port: &str, payload: impl Into<Payload>) -> Outputs {
    BTreeMap::from([(port.to_string(), payload.into())])
}

pub fn tokenizer_descriptor() -> ProcessorDescriptor {
    descriptor(
        TOKENIZER,
        "Tokenizer",
        "preprocessing",
        &[("corpus", &[PortType::Corpus])],
        &[("tokens", AnnotationTypeId::Tokens.into())],
    )
}

pub fn sentence_splitter_descriptor() -> ProcessorDescriptor {
    descriptor(
        SENTENCE_SPLITTER,
        "Sentences",
        "preprocessing",
        &[("corpus", &[PortType::Corpus])],
        &[("documents", AnnotationTypeId::PreprocessedDocument.into())],
    )
}

pub fn ner_descriptor() -> ProcessorDescriptor {
    descriptor(
        DICTIONARY_NER,
        "NER",
        "semantic",
        &[("tokens", &[AnnotationTypeId::Tokens.into()])],
        &[("entities", AnnotationTypeId::SequenceTagging.into())],
    )
}

pub fn clusterer_descriptor() -> ProcessorDescriptor {
    descriptor(
        OVERLAP_CLUSTERER,
        "Clusters",
        "semantic",
        &[("tokens", &[AnnotationTypeId::Tokens.into()])],
        &[("clusters", AnnotationTypeId::Clusters.into())],
    )
}

pub(crate) fn tokenize(req: &Request) -> Result<Outputs, String> {
    let Payload::Corpus(corpus) = req.input("corpus")? else {
        return Err("input `corpus` must be a corpus".into());
    };
    let tokens = corpus.documents.iter().flat_map(algorithms::whitespace_tokens).collect();
    Ok(single(
        "tokens",
        AnnotationObject::new(corpus.id, AnnotationBody::Tokens(TokensBody { tokens })),
    ))
}

fn split_sentences(req: &Request) -> Result<Outputs, String> {
    let Payload::Corpus(corpus) = req.input("corpus")? else {
        return Err("input `corpus` must be a corpus".into());
    };
    let documents = corpus
        .documents
        .iter()
        .map(|d| RewrittenDocument {
            document_id: d.id,
            new_text: algorithms::sentence_per_line(&d.text),
        })
        .collect();
    Ok(single(
        "documents",
        AnnotationObject::new(
            corpus.id,
            AnnotationBody::PreprocessedDocument(PreprocessedDocumentBody { documents }),
        ),
    ))
}

/// Reads `{"gazetteer": {"surface": "LABEL", ...}}`; anything absent means empty.
pub fn gazetteer_from_settings(settings: &Value) -> Result<Gazetteer, String> {
    match settings.get("gazetteer") {
        None | Some(Value::Null) => Ok(Gazetteer::default()),
        Some(Value::Object(map)) => map
            .iter()
            .map(|(k, v)| match v {
                Value::String(label) => Ok((k.as_str(), label.clone())),
                other => Err(format!("gazetteer label for `{k}` must be text, got {other}")),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Gazetteer::new),
        Some(other) => Err(format!("`gazetteer` must be an object, got {other}")),
    }
}

pub fn threshold_from_settings(settings: &Value) -> Result<f64, String> {
    match settings.get("threshold") {
        None | Some(Value::Null) => Ok(DEFAULT_THRESHOLD),
        Some(v) => v
            .as_f64()
            .filter(|t| (0.0..=1.0).contains(t))
            .ok_or_else(|| format!("`threshold` must be a number in [0, 1], got {v}")),
    }
}

fn token_input(req: &Request) -> Result<&AnnotationObject, String> {
    match req.input("tokens")? {
        Payload::Annotation(a) if a.tokens().is_some() => Ok(a),
        other => Err(format!("input `tokens` must carry tokens, got {}", other.kind())),
    }
}

fn tag(req: &Request) -> Result<Outputs, String> {
    let gazetteer = gazetteer_from_settings(&req.settings)?;
    let input = token_input(req)?;
    let tags = algorithms::tag_tokens(input.tokens().unwrap_or_default(), &gazetteer);
    Ok(single(
        "entities",
        AnnotationObject::new(input.corpus_id, AnnotationBody::SequenceTagging(SequenceTaggingBody { tags })),
    ))
}

fn cluster(req: &Request) -> Result<Outputs, String> {
    let threshold = threshold_from_settings(&req.settings)?;
    let input = token_input(req)?;
    let clusters = algorithms::single_link_clusters(input.tokens().unwrap_or_default(), threshold);
    Ok(single(
        "clusters",
        AnnotationObject::new(input.corpus_id, AnnotationBody::Clusters(ClustersBody { clusters })),
    ))
}

pub fn preproc() -> ModuleApp {
    ModuleApp {
        about: about(PREPROC_UUID, "angler-preproc", "Whitespace tokenization and sentence splitting.").to_about(),
        processors: vec![
            ProcessorSpec::new(tokenizer_descriptor(), tokenize),
            ProcessorSpec::new(sentence_splitter_descriptor(), split_sentences),
        ],
        docs: Some(docs_page(
            "angler-preproc",
            "<h2>whitespace-tokenizer</h2>\n<p>Input: corpus. Output: tokens. Every maximal run of \
             non-whitespace characters becomes one token; spans count characters.</p>\n\
             <h2>regex-sentence-splitter</h2>\n<p>Input: corpus. Output: preprocessed_document with \
             one sentence per line. A sentence ends after <code>.</code>, <code>!</code> or \
             <code>?</code> followed by whitespace.</p>",
        )),
        quirks: Quirks::default(),
    }
}

pub fn ner() -> ModuleApp {
    ModuleApp {
        about: about(NER_UUID, "angler-dict-ner", "Gazetteer lookup over tokens.").to_about(),
        processors: vec![ProcessorSpec::new(ner_descriptor(), tag)],
        docs: Some(docs_page(
            "angler-dict-ner",
            "<h2>dictionary-ner</h2>\n<p>Input: tokens (parsing is accepted too). Output: \
             sequence_tagging. A token is tagged when its lower-cased surface is a gazetteer key.</p>\n\
             <pre>{\"gazetteer\": {\"ljubljana\": \"LOC\"}}</pre>",
        )),
        quirks: Quirks::default(),
    }
}

pub fn clusterer() -> ModuleApp {
    ModuleApp {
        about: about(CLUSTER_UUID, "angler-cluster", "Document clustering by vocabulary overlap.").to_about(),
        processors: vec![ProcessorSpec::new(clusterer_descriptor(), cluster)],
        docs: Some(docs_page(
            "angler-cluster",
            "<h2>overlap-clusterer</h2>\n<p>Input: tokens. Output: clusters. Documents are linked \
             when the Jaccard overlap of their token surfaces reaches the threshold (default 0.5); \
             clusters are the connected groups.</p>\n<pre>{\"threshold\": 0.5}</pre>",
        )),
        quirks: Quirks::default(),
    }
}

/// Every builtin processor descriptor with its owning module filled in.
pub fn catalog() -> Vec<ProcessorDescriptor> {
    [
        (PREPROC_UUID, tokenizer_descriptor()),
        (PREPROC_UUID, sentence_splitter_descriptor()),
        (NER_UUID, ner_descriptor()),
        (CLUSTER_UUID, clusterer_descriptor()),
    ]
    .into_iter()
    .map(|(module, mut d)| {
        d.module = Some(module);
        d
    })
    .collect()
}

//! Proptest generators for corpora, annotation objects and pipelines.
//!
//! Generated annotation objects are valid against the corpus they were drawn
//! for, so the same strategies serve round-trip and validation properties.

use std::collections::BTreeMap;

use proptest::collection::{btree_map, vec};
use proptest::prelude::*;
use proptest::sample::select;
use serde_json::{json, Value};
use uuid::Uuid;

use crate::datamodel::*;
use crate::pipeline::{NodeKind, Pipeline, PipelineNode, SourceCorpus, SOURCE_PORT};

pub fn arb_uuid() -> impl Strategy<Value = Uuid> {
    any::<u128>().prop_map(Uuid::from_u128)
}

fn arb_text() -> impl Strategy<Value = String> {
    // Mixes ASCII, multi-byte letters and whitespace.
    "[a-zA-Z0-9čšžđ .,!?\n\t]{0,40}"
}

fn arb_label() -> impl Strategy<Value = String> {
    "[A-Za-z_]{1,8}"
}

pub fn arb_metadata() -> impl Strategy<Value = Metadata> {
    btree_map("[a-z]{1,6}", "[ -~]{0,10}", 0..3)
        .prop_map(|m| Metadata::try_from(m).expect("generated keys are non-empty"))
}

fn arb_extra() -> impl Strategy<Value = UnknownFields> {
    btree_map(
        "x_[a-z]{1,5}",
        prop_oneof![
            any::<i32>().prop_map(Value::from),
            "[a-z]{0,5}".prop_map(Value::from),
            Just(json!({"nested": [1, 2]})),
        ],
        0..2,
    )
}

fn arb_spans(len: usize) -> impl Strategy<Value = Vec<Span>> {
    vec((0..=len, 0..=len), 0..4).prop_map(|pairs| {
        let mut spans: Vec<Span> = pairs
            .into_iter()
            .map(|(a, b)| Span::new(a.min(b), a.max(b)).unwrap())
            .collect();
        spans.sort();
        spans
    })
}

/// Sorted, non-overlapping spans.
fn arb_sentences(len: usize) -> impl Strategy<Value = Vec<Span>> {
    vec(0..=len, 0..6).prop_map(move |mut cuts| {
        cuts.sort();
        cuts.dedup();
        cuts.windows(2)
            .map(|w| Span::new(w[0], w[1]).unwrap())
            .collect()
    })
}

pub fn arb_document() -> impl Strategy<Value = Document> {
    (arb_uuid(), arb_text()).prop_flat_map(|(id, text)| {
        let len = text.chars().count();
        (
            Just(id),
            Just(text),
            proptest::option::of(arb_sentences(len)),
            proptest::option::of(arb_spans(len)),
            arb_metadata(),
            arb_extra(),
        )
            .prop_map(|(id, text, sentences, tokens, metadata, extra)| Document {
                id,
                text,
                sentences,
                tokens,
                metadata,
                extra,
            })
    })
}

/// A valid corpus with at least one document.
pub fn arb_corpus() -> impl Strategy<Value = Corpus> {
    (
        arb_uuid(),
        "[A-Za-z ]{0,12}",
        vec(arb_document(), 1..4),
        arb_metadata(),
        arb_extra(),
    )
        .prop_map(|(id, name, mut documents, metadata, extra)| {
            // Document ids must be unique within the corpus.
            for (i, d) in documents.iter_mut().enumerate() {
                d.id = Uuid::from_u128(d.id.as_u128() ^ (i as u128 + 1));
            }
            documents.dedup_by_key(|d| d.id);
            Corpus {
                id,
                name,
                documents,
                metadata,
                extra,
            }
        })
}

/// A location inside one of the corpus documents.
fn arb_location(corpus: &Corpus) -> impl Strategy<Value = Location> {
    let docs: Vec<(Uuid, usize)> = corpus.document_lengths().into_iter().collect();
    select(docs).prop_flat_map(|(document_id, len)| {
        (0..=len, 0..=len).prop_map(move |(a, b)| Location {
            document_id,
            span: Span::new(a.min(b), a.max(b)).unwrap(),
        })
    })
}

fn arb_doc_id(corpus: &Corpus) -> impl Strategy<Value = Uuid> {
    select(corpus.documents.iter().map(|d| d.id).collect::<Vec<_>>())
}

fn arb_confidence() -> impl Strategy<Value = f64> {
    (0u32..=1000).prop_map(|c| f64::from(c) / 1000.0)
}

fn arb_tokens(corpus: &Corpus) -> impl Strategy<Value = Vec<Token>> {
    vec((arb_location(corpus), "[a-z.]{0,6}"), 0..5).prop_map(|items| {
        items
            .into_iter()
            .map(|(loc, surface)| Token {
                document_id: loc.document_id,
                span: loc.span,
                surface,
            })
            .collect()
    })
}

/// A body of the given concrete type, valid against `corpus`.
pub fn arb_body(type_id: AnnotationTypeId, corpus: &Corpus) -> BoxedStrategy<AnnotationBody> {
    use AnnotationTypeId as T;
    let c = corpus.clone();
    match type_id {
        T::AnnotationObject => panic!("the root type has no body"),
        T::PreprocessedDocument => vec((arb_doc_id(&c), arb_text()), 0..3)
            .prop_map(|docs| {
                AnnotationBody::PreprocessedDocument(PreprocessedDocumentBody {
                    documents: docs
                        .into_iter()
                        .map(|(document_id, new_text)| RewrittenDocument {
                            document_id,
                            new_text,
                        })
                        .collect(),
                })
            })
            .boxed(),
        T::DocumentFeatures => btree_map(
            arb_doc_id(&c),
            btree_map(
                "[a-z]{1,6}",
                prop_oneof![
                    (-1e6f64..1e6).prop_map(FeatureValue::Number),
                    "[a-z]{0,6}".prop_map(FeatureValue::Text),
                ],
                0..3,
            ),
            0..3,
        )
        .prop_map(|features| AnnotationBody::DocumentFeatures(DocumentFeaturesBody { features }))
        .boxed(),
        T::SequenceClassification => (
            arb_location(&c),
            any::<bool>(),
            arb_label(),
            arb_confidence(),
        )
            .prop_map(|(loc, whole, label, confidence)| {
                AnnotationBody::SequenceClassification(SequenceClassificationBody {
                    target: ClassificationTarget {
                        document_id: loc.document_id,
                        span: (!whole).then_some(loc.span),
                    },
                    label,
                    confidence,
                })
            })
            .boxed(),
        T::SequenceTagging => vec((arb_location(&c), arb_label(), arb_confidence()), 0..5)
            .prop_map(|items| {
                AnnotationBody::SequenceTagging(SequenceTaggingBody {
                    tags: items
                        .into_iter()
                        .map(|(loc, tag, confidence)| Tag {
                            document_id: loc.document_id,
                            span: loc.span,
                            tag,
                            confidence,
                        })
                        .collect(),
                })
            })
            .boxed(),
        T::Relationship => {
            let entity = prop_oneof![
                arb_location(&c).prop_map(EntityRef::Span),
                arb_uuid().prop_map(|annotation_id| EntityRef::Annotation { annotation_id }),
            ];
            (entity.clone(), entity, arb_label())
                .prop_map(|(source, target, relation)| {
                    AnnotationBody::Relationship(RelationshipBody {
                        source,
                        target,
                        relation,
                    })
                })
                .boxed()
        }
        T::Discourse => vec((arb_label(), vec(arb_location(&c), 0..3)), 0..3)
            .prop_map(|entities| {
                AnnotationBody::Discourse(DiscourseBody {
                    entities: entities
                        .into_iter()
                        .map(|(label, mentions)| Entity { label, mentions })
                        .collect(),
                })
            })
            .boxed(),
        T::Tokens => arb_tokens(&c)
            .prop_map(|tokens| AnnotationBody::Tokens(TokensBody { tokens }))
            .boxed(),
        T::Parsing => arb_tokens(&c)
            .prop_flat_map(|tokens| {
                let n = tokens.len();
                let members = if n == 0 {
                    Just(Vec::new()).boxed()
                } else {
                    vec(0..n, 0..4).boxed()
                };
                (Just(tokens), vec((arb_label(), members), 0..3))
            })
            .prop_map(|(tokens, groups)| {
                AnnotationBody::Parsing(ParsingBody {
                    tokens,
                    groups: groups
                        .into_iter()
                        .map(|(label, members)| TokenGroup { label, members })
                        .collect(),
                })
            })
            .boxed(),
        T::Summarization => (arb_doc_id(&c), arb_text())
            .prop_map(|(document_id, summary)| {
                AnnotationBody::Summarization(SummarizationBody {
                    document_id,
                    summary,
                })
            })
            .boxed(),
        T::QuestionAnswering => vec(
            (arb_text(), arb_text(), proptest::option::of(arb_location(&c))),
            0..3,
        )
        .prop_map(|pairs| {
            AnnotationBody::QuestionAnswering(QuestionAnsweringBody {
                pairs: pairs
                    .into_iter()
                    .map(|(question, answer, support)| QuestionAnswer {
                        question,
                        answer,
                        support,
                    })
                    .collect(),
            })
        })
        .boxed(),
        T::Comparison => vec((arb_location(&c), arb_location(&c), -1.0f64..=1.0), 0..3)
            .prop_map(|pairs| {
                AnnotationBody::Comparison(ComparisonBody {
                    pairs: pairs
                        .into_iter()
                        .map(|(part_a, part_b, similarity)| Similarity {
                            part_a,
                            part_b,
                            similarity,
                        })
                        .collect(),
                })
            })
            .boxed(),
        T::Clusters => {
            let ids: Vec<Uuid> = c.documents.iter().map(|d| d.id).collect();
            let n = ids.len();
            // Assign each document to a cluster or leave it out; clusters stay disjoint.
            vec(proptest::option::of(0..n), n)
                .prop_map(move |assignment| {
                    let mut clusters: BTreeMap<usize, Vec<Uuid>> = BTreeMap::new();
                    for (doc, slot) in ids.iter().zip(assignment) {
                        if let Some(k) = slot {
                            clusters.entry(k).or_default().push(*doc);
                        }
                    }
                    AnnotationBody::Clusters(ClustersBody {
                        clusters: clusters.into_values().collect(),
                    })
                })
                .boxed()
        }
    }
}

pub fn arb_object_of(type_id: AnnotationTypeId, corpus: &Corpus) -> BoxedStrategy<AnnotationObject> {
    let corpus_id = corpus.id;
    (
        arb_uuid(),
        proptest::option::of("[a-z0-9-]{1,8}"),
        arb_metadata(),
        arb_body(type_id, corpus),
        arb_extra(),
    )
        .prop_map(move |(id, producer_node, metadata, body, extra)| AnnotationObject {
            id,
            type_id,
            producer_node,
            corpus_id,
            metadata,
            body,
            extra,
        })
        .boxed()
}

/// A corpus together with a valid object of a random concrete type over it.
pub fn arb_object() -> impl Strategy<Value = (Corpus, AnnotationObject)> {
    (arb_corpus(), select(AnnotationTypeId::CONCRETE.to_vec())).prop_flat_map(|(corpus, t)| {
        let obj = arb_object_of(t, &corpus);
        (Just(corpus), obj)
    })
}

/// Either a corpus or an annotation object of any concrete type.
pub fn arb_payload() -> impl Strategy<Value = Payload> {
    prop_oneof![
        1 => arb_corpus().prop_map(Payload::Corpus),
        12 => arb_object().prop_map(|(_, o)| Payload::Annotation(o)),
    ]
}

/// Random acyclic edge sets over `n` nodes: every edge goes from a lower to a
/// higher position in a random permutation.
pub fn arb_dag(max_nodes: usize) -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (1..=max_nodes).prop_flat_map(|n| {
        let perm = Just((0..n).collect::<Vec<_>>()).prop_shuffle();
        let pairs = vec((0..n, 0..n), 0..=(n * 2));
        (Just(n), perm, pairs).prop_map(|(n, perm, pairs)| {
            let mut edges: Vec<(usize, usize)> = pairs
                .into_iter()
                .filter(|(a, b)| a < b)
                .map(|(a, b)| (perm[a], perm[b]))
                .collect();
            edges.sort();
            edges.dedup();
            (n, edges)
        })
    })
}

/// A pipeline drawn from a random DAG. Processor nodes reference random
/// catalog keys and carry random settings; ports are named after the edge so
/// every input has one producer.
pub fn arb_pipeline(max_nodes: usize) -> impl Strategy<Value = Pipeline> {
    (
        arb_uuid(),
        "[A-Za-z ]{0,10}",
        arb_dag(max_nodes),
        vec(arb_uuid(), 1..3),
        proptest::option::of(arb_corpus()),
        vec((-500i32..500, -500i32..500), max_nodes),
        0u64..3,
    )
        .prop_map(|(id, name, (n, edges), modules, inline, positions, minor)| {
            let mut p = Pipeline::new(name);
            p.id = id;
            p.created_with = DataModelVersion::new(1, minor, 0);
            let has_pred: Vec<bool> = (0..n).map(|i| edges.iter().any(|(_, b)| *b == i)).collect();
            for i in 0..n {
                let node_id = format!("n{i:02}");
                let (x, y) = positions[i];
                let node = if !has_pred[i] && i % 2 == 0 {
                    let mut src = PipelineNode::source(node_id);
                    if i == 0 {
                        if let Some(c) = &inline {
                            src.kind = NodeKind::Source {
                                corpus: Some(SourceCorpus::Inline(c.clone())),
                            };
                        }
                    } else if i % 4 == 2 {
                        src.kind = NodeKind::Source {
                            corpus: Some(SourceCorpus::Ref(Uuid::from_u128(i as u128))),
                        };
                    }
                    src
                } else {
                    PipelineNode::processor(node_id, modules[i % modules.len()], format!("proc-{}", i % 3))
                        .with_settings(json!({"level": i, "tags": ["a", "b"]}))
                };
                p.add_node(node.at(f64::from(x) * 0.5, f64::from(y) * 0.25));
            }
            for (a, b) in edges {
                let from_port = if p.nodes[a].is_source() { SOURCE_PORT.to_string() } else { "out".into() };
                p.connect(&format!("n{a:02}"), &from_port, &format!("n{b:02}"), &format!("in_{a}"));
            }
            p
        })
}


use std::collections::BTreeSet;

use angler_core::datamodel::envelope::ROOT_FIELDS;
use angler_core::datamodel::*;
use angler_core::testing::{arb_body, arb_corpus, arb_object, arb_payload};
use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::TestRunner;
use serde_json::Value;
use uuid::Uuid;

use AnnotationTypeId::{
    Clusters, Comparison, Discourse, DocumentFeatures, Parsing, PreprocessedDocument,
    QuestionAnswering, Relationship, SequenceClassification, SequenceTagging, Summarization, Tokens,
};

const ROOT: AnnotationTypeId = AnnotationTypeId::AnnotationObject;

/// The shipped parent table, written out independently of the library.
const PARENT_TABLE: [(AnnotationTypeId, AnnotationTypeId); 12] = [
    (PreprocessedDocument, ROOT),
    (DocumentFeatures, ROOT),
    (SequenceClassification, ROOT),
    (SequenceTagging, ROOT),
    (Relationship, ROOT),
    (Discourse, ROOT),
    (Parsing, Tokens),
    (Tokens, ROOT),
    (Summarization, ROOT),
    (QuestionAnswering, ROOT),
    (Comparison, ROOT),
    (Clusters, ROOT),
];

fn oracle_is_descendant(candidate: AnnotationTypeId, ancestor: AnnotationTypeId) -> bool {
    let mut cur = candidate;
    loop {
        if cur == ancestor {
            return true;
        }
        match PARENT_TABLE.iter().find(|(c, _)| *c == cur) {
            Some((_, p)) => cur = *p,
            None => return false,
        }
    }
}

#[test]
fn descendant_matrix_matches_oracle() {
    let h = TypeHierarchy::shipped();
    for a in AnnotationTypeId::ALL {
        for b in AnnotationTypeId::ALL {
            assert_eq!(h.is_descendant(a, b), oracle_is_descendant(a, b), "({a}, {b})");
        }
    }
}

#[test]
fn descendant_relation_is_a_partial_order() {
    let h = TypeHierarchy::shipped();
    let all = AnnotationTypeId::ALL;
    for a in all {
        assert!(h.is_descendant(a, a));
        assert!(h.is_descendant(a, ROOT));
        assert!(h.depth(a) < all.len());
        for b in all {
            if a != b {
                assert!(!(h.is_descendant(a, b) && h.is_descendant(b, a)), "{a} <-> {b}");
            }
            for c in all {
                if h.is_descendant(a, b) && h.is_descendant(b, c) {
                    assert!(h.is_descendant(a, c), "{a} < {b} < {c}");
                }
            }
        }
    }
}

#[test]
fn accepts_over_every_port_list_matches_oracle() {
    let h = TypeHierarchy::shipped();
    // Every output type against every non-empty single- or two-element input list.
    let universe: Vec<PortType> = PortType::universe().collect();
    let oracle = |produced: PortType, wanted: PortType| match (produced, wanted) {
        (PortType::Corpus, PortType::Corpus) => true,
        (PortType::Annotation(p), PortType::Annotation(w)) => oracle_is_descendant(p, w),
        _ => false,
    };
    for produced in &universe {
        for (i, a) in universe.iter().enumerate() {
            assert_eq!(h.accepts(&[*a], *produced), oracle(*produced, *a));
            for b in &universe[i..] {
                assert_eq!(
                    h.accepts(&[*a, *b], *produced),
                    oracle(*produced, *a) || oracle(*produced, *b)
                );
            }
        }
    }
}

fn sample_corpus() -> Corpus {
    let mut runner = TestRunner::deterministic();
    arb_corpus().new_tree(&mut runner).unwrap().current()
}

fn two_doc_corpus() -> Corpus {
    Corpus::new("pair", vec![Document::new("Dogs bark."), Document::new("Ljubljana is nice")])
}

#[test]
fn serialized_fields_extend_the_parent() {
    let h = TypeHierarchy::shipped();
    let corpus = sample_corpus();
    let mut runner = TestRunner::deterministic();
    let fields = |t: AnnotationTypeId, runner: &mut TestRunner| -> BTreeSet<String> {
        if t == ROOT {
            return ROOT_FIELDS.iter().map(|s| s.to_string()).collect();
        }
        let body = arb_body(t, &corpus).new_tree(runner).unwrap().current();
        let obj = AnnotationObject::new(corpus.id, body);
        let env: Value = serde_json::from_slice(&serialize(&obj.into())).unwrap();
        env["body"].as_object().unwrap().keys().cloned().collect()
    };
    for t in AnnotationTypeId::CONCRETE {
        let parent = h.parent(t).unwrap();
        let own = fields(t, &mut runner);
        let inherited = fields(parent, &mut runner);
        assert!(own.is_superset(&inherited), "{t} lacks fields of {parent}: {own:?} vs {inherited:?}");
    }
}

#[test]
fn empty_corpus_serializes_identically() {
    let corpus = Corpus::new("empty", vec![]);
    let a = serialize(&corpus.clone().into());
    let b = serialize(&corpus.clone().into());
    assert_eq!(a, b);
    assert_eq!(deserialize(&a).unwrap(), Payload::Corpus(corpus));
}

#[test]
fn tokens_object_roundtrips() {
    let corpus = two_doc_corpus();
    let doc = corpus.documents[0].id;
    let obj = AnnotationObject::new(
        corpus.id,
        AnnotationBody::Tokens(TokensBody {
            tokens: vec![
                Token { document_id: doc, span: Span::new(0, 4).unwrap(), surface: "Dogs".into() },
                Token { document_id: doc, span: Span::new(5, 10).unwrap(), surface: "bark.".into() },
            ],
        }),
    );
    let bytes = serialize(&obj.clone().into());
    assert_eq!(deserialize(&bytes).unwrap(), Payload::Annotation(obj));
    let text = String::from_utf8(bytes).unwrap();
    assert!(text.starts_with(r#"{"body":{"corpus_id":"#), "{text}");
    assert!(text.contains(r#""data_model":"1.0.0","kind":"tokens""#));
}

#[test]
fn newer_major_version_is_rejected() {
    let bytes = serialize(&Corpus::new("c", vec![]).into());
    let mut env: Value = serde_json::from_slice(&bytes).unwrap();
    env["data_model"] = "2.0.0".into();
    let err = deserialize(env.to_string().as_bytes()).unwrap_err();
    assert_eq!(
        err,
        DecodeError::IncompatibleVersion {
            found: DataModelVersion::new(2, 0, 0),
            supported: DATA_MODEL_VERSION
        }
    );
    env["data_model"] = "1.7.2".into();
    assert!(deserialize(env.to_string().as_bytes()).is_ok());
}

#[test]
fn decode_errors_are_distinguished() {
    assert!(matches!(deserialize(b"{not json"), Err(DecodeError::Malformed(_))));
    assert!(matches!(deserialize(b"[1,2]"), Err(DecodeError::Malformed(_))));
    assert_eq!(
        deserialize(br#"{"data_model":"1.0.0","kind":"named_entities","body":{}}"#),
        Err(DecodeError::UnknownType("named_entities".into()))
    );
    assert_eq!(
        deserialize(br#"{"kind":"corpus","body":{}}"#),
        Err(DecodeError::MissingField("data_model".into()))
    );
    assert_eq!(
        deserialize(br#"{"data_model":"1.0.0","kind":"corpus","body":{"id":"6f1c1c9e-5f43-4b7e-9a43-6d4b8f0f8c11","name":"x"}}"#),
        Err(DecodeError::MissingField("documents".into()))
    );
    let id = Uuid::nil();
    assert_eq!(
        deserialize(format!(r#"{{"data_model":"1.0.0","kind":"tokens","body":{{"id":"{id}","tokens":[]}}}}"#).as_bytes()),
        Err(DecodeError::MissingField("corpus_id".into()))
    );
    assert!(matches!(
        deserialize(br#"{"data_model":"1.0.0","kind":"annotation_object","body":{}}"#),
        Err(DecodeError::InvalidValue(_))
    ));
}

#[test]
fn unknown_fields_survive_a_roundtrip() {
    let id = Uuid::from_u128(7);
    let input = format!(
        r#"{{"body":{{"clusters":[],"corpus_id":"{id}","id":"{id}","metadata":{{}},"producer_node":null,"score":0.5}},"data_model":"1.2.0","kind":"clusters","trace":"abc"}}"#
    );
    let env = Envelope::from_bytes(input.as_bytes()).unwrap();
    assert_eq!(env.extra["trace"], "abc");
    let Payload::Annotation(obj) = &env.payload else { panic!() };
    assert_eq!(obj.extra["score"], 0.5);
    assert_eq!(String::from_utf8(env.to_bytes()).unwrap(), input);
}

#[test]
fn confidence_defaults_to_one() {
    let id = Uuid::from_u128(1);
    let doc = Uuid::from_u128(2);
    let input = format!(
        r#"{{"data_model":"1.0.0","kind":"sequence_tagging","body":{{"corpus_id":"{id}","id":"{id}","tags":[{{"document_id":"{doc}","span":{{"start":0,"end":1}},"tag":"LOC"}}]}}}}"#
    );
    let Payload::Annotation(obj) = deserialize(input.as_bytes()).unwrap() else { panic!() };
    let AnnotationBody::SequenceTagging(body) = obj.body else { panic!() };
    assert_eq!(body.tags[0].confidence, 1.0);
}

#[test]
fn validation_examples() {
    let corpus = two_doc_corpus();
    let d0 = corpus.documents[0].id;
    let d1 = corpus.documents[1].id;

    let tokens = AnnotationObject::new(
        corpus.id,
        AnnotationBody::Tokens(TokensBody {
            tokens: vec![Token { document_id: d1, span: Span::new(0, 9).unwrap(), surface: "Ljubljana".into() }],
        }),
    );
    assert!(validate_object(&tokens, &corpus).is_valid());

    let tagging = AnnotationObject::new(
        corpus.id,
        AnnotationBody::SequenceTagging(SequenceTaggingBody {
            tags: vec![Tag { document_id: d0, span: Span::new(5, 11).unwrap(), tag: "X".into(), confidence: 1.0 }],
        }),
    );
    let report = validate_object(&tagging, &corpus);
    assert_eq!(report.kinds(), vec![ViolationKind::SpanOutOfBounds]);
    assert_eq!(report.violations[0].kind.message(), "span out of bounds");

    let clusters = AnnotationObject::new(
        corpus.id,
        AnnotationBody::Clusters(ClustersBody { clusters: vec![vec![d0], vec![d0, d1]] }),
    );
    let report = validate_object(&clusters, &corpus);
    assert_eq!(report.kinds(), vec![ViolationKind::ClustersNotDisjoint]);
    assert_eq!(report.violations[0].kind.message(), "clusters not disjoint");
}

#[test]
fn validation_catches_every_kind_of_dangling_reference() {
    let corpus = two_doc_corpus();
    let ghost = Uuid::from_u128(99);
    let d0 = corpus.documents[0].id;

    let mut obj = AnnotationObject::new(
        corpus.id,
        AnnotationBody::Summarization(SummarizationBody { document_id: ghost, summary: "s".into() }),
    );
    assert_eq!(validate_object(&obj, &corpus).kinds(), vec![ViolationKind::DanglingDocument]);

    obj.type_id = Tokens;
    obj.corpus_id = ghost;
    let kinds = validate_object(&obj, &corpus).kinds();
    assert!(kinds.contains(&ViolationKind::TypeMismatch));
    assert!(kinds.contains(&ViolationKind::CorpusMismatch));

    let classification = AnnotationObject::new(
        corpus.id,
        AnnotationBody::SequenceClassification(SequenceClassificationBody {
            target: ClassificationTarget { document_id: d0, span: None },
            label: "pos".into(),
            confidence: 1.5,
        }),
    );
    assert_eq!(validate_object(&classification, &corpus).kinds(), vec![ViolationKind::ConfidenceOutOfRange]);

    let parsing = AnnotationObject::new(
        corpus.id,
        AnnotationBody::Parsing(ParsingBody {
            tokens: vec![],
            groups: vec![TokenGroup { label: "NP".into(), members: vec![0] }],
        }),
    );
    assert_eq!(validate_object(&parsing, &corpus).kinds(), vec![ViolationKind::GroupMemberOutOfRange]);
}

#[test]
fn corpus_validation() {
    let mut corpus = two_doc_corpus();
    assert!(validate_corpus(&corpus).is_valid());
    corpus.documents[0].sentences = Some(vec![Span::new(0, 5).unwrap(), Span::new(4, 10).unwrap()]);
    corpus.documents[0].tokens = Some(vec![Span::new(5, 10).unwrap(), Span::new(0, 4).unwrap(), Span::new(0, 40).unwrap()]);
    corpus.documents[1].id = corpus.documents[0].id;
    let kinds = validate_corpus(&corpus).kinds();
    assert_eq!(
        kinds,
        vec![
            ViolationKind::SentencesOverlap,
            ViolationKind::SpansUnsorted,
            ViolationKind::SpanOutOfBounds,
            ViolationKind::DuplicateDocumentId,
        ]
    );
}

proptest! {
    #[test]
    fn every_payload_roundtrips(payload in arb_payload()) {
        let bytes = serialize(&payload);
        prop_assert_eq!(&serialize(&payload), &bytes);
        let back = deserialize(&bytes).unwrap();
        prop_assert_eq!(&back, &payload);
        prop_assert_eq!(serialize(&back), bytes);
    }

    #[test]
    fn generated_objects_are_valid((corpus, obj) in arb_object()) {
        prop_assert!(validate_corpus(&corpus).is_valid());
        let report = validate_object(&obj, &corpus);
        prop_assert!(report.is_valid(), "{:?}", report);
    }
}

mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use angler_core::datamodel::{
    AnnotationBody, AnnotationObject, ClustersBody, Corpus, Envelope, Payload, TokensBody,
};
use angler_core::pipeline::{NodeKind, Pipeline, SourceCorpus, SOURCE_PORT};
use angler_core::protocol::{raw_payload, token_from_callback_url, CallbackEnvelope, DispatchEnvelope};
use angler_modules::builtin::{DICTIONARY_NER, TOKENIZER};
use angler_modules::fixtures::{self, BLACK_HOLE_UUID, DELAYED_UUID};
use angler_modules::{algorithms, ModuleKind};
use common::*;
use serde_json::{json, Value};
use uuid::Uuid;

async fn with_builtins(h: &Harness) -> Vec<angler_modules::server::RunningModule> {
    let mut running = Vec::new();
    for kind in ModuleKind::BUILTIN {
        let m = module(kind.app(Duration::ZERO)).await;
        h.register(&m.url).await;
        running.push(m);
    }
    running
}

async fn fixture_corpus(h: &Harness) -> Uuid {
    let texts = fixture_texts();
    let refs: Vec<(&str, &str)> = texts.iter().map(|(f, t)| (f.as_str(), t.as_str())).collect();
    h.upload("fixture", &refs).await
}

/// `fixtures/ner.angler` with the tokenizer swapped for the given module.
fn ner_via(tokenizer_module: Uuid) -> Pipeline {
    let mut p = fixture("ner.angler");
    for n in &mut p.nodes {
        if let NodeKind::Processor(r) = &mut n.kind {
            if r.processor == TOKENIZER {
                r.module = tokenizer_module;
            }
        }
    }
    p
}

fn state(view: &Value, node: &str) -> String {
    view["nodes"][node]["state"].as_str().unwrap().to_string()
}

fn failure(view: &Value, node: &str) -> String {
    view["nodes"][node]["failure"]["code"].as_str().unwrap_or("").to_string()
}

fn tokens_for(dispatch: &DispatchEnvelope) -> Envelope {
    let Payload::Corpus(corpus) = Envelope::from_bytes(dispatch.inputs["corpus"].get().as_bytes()).unwrap().payload
    else {
        panic!("tokenizer input is a corpus")
    };
    let tokens = corpus.documents.iter().flat_map(algorithms::whitespace_tokens).collect();
    Envelope::new(
        AnnotationObject::new(corpus.id, AnnotationBody::Tokens(TokensBody { tokens })).with_producer(&dispatch.node_id),
    )
}

fn success(dispatch: &DispatchEnvelope, token: &str, port: &str, payload: Envelope) -> Vec<u8> {
    let outputs = BTreeMap::from([(port.to_string(), raw_payload(payload.to_bytes()).unwrap())]);
    serde_json::to_vec(&CallbackEnvelope::success(dispatch, token, outputs)).unwrap()
}

async fn call_back(h: &Harness, dispatch: &DispatchEnvelope, token: &str, body: Vec<u8>) -> Reply {
    let path = format!("callback/{}/{}?token={token}", dispatch.job_id, dispatch.node_id);
    h.post_bytes(&path, body).await
}

#[tokio::test]
async fn ner_fixture_end_to_end() {
    let h = start(|_| {}).await;
    let _modules = with_builtins(&h).await;
    let corpus_id = fixture_corpus(&h).await;
    let pipeline = h.create_pipeline(&fixture("ner.angler")).await;

    let started = Instant::now();
    let job = h.submit_ok(pipeline, corpus_id).await;
    let view = h.wait_terminal(job, Duration::from_secs(10)).await;
    assert_eq!(view["state"], "completed", "{view:#}");
    assert!(started.elapsed() < Duration::from_secs(10));
    for node in ["corpus", "tok", "ner"] {
        assert_eq!(state(&view, node), "completed");
    }

    let result = h.result(job, "ner", "entities").await;
    assert_eq!(result.status, 200);
    let corpus = corpus(&h, corpus_id).await;
    assert_eq!(observed_tags(&result.bytes, &corpus), expected_ner_tags());

    let Payload::Annotation(a) = Envelope::from_bytes(&result.bytes).unwrap().payload else { panic!() };
    assert_eq!(a.producer_node.as_deref(), Some("ner"));
    assert_eq!(a.corpus_id, corpus_id);

    // Results come back verbatim: the job store file holds the same bytes.
    let stored = std::fs::read_to_string(h.dir.path().join(format!("jobs/{job}/ner.entities.json"))).unwrap();
    assert_eq!(stored, String::from_utf8(result.bytes).unwrap());
}

#[tokio::test]
async fn callbacks_are_correlated_by_token() {
    let h = start(|_| {}).await;
    let _modules = with_builtins(&h).await;
    let mut rec = recorder().await;
    h.register(&rec.url).await;
    let corpus_id = fixture_corpus(&h).await;
    let pipeline = h.create_pipeline(&ner_via(BLACK_HOLE_UUID)).await;

    let submitted = h.submit(pipeline, corpus_id).await;
    assert_eq!(submitted.status, 201);
    let view = &submitted.body["body"];
    assert_eq!(state(view, "corpus"), "completed");
    assert_eq!(state(view, "tok"), "dispatched");
    assert_eq!(state(view, "ner"), "pending");
    let job: Uuid = view["job_id"].as_str().unwrap().parse().unwrap();

    let d = rec.next().await;
    assert_eq!((d.job_id, d.node_id.as_str()), (job, "tok"));
    let token = token_from_callback_url(&d.callback_url).unwrap();

    // The dispatched corpus is byte-identical to the source node's stored output.
    let source = h.result(job, "corpus", SOURCE_PORT).await;
    assert_eq!(d.inputs["corpus"].get(), String::from_utf8(source.bytes).unwrap());

    let produced = tokens_for(&d);
    let body = success(&d, &token, "tokens", produced.clone());

    let wrong = call_back(&h, &d, "0000", success(&d, "0000", "tokens", tokens_for(&d))).await;
    assert_eq!((wrong.status, wrong.code()), (403, "TOKEN_MISMATCH"));
    let mixed = call_back(&h, &d, "0000", body.clone()).await;
    assert_eq!((mixed.status, mixed.code()), (403, "TOKEN_MISMATCH"));
    assert_eq!(state(&h.job(job).await, "tok"), "dispatched");

    let r = h.post_bytes(&format!("callback/{}/tok?token={token}", Uuid::from_u128(1)), body.clone()).await;
    assert_eq!((r.status, r.code()), (404, "JOB_NOT_FOUND"));
    let r = h.post_bytes(&format!("callback/{job}/tok?token={token}"), b"{".to_vec()).await;
    assert_eq!((r.status, r.code()), (400, "MALFORMED_CALLBACK"));
    let mut ghost = d.clone();
    ghost.node_id = "ghost".into();
    let r = call_back(&h, &ghost, &token, success(&ghost, &token, "tokens", tokens_for(&d))).await;
    assert_eq!((r.status, r.code()), (404, "NODE_NOT_FOUND"));

    let pending = h.result(job, "tok", "tokens").await;
    assert_eq!((pending.status, pending.code()), (409, "RESULT_NOT_READY"));

    let applied = call_back(&h, &d, &token, body.clone()).await;
    assert_eq!(applied.status, 200, "{}", applied.body);
    assert_eq!(applied.kind(), "callback_ack");
    assert_eq!(applied.body["body"]["result"], "applied");

    let done = h.wait_terminal(job, Duration::from_secs(10)).await;
    assert_eq!(done["state"], "completed");
    let tokens = h.result(job, "tok", "tokens").await;
    assert_eq!(String::from_utf8(tokens.bytes).unwrap(), String::from_utf8(produced.to_bytes()).unwrap());

    let again = call_back(&h, &d, &token, body).await;
    assert_eq!(again.status, 200);
    assert_eq!(again.body["body"]["result"], "ignored");
    assert_eq!(h.job(job).await, done);
}

#[tokio::test]
async fn bad_callbacks_fail_the_node_and_cancel_downstream() {
    let h = start(|_| {}).await;
    let _modules = with_builtins(&h).await;
    let mut rec = recorder().await;
    h.register(&rec.url).await;
    let corpus_id = fixture_corpus(&h).await;
    let pipeline = h.create_pipeline(&ner_via(BLACK_HOLE_UUID)).await;

    let clusters = |d: &DispatchEnvelope| {
        let corpus: Uuid = serde_json::from_str::<Value>(d.inputs["corpus"].get()).unwrap()["body"]["id"]
            .as_str()
            .unwrap()
            .parse()
            .unwrap();
        Envelope::new(AnnotationObject::new(corpus, AnnotationBody::Clusters(ClustersBody { clusters: vec![] })))
    };
    type Answer = Box<dyn Fn(&DispatchEnvelope, &str) -> Vec<u8>>;
    let cases: Vec<(&str, Answer)> = vec![
        (
            "MODULE_FAILURE",
            Box::new(|d, t| serde_json::to_vec(&CallbackEnvelope::failure(d, t, "tokenizer exploded")).unwrap()),
        ),
        ("TYPE_VIOLATION", Box::new(move |d, t| success(d, t, "tokens", clusters(d)))),
        ("MISSING_OUTPUT", Box::new(|d, t| success(d, t, "words", tokens_for(d)))),
        (
            "INVALID_OUTPUT",
            Box::new(|d, t| {
                let mut env = tokens_for(d);
                if let Payload::Annotation(a) = &mut env.payload {
                    a.corpus_id = Uuid::from_u128(99);
                }
                success(d, t, "tokens", env)
            }),
        ),
    ];
    for (code, make) in cases {
        let job = h.submit_ok(pipeline, corpus_id).await;
        let d = rec.next().await;
        let token = token_from_callback_url(&d.callback_url).unwrap();
        let r = call_back(&h, &d, &token, make(&d, &token)).await;
        assert_eq!(r.status, 200, "{code}: {}", r.body);
        let view = h.job(job).await;
        assert_eq!(state(&view, "tok"), "failed", "{code}");
        assert_eq!(failure(&view, "tok"), code);
        assert_eq!(state(&view, "ner"), "cancelled", "{code}");
        assert_eq!(view["state"], "failed");
        assert_eq!(view["terminal"], true);
    }
}

#[tokio::test]
async fn black_hole_times_out_after_retry() {
    let h = start(|c| {
        c.node_timeout = Duration::from_millis(400);
        c.retry_limit = 1;
    })
    .await;
    let _modules = with_builtins(&h).await;
    let hole = module(fixtures::black_hole()).await;
    h.register(&hole.url).await;
    let corpus_id = fixture_corpus(&h).await;
    let pipeline = h.create_pipeline(&ner_via(BLACK_HOLE_UUID)).await;

    let started = Instant::now();
    let job = h.submit_ok(pipeline, corpus_id).await;
    let view = h.wait_terminal(job, Duration::from_secs(5)).await;
    assert!(started.elapsed() >= Duration::from_millis(800));
    assert_eq!(state(&view, "tok"), "failed");
    assert_eq!(failure(&view, "tok"), "TIMEOUT");
    assert_eq!(view["nodes"]["tok"]["attempts"], 2);
    assert_eq!(state(&view, "ner"), "cancelled");
    assert_eq!(view["state"], "failed");
}

#[tokio::test]
async fn retry_rejects_the_stale_token() {
    let h = start(|c| c.node_timeout = Duration::from_millis(300)).await;
    let _modules = with_builtins(&h).await;
    let mut rec = recorder().await;
    h.register(&rec.url).await;
    let corpus_id = fixture_corpus(&h).await;
    let pipeline = h.create_pipeline(&ner_via(BLACK_HOLE_UUID)).await;
    let job = h.submit_ok(pipeline, corpus_id).await;

    let first = rec.next().await;
    let second = rec.next().await;
    let old = token_from_callback_url(&first.callback_url).unwrap();
    let new = token_from_callback_url(&second.callback_url).unwrap();
    assert_ne!(old, new);
    assert_eq!(h.job(job).await["nodes"]["tok"]["attempts"], 2);

    let stale = call_back(&h, &first, &old, success(&first, &old, "tokens", tokens_for(&first))).await;
    assert_eq!((stale.status, stale.code()), (409, "STALE_TOKEN"));
    assert_eq!(state(&h.job(job).await, "tok"), "dispatched");

    let fresh = call_back(&h, &second, &new, success(&second, &new, "tokens", tokens_for(&second))).await;
    assert_eq!(fresh.body["body"]["result"], "applied");
    let view = h.wait_terminal(job, Duration::from_secs(5)).await;
    assert_eq!(view["state"], "completed");
}

#[tokio::test]
async fn delayed_first_answer_loses_the_race() {
    let h = start(|c| c.node_timeout = Duration::from_millis(300)).await;
    let _modules = with_builtins(&h).await;
    let slow = module(fixtures::delayed(Duration::from_millis(1200))).await;
    h.register(&slow.url).await;
    let corpus_id = fixture_corpus(&h).await;
    let pipeline = h.create_pipeline(&ner_via(DELAYED_UUID)).await;
    let job = h.submit_ok(pipeline, corpus_id).await;

    let view = h.wait_terminal(job, Duration::from_secs(5)).await;
    assert_eq!(view["state"], "completed", "{view:#}");
    assert_eq!(view["nodes"]["tok"]["attempts"], 2);
    let tokens = h.result(job, "tok", "tokens").await.bytes;

    // Let the held-back first answer arrive; it must change nothing.
    tokio::time::sleep(Duration::from_millis(1400)).await;
    assert_eq!(h.job(job).await, view);
    assert!(h.result(job, "tok", "tokens").await.bytes == tokens);
}

#[tokio::test]
async fn cancel_then_late_callback() {
    let h = start(|_| {}).await;
    let _modules = with_builtins(&h).await;
    let slow = module(fixtures::delayed(Duration::from_millis(500))).await;
    h.register(&slow.url).await;
    let corpus_id = fixture_corpus(&h).await;
    let pipeline = h.create_pipeline(&ner_via(DELAYED_UUID)).await;
    let job = h.submit_ok(pipeline, corpus_id).await;

    let r = h.post(&format!("api/v1/jobs/{job}/cancel"), &json!({})).await;
    assert_eq!(r.status, 200, "{}", r.body);
    let cancelled = &r.body["body"];
    assert_eq!(cancelled["state"], "cancelled");
    assert_eq!(state(cancelled, "tok"), "cancelled");
    assert_eq!(state(cancelled, "ner"), "cancelled");

    tokio::time::sleep(Duration::from_millis(900)).await;
    let after = h.job(job).await;
    assert_eq!(&after, cancelled);
}

#[tokio::test]
async fn empty_corpus_completes_with_no_tokens() {
    let h = start(|_| {}).await;
    let _modules = with_builtins(&h).await;
    let mut p = fixture("ner.angler");
    let empty = Corpus::new("empty", vec![]);
    p.nodes[0].kind = NodeKind::Source { corpus: Some(SourceCorpus::Inline(empty.clone())) };
    let pipeline = h.create_pipeline(&p).await;

    let r = h.post("api/v1/jobs", &json!({ "pipeline_id": pipeline })).await;
    assert_eq!(r.status, 201, "{}", r.body);
    let job: Uuid = r.body["body"]["job_id"].as_str().unwrap().parse().unwrap();
    let view = h.wait_terminal(job, Duration::from_secs(5)).await;
    assert_eq!(view["state"], "completed");
    let Payload::Annotation(a) = Envelope::from_bytes(&h.result(job, "tok", "tokens").await.bytes).unwrap().payload
    else {
        panic!()
    };
    assert_eq!(a.tokens().unwrap().len(), 0);
    assert_eq!(a.corpus_id, empty.id);
}

#[tokio::test]
async fn submit_refusals() {
    let h = start(|_| {}).await;
    let _modules = with_builtins(&h).await;
    let corpus_id = fixture_corpus(&h).await;

    let cyclic = h.create_pipeline(&fixture("cycle.angler")).await;
    let r = h.submit(cyclic, corpus_id).await;
    assert_eq!((r.status, r.code()), (422, "VALIDATION_FAILED"));
    assert!(r.body["error"]["message"].as_str().unwrap().contains("CYCLE"), "{}", r.body);

    let ner = h.create_pipeline(&fixture("ner.angler")).await;
    let r = h.submit(ner, Uuid::from_u128(5)).await;
    assert_eq!((r.status, r.code()), (404, "CORPUS_NOT_FOUND"));
    let r = h.post("api/v1/jobs", &json!({ "pipeline_id": ner })).await;
    assert_eq!((r.status, r.code()), (400, "NO_CORPUS"));
    let r = h.submit(Uuid::from_u128(5), corpus_id).await;
    assert_eq!((r.status, r.code()), (404, "PIPELINE_NOT_FOUND"));
    let r = h.get(&format!("api/v1/jobs/{}", Uuid::from_u128(5))).await;
    assert_eq!((r.status, r.code()), (404, "JOB_NOT_FOUND"));
}

#[tokio::test]
async fn concurrent_jobs_do_not_mix() {
    const JOBS: usize = 20;
    let h = start(|_| {}).await;
    let _modules = with_builtins(&h).await;
    let pipeline = h.create_pipeline(&fixture("ner.angler")).await;

    let mut corpora = Vec::new();
    for i in 0..JOBS {
        let text = format!("job{i} visited Ljubljana {}", "x ".repeat(i));
        corpora.push((i, h.upload(&format!("c{i}"), &[("doc.txt", &text)]).await));
    }
    let mut tasks = Vec::new();
    for (_, corpus_id) in &corpora {
        let (http, url) = (h.http.clone(), h.url("api/v1/jobs"));
        let body = json!({ "pipeline_id": pipeline, "corpus_id": corpus_id });
        tasks.push(tokio::spawn(async move {
            let r: Value = http.post(url).json(&body).send().await.unwrap().json().await.unwrap();
            r["body"]["job_id"].as_str().unwrap().parse::<Uuid>().unwrap()
        }));
    }
    let mut jobs = Vec::new();
    for t in tasks {
        jobs.push(t.await.unwrap());
    }

    for ((i, corpus_id), job) in corpora.iter().zip(&jobs) {
        let view = h.wait_terminal(*job, Duration::from_secs(15)).await;
        assert_eq!(view["state"], "completed");
        assert_eq!(view["corpus_id"], corpus_id.to_string());
        let corpus = corpus(&h, *corpus_id).await;
        for (node, port) in [("tok", "tokens"), ("ner", "entities")] {
            let Payload::Annotation(a) = Envelope::from_bytes(&h.result(*job, node, port).await.bytes).unwrap().payload
            else {
                panic!()
            };
            assert_eq!(a.corpus_id, *corpus_id, "job {i} {node}");
            assert_eq!(a.producer_node.as_deref(), Some(node));
            assert_eq!(angler_core::datamodel::validate_object(&a, &corpus).violations, vec![]);
            if let Some(tokens) = a.tokens() {
                assert_eq!(tokens[0].surface, format!("job{i}"));
                assert_eq!(tokens.len(), 3 + i);
            }
        }
    }
}

#[tokio::test]
async fn restart_fails_in_flight_nodes_and_keeps_outputs() {
    let dir = tempfile::TempDir::new().unwrap();
    let path = dir.path().to_path_buf();
    let h = start_in(dir, |_| {}).await;
    let _modules = with_builtins(&h).await;
    let mut rec = recorder().await;
    h.register(&rec.url).await;
    let corpus_id = fixture_corpus(&h).await;
    let pipeline = h.create_pipeline(&ner_via(BLACK_HOLE_UUID)).await;
    let job = h.submit_ok(pipeline, corpus_id).await;
    rec.next().await;
    let source = h.result(job, "corpus", SOURCE_PORT).await.bytes;

    let Harness { backend, dir, .. } = h;
    drop(backend);
    tokio::time::sleep(Duration::from_millis(50)).await;
    assert_eq!(dir.path(), path);
    let h = start_in(dir, |_| {}).await;

    let view = h.job(job).await;
    assert_eq!(state(&view, "tok"), "failed");
    assert_eq!(failure(&view, "tok"), "RESTART");
    assert_eq!(state(&view, "ner"), "cancelled");
    assert!(h.result(job, "corpus", SOURCE_PORT).await.bytes == source);
    assert_eq!(h.get("api/v1/modules").await.body["body"].as_array().unwrap().len(), 4);
    assert_eq!(corpus(&h, corpus_id).await.documents.len(), 3);
    assert_eq!(h.get(&format!("api/v1/pipelines/{pipeline}")).await.status, 200);
}

#[tokio::test]
async fn node_settings_reach_the_module() {
    let h = start(|_| {}).await;
    let _modules = with_builtins(&h).await;
    let corpus_id = fixture_corpus(&h).await;
    let mut p = fixture("ner.angler");
    for n in &mut p.nodes {
        if let NodeKind::Processor(r) = &mut n.kind {
            if r.processor == DICTIONARY_NER {
                r.settings = json!({});
            }
        }
    }
    let pipeline = h.create_pipeline(&p).await;

    let form = format!("settings={}", url::form_urlencoded::byte_serialize(br#"{"gazetteer":{"zagreb":"CITY"}}"#).collect::<String>());
    let r = h
        .http
        .post(h.url(&format!("api/v1/pipelines/{pipeline}/nodes/ner/settings")))
        .header("content-type", "application/x-www-form-urlencoded")
        .body(form)
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), 200);

    let job = h.submit_ok(pipeline, corpus_id).await;
    h.wait_terminal(job, Duration::from_secs(10)).await;
    let corpus = corpus(&h, corpus_id).await;
    let tags = observed_tags(&h.result(job, "ner", "entities").await.bytes, &corpus);
    let expected = [("b.txt".to_string(), 46, 52, "CITY".to_string())].into_iter().collect();
    assert_eq!(tags, expected);
}

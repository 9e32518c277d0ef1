use std::net::SocketAddr;
use std::time::Duration;

use angler_modules::conformance::sample_payload;
use angler_modules::{conformance_check, Check, ConformanceOptions, ModuleKind, Outcome};
use angler_core::datamodel::{validate_object, Envelope, Payload, PortType};
use url::Url;

const LOOPBACK: SocketAddr = SocketAddr::new(std::net::IpAddr::V4(std::net::Ipv4Addr::LOCALHOST), 0);

fn quick() -> ConformanceOptions {
    ConformanceOptions {
        callback_timeout: Duration::from_secs(2),
        request_timeout: Duration::from_secs(5),
    }
}

#[tokio::test]
async fn builtins_and_working_fixtures_pass() {
    for kind in [
        ModuleKind::Preproc,
        ModuleKind::Ner,
        ModuleKind::Cluster,
        ModuleKind::NoDocs,
        ModuleKind::Delayed,
    ] {
        let running = kind.app(Duration::from_millis(200)).spawn(LOOPBACK).await.unwrap();
        let report = conformance_check(&running.url, &quick()).await;
        assert!(report.passed, "{kind}: {report:#?}");
        assert!(report.module.is_some());
        assert!(report.checks.iter().all(|c| c.outcome == Outcome::Pass), "{kind}: {report:#?}");
    }
}

#[tokio::test]
async fn broken_fixtures_fail_on_their_check() {
    let cases = [
        (ModuleKind::MissingUuid, Check::RequiredAttributes, "`UUID` in /about"),
        (ModuleKind::MissingIcon, Check::RequiredAttributes, "`icon` in /processors"),
        (ModuleKind::BlackHole, Check::CallbackDelivered, "no callback within"),
        (ModuleKind::WrongOutputType, Check::CallbackTypes, "is clusters, declared tokens"),
    ];
    for (kind, check, needle) in cases {
        let running = kind.app(Duration::ZERO).spawn(LOOPBACK).await.unwrap();
        let report = conformance_check(&running.url, &quick()).await;
        assert!(!report.passed, "{kind}");
        let (first, message) = report.first_failure().unwrap();
        assert_eq!(first, check, "{kind}: {report:#?}");
        assert!(message.contains(needle), "{kind}: {message}");
    }
}

#[tokio::test]
async fn unreachable_module_is_a_finding() {
    let listener = std::net::TcpListener::bind(LOOPBACK).unwrap();
    let url = Url::parse(&format!("http://{}/", listener.local_addr().unwrap())).unwrap();
    drop(listener);
    let report = conformance_check(&url, &quick()).await;
    assert!(!report.passed);
    assert_eq!(report.first_failure().unwrap().0, Check::AboutSchema);
    assert!(report
        .checks
        .iter()
        .skip(1)
        .all(|c| matches!(c.outcome, Outcome::Skipped(_))));
}

#[tokio::test]
async fn report_serializes_with_stable_names() {
    let running = ModuleKind::BlackHole.app(Duration::ZERO).spawn(LOOPBACK).await.unwrap();
    let opts = ConformanceOptions { callback_timeout: Duration::from_millis(300), ..quick() };
    let report = conformance_check(&running.url, &opts).await;
    let v = serde_json::to_value(&report).unwrap();
    assert_eq!(v["passed"], false);
    assert_eq!(v["checks"][5]["check"], "callback_delivered");
    assert_eq!(v["checks"][5]["status"], "fail");
    assert_eq!(v["checks"][0]["status"], "pass");
    assert_eq!(v["checks"][7]["status"], "skipped");
}

#[test]
fn sample_payloads_are_valid_for_every_port_type() {
    let corpus = angler_modules::conformance::sample_corpus();
    for t in PortType::universe() {
        let payload = sample_payload(t, &corpus);
        let bytes = Envelope::new(payload.clone()).to_bytes();
        assert_eq!(Envelope::from_bytes(&bytes).unwrap().payload, payload);
        if let Payload::Annotation(a) = &payload {
            assert!(validate_object(a, &corpus).is_valid(), "{t}");
        }
    }
}

//! Modules that break the protocol on purpose, for conformance and
//! executor failure tests. Each borrows a builtin processor and bends one
//! rule.

use std::time::Duration;

use angler_core::datamodel::{AnnotationBody, AnnotationObject, ClustersBody, Payload};
use std::collections::BTreeMap;
use uuid::{uuid, Uuid};

use crate::builtin::{self, about, tokenizer_descriptor};
use crate::server::{ModuleApp, ProcessorSpec, Quirks, Request};

pub const MISSING_UUID_UUID: Uuid = uuid!("5d1c8a52-2b8e-4c1f-9a57-0e2f4b6d7b01");
pub const MISSING_ICON_UUID: Uuid = uuid!("5d1c8a52-2b8e-4c1f-9a57-0e2f4b6d7b02");
pub const BLACK_HOLE_UUID: Uuid = uuid!("5d1c8a52-2b8e-4c1f-9a57-0e2f4b6d7b03");
pub const WRONG_OUTPUT_UUID: Uuid = uuid!("5d1c8a52-2b8e-4c1f-9a57-0e2f4b6d7b04");
pub const NO_DOCS_UUID: Uuid = uuid!("5d1c8a52-2b8e-4c1f-9a57-0e2f4b6d7b05");
pub const DELAYED_UUID: Uuid = uuid!("5d1c8a52-2b8e-4c1f-9a57-0e2f4b6d7b06");

fn tokenizer_module(uuid: Uuid, name: &str) -> ModuleApp {
    ModuleApp {
        about: about(uuid, name, "Test fixture.").to_about(),
        processors: vec![ProcessorSpec::new(tokenizer_descriptor(), builtin::tokenize)],
        docs: Some(format!("<!doctype html><title>{name}</title><p>Test fixture.</p>\n")),
        quirks: Quirks::default(),
    }
}

/// `/about` without a uuid.
pub fn missing_uuid() -> ModuleApp {
    let mut app = tokenizer_module(MISSING_UUID_UUID, "fixture-missing-uuid");
    app.about.as_object_mut().expect("object").remove("uuid");
    app
}

/// A processor entry without its required `icon`.
pub fn missing_icon() -> ModuleApp {
    let mut app = tokenizer_module(MISSING_ICON_UUID, "fixture-missing-icon");
    app.processors[0].wire.as_object_mut().expect("object").remove("icon");
    app
}

/// Accepts every dispatch with 202 and never calls back.
pub fn black_hole() -> ModuleApp {
    let mut app = tokenizer_module(BLACK_HOLE_UUID, "fixture-black-hole");
    app.quirks.swallow_dispatches = true;
    app
}

/// Declares a tokens output but delivers clusters.
pub fn wrong_output_type() -> ModuleApp {
    let mut app = tokenizer_module(WRONG_OUTPUT_UUID, "fixture-wrong-output");
    app.processors[0].run = std::sync::Arc::new(|req: &Request| {
        let Payload::Corpus(corpus) = req.input("corpus")? else {
            return Err("input `corpus` must be a corpus".into());
        };
        let clusters = vec![corpus.documents.iter().map(|d| d.id).collect()];
        let out = AnnotationObject::new(corpus.id, AnnotationBody::Clusters(ClustersBody { clusters }));
        Ok(BTreeMap::from([("tokens".to_string(), out.into())]))
    });
    app
}

/// Serves a different uuid on every `/about` request, as if restarted.
pub fn changing_uuid() -> ModuleApp {
    let mut app = builtin::preproc();
    app.quirks.uuid_per_request = true;
    app
}

/// A working tokenizer with no `/docs` page.
pub fn no_docs() -> ModuleApp {
    let mut app = tokenizer_module(NO_DOCS_UUID, "fixture-no-docs");
    app.docs = None;
    app
}

/// A working tokenizer that holds back its first dispatch for `delay`.
pub fn delayed(delay: Duration) -> ModuleApp {
    let mut app = tokenizer_module(DELAYED_UUID, "fixture-delayed");
    app.quirks.first_dispatch_delay = Some(delay);
    app
}

//! Reference processing modules and the tools to check third-party ones.
//!
//! The builtin modules ([`builtin`]) serve the Module API over HTTP and
//! answer dispatches through the Callback API, exactly like an external
//! module would. [`fixtures`] holds deliberately broken modules and
//! [`conformance`] checks any module URL against the protocol.

pub mod algorithms;
pub mod builtin;
pub mod conformance;
pub mod fixtures;
pub mod server;

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

pub use conformance::{conformance_check, Check, ConformanceOptions, ConformanceReport, Outcome};
pub use server::{ModuleApp, RunningModule};

/// Every module this crate can serve, by command-line name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModuleKind {
    Preproc,
    Ner,
    Cluster,
    MissingUuid,
    MissingIcon,
    BlackHole,
    WrongOutputType,
    ChangingUuid,
    NoDocs,
    Delayed,
}

impl ModuleKind {
    pub const BUILTIN: [ModuleKind; 3] = [ModuleKind::Preproc, ModuleKind::Ner, ModuleKind::Cluster];

    pub const ALL: [ModuleKind; 10] = [
        ModuleKind::Preproc,
        ModuleKind::Ner,
        ModuleKind::Cluster,
        ModuleKind::MissingUuid,
        ModuleKind::MissingIcon,
        ModuleKind::BlackHole,
        ModuleKind::WrongOutputType,
        ModuleKind::ChangingUuid,
        ModuleKind::NoDocs,
        ModuleKind::Delayed,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModuleKind::Preproc => "preproc",
            ModuleKind::Ner => "ner",
            ModuleKind::Cluster => "cluster",
            ModuleKind::MissingUuid => "missing-uuid",
            ModuleKind::MissingIcon => "missing-icon",
            ModuleKind::BlackHole => "black-hole",
            ModuleKind::WrongOutputType => "wrong-output-type",
            ModuleKind::ChangingUuid => "changing-uuid",
            ModuleKind::NoDocs => "no-docs",
            ModuleKind::Delayed => "delayed",
        }
    }

    /// `delay` only affects [`ModuleKind::Delayed`].
    pub fn app(&self, delay: Duration) -> ModuleApp {
        match self {
            ModuleKind::Preproc => builtin::preproc(),
            ModuleKind::Ner => builtin::ner(),
            ModuleKind::Cluster => builtin::clusterer(),
            ModuleKind::MissingUuid => fixtures::missing_uuid(),
            ModuleKind::MissingIcon => fixtures::missing_icon(),
            ModuleKind::BlackHole => fixtures::black_hole(),
            ModuleKind::WrongOutputType => fixtures::wrong_output_type(),
            ModuleKind::ChangingUuid => fixtures::changing_uuid(),
            ModuleKind::NoDocs => fixtures::no_docs(),
            ModuleKind::Delayed => fixtures::delayed(delay),
        }
    }
}

impl fmt::Display for ModuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown module kind `{0}`")]
pub struct UnknownKind(pub String);

impl FromStr for ModuleKind {
    type Err = UnknownKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| UnknownKind(s.to_string()))
    }
}

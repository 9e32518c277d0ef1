//! The angler backend: module registry, pipeline executor and HTTP API.
//!
//! [`server::Server`] binds everything to a state directory laid out as
//!
//! ```text
//! state/
//!   registry             catalog of registered modules
//!   corpora/{id}.json    uploaded corpora
//!   pipelines/{id}.angler
//!   jobs/{job_id}/job.json and one file per completed (node, port)
//! ```

pub mod api;
pub mod config;
pub mod corpora;
pub mod error;
pub mod executor;
pub mod jobs;
pub mod pipelines;
pub mod registry;
pub mod server;
mod store;

pub use config::Config;
pub use error::{ApiError, ErrorCode};
pub use server::{RunningBackend, Server};

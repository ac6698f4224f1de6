//! The `celldrill` command line: batch `ingest`/`drill` runs and the `serve`
//! API used by the demarcation UI.

pub mod cli;
pub mod run;
pub mod service;
pub mod store;

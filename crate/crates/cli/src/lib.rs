//! Orchestration for the `sqa-forge` command line: configuration, the HTTP
//! chat client used for optional rewriting and text-only answering, and the
//! review service.

pub mod config;
pub mod llm;
pub mod server;

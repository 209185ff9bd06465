//! Command-line tooling, file formats and study orchestration around
//! `labdx-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod io;
pub mod report;
pub mod study;

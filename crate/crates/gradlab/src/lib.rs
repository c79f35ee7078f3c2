//! Command-line driver and file formats for `gradlab-core`.
//!
//! `config` parses and validates the JSON documents the subcommands take,
//! `io` reads and writes field series, `report` writes CSV and JSON reports
//! with manifests, and `exec` runs independent solves on a thread pool.

pub mod cli;
pub mod config;
pub mod exec;
pub mod io;
pub mod report;

//! Operational surface of the casper toolkit: CLI command implementations,
//! configuration, MTOP ingestion, and the HTTP control service.

pub mod commands;
pub mod config;
pub mod error;
pub mod ingest;
pub mod service;

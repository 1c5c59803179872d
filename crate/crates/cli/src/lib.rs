//! Library surface of the CLI, exposed so integration tests can drive the
//! commands in-process.

pub mod commands;
pub mod config;
pub mod plot;
pub mod runner;

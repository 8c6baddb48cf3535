//! Library surface of the CLI: configuration schema, command
//! implementations, and manifests, shared by the binary and the test suites.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

//! Library side of the `hosweep` command: run configuration and command implementations.

pub mod commands;
pub mod config;

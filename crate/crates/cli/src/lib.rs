//! File formats, configuration and subcommands behind the `enf` binary.

pub mod app;
pub mod commands;
pub mod config;
pub mod output;
pub mod reference;
pub mod wav;

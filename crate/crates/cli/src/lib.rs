//! Library side of the `capres` command-line tool.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod svg;

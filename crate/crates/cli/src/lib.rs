//! Front ends for the `ppipower` planning library: a JSON API, an HTTP
//! service wrapping it, and the `ppipower` command line tool.

pub mod api;
pub mod cli;
pub mod service;

pub use cli::{run_cli, CliOutput};

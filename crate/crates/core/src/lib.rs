//! Automatic evaluation of programming-assignment submissions.
//!
//! The engine reads an instructor-written specification file, extracts a
//! student's zip archive into an isolated workspace, compiles it, runs static
//! checks and test cases, and renders a feedback comment that is posted back
//! to the learning-management system the submission came from.
//!
//! The pieces can be used on their own:
//!
//! - [`spec`] parses and renders the line-oriented specification format.
//! - [`sandbox`] creates workspaces from zip archives and runs commands in
//!   them under an isolation command template.
//! - [`evaluator`] runs a full evaluation and renders the feedback text.
//! - [`lms`] talks to a Canvas-compatible REST API or a local directory tree.
//! - [`daemon`] loads the operator configuration and drives the polling loop.
//!
//! Runnable programs for each capability live in the crate's `examples/`
//! directory, e.g. `cargo run --example parse_spec`.

pub mod daemon;
pub mod evaluator;
pub mod lms;
mod paths;
pub mod sandbox;
pub mod spec;

pub use daemon::{load_config, Config, ConfigError, ConfigOverrides, Daemon, DaemonOptions, PollSummary};
pub use evaluator::{evaluate, render_report, EvaluationReport, Verdict, MARKER};
pub use lms::{Lms, LmsBackend, LmsError, LocalBackend, RestBackend};
pub use sandbox::{create_workspace, execute, ExecRequest, ExecResult, IsolationConfig, Workspace};
pub use spec::{parse_spec, render_spec, validate_spec, ParseError, SpecFile, TestCase};

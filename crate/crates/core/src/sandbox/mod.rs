//! Isolated workspaces and command execution.
//!
//! A [`Workspace`] is a fresh directory populated from the submission zip
//! and any instructor support archives. Commands run inside it through an
//! [`IsolationConfig`]: an operator-supplied shell template in which the
//! word `SUBMISSIONS` is replaced by the workspace directory and `EVALUATE`
//! by the command to run.

mod exec;
mod isolation;
mod workspace;

use thiserror::Error;

pub use exec::{execute, run_host_command, ExecRequest, ExecResult, ExecStatus, KILL_GRACE, MAX_CAPTURE_BYTES};
pub use isolation::{IsolationConfig, EVALUATE_PLACEHOLDER, NAMESPACE_JAIL_TEMPLATE, SUBMISSIONS_PLACEHOLDER};
pub use workspace::{create_workspace, create_workspace_in, destroy_workspace, ExtractionLimits, Workspace};

#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("cannot extract archive: {0}")]
    Extraction(String),
    #[error("unsafe archive entry: {0}")]
    Security(String),
    #[error("archive exceeds limits: {0}")]
    Limit(String),
    #[error("isolation config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

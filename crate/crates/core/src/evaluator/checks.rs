use std::fs;
use std::path::{Path, PathBuf};

use super::diff::{diff_lines, split_output_lines};
use super::{CheckOutcome, STEP_TIMEOUT};
use crate::sandbox::{execute, ExecRequest, ExecStatus, IsolationConfig, Workspace};

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// True if `name` occurs in `text` bounded by non-identifier characters.
pub(crate) fn contains_identifier(text: &str, name: &str) -> bool {
    if name.is_empty() {
        return false;
    }
    text.match_indices(name).any(|(at, _)| {
        let before = text[..at].chars().next_back();
        let after = text[at + name.len()..].chars().next();
        !before.is_some_and(is_ident_char) && !after.is_some_and(is_ident_char)
    })
}

/// Passes if any of `files` uses `function` as a whole identifier. Files
/// that do not exist simply do not match.
pub fn check_function_use(function: &str, files: &[PathBuf], workspace: &Workspace) -> CheckOutcome {
    let mut missing = Vec::new();
    for file in files {
        let Some(bytes) = workspace.resolve(file).and_then(|p| fs::read(p).ok()) else {
            missing.push(file.display().to_string());
            continue;
        };
        if contains_identifier(&String::from_utf8_lossy(&bytes), function) {
            return CheckOutcome::Passed { output: None };
        }
    }
    let searched: Vec<String> = files.iter().map(|f| f.display().to_string()).collect();
    let mut detail = format!("{function} is not used in {}", searched.join(", "));
    if !missing.is_empty() {
        detail.push_str(&format!(" (missing: {})", missing.join(", ")));
    }
    CheckOutcome::Failed { detail }
}

/// `TCMD` (`must_succeed`) fails on a nonzero exit or timeout; `CMD` always
/// passes and just records its output.
pub fn run_static_command(
    command: &str,
    must_succeed: bool,
    workspace: &Workspace,
    config: &IsolationConfig,
) -> CheckOutcome {
    let result = execute(workspace, &ExecRequest::new(command).timeout(STEP_TIMEOUT), config);
    let status = match &result.status {
        ExecStatus::Exited { code } => format!("exit code {code}"),
        ExecStatus::TimedOut => format!("timed out after {}s", STEP_TIMEOUT.as_secs()),
        ExecStatus::SpawnFailed { reason } => format!("could not run: {reason}"),
    };
    let output = result.combined_output();
    if must_succeed && !result.succeeded() {
        let mut detail = status;
        if !output.is_empty() {
            detail.push('\n');
            detail.push_str(&output);
        }
        return CheckOutcome::Failed { detail };
    }
    let output = if result.succeeded() {
        output
    } else {
        format!("{status}\n{output}")
    };
    CheckOutcome::Passed { output: Some(output) }
}

/// Passes iff both files exist and are byte-identical.
pub fn compare_generated_files(left: &Path, right: &Path, workspace: &Workspace) -> CheckOutcome {
    let read = |p: &Path| workspace.resolve(p).and_then(|full| fs::read(full).ok());
    let (l, r) = (read(left), read(right));
    let missing: Vec<String> = [(left, &l), (right, &r)]
        .iter()
        .filter(|(_, bytes)| bytes.is_none())
        .map(|(p, _)| p.display().to_string())
        .collect();
    let (Some(l), Some(r)) = (l, r) else {
        return CheckOutcome::Failed {
            detail: format!("missing file: {}", missing.join(", ")),
        };
    };
    if l == r {
        return CheckOutcome::Passed { output: None };
    }
    let offset = l
        .iter()
        .zip(&r)
        .position(|(a, b)| a != b)
        .unwrap_or(l.len().min(r.len()));
    let mut detail = format!("{} and {} differ at byte {offset}", left.display(), right.display());
    if let (Ok(_), Ok(_)) = (std::str::from_utf8(&l), std::str::from_utf8(&r)) {
        let diff = diff_lines(&split_output_lines(&l).0, &split_output_lines(&r).0);
        for line in diff.render(super::MAX_DIFF_LINES) {
            detail.push('\n');
            detail.push_str(&line);
        }
    }
    CheckOutcome::Failed { detail }
}

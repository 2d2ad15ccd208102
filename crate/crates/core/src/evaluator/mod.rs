//! Full evaluation of one submission: compile, static checks, tests.
//!
//! Every failure is encoded in the [`EvaluationReport`]; nothing here
//! returns an error. Tests run sequentially in ordinal order so reports are
//! deterministic for deterministic submissions.

mod checks;
mod diff;
mod report;

use std::fs;
use std::time::Duration;

use crate::sandbox::{execute, ExecRequest, ExecStatus, IsolationConfig, Workspace};
use crate::spec::{ExpectedOutput, SpecFile, StaticCheck, StdinSource, TestCase};

pub use checks::{check_function_use, compare_generated_files, run_static_command};
pub use diff::{compare_output, split_output_lines, DiffLine, OutputDiff};
pub use report::{render_notice, render_report, MAX_DIFF_LINES};

/// First line of every feedback comment. Its presence on a submission is
/// what marks the submission as already evaluated.
pub const MARKER: &str = "CodEval Result";

/// Timeout for compile steps and static commands, which have no `TO`.
pub const STEP_TIMEOUT: Duration = Duration::from_secs(20);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CompileOutcome {
    Passed,
    Failed {
        output: String,
    },
    /// The specification has no compile steps.
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CheckOutcome {
    /// `output` carries what an informational command printed.
    Passed {
        output: Option<String>,
    },
    Failed {
        detail: String,
    },
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        matches!(self, CheckOutcome::Passed { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckResult {
    pub description: String,
    /// Whether a failure fails the evaluation (CF, TCMD, CMP).
    pub gating: bool,
    pub outcome: CheckOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TestStatus {
    Pass,
    Fail,
    TimedOut,
    /// The test could not be run, e.g. an instructor-supplied file is
    /// missing from the workspace.
    Error {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub ordinal: usize,
    pub hidden: bool,
    pub status: TestStatus,
    pub command: String,
    pub expected_exit: i32,
    /// `None` when the program timed out or never ran.
    pub exit_observed: Option<i32>,
    /// `None` when the stream was not compared.
    pub stdout_diff: Option<OutputDiff>,
    pub stderr_diff: Option<OutputDiff>,
    pub timeout_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    AllPassed,
    ProblemsFound,
    CompileFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub compile: CompileOutcome,
    pub static_checks: Vec<CheckResult>,
    pub tests: Vec<TestResult>,
    pub verdict: Verdict,
}

impl EvaluationReport {
    pub fn marker(&self) -> &'static str {
        MARKER
    }

    fn compile_failed(output: String) -> Self {
        EvaluationReport {
            compile: CompileOutcome::Failed { output },
            static_checks: Vec::new(),
            tests: Vec::new(),
            verdict: Verdict::CompileFailed,
        }
    }

    pub fn passed_tests(&self) -> usize {
        self.tests.iter().filter(|t| t.status == TestStatus::Pass).count()
    }
}

/// Verdict implied by the parts of a report.
pub fn compute_verdict(compile: &CompileOutcome, checks: &[CheckResult], tests: &[TestResult]) -> Verdict {
    if matches!(compile, CompileOutcome::Failed { .. }) {
        return Verdict::CompileFailed;
    }
    let checks_ok = checks.iter().all(|c| !c.gating || c.outcome.passed());
    let tests_ok = tests.iter().all(|t| t.status == TestStatus::Pass);
    if checks_ok && tests_ok {
        Verdict::AllPassed
    } else {
        Verdict::ProblemsFound
    }
}

fn describe_failure(command: &str, result: &crate::sandbox::ExecResult, timeout: Duration) -> String {
    let mut text = format!("$ {command}\n");
    match &result.status {
        ExecStatus::Exited { code } => text.push_str(&format!("exit code {code}\n")),
        ExecStatus::TimedOut => text.push_str(&format!("timed out after {}s\n", timeout.as_secs_f64())),
        ExecStatus::SpawnFailed { reason } => text.push_str(&format!("could not run: {reason}\n")),
    }
    text.push_str(&result.combined_output());
    text
}

/// Runs compile steps (stopping at the first failure), then every static
/// check in file order, then every test in ordinal order.
pub fn evaluate(workspace: &Workspace, spec: &SpecFile, config: &IsolationConfig) -> EvaluationReport {
    let mut compile = CompileOutcome::Skipped;
    for step in &spec.compile_steps {
        let request = ExecRequest::new(&step.command).timeout(STEP_TIMEOUT);
        let result = execute(workspace, &request, config);
        if !result.succeeded() {
            return EvaluationReport::compile_failed(describe_failure(&step.command, &result, STEP_TIMEOUT));
        }
        compile = CompileOutcome::Passed;
    }

    let static_checks: Vec<CheckResult> = spec
        .static_checks
        .iter()
        .map(|check| CheckResult {
            description: check.describe(),
            gating: check.is_gating(),
            outcome: run_check(check, workspace, config),
        })
        .collect();

    let tests: Vec<TestResult> = spec.tests.iter().map(|t| run_test(t, workspace, config)).collect();
    let verdict = compute_verdict(&compile, &static_checks, &tests);
    EvaluationReport {
        compile,
        static_checks,
        tests,
        verdict,
    }
}

fn run_check(check: &StaticCheck, workspace: &Workspace, config: &IsolationConfig) -> CheckOutcome {
    match check {
        StaticCheck::FunctionUse { function, files } => check_function_use(function, files, workspace),
        StaticCheck::Command { command, must_succeed } => run_static_command(command, *must_succeed, workspace, config),
        StaticCheck::FileCompare { left, right } => compare_generated_files(left, right, workspace),
    }
}

fn read_workspace_file(workspace: &Workspace, path: &std::path::Path, what: &str) -> Result<Vec<u8>, String> {
    let full = workspace
        .resolve(path)
        .ok_or_else(|| format!("{what} {} is outside the workspace", path.display()))?;
    fs::read(&full).map_err(|_| format!("missing {what} {}", path.display()))
}

/// Runs one test case and compares exit code, stdout and (when an `E` line
/// was given) stderr.
pub fn run_test(test: &TestCase, workspace: &Workspace, config: &IsolationConfig) -> TestResult {
    let mut result = TestResult {
        ordinal: test.ordinal,
        hidden: test.hidden,
        status: TestStatus::Fail,
        command: test.command.clone(),
        expected_exit: test.expected_exit,
        exit_observed: None,
        stdout_diff: None,
        stderr_diff: None,
        timeout_s: test.timeout_s,
    };
    let error = |mut r: TestResult, reason: String| {
        r.status = TestStatus::Error { reason };
        r
    };

    let stdin = match &test.stdin {
        StdinSource::None => Vec::new(),
        StdinSource::Lines(lines) => lines.iter().flat_map(|l| format!("{l}\n").into_bytes()).collect(),
        StdinSource::File(path) => match read_workspace_file(workspace, path, "input file") {
            Ok(bytes) => bytes,
            Err(reason) => return error(result, reason),
        },
    };
    let expected_stdout = match &test.expected_stdout {
        ExpectedOutput::Lines(lines) => lines.clone(),
        ExpectedOutput::File(path) => match read_workspace_file(workspace, path, "expected-output file") {
            Ok(bytes) => split_output_lines(&bytes).0,
            Err(reason) => return error(result, reason),
        },
    };

    let request = ExecRequest::new(&test.command).stdin(stdin).timeout(test.timeout());
    let exec = execute(workspace, &request, config);
    let code = match exec.status {
        ExecStatus::Exited { code } => code,
        ExecStatus::TimedOut => {
            result.status = TestStatus::TimedOut;
            return result;
        }
        ExecStatus::SpawnFailed { ref reason } => return error(result, format!("could not run: {reason}")),
    };
    result.exit_observed = Some(code);

    let mut stdout_diff = compare_output(&expected_stdout, &exec.stdout);
    if exec.stdout_truncated {
        stdout_diff.notes.push("stdout was truncated at 10 MiB".into());
    }
    let stderr_diff = test.expected_stderr.as_ref().map(|expected| {
        let mut d = compare_output(expected, &exec.stderr);
        if exec.stderr_truncated {
            d.notes.push("stderr was truncated at 10 MiB".into());
        }
        d
    });

    let pass =
        code == test.expected_exit && stdout_diff.is_empty() && stderr_diff.as_ref().map_or(true, OutputDiff::is_empty);
    result.status = if pass { TestStatus::Pass } else { TestStatus::Fail };
    result.stdout_diff = Some(stdout_diff);
    result.stderr_diff = stderr_diff;
    result
}

use super::{CheckOutcome, CompileOutcome, EvaluationReport, TestResult, TestStatus, Verdict, MARKER};

/// Longest diff (or tool output) shown for a single item.
pub const MAX_DIFF_LINES: usize = 50;

const INDENT: &str = "    ";

fn push_indented(out: &mut String, text: &str) {
    let lines: Vec<&str> = text.trim_end_matches('\n').lines().collect();
    for line in lines.iter().take(MAX_DIFF_LINES) {
        out.push_str(INDENT);
        out.push_str(line);
        out.push('\n');
    }
    if lines.len() > MAX_DIFF_LINES {
        out.push_str(&format!("{INDENT}... ({} more lines)\n", lines.len() - MAX_DIFF_LINES));
    }
}

fn status_word(status: &TestStatus) -> &'static str {
    match status {
        TestStatus::Pass => "PASSED",
        TestStatus::Fail => "FAILED",
        TestStatus::TimedOut => "TIMED OUT",
        TestStatus::Error { .. } => "ERROR",
    }
}

fn render_test(out: &mut String, test: &TestResult) {
    out.push_str(&format!("Test {}: {}\n", test.ordinal, status_word(&test.status)));
    // Hidden tests report their status and nothing else.
    if test.hidden || test.status == TestStatus::Pass {
        return;
    }
    out.push_str(&format!("{INDENT}Command: {}\n", test.command));
    match &test.status {
        TestStatus::TimedOut => {
            out.push_str(&format!("{INDENT}Did not finish within {} seconds\n", test.timeout_s));
        }
        TestStatus::Error { reason } => out.push_str(&format!("{INDENT}{reason}\n")),
        _ => {}
    }
    if let Some(code) = test.exit_observed {
        if code != test.expected_exit {
            out.push_str(&format!(
                "{INDENT}Exit code: expected {}, got {code}\n",
                test.expected_exit
            ));
        }
    }
    for (label, diff) in [("Output", &test.stdout_diff), ("Error output", &test.stderr_diff)] {
        if let Some(diff) = diff.as_ref().filter(|d| !d.is_empty()) {
            out.push_str(&format!("{INDENT}{label} differences (- expected, + actual):\n"));
            for line in diff.render(MAX_DIFF_LINES) {
                out.push_str(INDENT);
                out.push_str(&line);
                out.push('\n');
            }
        }
    }
}

/// Renders the feedback comment. The first line is always [`MARKER`].
pub fn render_report(report: &EvaluationReport) -> String {
    let mut out = format!("{MARKER}\n");
    match &report.compile {
        CompileOutcome::Passed => out.push_str("Compilation: PASSED\n"),
        CompileOutcome::Skipped => {}
        CompileOutcome::Failed { output } => {
            out.push_str("Compilation: FAILED\n");
            push_indented(&mut out, output);
        }
    }
    for check in &report.static_checks {
        match &check.outcome {
            CheckOutcome::Passed { output } => {
                out.push_str(&format!("Check {}: PASSED\n", check.description));
                if let Some(text) = output.as_deref().filter(|t| !t.trim().is_empty()) {
                    push_indented(&mut out, text);
                }
            }
            CheckOutcome::Failed { detail } => {
                out.push_str(&format!("Check {}: FAILED\n", check.description));
                push_indented(&mut out, detail);
            }
        }
    }
    for test in &report.tests {
        render_test(&mut out, test);
    }
    let summary = match report.verdict {
        Verdict::CompileFailed => "Compilation failed; no tests were run.".to_string(),
        Verdict::AllPassed => format!(
            "All checks passed; {} of {} tests passed.",
            report.passed_tests(),
            report.tests.len()
        ),
        Verdict::ProblemsFound => format!(
            "Problems found; {} of {} tests passed.",
            report.passed_tests(),
            report.tests.len()
        ),
    };
    out.push_str(&summary);
    out.push('\n');
    out
}

/// A marker comment carrying a message instead of test results, for
/// submissions that could not be evaluated (no archive, unsafe archive).
pub fn render_notice(message: &str) -> String {
    format!("{MARKER}\n{}\n", message.trim_end())
}

use similar::{capture_diff_slices, group_diff_ops, Algorithm, ChangeTag};

/// Lines of context kept around each change.
const CONTEXT: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DiffLine {
    Context(String),
    /// Present in the expected output only.
    Expected(String),
    /// Present in the actual output only.
    Actual(String),
    /// Unchanged lines skipped between two hunks.
    Gap,
}

/// Line-level differences between expected and actual output. Empty when
/// they match.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct OutputDiff {
    pub lines: Vec<DiffLine>,
    pub notes: Vec<String>,
}

impl OutputDiff {
    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    /// Unified-diff style text, at most `max_lines` diff lines followed by
    /// an elision marker when cut.
    pub fn render(&self, max_lines: usize) -> Vec<String> {
        let mut out: Vec<String> = self
            .lines
            .iter()
            .take(max_lines)
            .map(|l| match l {
                DiffLine::Context(s) => format!(" {s}"),
                DiffLine::Expected(s) => format!("-{s}"),
                DiffLine::Actual(s) => format!("+{s}"),
                DiffLine::Gap => "...".to_string(),
            })
            .collect();
        if self.lines.len() > max_lines {
            out.push(format!("... ({} more diff lines)", self.lines.len() - max_lines));
        }
        out.extend(self.notes.iter().map(|n| format!("({n})")));
        out
    }
}

/// Splits program output into lines: LF separated, a CR before the LF is
/// dropped, and a final newline does not produce an extra empty line.
/// Returns the lines and whether invalid UTF-8 had to be replaced.
pub fn split_output_lines(bytes: &[u8]) -> (Vec<String>, bool) {
    let text = String::from_utf8_lossy(bytes);
    let lossy = matches!(text, std::borrow::Cow::Owned(_));
    if text.is_empty() {
        return (Vec::new(), lossy);
    }
    let body = text.strip_suffix('\n').unwrap_or(&text);
    let lines = body
        .split('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l).to_string())
        .collect();
    (lines, lossy)
}

/// Compares expected lines with raw program output. Lines must match
/// exactly; only the trailing newline and CRs are forgiven.
pub fn compare_output(expected: &[String], actual: &[u8]) -> OutputDiff {
    let (actual_lines, lossy) = split_output_lines(actual);
    let mut diff = diff_lines(expected, &actual_lines);
    if lossy && !diff.is_empty() {
        diff.notes
            .push("output was not valid UTF-8; undecodable bytes shown as \u{fffd}".to_string());
    }
    diff
}

pub(crate) fn diff_lines(expected: &[String], actual: &[String]) -> OutputDiff {
    if expected == actual {
        return OutputDiff::default();
    }
    let ops = capture_diff_slices(Algorithm::Myers, expected, actual);
    let mut lines = Vec::new();
    for (i, group) in group_diff_ops(ops, CONTEXT).iter().enumerate() {
        if i > 0 {
            lines.push(DiffLine::Gap);
        }
        for op in group {
            for change in op.iter_changes(expected, actual) {
                let value = change.value().clone();
                lines.push(match change.tag() {
                    ChangeTag::Equal => DiffLine::Context(value),
                    ChangeTag::Delete => DiffLine::Expected(value),
                    ChangeTag::Insert => DiffLine::Actual(value),
                });
            }
        }
    }
    OutputDiff {
        lines,
        notes: Vec::new(),
    }
}

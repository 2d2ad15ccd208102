//! Specification files.
//!
//! A specification file is line oriented. Every non-blank line is a tag, a
//! single space, and a payload:
//!
//! ```text
//! RUN evaluate.sh
//! C javac edu/sjsu/CS001/Hello.java
//!
//! T java edu.sjsu.CS001.Hello ben
//! X 0
//! O Hello ben
//! ```
//!
//! `T` and `HT` open a test case; `I`, `IF`, `O`, `OF`, `E`, `TO` and `X`
//! attach to the most recently opened one. Everything else is file level.

use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::paths::confined_relative;

/// Strategy used when no `RUN` line is present.
pub const DEFAULT_RUN_STRATEGY: &str = "evaluate.sh";

/// Strategies this engine knows how to execute.
pub const SUPPORTED_STRATEGIES: &[&str] = &[DEFAULT_RUN_STRATEGY];

/// Seconds a test may run when no `TO` line is given.
pub const DEFAULT_TIMEOUT_S: f64 = 20.0;

/// Upper bound accepted for `TO`.
pub const MAX_TIMEOUT_S: f64 = 86_400.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tag {
    Run,
    Zip,
    Compile,
    CheckFunction,
    Command,
    TestCommand,
    Compare,
    Test,
    HiddenTest,
    Input,
    InputFile,
    Output,
    OutputFile,
    Error,
    Timeout,
    ExitCode,
}

impl Tag {
    pub const ALL: [Tag; 16] = [
        Tag::Run,
        Tag::Zip,
        Tag::Compile,
        Tag::CheckFunction,
        Tag::Command,
        Tag::TestCommand,
        Tag::Compare,
        Tag::Test,
        Tag::HiddenTest,
        Tag::Input,
        Tag::InputFile,
        Tag::Output,
        Tag::OutputFile,
        Tag::Error,
        Tag::Timeout,
        Tag::ExitCode,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Tag::Run => "RUN",
            Tag::Zip => "Z",
            Tag::Compile => "C",
            Tag::CheckFunction => "CF",
            Tag::Command => "CMD",
            Tag::TestCommand => "TCMD",
            Tag::Compare => "CMP",
            Tag::Test => "T",
            Tag::HiddenTest => "HT",
            Tag::Input => "I",
            Tag::InputFile => "IF",
            Tag::Output => "O",
            Tag::OutputFile => "OF",
            Tag::Error => "E",
            Tag::Timeout => "TO",
            Tag::ExitCode => "X",
        }
    }

    pub fn from_token(token: &str) -> Option<Tag> {
        Tag::ALL.iter().copied().find(|t| t.as_str() == token)
    }

    /// Tags that bind to the most recently opened test case.
    pub fn is_attachment(self) -> bool {
        matches!(
            self,
            Tag::Input | Tag::InputFile | Tag::Output | Tag::OutputFile | Tag::Error | Tag::Timeout | Tag::ExitCode
        )
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One tagged line of a specification file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpecDirective {
    pub tag: Tag,
    pub payload: String,
    /// 1-based line in the original text.
    pub line_number: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line_number}: {reason}")]
pub struct ParseError {
    pub line_number: usize,
    pub reason: String,
}

impl ParseError {
    fn new(line_number: usize, reason: impl Into<String>) -> Self {
        ParseError {
            line_number,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompileStep {
    pub command: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StaticCheck {
    /// `CF`: the function must appear in at least one of the files.
    FunctionUse { function: String, files: Vec<PathBuf> },
    /// `CMD` (informational) or `TCMD` (must exit 0).
    Command { command: String, must_succeed: bool },
    /// `CMP`: the two files must be byte-identical.
    FileCompare { left: PathBuf, right: PathBuf },
}

impl StaticCheck {
    /// Whether a failure of this check fails the evaluation.
    pub fn is_gating(&self) -> bool {
        match self {
            StaticCheck::FunctionUse { .. } | StaticCheck::FileCompare { .. } => true,
            StaticCheck::Command { must_succeed, .. } => *must_succeed,
        }
    }

    /// Short human-readable description, shaped like the directive.
    pub fn describe(&self) -> String {
        match self {
            StaticCheck::FunctionUse { function, files } => {
                format!("CF {} {}", function, join_paths(files))
            }
            StaticCheck::Command { command, must_succeed } => {
                format!("{} {}", if *must_succeed { "TCMD" } else { "CMD" }, command)
            }
            StaticCheck::FileCompare { left, right } => {
                format!("CMP {}", join_paths([left, right]))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum StdinSource {
    #[default]
    None,
    Lines(Vec<String>),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExpectedOutput {
    /// Expected lines in order; empty means no output at all.
    Lines(Vec<String>),
    File(PathBuf),
}

impl Default for ExpectedOutput {
    fn default() -> Self {
        ExpectedOutput::Lines(Vec::new())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestCase {
    /// 1-based position in file order.
    pub ordinal: usize,
    pub command: String,
    pub hidden: bool,
    pub stdin: StdinSource,
    pub expected_stdout: ExpectedOutput,
    /// `None` when no `E` line was given: stderr is not checked.
    pub expected_stderr: Option<Vec<String>>,
    pub expected_exit: i32,
    pub timeout_s: f64,
}

impl TestCase {
    pub fn timeout(&self) -> std::time::Duration {
        std::time::Duration::from_secs_f64(self.timeout_s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpecFile {
    pub run_strategy: String,
    pub support_archives: Vec<String>,
    pub compile_steps: Vec<CompileStep>,
    pub static_checks: Vec<StaticCheck>,
    pub tests: Vec<TestCase>,
}

impl Default for SpecFile {
    fn default() -> Self {
        SpecFile {
            run_strategy: DEFAULT_RUN_STRATEGY.to_string(),
            support_archives: Vec::new(),
            compile_steps: Vec::new(),
            static_checks: Vec::new(),
            tests: Vec::new(),
        }
    }
}

impl SpecFile {
    /// Workspace files named by `IF`, `OF` and `CMP` lines, in file order
    /// without duplicates. Their existence can only be checked once a
    /// workspace has been populated.
    pub fn referenced_files(&self) -> Vec<PathBuf> {
        let mut out: Vec<PathBuf> = Vec::new();
        let mut push = |p: &PathBuf| {
            if !out.contains(p) {
                out.push(p.clone());
            }
        };
        for check in &self.static_checks {
            if let StaticCheck::FileCompare { left, right } = check {
                push(left);
                push(right);
            }
        }
        for test in &self.tests {
            if let StdinSource::File(p) = &test.stdin {
                push(p);
            }
            if let ExpectedOutput::File(p) = &test.expected_stdout {
                push(p);
            }
        }
        out
    }
}

/// Non-fatal findings about a parsed specification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Warning {
    NoTests,
    UnknownStrategy(String),
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::NoTests => f.write_str("no tests defined"),
            Warning::UnknownStrategy(s) => write!(
                f,
                "unknown strategy {s:?} (supported: {})",
                SUPPORTED_STRATEGIES.join(", ")
            ),
        }
    }
}

/// Splits a document into tagged lines. Blank lines are skipped; CR before
/// LF is dropped; trailing whitespace is stripped from payloads.
pub fn tokenize(text: &str) -> Result<Vec<SpecDirective>, ParseError> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut out = Vec::new();
    for (idx, raw) in text.split('\n').enumerate() {
        let line_number = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        let (token, payload) = match line.split_once(' ') {
            Some((t, p)) => (t, p.trim_end()),
            None => (line.trim_end(), ""),
        };
        let tag = Tag::from_token(token)
            .ok_or_else(|| ParseError::new(line_number, format!("unrecognized tag {token:?}")))?;
        if payload.trim().is_empty() {
            return Err(ParseError::new(line_number, format!("{tag} requires a payload")));
        }
        out.push(SpecDirective {
            tag,
            payload: payload.to_string(),
            line_number,
        });
    }
    Ok(out)
}

/// Attachment state of the test currently being built.
struct OpenTest {
    case: TestCase,
    stdin_lines: bool,
    stdin_file: bool,
    stdout_lines: bool,
    stdout_file: bool,
    exit_seen: bool,
    timeout_seen: bool,
}

impl OpenTest {
    fn new(ordinal: usize, command: String, hidden: bool) -> Self {
        OpenTest {
            case: TestCase {
                ordinal,
                command,
                hidden,
                stdin: StdinSource::None,
                expected_stdout: ExpectedOutput::default(),
                expected_stderr: None,
                expected_exit: 0,
                timeout_s: DEFAULT_TIMEOUT_S,
            },
            stdin_lines: false,
            stdin_file: false,
            stdout_lines: false,
            stdout_file: false,
            exit_seen: false,
            timeout_seen: false,
        }
    }

    fn attach(&mut self, d: &SpecDirective) -> Result<(), ParseError> {
        let err = |reason: String| Err(ParseError::new(d.line_number, reason));
        match d.tag {
            Tag::Input => {
                if self.stdin_file {
                    return err("I cannot be combined with IF on one test".into());
                }
                self.stdin_lines = true;
                match &mut self.case.stdin {
                    StdinSource::Lines(lines) => lines.push(d.payload.clone()),
                    other => *other = StdinSource::Lines(vec![d.payload.clone()]),
                }
            }
            Tag::InputFile => {
                if self.stdin_file {
                    return err("duplicate IF on one test".into());
                }
                if self.stdin_lines {
                    return err("IF cannot be combined with I on one test".into());
                }
                self.stdin_file = true;
                self.case.stdin = StdinSource::File(relative_path(d, &d.payload)?);
            }
            Tag::Output => {
                if self.stdout_file {
                    return err("O cannot be combined with OF on one test".into());
                }
                self.stdout_lines = true;
                match &mut self.case.expected_stdout {
                    ExpectedOutput::Lines(lines) => lines.push(d.payload.clone()),
                    other => *other = ExpectedOutput::Lines(vec![d.payload.clone()]),
                }
            }
            Tag::OutputFile => {
                if self.stdout_file {
                    return err("duplicate OF on one test".into());
                }
                if self.stdout_lines {
                    return err("OF cannot be combined with O on one test".into());
                }
                self.stdout_file = true;
                self.case.expected_stdout = ExpectedOutput::File(relative_path(d, &d.payload)?);
            }
            Tag::Error => self
                .case
                .expected_stderr
                .get_or_insert_with(Vec::new)
                .push(d.payload.clone()),
            Tag::ExitCode => {
                if self.exit_seen {
                    return err("duplicate X on one test".into());
                }
                self.exit_seen = true;
                self.case.expected_exit = d.payload.trim().parse::<i32>().map_err(|_| {
                    ParseError::new(d.line_number, format!("X expects an integer, got {:?}", d.payload))
                })?;
            }
            Tag::Timeout => {
                if self.timeout_seen {
                    return err("duplicate TO on one test".into());
                }
                self.timeout_seen = true;
                let secs =
                    d.payload.trim().parse::<f64>().map_err(|_| {
                        ParseError::new(d.line_number, format!("TO expects seconds, got {:?}", d.payload))
                    })?;
                if !secs.is_finite() || secs <= 0.0 {
                    return err(format!("TO must be positive, got {:?}", d.payload));
                }
                if secs > MAX_TIMEOUT_S {
                    return err(format!("TO may not exceed {MAX_TIMEOUT_S} seconds"));
                }
                self.case.timeout_s = secs;
            }
            _ => unreachable!("not an attachment tag"),
        }
        Ok(())
    }
}

fn split_words(d: &SpecDirective) -> Result<Vec<String>, ParseError> {
    let words =
        shell_words::split(&d.payload).map_err(|e| ParseError::new(d.line_number, format!("{}: {e}", d.tag)))?;
    Ok(words.into_iter().filter(|w| !w.is_empty()).collect())
}

fn relative_path(d: &SpecDirective, raw: &str) -> Result<PathBuf, ParseError> {
    confined_relative(raw.trim()).ok_or_else(|| {
        ParseError::new(
            d.line_number,
            format!("{}: {raw:?} must be a relative path inside the workspace", d.tag),
        )
    })
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_alphabetic() || c == '_') && chars.all(|c| c.is_alphanumeric() || c == '_')
}

/// Parses a specification document.
pub fn parse_spec(text: &str) -> Result<SpecFile, ParseError> {
    parse_directives(&tokenize(text)?)
}

pub fn parse_directives(directives: &[SpecDirective]) -> Result<SpecFile, ParseError> {
    let mut spec = SpecFile::default();
    let mut run_seen = false;
    let mut open: Option<OpenTest> = None;

    for d in directives {
        if d.tag.is_attachment() {
            match open.as_mut() {
                Some(t) => t.attach(d)?,
                None => {
                    return Err(ParseError::new(
                        d.line_number,
                        format!("{} must follow a T or HT line", d.tag),
                    ))
                }
            }
            continue;
        }
        match d.tag {
            Tag::Run => {
                if run_seen {
                    return Err(ParseError::new(d.line_number, "duplicate RUN"));
                }
                run_seen = true;
                spec.run_strategy = d.payload.trim().to_string();
            }
            Tag::Zip => {
                let names = split_words(d)?;
                if names.is_empty() {
                    return Err(ParseError::new(d.line_number, "Z requires an archive name"));
                }
                spec.support_archives.extend(names);
            }
            Tag::Compile => spec.compile_steps.push(CompileStep {
                command: d.payload.clone(),
            }),
            Tag::CheckFunction => {
                let mut words = split_words(d)?.into_iter();
                let function = words.next().unwrap_or_default();
                if !is_identifier(&function) {
                    return Err(ParseError::new(
                        d.line_number,
                        format!("CF expects a function name, got {function:?}"),
                    ));
                }
                let files = words.map(|w| relative_path(d, &w)).collect::<Result<Vec<_>, _>>()?;
                if files.is_empty() {
                    return Err(ParseError::new(d.line_number, "CF requires at least one file"));
                }
                spec.static_checks.push(StaticCheck::FunctionUse { function, files });
            }
            Tag::Command | Tag::TestCommand => spec.static_checks.push(StaticCheck::Command {
                command: d.payload.clone(),
                must_succeed: d.tag == Tag::TestCommand,
            }),
            Tag::Compare => {
                let words = split_words(d)?;
                if words.len() != 2 {
                    return Err(ParseError::new(
                        d.line_number,
                        format!("CMP expects two files, got {}", words.len()),
                    ));
                }
                spec.static_checks.push(StaticCheck::FileCompare {
                    left: relative_path(d, &words[0])?,
                    right: relative_path(d, &words[1])?,
                });
            }
            Tag::Test | Tag::HiddenTest => {
                if let Some(done) = open.take() {
                    spec.tests.push(done.case);
                }
                open = Some(OpenTest::new(
                    spec.tests.len() + 1,
                    d.payload.clone(),
                    d.tag == Tag::HiddenTest,
                ));
            }
            _ => unreachable!("attachment tags handled above"),
        }
    }
    if let Some(done) = open.take() {
        spec.tests.push(done.case);
    }
    Ok(spec)
}

/// Non-fatal problems: no tests at all, or a `RUN` strategy this engine
/// does not know.
pub fn validate_spec(spec: &SpecFile) -> Vec<Warning> {
    let mut warnings = Vec::new();
    if spec.tests.is_empty() {
        warnings.push(Warning::NoTests);
    }
    if !SUPPORTED_STRATEGIES.contains(&spec.run_strategy.as_str()) {
        warnings.push(Warning::UnknownStrategy(spec.run_strategy.clone()));
    }
    warnings
}

fn quote_path(p: &Path) -> String {
    shell_words::quote(&p.to_string_lossy()).into_owned()
}

fn join_paths<I, P>(paths: I) -> String
where
    I: IntoIterator<Item = P>,
    P: AsRef<Path>,
{
    paths
        .into_iter()
        .map(|p| quote_path(p.as_ref()))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Renders a specification back to canonical text. Parsing the result
/// yields a structurally identical [`SpecFile`].
pub fn render_spec(spec: &SpecFile) -> String {
    let mut out = String::new();
    let mut line = |tag: Tag, payload: &str| {
        out.push_str(tag.as_str());
        out.push(' ');
        out.push_str(payload);
        out.push('\n');
    };
    line(Tag::Run, &spec.run_strategy);
    for name in &spec.support_archives {
        line(Tag::Zip, &shell_words::quote(name));
    }
    for step in &spec.compile_steps {
        line(Tag::Compile, &step.command);
    }
    for check in &spec.static_checks {
        match check {
            StaticCheck::FunctionUse { function, files } => {
                line(Tag::CheckFunction, &format!("{function} {}", join_paths(files)))
            }
            StaticCheck::Command { command, must_succeed } => {
                line(if *must_succeed { Tag::TestCommand } else { Tag::Command }, command)
            }
            StaticCheck::FileCompare { left, right } => line(Tag::Compare, &join_paths([left, right])),
        }
    }
    for test in &spec.tests {
        line(if test.hidden { Tag::HiddenTest } else { Tag::Test }, &test.command);
        match &test.stdin {
            StdinSource::None => {}
            StdinSource::Lines(lines) => lines.iter().for_each(|l| line(Tag::Input, l)),
            StdinSource::File(p) => line(Tag::InputFile, &quote_path(p)),
        }
        match &test.expected_stdout {
            ExpectedOutput::Lines(lines) => lines.iter().for_each(|l| line(Tag::Output, l)),
            ExpectedOutput::File(p) => line(Tag::OutputFile, &quote_path(p)),
        }
        if let Some(lines) = &test.expected_stderr {
            lines.iter().for_each(|l| line(Tag::Error, l));
        }
        if test.timeout_s != DEFAULT_TIMEOUT_S {
            line(Tag::Timeout, &test.timeout_s.to_string());
        }
        line(Tag::ExitCode, &test.expected_exit.to_string());
    }
    out
}

//! Generators for arbitrary well-formed specifications.

use std::path::PathBuf;

use codeval::spec::{CompileStep, ExpectedOutput, SpecFile, StaticCheck, StdinSource, TestCase, MAX_TIMEOUT_S};
use proptest::prelude::*;

pub fn word() -> impl Strategy<Value = String> {
    "[a-z_][a-z0-9_]{0,6}"
}

pub fn path() -> impl Strategy<Value = PathBuf> {
    (
        prop::collection::vec("[a-z0-9_-]{1,6}", 1..3),
        prop::option::of("\\.(txt|out|c)"),
    )
        .prop_map(|(segs, ext)| PathBuf::from(segs.join("/") + ext.as_deref().unwrap_or("")))
}

pub fn command() -> impl Strategy<Value = String> {
    (word(), "[a-zA-Z0-9 ./'\"$|&;<>=-]{0,24}").prop_map(|(w, rest)| format!("{w} {rest}").trim_end().to_string())
}

/// A payload line: printable, non-blank, no trailing whitespace.
pub fn text_line() -> impl Strategy<Value = String> {
    "[ -~]{0,24}[!-~]"
}

pub fn archive_name() -> impl Strategy<Value = String> {
    "[a-z][a-z _'-]{0,8}\\.zip"
}

pub fn stdin() -> impl Strategy<Value = StdinSource> {
    prop_oneof![
        Just(StdinSource::None),
        prop::collection::vec(text_line(), 1..4).prop_map(StdinSource::Lines),
        path().prop_map(StdinSource::File),
    ]
}

pub fn stdout() -> impl Strategy<Value = ExpectedOutput> {
    prop_oneof![
        prop::collection::vec(text_line(), 0..4).prop_map(ExpectedOutput::Lines),
        path().prop_map(ExpectedOutput::File),
    ]
}

pub fn timeout() -> impl Strategy<Value = f64> {
    prop_oneof![
        Just(20.0),
        (1u32..=(MAX_TIMEOUT_S as u32 * 4)).prop_map(|q| q as f64 / 4.0)
    ]
}

pub fn test_case() -> impl Strategy<Value = TestCase> {
    (
        command(),
        any::<bool>(),
        stdin(),
        stdout(),
        prop::option::of(prop::collection::vec(text_line(), 1..3)),
        any::<i32>(),
        timeout(),
    )
        .prop_map(
            |(command, hidden, stdin, expected_stdout, expected_stderr, expected_exit, timeout_s)| TestCase {
                ordinal: 0,
                command,
                hidden,
                stdin,
                expected_stdout,
                expected_stderr,
                expected_exit,
                timeout_s,
            },
        )
}

pub fn static_check() -> impl Strategy<Value = StaticCheck> {
    prop_oneof![
        (word(), prop::collection::vec(path(), 1..3))
            .prop_map(|(function, files)| StaticCheck::FunctionUse { function, files }),
        (command(), any::<bool>()).prop_map(|(command, must_succeed)| StaticCheck::Command { command, must_succeed }),
        (path(), path()).prop_map(|(left, right)| StaticCheck::FileCompare { left, right }),
    ]
}

pub fn spec_file() -> impl Strategy<Value = SpecFile> {
    (
        prop_oneof![Just("evaluate.sh".to_string()), "[a-z]{1,8}\\.sh"],
        prop::collection::vec(archive_name(), 0..3),
        prop::collection::vec(command(), 0..3),
        prop::collection::vec(static_check(), 0..4),
        prop::collection::vec(test_case(), 0..5),
    )
        .prop_map(|(run_strategy, support_archives, compile, static_checks, mut tests)| {
            for (i, t) in tests.iter_mut().enumerate() {
                t.ordinal = i + 1;
            }
            SpecFile {
                run_strategy,
                support_archives,
                compile_steps: compile.into_iter().map(|command| CompileStep { command }).collect(),
                static_checks,
                tests,
            }
        })
}

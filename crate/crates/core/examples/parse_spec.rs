//! Parses a specification file and prints what the evaluator will do.
//!
//! ```text
//! cargo run --example parse_spec -- path/to/Hello.codeval
//! ```
//! Without an argument a small built-in specification is used.

use codeval::spec::{parse_spec, render_spec, validate_spec, ExpectedOutput, StdinSource};

const BUILT_IN: &str = "C gcc -o hello hello.c
CF printf hello.c

T ./hello ben
O Hello ben

HT ./hello \"long name here!\"
O Hello long name here!
TO 5
";

fn main() {
    let text = match std::env::args().nth(1) {
        Some(path) => std::fs::read_to_string(&path).unwrap_or_else(|e| {
            eprintln!("{path}: {e}");
            std::process::exit(1)
        }),
        None => BUILT_IN.to_string(),
    };
    let spec = match parse_spec(&text) {
        Ok(spec) => spec,
        Err(e) => {
            eprintln!("invalid specification: {e}");
            std::process::exit(1)
        }
    };

    println!("strategy: {}", spec.run_strategy);
    for name in &spec.support_archives {
        println!("support archive: {name}");
    }
    for step in &spec.compile_steps {
        println!("compile: {}", step.command);
    }
    for check in &spec.static_checks {
        println!("check: {}", check.describe());
    }
    for t in &spec.tests {
        let kind = if t.hidden { "hidden test" } else { "test" };
        println!(
            "{kind} {}: {} (exit {}, {} s)",
            t.ordinal, t.command, t.expected_exit, t.timeout_s
        );
        match &t.stdin {
            StdinSource::None => {}
            StdinSource::Lines(lines) => println!("  stdin: {} line(s)", lines.len()),
            StdinSource::File(p) => println!("  stdin from {}", p.display()),
        }
        match &t.expected_stdout {
            ExpectedOutput::Lines(lines) => println!("  expects {} line(s) of output", lines.len()),
            ExpectedOutput::File(p) => println!("  expects output matching {}", p.display()),
        }
    }
    for warning in validate_spec(&spec) {
        println!("warning: {warning}");
    }
    println!("\ncanonical form:\n{}", render_spec(&spec));
}

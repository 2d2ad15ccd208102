//! Evaluates a submission archive against a specification and prints the
//! report that would be posted.
//!
//! ```text
//! cargo run --example evaluate_submission -- Hello.codeval submission.zip [--direct]
//! ```
//! `--direct` skips isolation, for hosts without user namespaces.

use codeval::sandbox::{create_workspace, IsolationConfig};
use codeval::{evaluate, parse_spec, render_report};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let [spec_path, zip_path, rest @ ..] = args.as_slice() else {
        eprintln!("usage: evaluate_submission SPEC ZIP [--direct] [SUPPORT.zip...]");
        std::process::exit(2);
    };
    let direct = rest.iter().any(|a| a == "--direct");
    let support: Vec<Vec<u8>> = rest
        .iter()
        .filter(|a| *a != "--direct")
        .map(|p| std::fs::read(p).expect("support archive"))
        .collect();

    let text = std::fs::read_to_string(spec_path).expect("specification");
    let spec = parse_spec(&text).unwrap_or_else(|e| {
        eprintln!("{spec_path}: {e}");
        std::process::exit(1)
    });
    let archive = std::fs::read(zip_path).expect("submission");
    let mut workspace = create_workspace(&archive, &support).unwrap_or_else(|e| {
        eprintln!("cannot unpack {zip_path}: {e}");
        std::process::exit(1)
    });
    let isolation = if direct {
        IsolationConfig::direct()
    } else {
        IsolationConfig::default()
    };
    let report = evaluate(&workspace, &spec, &isolation);
    workspace.destroy();
    print!("{}", render_report(&report));
}

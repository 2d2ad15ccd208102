#![allow(dead_code)]

use std::io::{Cursor, Write};
use std::path::Path;
use std::time::Duration;

use codeval::lms::{ApiToken, BackendCredentials, LocalBackend, LocalFixture, RetryPolicy};
use codeval::{Config, DaemonOptions, IsolationConfig};
use zip::write::SimpleFileOptions;

pub fn zip_of(entries: &[(&str, &[u8])]) -> Vec<u8> {
    let mut w = zip::ZipWriter::new(Cursor::new(Vec::new()));
    for (name, body) in entries {
        w.start_file(*name, SimpleFileOptions::default()).unwrap();
        w.write_all(body).unwrap();
    }
    w.finish().unwrap().into_inner()
}

/// The Java hello-world specification, ported to C so it runs without a JDK.
pub const HELLO_SPEC: &str = "RUN evaluate.sh\n\
C gcc -o hello hello.c\n\
\n\
T ./hello ben\n\
X 0\n\
O Hello ben\n\
\n\
T ./hello\n\
X 1\n\
O USAGE: hello name\n\
\n\
HT ./hello \"long name here!\"\n\
X 0\n\
O Hello long name here!\n";

pub const HELLO_CORRECT: &str = r#"#include <stdio.h>
int main(int argc, char **argv) {
    if (argc != 2) {
        printf("USAGE: hello name\n");
        return 1;
    }
    printf("Hello %s\n", argv[1]);
    return 0;
}
"#;

/// Ignores its arguments.
pub const HELLO_WORLD: &str = r#"#include <stdio.h>
int main(void) {
    printf("hello world\n");
    return 0;
}
"#;

/// Hard-codes the first visible test.
pub const HELLO_BEN: &str = r#"#include <stdio.h>
int main(int argc, char **argv) {
    if (argc < 2) {
        printf("USAGE: hello name\n");
        return 1;
    }
    printf("Hello ben\n");
    return 0;
}
"#;

pub fn hello_zip(source: &str) -> Vec<u8> {
    zip_of(&[("hello.c", source.as_bytes())])
}

pub const COURSE: &str = "CS 149";

pub fn fast_retry() -> RetryPolicy {
    RetryPolicy {
        attempts: 3,
        base_delay: Duration::from_millis(5),
    }
}

/// A course with one assignment `name` whose specification is `spec`.
pub fn course_with(root: &Path, name: &str, spec: &str) -> LocalFixture {
    let fx = LocalFixture::create(root, "cs149", COURSE).unwrap();
    fx.add_assignment(name).unwrap();
    fx.add_file(&format!("{name}.codeval"), spec.as_bytes()).unwrap();
    fx
}

pub fn config(root: &Path, isolation: IsolationConfig) -> Config {
    Config {
        server: BackendCredentials {
            base_url: format!("file://{}", root.display()),
            token: ApiToken::new("t"),
        },
        isolation,
        poll_interval_s: 300.0,
        parallelism: 2,
        course: COURSE.into(),
    }
}

pub fn options(workspaces: &Path) -> DaemonOptions {
    DaemonOptions {
        workspace_base: workspaces.to_path_buf(),
        retry: fast_retry(),
        ..Default::default()
    }
}

pub fn backend(root: &Path) -> LocalBackend {
    LocalBackend::new(root, ApiToken::new("t"))
}

/// Entries left in a workspace base directory.
pub fn leftovers(dir: &Path) -> usize {
    std::fs::read_dir(dir).map(|d| d.count()).unwrap_or(0)
}

pub mod fake_canvas;
pub mod spec_gen;

//! A complete cycle against a course kept in a local directory: three
//! students submit, the daemon evaluates and comments, and a second cycle
//! finds nothing new.

use std::io::{Cursor, Write};

use codeval::lms::{ApiToken, BackendCredentials, LocalBackend, LocalFixture};
use codeval::{Config, Daemon, DaemonOptions, IsolationConfig};
use zip::write::SimpleFileOptions;

const SPEC: &str = "C gcc -o hello hello.c
T ./hello ben
O Hello ben
T ./hello
X 1
O USAGE: hello name
HT ./hello \"long name here!\"
O Hello long name here!
";

const SOURCES: [(&str, &str); 3] = [
    (
        "ann",
        r#"#include <stdio.h>
int main(int c, char **v) { if (c != 2) { puts("USAGE: hello name"); return 1; } printf("Hello %s\n", v[1]); }"#,
    ),
    (
        "bo",
        r#"#include <stdio.h>
int main(void) { puts("hello world"); }"#,
    ),
    (
        "cy",
        r#"#include <stdio.h>
int main(int c, char **v) { if (c < 2) { puts("USAGE: hello name"); return 1; } puts("Hello ben"); }"#,
    ),
];

fn zip_source(source: &str) -> Vec<u8> {
    let mut zip = zip::ZipWriter::new(Cursor::new(Vec::new()));
    zip.start_file("hello.c", SimpleFileOptions::default()).unwrap();
    zip.write_all(source.as_bytes()).unwrap();
    zip.finish().unwrap().into_inner()
}

fn main() {
    let root = tempfile::tempdir().unwrap();
    let course = LocalFixture::create(root.path(), "cs1", "Intro to C").unwrap();
    course.add_assignment("Hello").unwrap();
    course.add_file("Hello.codeval", SPEC.as_bytes()).unwrap();
    for (student, source) in SOURCES {
        course
            .add_submission("Hello", student, 1, Some(&zip_source(source)))
            .unwrap();
    }

    let config = Config {
        server: BackendCredentials {
            base_url: format!("file://{}", root.path().display()),
            token: ApiToken::new("local"),
        },
        isolation: IsolationConfig::default(),
        poll_interval_s: 60.0,
        parallelism: 2,
        course: "Intro to C".into(),
    };
    let backend = LocalBackend::new(root.path(), config.server.token.clone());
    let daemon = Daemon::new(backend, config, DaemonOptions::default()).unwrap();

    let first = daemon.poll_once();
    println!(
        "first cycle: {} evaluated, {} errors",
        first.evaluated,
        first.errors.len()
    );
    for (student, _) in SOURCES {
        for comment in course.comments("Hello", student, 1).unwrap() {
            println!("--- comment for {student}\n{}", comment.text);
        }
    }
    let second = daemon.poll_once();
    println!(
        "second cycle: {} evaluated, {} already commented",
        second.evaluated, second.skipped_already_commented
    );
}

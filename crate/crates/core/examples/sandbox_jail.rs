//! Runs commands inside a workspace with the default isolation and shows
//! what the submission can and cannot see.
//!
//! Needs unprivileged user namespaces (or root).

use std::io::{Cursor, Write};
use std::time::Duration;

use codeval::sandbox::{create_workspace, execute, ExecRequest, IsolationConfig};
use zip::write::SimpleFileOptions;

fn main() {
    let mut zip = zip::ZipWriter::new(Cursor::new(Vec::new()));
    zip.start_file("notes.txt", SimpleFileOptions::default()).unwrap();
    zip.write_all(b"student file\n").unwrap();
    let archive = zip.finish().unwrap().into_inner();

    let mut workspace = create_workspace(&archive, &[] as &[Vec<u8>]).expect("workspace");
    println!("workspace: {}", workspace.root().display());
    let jail = IsolationConfig::default();

    for command in [
        "cat notes.txt",
        "ls /proc | grep -c '^[0-9]'",
        "cat /etc/hostname 2>&1 || true",
        "echo hi > /host-probe && echo wrote /host-probe inside the jail",
        "sleep 10",
    ] {
        let request = ExecRequest::new(command).timeout(Duration::from_secs(2));
        let result = execute(&workspace, &request, &jail);
        println!("$ {command}");
        print!("{}", String::from_utf8_lossy(&result.stdout));
        println!("  -> {:?} after {:.2} s", result.status, result.wall_time_s());
    }
    println!(
        "/host-probe on the host: {}",
        if std::path::Path::new("/host-probe").exists() {
            "present"
        } else {
            "absent"
        }
    );
    workspace.destroy();
}

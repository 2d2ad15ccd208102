//! Read-only look at a Canvas course: which assignments have a
//! specification and which submissions are waiting for evaluation.
//!
//! ```text
//! CANVAS_URL=https://canvas.example.edu CODEVAL_TOKEN=... \
//!     cargo run --example canvas_pending -- "CS 149"
//! ```

use codeval::lms::{ApiToken, BackendCredentials, Lms, RestBackend};

fn main() {
    let (Ok(url), Ok(token), Some(course)) = (
        std::env::var("CANVAS_URL"),
        std::env::var("CODEVAL_TOKEN"),
        std::env::args().nth(1),
    ) else {
        eprintln!("set CANVAS_URL and CODEVAL_TOKEN and pass the course name");
        std::process::exit(2);
    };
    let backend = RestBackend::new(BackendCredentials {
        base_url: url,
        token: ApiToken::new(token),
    })
    .unwrap_or_else(|e| {
        eprintln!("{e}");
        std::process::exit(2)
    });
    let lms = Lms::new(backend);
    let run = || -> Result<(), codeval::LmsError> {
        for c in lms.courses_named(&course)? {
            println!("course {} (id {})", c.name, c.id);
            for assignment in lms.discover_assignments(&c)? {
                let pending = lms.pending_submissions(&assignment)?;
                println!("  {}: {} pending", assignment.name, pending.len());
                for s in pending {
                    let archive = if s.archive_file_id.is_some() { "zip" } else { "no zip" };
                    println!("    student {} attempt {} ({archive})", s.student_id, s.attempt);
                }
            }
        }
        Ok(())
    };
    if let Err(e) = run() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}

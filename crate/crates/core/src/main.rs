use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::Parser;
use codeval::daemon::{load_config, ConfigOverrides, Daemon, DaemonError, DaemonOptions, PollSummary};
use codeval::lms::{LmsBackend, LocalBackend, RestBackend};
use signal_hook::consts::{SIGINT, SIGTERM};

/// Polls a course for new submissions, evaluates them and posts feedback.
#[derive(Parser, Debug)]
#[command(name = "codeval", version)]
struct Cli {
    /// Display name of the course to serve.
    course: String,
    /// Configuration file with [SERVER] and [RUN] sections.
    #[arg(long, default_value = "codeval.ini")]
    config: PathBuf,
    /// Run one cycle and exit (for cron and other schedulers).
    #[arg(long)]
    once: bool,
    /// Seconds between cycles; overrides [RUN] interval.
    #[arg(long)]
    interval: Option<f64>,
    /// Only evaluate this assignment.
    #[arg(long)]
    assignment: Option<String>,
    /// Print reports instead of posting them.
    #[arg(long)]
    dry_run: bool,
    /// Directory for temporary workspaces.
    #[arg(long)]
    workspace_dir: Option<PathBuf>,
}

const EXIT_CONFIG: u8 = 2;

fn print_reports(summary: &PollSummary) {
    for (label, report) in &summary.dry_run_reports {
        println!("==> {label}\n{report}");
    }
}

fn serve<B: LmsBackend>(backend: B, cli: &Cli, config: codeval::Config) -> ExitCode {
    let options = DaemonOptions {
        dry_run: cli.dry_run,
        assignment: cli.assignment.clone(),
        workspace_base: cli.workspace_dir.clone().unwrap_or_else(std::env::temp_dir),
        ..Default::default()
    };
    let daemon = match Daemon::new(backend, config, options) {
        Ok(d) => d,
        Err(e) => {
            log::error!("{e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match daemon.resolve_course() {
        Ok(course) => log::info!("serving course {} (id {})", course.name, course.id),
        Err(e @ (DaemonError::CourseNotFound(_) | DaemonError::AmbiguousCourse { .. })) => {
            log::error!("{e}");
            return ExitCode::from(EXIT_CONFIG);
        }
        // The server may come back; each cycle retries.
        Err(e) => log::warn!("cannot list courses yet: {e}"),
    }

    if cli.once {
        let summary = daemon.poll_once();
        print_reports(&summary);
        log::info!(
            "{} evaluated, {} already commented, {} errors",
            summary.evaluated,
            summary.skipped_already_commented,
            summary.errors.len()
        );
        return if summary.errors.is_empty() {
            ExitCode::SUCCESS
        } else {
            ExitCode::FAILURE
        };
    }

    let shutdown = Arc::new(AtomicBool::new(false));
    for signal in [SIGTERM, SIGINT] {
        // A second signal while shutting down exits at once.
        let registered = signal_hook::flag::register_conditional_shutdown(signal, 1, Arc::clone(&shutdown))
            .and_then(|_| signal_hook::flag::register(signal, Arc::clone(&shutdown)));
        if let Err(e) = registered {
            log::error!("cannot install signal handler: {e}");
            return ExitCode::FAILURE;
        }
    }
    daemon.run(&shutdown, print_reports);
    if shutdown.load(Ordering::SeqCst) {
        log::info!("shut down cleanly");
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();

    let mut overrides = ConfigOverrides::from_env();
    overrides.course = Some(cli.course.clone());
    overrides.poll_interval_s = cli.interval;
    let config = match load_config(&cli.config, &overrides) {
        Ok(c) => c,
        Err(e) => {
            log::error!("{}: {e}", cli.config.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if config.isolation.direct_mode {
        log::warn!("running submissions without isolation; configure [RUN] command to sandbox them");
    }

    let url = url::Url::parse(&config.server.base_url).ok();
    match url.filter(|u| u.scheme() == "file").map(|u| u.to_file_path()) {
        Some(Ok(root)) => serve(LocalBackend::new(root, config.server.token.clone()), &cli, config),
        Some(Err(())) => {
            log::error!("invalid file url {}", config.server.base_url);
            ExitCode::from(EXIT_CONFIG)
        }
        None => match RestBackend::new(config.server.clone()) {
            Ok(backend) => serve(backend, &cli, config),
            Err(e) => {
                log::error!("{e}");
                ExitCode::from(EXIT_CONFIG)
            }
        },
    }
}

//! The polling loop.
//!
//! Each cycle discovers the assignments that have a specification file,
//! lists their current submission attempts, and evaluates every attempt
//! without a marker comment. The comment is the only state: posting it is
//! the last step, so a crash before posting means the attempt is evaluated
//! again next cycle, and one after posting means it is never touched again.

mod config;

use std::collections::VecDeque;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use thiserror::Error;

use crate::evaluator::{evaluate, render_notice, render_report};
use crate::lms::{CourseRef, FileRef, Lms, LmsBackend, LmsError, RetryPolicy, SubmissionRef};
use crate::sandbox::{create_workspace_in, run_host_command, ExecStatus, ExtractionLimits, SandboxError};
use crate::spec::{parse_spec, validate_spec, SpecFile};

pub use config::{
    load_config, parse_config, Config, ConfigError, ConfigOverrides, DEFAULT_PARALLELISM, DEFAULT_POLL_INTERVAL_S,
    TOKEN_ENV,
};

pub const PRECOMMAND_TIMEOUT: Duration = Duration::from_secs(600);

/// Posted when an attempt has no zip attachment.
pub const NO_ARCHIVE_NOTICE: &str =
    "No .zip file was found in this submission, so it was not evaluated. Please submit your work as a .zip archive.";

/// Posted, followed by the reason, when the archive cannot be unpacked.
pub const BAD_ARCHIVE_NOTICE: &str = "Your .zip file could not be unpacked, so it was not evaluated:";

#[derive(Debug, Error)]
pub enum DaemonError {
    #[error("no course named {0:?} is visible with this token")]
    CourseNotFound(String),
    #[error("course name {name:?} is ambiguous; candidates: {}", candidates.join(", "))]
    AmbiguousCourse { name: String, candidates: Vec<String> },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Lms(#[from] LmsError),
}

#[derive(Debug, Clone)]
pub struct DaemonOptions {
    /// Evaluate and keep the reports instead of posting them.
    pub dry_run: bool,
    /// Only this assignment (by name).
    pub assignment: Option<String>,
    /// Where workspaces are created.
    pub workspace_base: PathBuf,
    pub retry: RetryPolicy,
}

impl Default for DaemonOptions {
    fn default() -> Self {
        DaemonOptions {
            dry_run: false,
            assignment: None,
            workspace_base: std::env::temp_dir(),
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorScope {
    Course,
    Assignment,
    Submission,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PollError {
    pub scope: ErrorScope,
    pub subject: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PollSummary {
    pub scanned_assignments: usize,
    /// Current attempts listed across all scanned assignments.
    pub submissions_seen: usize,
    /// Attempts that got a comment this cycle (or a report, in dry-run mode).
    pub evaluated: usize,
    /// Attempts that already had a marker comment, either when listed or
    /// when re-checked just before posting.
    pub skipped_already_commented: usize,
    /// Attempts left for the next cycle because shutdown was requested.
    pub deferred: usize,
    pub errors: Vec<PollError>,
    /// `(submission label, report)` pairs from a dry run.
    pub dry_run_reports: Vec<(String, String)>,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
}

impl PollSummary {
    fn new() -> Self {
        let now = Utc::now();
        PollSummary {
            scanned_assignments: 0,
            submissions_seen: 0,
            evaluated: 0,
            skipped_already_commented: 0,
            deferred: 0,
            errors: Vec::new(),
            dry_run_reports: Vec::new(),
            started_at: now,
            finished_at: now,
        }
    }

    fn error(&mut self, scope: ErrorScope, subject: impl Into<String>, reason: impl Into<String>) {
        let (subject, reason) = (subject.into(), reason.into());
        log::error!("{subject}: {reason}");
        self.errors.push(PollError { scope, subject, reason });
    }

    pub fn submission_errors(&self) -> usize {
        self.errors.iter().filter(|e| e.scope == ErrorScope::Submission).count()
    }
}

/// An assignment whose specification and support archives are in hand.
struct Prepared {
    spec: SpecFile,
    support: Vec<Vec<u8>>,
}

enum Outcome {
    Posted,
    DryRun(String),
    AlreadyCommented,
    Deferred,
    Failed(String),
}

pub struct Daemon<B> {
    lms: Lms<B>,
    config: Config,
    options: DaemonOptions,
    course: Mutex<Option<CourseRef>>,
    cycle: Mutex<()>,
}

impl<B: LmsBackend> Daemon<B> {
    pub fn new(backend: B, config: Config, options: DaemonOptions) -> Result<Self, DaemonError> {
        let invalid = |key: &str, reason: &str| ConfigError::Invalid {
            key: key.into(),
            reason: reason.into(),
        };
        if config.course.trim().is_empty() {
            return Err(invalid("course", "a course name is required").into());
        }
        if config.parallelism == 0 {
            return Err(invalid("parallelism", "must be at least 1").into());
        }
        if !(config.poll_interval_s.is_finite() && config.poll_interval_s > 0.0) {
            return Err(invalid("interval", "must be positive").into());
        }
        config
            .isolation
            .validate()
            .map_err(|e| invalid("[RUN] command", &e.to_string()))?;
        Ok(Daemon {
            lms: Lms::new(backend).with_retry(options.retry),
            config,
            options,
            course: Mutex::new(None),
            cycle: Mutex::new(()),
        })
    }

    pub fn lms(&self) -> &Lms<B> {
        &self.lms
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    /// Finds the configured course by display name. The result is cached.
    pub fn resolve_course(&self) -> Result<CourseRef, DaemonError> {
        if let Some(course) = self.course.lock().unwrap().clone() {
            return Ok(course);
        }
        let mut matches = self.lms.courses_named(&self.config.course)?;
        match matches.len() {
            0 => Err(DaemonError::CourseNotFound(self.config.course.clone())),
            1 => {
                let course = matches.remove(0);
                *self.course.lock().unwrap() = Some(course.clone());
                Ok(course)
            }
            _ => Err(DaemonError::AmbiguousCourse {
                name: self.config.course.clone(),
                candidates: matches
                    .into_iter()
                    .map(|c| format!("{} (id {})", c.name, c.id))
                    .collect(),
            }),
        }
    }

    pub fn poll_once(&self) -> PollSummary {
        self.poll_once_until(&AtomicBool::new(false))
    }

    /// One cycle. Once `shutdown` is set, attempts not yet started are
    /// deferred; ones already running finish and post normally. Concurrent
    /// callers are serialized.
    pub fn poll_once_until(&self, shutdown: &AtomicBool) -> PollSummary {
        let _cycle = self.cycle.lock().unwrap_or_else(|e| e.into_inner());
        let mut summary = PollSummary::new();
        let jobs = self.collect_jobs(&mut summary);
        let summary = Mutex::new(summary);
        self.run_jobs(jobs, shutdown, &summary);
        let mut summary = summary.into_inner().unwrap();
        summary.finished_at = Utc::now();
        summary
    }

    fn collect_jobs(&self, summary: &mut PollSummary) -> Vec<(Arc<Prepared>, SubmissionRef)> {
        let course = match self.resolve_course() {
            Ok(c) => c,
            Err(e) => {
                summary.error(ErrorScope::Course, &self.config.course, e.to_string());
                return Vec::new();
            }
        };
        let (files, assignments) = match self
            .lms
            .course_files(&course)
            .and_then(|files| Ok((files, self.lms.discover_assignments(&course)?)))
        {
            Ok(found) => found,
            Err(e) => {
                summary.error(ErrorScope::Course, &course.name, e.to_string());
                return Vec::new();
            }
        };

        let mut jobs = Vec::new();
        for assignment in assignments {
            if self
                .options
                .assignment
                .as_ref()
                .is_some_and(|only| *only != assignment.name)
            {
                continue;
            }
            summary.scanned_assignments += 1;
            let prepared = match self.prepare(&assignment.spec_file_id, &files) {
                Ok(p) => Arc::new(p),
                Err(reason) => {
                    summary.error(ErrorScope::Assignment, &assignment.name, reason);
                    continue;
                }
            };
            let states = match self.lms.submissions(&assignment) {
                Ok(s) => s,
                Err(e) => {
                    summary.error(ErrorScope::Assignment, &assignment.name, e.to_string());
                    continue;
                }
            };
            for state in states {
                summary.submissions_seen += 1;
                if state.already_evaluated {
                    summary.skipped_already_commented += 1;
                } else {
                    jobs.push((Arc::clone(&prepared), state.submission));
                }
            }
        }
        jobs
    }

    fn prepare(&self, spec_file_id: &Option<String>, files: &[FileRef]) -> Result<Prepared, String> {
        let id = spec_file_id.as_deref().ok_or("no specification file")?;
        let bytes = self
            .lms
            .fetch_file(id)
            .map_err(|e| format!("cannot fetch specification: {e}"))?;
        let text = String::from_utf8(bytes).map_err(|_| "specification is not valid UTF-8".to_string())?;
        let spec = parse_spec(&text).map_err(|e| format!("specification {e}"))?;
        for warning in validate_spec(&spec) {
            log::warn!("specification {id}: {warning}");
        }
        let mut support = Vec::new();
        for name in &spec.support_archives {
            let file = files
                .iter()
                .find(|f| f.name == *name)
                .ok_or_else(|| format!("support archive {name} is not among the course files"))?;
            let bytes = self
                .lms
                .fetch_file(&file.id)
                .map_err(|e| format!("cannot fetch support archive {name}: {e}"))?;
            support.push(bytes);
        }
        Ok(Prepared { spec, support })
    }

    fn run_jobs(&self, jobs: Vec<(Arc<Prepared>, SubmissionRef)>, shutdown: &AtomicBool, summary: &Mutex<PollSummary>) {
        let workers = self.config.parallelism.min(jobs.len());
        let queue = Mutex::new(VecDeque::from(jobs));
        thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let Some((prepared, submission)) = queue.lock().unwrap().pop_front() else {
                        break;
                    };
                    let outcome = self.process(&prepared, &submission, shutdown);
                    let mut summary = summary.lock().unwrap();
                    match outcome {
                        Outcome::Posted => {
                            log::info!("{}: comment posted", submission.label());
                            summary.evaluated += 1;
                        }
                        Outcome::DryRun(report) => {
                            summary.evaluated += 1;
                            summary.dry_run_reports.push((submission.label(), report));
                        }
                        Outcome::AlreadyCommented => {
                            log::info!("{}: already commented, not posting", submission.label());
                            summary.skipped_already_commented += 1;
                        }
                        Outcome::Deferred => summary.deferred += 1,
                        Outcome::Failed(reason) => summary.error(ErrorScope::Submission, submission.label(), reason),
                    }
                });
            }
        });
    }

    fn process(&self, prepared: &Prepared, submission: &SubmissionRef, shutdown: &AtomicBool) -> Outcome {
        if shutdown.load(Ordering::SeqCst) {
            return Outcome::Deferred;
        }
        log::info!("{}: evaluating", submission.label());
        let text = match self.build_report(prepared, submission) {
            Ok(text) => text,
            Err(reason) => return Outcome::Failed(reason),
        };
        if self.options.dry_run {
            return Outcome::DryRun(text);
        }
        // Another daemon, or a cycle that crashed after posting, may have
        // commented while we were evaluating.
        match self.lms.is_pending(submission) {
            Ok(true) => {}
            Ok(false) => return Outcome::AlreadyCommented,
            Err(e) => return Outcome::Failed(format!("cannot re-check before posting: {e}")),
        }
        match self.lms.post_evaluation(submission, &text) {
            Ok(()) => Outcome::Posted,
            Err(e) => Outcome::Failed(format!("posting failed: {e}")),
        }
    }

    fn build_report(&self, prepared: &Prepared, submission: &SubmissionRef) -> Result<String, String> {
        let Some(file_id) = &submission.archive_file_id else {
            return Ok(render_notice(NO_ARCHIVE_NOTICE));
        };
        let archive = self
            .lms
            .fetch_file(file_id)
            .map_err(|e| format!("cannot download submission: {e}"))?;
        let mut workspace = match create_workspace_in(
            &self.options.workspace_base,
            &archive,
            &prepared.support,
            ExtractionLimits::default(),
        ) {
            Ok(ws) => ws,
            Err(SandboxError::Io(e)) => return Err(format!("cannot create workspace: {e}")),
            Err(e) => return Ok(render_notice(&format!("{BAD_ARCHIVE_NOTICE}\n{e}"))),
        };
        if let Some(precommand) = &self.config.isolation.precommand {
            let result = run_host_command(precommand, workspace.root(), PRECOMMAND_TIMEOUT);
            if !result.succeeded() {
                let status = match &result.status {
                    ExecStatus::Exited { code } => format!("exit code {code}"),
                    ExecStatus::TimedOut => "timed out".into(),
                    ExecStatus::SpawnFailed { reason } => reason.clone(),
                };
                return Err(format!(
                    "precommand failed ({status}): {}",
                    result.combined_output().trim()
                ));
            }
        }
        let report = evaluate(&workspace, &prepared.spec, &self.config.isolation);
        workspace.destroy();
        Ok(render_report(&report))
    }

    /// Polls every `poll_interval_s` until `shutdown` is set. A cycle that
    /// overruns the interval is followed immediately by the next one.
    pub fn run(&self, shutdown: &AtomicBool, mut on_cycle: impl FnMut(&PollSummary)) {
        let interval = Duration::from_secs_f64(self.config.poll_interval_s);
        while !shutdown.load(Ordering::SeqCst) {
            let started = Instant::now();
            let summary = self.poll_once_until(shutdown);
            log::info!(
                "cycle done: {} assignments, {} evaluated, {} already commented, {} deferred, {} errors",
                summary.scanned_assignments,
                summary.evaluated,
                summary.skipped_already_commented,
                summary.deferred,
                summary.errors.len()
            );
            on_cycle(&summary);
            let next = started + interval;
            while !shutdown.load(Ordering::SeqCst) {
                let now = Instant::now();
                if now >= next {
                    break;
                }
                thread::sleep((next - now).min(Duration::from_millis(100)));
            }
        }
    }
}

//! Learning-management-system integration.
//!
//! [`LmsBackend`] is the raw transport: list things, download a file, add
//! a comment. Two implementations ship: [`RestBackend`] for Canvas-style
//! REST APIs and [`LocalBackend`] for a directory tree (used by tests and
//! for offline runs). [`Lms`] layers the evaluation semantics on top of
//! either one, so both behave identically: assignments are paired with
//! `<assignment name>.codeval` files, a submission attempt is pending until
//! it carries a comment starting with [`MARKER`], reads are retried on
//! transport failures, and posts are never retried.

mod local;
mod rest;

use std::fmt;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::evaluator::MARKER;
pub use local::{CommentLine, LocalBackend, LocalFixture};
pub use rest::RestBackend;

/// Suffix of the course file that holds an assignment's specification.
pub const SPEC_FILE_SUFFIX: &str = ".codeval";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LmsError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("not found: {0}")]
    NotFound(String),
    /// Network or server-side failure; worth retrying.
    #[error("transport error: {0}")]
    Transport(String),
    /// Rejected locally before any request was made.
    #[error("rejected: {0}")]
    Rejected(String),
    #[error("unexpected response: {0}")]
    Protocol(String),
}

impl LmsError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, LmsError::Transport(_))
    }
}

/// An API token. Formatting never reveals it.
#[derive(Clone, PartialEq, Eq)]
pub struct ApiToken(String);

impl ApiToken {
    pub fn new(token: impl Into<String>) -> Self {
        ApiToken(token.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Debug for ApiToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ApiToken(<redacted>)")
    }
}

impl fmt::Display for ApiToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("<redacted>")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendCredentials {
    pub base_url: String,
    pub token: ApiToken,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CourseRef {
    pub id: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRef {
    pub id: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AssignmentRef {
    pub course_id: String,
    pub id: String,
    pub name: String,
    /// Set for assignments discovered through their specification file.
    pub spec_file_id: Option<String>,
}

/// One attempt of one student on one assignment.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubmissionRef {
    pub assignment: AssignmentRef,
    pub student_id: String,
    pub attempt: u32,
    /// `None` when the attempt has no zip attachment.
    pub archive_file_id: Option<String>,
    pub submitted_at: Option<DateTime<Utc>>,
}

impl SubmissionRef {
    /// Short human-readable identifier for logs.
    pub fn label(&self) -> String {
        format!("{}/{}#{}", self.assignment.name, self.student_id, self.attempt)
    }
}

/// Assignment as listed by a backend.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssignmentInfo {
    pub id: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommentRecord {
    pub text: String,
    /// Attempt the comment was attached to, when the backend records it.
    pub attempt: Option<u32>,
    pub created_at: Option<DateTime<Utc>>,
}

/// A student's latest attempt as listed by a backend, with its comments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubmissionRecord {
    pub student_id: String,
    pub attempt: u32,
    pub archive_file_id: Option<String>,
    pub submitted_at: Option<DateTime<Utc>>,
    pub comments: Vec<CommentRecord>,
}

impl SubmissionRecord {
    /// Whether a marker comment belongs to this attempt. Comments without
    /// an attempt number count if they are not older than the submission.
    pub fn has_marker(&self) -> bool {
        self.comments.iter().any(|c| {
            c.text.starts_with(MARKER)
                && match (c.attempt, c.created_at, self.submitted_at) {
                    (Some(a), _, _) => a == self.attempt,
                    (None, Some(created), Some(submitted)) => created >= submitted,
                    (None, _, _) => true,
                }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubmissionState {
    pub submission: SubmissionRef,
    pub already_evaluated: bool,
}

/// Raw operations a learning-management system must provide.
pub trait LmsBackend: Send + Sync {
    /// Courses visible with the backend's credentials.
    fn list_courses(&self) -> Result<Vec<CourseRef>, LmsError>;
    fn list_course_files(&self, course: &CourseRef) -> Result<Vec<FileRef>, LmsError>;
    fn list_assignments(&self, course: &CourseRef) -> Result<Vec<AssignmentInfo>, LmsError>;
    /// Every student's current attempt, including its comments.
    fn list_submissions(&self, assignment: &AssignmentRef) -> Result<Vec<SubmissionRecord>, LmsError>;
    fn get_submission(&self, assignment: &AssignmentRef, student_id: &str) -> Result<SubmissionRecord, LmsError>;
    fn download(&self, file_id: &str) -> Result<Vec<u8>, LmsError>;
    fn add_comment(&self, submission: &SubmissionRef, text: &str) -> Result<(), LmsError>;
}

macro_rules! forward_backend {
    ($($ptr:ident),*) => {$(
        impl<T: LmsBackend + ?Sized> LmsBackend for $ptr<T> {
            fn list_courses(&self) -> Result<Vec<CourseRef>, LmsError> {
                (**self).list_courses()
            }
            fn list_course_files(&self, course: &CourseRef) -> Result<Vec<FileRef>, LmsError> {
                (**self).list_course_files(course)
            }
            fn list_assignments(&self, course: &CourseRef) -> Result<Vec<AssignmentInfo>, LmsError> {
                (**self).list_assignments(course)
            }
            fn list_submissions(&self, assignment: &AssignmentRef) -> Result<Vec<SubmissionRecord>, LmsError> {
                (**self).list_submissions(assignment)
            }
            fn get_submission(&self, assignment: &AssignmentRef, student_id: &str) -> Result<SubmissionRecord, LmsError> {
                (**self).get_submission(assignment, student_id)
            }
            fn download(&self, file_id: &str) -> Result<Vec<u8>, LmsError> {
                (**self).download(file_id)
            }
            fn add_comment(&self, submission: &SubmissionRef, text: &str) -> Result<(), LmsError> {
                (**self).add_comment(submission, text)
            }
        }
    )*};
}

forward_backend!(Box, Arc);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    /// Delay before the first retry; doubled for each further retry.
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            base_delay: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    pub fn run<T>(&self, mut op: impl FnMut() -> Result<T, LmsError>) -> Result<T, LmsError> {
        let mut delay = self.base_delay;
        let mut attempt = 1;
        loop {
            match op() {
                Err(e) if e.is_retryable() && attempt < self.attempts => {
                    log::warn!("attempt {attempt} failed, retrying in {delay:?}: {e}");
                    thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

/// Evaluation-level view of a backend.
pub struct Lms<B> {
    backend: B,
    retry: RetryPolicy,
}

impl<B: LmsBackend> Lms<B> {
    pub fn new(backend: B) -> Self {
        Lms {
            backend,
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn backend(&self) -> &B {
        &self.backend
    }

    /// Courses whose display name is exactly `name`.
    pub fn courses_named(&self, name: &str) -> Result<Vec<CourseRef>, LmsError> {
        let all = self.retry.run(|| self.backend.list_courses())?;
        Ok(all.into_iter().filter(|c| c.name == name).collect())
    }

    pub fn course_files(&self, course: &CourseRef) -> Result<Vec<FileRef>, LmsError> {
        self.retry.run(|| self.backend.list_course_files(course))
    }

    /// Assignments that have a `<name>.codeval` file in the course files.
    pub fn discover_assignments(&self, course: &CourseRef) -> Result<Vec<AssignmentRef>, LmsError> {
        let files = self.course_files(course)?;
        let assignments = self.retry.run(|| self.backend.list_assignments(course))?;
        Ok(assignments
            .into_iter()
            .filter_map(|a| {
                let wanted = format!("{}{SPEC_FILE_SUFFIX}", a.name);
                files.iter().find(|f| f.name == wanted).map(|f| AssignmentRef {
                    course_id: course.id.clone(),
                    id: a.id,
                    name: a.name,
                    spec_file_id: Some(f.id.clone()),
                })
            })
            .collect())
    }

    /// Every student's current attempt, flagged with whether it already
    /// carries a marker comment.
    pub fn submissions(&self, assignment: &AssignmentRef) -> Result<Vec<SubmissionState>, LmsError> {
        let records = self.retry.run(|| self.backend.list_submissions(assignment))?;
        Ok(records
            .into_iter()
            .map(|r| SubmissionState {
                already_evaluated: r.has_marker(),
                submission: SubmissionRef {
                    assignment: assignment.clone(),
                    student_id: r.student_id,
                    attempt: r.attempt,
                    archive_file_id: r.archive_file_id,
                    submitted_at: r.submitted_at,
                },
            })
            .collect())
    }

    /// Attempts without a marker comment. Attempts lacking a zip are
    /// included with `archive_file_id == None` so the caller can tell the
    /// student.
    pub fn pending_submissions(&self, assignment: &AssignmentRef) -> Result<Vec<SubmissionRef>, LmsError> {
        Ok(self
            .submissions(assignment)?
            .into_iter()
            .filter(|s| !s.already_evaluated)
            .map(|s| s.submission)
            .collect())
    }

    /// Re-reads one submission: pending iff it is still on the same attempt
    /// and has no marker comment for it.
    pub fn is_pending(&self, submission: &SubmissionRef) -> Result<bool, LmsError> {
        let record = self.retry.run(|| {
            self.backend
                .get_submission(&submission.assignment, &submission.student_id)
        })?;
        Ok(record.attempt == submission.attempt && !record.has_marker())
    }

    pub fn fetch_file(&self, file_id: &str) -> Result<Vec<u8>, LmsError> {
        self.retry.run(|| self.backend.download(file_id))
    }

    /// Looks a course file up by name and downloads it.
    pub fn fetch_course_file(&self, course: &CourseRef, name: &str) -> Result<Vec<u8>, LmsError> {
        let files = self.course_files(course)?;
        let file = files
            .iter()
            .find(|f| f.name == name)
            .ok_or_else(|| LmsError::NotFound(format!("course file {name}")))?;
        self.fetch_file(&file.id)
    }

    /// Attaches the feedback to the submission attempt. The text must start
    /// with the marker; a failed post is not retried, since the comment may
    /// have been stored anyway.
    pub fn post_evaluation(&self, submission: &SubmissionRef, report_text: &str) -> Result<(), LmsError> {
        if !report_text.starts_with(MARKER) {
            return Err(LmsError::Rejected(format!("report must start with {MARKER:?}")));
        }
        self.backend.add_comment(submission, report_text)
    }
}

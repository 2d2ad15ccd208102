//! Directory-tree backend.
//!
//! ```text
//! <root>/<course-id>/course.json        {"name": "...", "tokens": ["..."]}
//! <root>/<course-id>/files/<name>        course files (specs, support zips)
//! <root>/<course-id>/<assignment>/submissions/<student>/<attempt>/archive.zip
//! <root>/<course-id>/<assignment>/submissions/<student>/<attempt>/comments.jsonl
//! ```
//!
//! An empty or missing `tokens` list leaves the course open to any token.
//! Only the highest attempt of each student is listed, as a real LMS does.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{
    ApiToken, AssignmentInfo, AssignmentRef, CommentRecord, CourseRef, FileRef, LmsBackend, LmsError, SubmissionRecord,
    SubmissionRef,
};
use crate::paths::confined_relative;

const MANIFEST: &str = "course.json";
const FILES_DIR: &str = "files";
const SUBMISSIONS_DIR: &str = "submissions";
const ARCHIVE: &str = "archive.zip";
const COMMENTS: &str = "comments.jsonl";

#[derive(Debug, Default, Serialize, Deserialize)]
struct CourseManifest {
    name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    tokens: Vec<String>,
}

/// One line of `comments.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommentLine {
    pub author: String,
    pub text: String,
    pub created_at: DateTime<Utc>,
}

pub struct LocalBackend {
    root: PathBuf,
    token: ApiToken,
    failures_to_inject: AtomicUsize,
    download_calls: AtomicUsize,
    write_lock: Mutex<()>,
}

impl std::fmt::Debug for LocalBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LocalBackend")
            .field("root", &self.root)
            .field("token", &self.token)
            .finish()
    }
}

fn io_err(context: &Path, e: io::Error) -> LmsError {
    if e.kind() == io::ErrorKind::NotFound {
        LmsError::NotFound(context.display().to_string())
    } else {
        LmsError::Transport(format!("{}: {e}", context.display()))
    }
}

fn single_component(id: &str) -> Option<&str> {
    match confined_relative(id) {
        Some(p) if p.components().count() == 1 => Some(id),
        _ => None,
    }
}

fn sorted_entries(dir: &Path) -> Result<Vec<fs::DirEntry>, LmsError> {
    let mut entries: Vec<_> = fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(Result::ok)
        .collect();
    entries.sort_by_key(|e| e.file_name());
    Ok(entries)
}

fn mtime(path: &Path) -> Option<DateTime<Utc>> {
    fs::metadata(path)
        .and_then(|m| m.modified())
        .ok()
        .map(DateTime::<Utc>::from)
}

impl LocalBackend {
    pub fn new(root: impl Into<PathBuf>, token: ApiToken) -> Self {
        LocalBackend {
            root: root.into(),
            token,
            failures_to_inject: AtomicUsize::new(0),
            download_calls: AtomicUsize::new(0),
            write_lock: Mutex::new(()),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Makes the next `n` downloads fail with a transport error.
    pub fn fail_next_downloads(&self, n: usize) {
        self.failures_to_inject.store(n, Ordering::SeqCst);
    }

    /// Number of download attempts made so far, including failed ones.
    pub fn download_calls(&self) -> usize {
        self.download_calls.load(Ordering::SeqCst)
    }

    fn manifest(&self, course_dir: &Path) -> Option<CourseManifest> {
        let text = fs::read_to_string(course_dir.join(MANIFEST)).ok()?;
        serde_json::from_str(&text).ok()
    }

    fn authorized(&self, manifest: &CourseManifest) -> bool {
        manifest.tokens.is_empty() || manifest.tokens.iter().any(|t| t == self.token.expose())
    }

    /// Directory of an accessible course.
    fn course_dir(&self, course_id: &str) -> Result<PathBuf, LmsError> {
        let id = single_component(course_id).ok_or_else(|| LmsError::NotFound(format!("course {course_id}")))?;
        let dir = self.root.join(id);
        let manifest = self
            .manifest(&dir)
            .ok_or_else(|| LmsError::NotFound(format!("course {course_id}")))?;
        if !self.authorized(&manifest) {
            return Err(LmsError::Auth(format!("token not valid for course {course_id}")));
        }
        Ok(dir)
    }

    fn submissions_dir(&self, assignment: &AssignmentRef) -> Result<PathBuf, LmsError> {
        let course = self.course_dir(&assignment.course_id)?;
        let id = single_component(&assignment.id)
            .ok_or_else(|| LmsError::NotFound(format!("assignment {}", assignment.id)))?;
        Ok(course.join(id).join(SUBMISSIONS_DIR))
    }

    fn latest_attempt(student_dir: &Path) -> Result<Option<(u32, PathBuf)>, LmsError> {
        Ok(sorted_entries(student_dir)?
            .into_iter()
            .filter(|e| e.path().is_dir())
            .filter_map(|e| {
                let n: u32 = e.file_name().to_str()?.parse().ok()?;
                (n >= 1).then(|| (n, e.path()))
            })
            .max_by_key(|(n, _)| *n))
    }

    fn record(
        &self,
        assignment: &AssignmentRef,
        student_id: &str,
        attempt: u32,
        dir: &Path,
    ) -> Result<SubmissionRecord, LmsError> {
        let archive = dir.join(ARCHIVE);
        let archive_file_id = archive.is_file().then(|| {
            format!(
                "{}/{}/{SUBMISSIONS_DIR}/{student_id}/{attempt}/{ARCHIVE}",
                assignment.course_id, assignment.id
            )
        });
        let submitted_at = if archive.is_file() { mtime(&archive) } else { mtime(dir) };
        let comments = read_comments(&dir.join(COMMENTS))?
            .into_iter()
            .map(|c| CommentRecord {
                text: c.text,
                attempt: Some(attempt),
                created_at: Some(c.created_at),
            })
            .collect();
        Ok(SubmissionRecord {
            student_id: student_id.to_string(),
            attempt,
            archive_file_id,
            submitted_at,
            comments,
        })
    }
}

fn read_comments(path: &Path) -> Result<Vec<CommentLine>, LmsError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path, e)),
    };
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| LmsError::Protocol(format!("{}: {e}", path.display()))))
        .collect()
}

fn append_comment(path: &Path, line: &CommentLine) -> io::Result<()> {
    let mut file = fs::OpenOptions::new().create(true).append(true).open(path)?;
    let mut json = serde_json::to_string(line).map_err(io::Error::other)?;
    json.push('\n');
    file.write_all(json.as_bytes())
}

impl LmsBackend for LocalBackend {
    fn list_courses(&self) -> Result<Vec<CourseRef>, LmsError> {
        let mut visible = Vec::new();
        let mut hidden = 0;
        for entry in sorted_entries(&self.root)? {
            let Some(manifest) = self.manifest(&entry.path()) else {
                continue;
            };
            if !self.authorized(&manifest) {
                hidden += 1;
                continue;
            }
            visible.push(CourseRef {
                id: entry.file_name().to_string_lossy().into_owned(),
                name: manifest.name,
            });
        }
        if visible.is_empty() && hidden > 0 {
            return Err(LmsError::Auth("token not valid for any course".into()));
        }
        Ok(visible)
    }

    fn list_course_files(&self, course: &CourseRef) -> Result<Vec<FileRef>, LmsError> {
        let dir = self.course_dir(&course.id)?.join(FILES_DIR);
        if !dir.is_dir() {
            return Ok(Vec::new());
        }
        Ok(sorted_entries(&dir)?
            .into_iter()
            .filter(|e| e.path().is_file())
            .map(|e| {
                let name = e.file_name().to_string_lossy().into_owned();
                FileRef {
                    id: format!("{}/{FILES_DIR}/{name}", course.id),
                    name,
                }
            })
            .collect())
    }

    fn list_assignments(&self, course: &CourseRef) -> Result<Vec<AssignmentInfo>, LmsError> {
        let dir = self.course_dir(&course.id)?;
        Ok(sorted_entries(&dir)?
            .into_iter()
            .filter(|e| e.path().is_dir() && e.file_name() != FILES_DIR)
            .map(|e| {
                let name = e.file_name().to_string_lossy().into_owned();
                AssignmentInfo { id: name.clone(), name }
            })
            .collect())
    }

    fn list_submissions(&self, assignment: &AssignmentRef) -> Result<Vec<SubmissionRecord>, LmsError> {
        let dir = self.submissions_dir(assignment)?;
        if !dir.is_dir() {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for entry in sorted_entries(&dir)? {
            if !entry.path().is_dir() {
                continue;
            }
            let student = entry.file_name().to_string_lossy().into_owned();
            if let Some((attempt, attempt_dir)) = Self::latest_attempt(&entry.path())? {
                out.push(self.record(assignment, &student, attempt, &attempt_dir)?);
            }
        }
        Ok(out)
    }

    fn get_submission(&self, assignment: &AssignmentRef, student_id: &str) -> Result<SubmissionRecord, LmsError> {
        let student =
            single_component(student_id).ok_or_else(|| LmsError::NotFound(format!("student {student_id}")))?;
        let dir = self.submissions_dir(assignment)?.join(student);
        let (attempt, attempt_dir) =
            Self::latest_attempt(&dir)?.ok_or_else(|| LmsError::NotFound(format!("submission of {student_id}")))?;
        self.record(assignment, student_id, attempt, &attempt_dir)
    }

    fn download(&self, file_id: &str) -> Result<Vec<u8>, LmsError> {
        self.download_calls.fetch_add(1, Ordering::SeqCst);
        let inject = self
            .failures_to_inject
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
            .is_ok();
        if inject {
            return Err(LmsError::Transport("injected failure (503)".into()));
        }
        let rel = confined_relative(file_id).ok_or_else(|| LmsError::NotFound(format!("file {file_id}")))?;
        let mut parts = rel.components();
        let course_id = parts
            .next()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .unwrap_or_default();
        let inner = parts.as_path();
        if inner.as_os_str().is_empty() || inner == Path::new(MANIFEST) {
            return Err(LmsError::NotFound(format!("file {file_id}")));
        }
        let path = self.course_dir(&course_id)?.join(inner);
        fs::read(&path).map_err(|e| io_err(&path, e))
    }

    fn add_comment(&self, submission: &SubmissionRef, text: &str) -> Result<(), LmsError> {
        let student = single_component(&submission.student_id)
            .ok_or_else(|| LmsError::NotFound(format!("student {}", submission.student_id)))?;
        let dir = self
            .submissions_dir(&submission.assignment)?
            .join(student)
            .join(submission.attempt.to_string());
        if !dir.is_dir() {
            return Err(LmsError::NotFound(format!("submission {}", submission.label())));
        }
        let line = CommentLine {
            author: "codeval".into(),
            text: text.to_string(),
            created_at: Utc::now(),
        };
        let _guard = self.write_lock.lock().unwrap();
        let path = dir.join(COMMENTS);
        append_comment(&path, &line).map_err(|e| io_err(&path, e))
    }
}

/// Builds and inspects a course tree for [`LocalBackend`].
#[derive(Debug, Clone)]
pub struct LocalFixture {
    course_dir: PathBuf,
    course_id: String,
}

impl LocalFixture {
    pub fn create(root: &Path, course_id: &str, course_name: &str) -> io::Result<Self> {
        let course_dir = root.join(course_id);
        fs::create_dir_all(course_dir.join(FILES_DIR))?;
        let fixture = LocalFixture {
            course_dir,
            course_id: course_id.to_string(),
        };
        fixture.write_manifest(&CourseManifest {
            name: course_name.to_string(),
            tokens: Vec::new(),
        })?;
        Ok(fixture)
    }

    fn write_manifest(&self, manifest: &CourseManifest) -> io::Result<()> {
        let json = serde_json::to_string_pretty(manifest).map_err(io::Error::other)?;
        fs::write(self.course_dir.join(MANIFEST), json)
    }

    /// Restricts the course to the given tokens.
    pub fn set_tokens(&self, tokens: &[&str]) -> io::Result<()> {
        let text = fs::read_to_string(self.course_dir.join(MANIFEST))?;
        let mut manifest: CourseManifest = serde_json::from_str(&text).map_err(io::Error::other)?;
        manifest.tokens = tokens.iter().map(|t| t.to_string()).collect();
        self.write_manifest(&manifest)
    }

    pub fn course_id(&self) -> &str {
        &self.course_id
    }

    pub fn course_dir(&self) -> &Path {
        &self.course_dir
    }

    pub fn add_file(&self, name: &str, bytes: &[u8]) -> io::Result<()> {
        fs::write(self.course_dir.join(FILES_DIR).join(name), bytes)
    }

    pub fn remove_file(&self, name: &str) -> io::Result<()> {
        fs::remove_file(self.course_dir.join(FILES_DIR).join(name))
    }

    pub fn add_assignment(&self, name: &str) -> io::Result<()> {
        fs::create_dir_all(self.course_dir.join(name).join(SUBMISSIONS_DIR))
    }

    fn attempt_dir(&self, assignment: &str, student: &str, attempt: u32) -> PathBuf {
        self.course_dir
            .join(assignment)
            .join(SUBMISSIONS_DIR)
            .join(student)
            .join(attempt.to_string())
    }

    /// Adds an attempt; `archive` of `None` models an upload without a zip.
    pub fn add_submission(
        &self,
        assignment: &str,
        student: &str,
        attempt: u32,
        archive: Option<&[u8]>,
    ) -> io::Result<()> {
        let dir = self.attempt_dir(assignment, student, attempt);
        fs::create_dir_all(&dir)?;
        match archive {
            Some(bytes) => fs::write(dir.join(ARCHIVE), bytes),
            None => fs::write(dir.join("upload.txt"), b"not a zip"),
        }
    }

    pub fn withdraw_submission(&self, assignment: &str, student: &str, attempt: u32) -> io::Result<()> {
        fs::remove_dir_all(self.attempt_dir(assignment, student, attempt))
    }

    pub fn add_comment(
        &self,
        assignment: &str,
        student: &str,
        attempt: u32,
        author: &str,
        text: &str,
    ) -> io::Result<()> {
        let line = CommentLine {
            author: author.to_string(),
            text: text.to_string(),
            created_at: Utc::now(),
        };
        append_comment(&self.attempt_dir(assignment, student, attempt).join(COMMENTS), &line)
    }

    pub fn comments(&self, assignment: &str, student: &str, attempt: u32) -> io::Result<Vec<CommentLine>> {
        read_comments(&self.attempt_dir(assignment, student, attempt).join(COMMENTS))
            .map_err(|e| io::Error::other(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::super::{Lms, RetryPolicy};
    use super::*;
    use std::time::Duration;

    fn setup() -> (tempfile::TempDir, LocalFixture) {
        let dir = tempfile::tempdir().unwrap();
        let fx = LocalFixture::create(dir.path(), "cs149", "Operating Systems").unwrap();
        (dir, fx)
    }

    fn lms(root: &Path, token: &str) -> Lms<LocalBackend> {
        Lms::new(LocalBackend::new(root, ApiToken::new(token))).with_retry(RetryPolicy {
            attempts: 3,
            base_delay: Duration::from_millis(1),
        })
    }

    fn course(lms: &Lms<LocalBackend>) -> CourseRef {
        lms.courses_named("Operating Systems").unwrap().remove(0)
    }

    #[test]
    fn discovery_pairs_by_exact_name() {
        let (dir, fx) = setup();
        fx.add_assignment("Hello").unwrap();
        fx.add_assignment("Fork").unwrap();
        fx.add_file("Hello.codeval", b"T true").unwrap();
        fx.add_file("fork.codeval", b"T true").unwrap();
        let lms = lms(dir.path(), "t");
        let found = lms.discover_assignments(&course(&lms)).unwrap();
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].name, "Hello");
        assert_eq!(found[0].spec_file_id.as_deref(), Some("cs149/files/Hello.codeval"));
    }

    #[test]
    fn no_files_no_assignments() {
        let (dir, fx) = setup();
        fx.add_assignment("Hello").unwrap();
        let lms = lms(dir.path(), "t");
        assert!(lms.discover_assignments(&course(&lms)).unwrap().is_empty());
    }

    #[test]
    fn bad_token_is_rejected_and_scoped() {
        let (dir, fx) = setup();
        fx.set_tokens(&["good"]).unwrap();
        let other = LocalFixture::create(dir.path(), "cs146", "Algorithms").unwrap();
        other.set_tokens(&["other"]).unwrap();
        other.add_file("secret.codeval", b"x").unwrap();

        let good = lms(dir.path(), "good");
        let names: Vec<_> = good
            .backend()
            .list_courses()
            .unwrap()
            .into_iter()
            .map(|c| c.name)
            .collect();
        assert_eq!(names, ["Operating Systems"]);
        let foreign = CourseRef {
            id: "cs146".into(),
            name: "Algorithms".into(),
        };
        assert!(matches!(good.discover_assignments(&foreign), Err(LmsError::Auth(_))));
        assert!(matches!(
            good.fetch_file("cs146/files/secret.codeval"),
            Err(LmsError::Auth(_))
        ));

        let expired = lms(dir.path(), "expired");
        assert!(matches!(expired.backend().list_courses(), Err(LmsError::Auth(_))));
        let mine = CourseRef {
            id: "cs149".into(),
            name: "Operating Systems".into(),
        };
        assert!(matches!(expired.discover_assignments(&mine), Err(LmsError::Auth(_))));
    }

    #[test]
    fn pending_respects_marker_prefix() {
        let (dir, fx) = setup();
        fx.add_assignment("Hello").unwrap();
        fx.add_file("Hello.codeval", b"T true").unwrap();
        fx.add_submission("Hello", "alice", 1, Some(b"zip")).unwrap();
        fx.add_submission("Hello", "bob", 1, Some(b"zip")).unwrap();
        fx.add_comment("Hello", "alice", 1, "codeval", "CodEval Result\nok")
            .unwrap();
        fx.add_comment("Hello", "bob", 1, "bob", "please regrade").unwrap();
        let lms = lms(dir.path(), "t");
        let hello = lms.discover_assignments(&course(&lms)).unwrap().remove(0);
        let pending = lms.pending_submissions(&hello).unwrap();
        assert_eq!(pending.len(), 1);
        assert_eq!(pending[0].student_id, "bob");
        assert_eq!(
            pending[0].archive_file_id.as_deref(),
            Some("cs149/Hello/submissions/bob/1/archive.zip")
        );
    }

    #[test]
    fn resubmission_is_pending_again() {
        let (dir, fx) = setup();
        fx.add_assignment("Hello").unwrap();
        fx.add_file("Hello.codeval", b"T true").unwrap();
        fx.add_submission("Hello", "alice", 1, Some(b"zip")).unwrap();
        fx.add_comment("Hello", "alice", 1, "codeval", "CodEval Result")
            .unwrap();
        let lms = lms(dir.path(), "t");
        let hello = lms.discover_assignments(&course(&lms)).unwrap().remove(0);
        assert!(lms.pending_submissions(&hello).unwrap().is_empty());
        fx.add_submission("Hello", "alice", 2, Some(b"zip2")).unwrap();
        let pending = lms.pending_submissions(&hello).unwrap();
        assert_eq!(pending.len(), 1);
        assert_eq!(pending[0].attempt, 2);
    }

    #[test]
    fn zero_submissions() {
        let (dir, fx) = setup();
        fx.add_assignment("Hello").unwrap();
        fx.add_file("Hello.codeval", b"T true").unwrap();
        let lms = lms(dir.path(), "t");
        let hello = lms.discover_assignments(&course(&lms)).unwrap().remove(0);
        assert!(lms.pending_submissions(&hello).unwrap().is_empty());
    }

    #[test]
    fn fetch_file_variants() {
        let (dir, fx) = setup();
        fx.add_file("Hello.codeval", b"T true\n").unwrap();
        let lms = lms(dir.path(), "t");
        assert_eq!(lms.fetch_file("cs149/files/Hello.codeval").unwrap(), b"T true\n");
        fx.remove_file("Hello.codeval").unwrap();
        assert!(matches!(
            lms.fetch_file("cs149/files/Hello.codeval"),
            Err(LmsError::NotFound(_))
        ));
        assert!(matches!(
            lms.fetch_file("cs149/../../etc/passwd"),
            Err(LmsError::NotFound(_))
        ));
        assert!(matches!(
            lms.fetch_file("cs149/course.json"),
            Err(LmsError::NotFound(_))
        ));
    }

    #[test]
    fn transient_failure_is_retried_once() {
        let (dir, fx) = setup();
        fx.add_file("a.zip", b"bytes").unwrap();
        let lms = lms(dir.path(), "t");
        lms.backend().fail_next_downloads(1);
        assert_eq!(lms.fetch_file("cs149/files/a.zip").unwrap(), b"bytes");
        assert_eq!(lms.backend().download_calls(), 2);
    }

    #[test]
    fn post_then_not_pending() {
        let (dir, fx) = setup();
        fx.add_assignment("Hello").unwrap();
        fx.add_file("Hello.codeval", b"T true").unwrap();
        fx.add_submission("Hello", "alice", 1, Some(b"zip")).unwrap();
        let lms = lms(dir.path(), "t");
        let hello = lms.discover_assignments(&course(&lms)).unwrap().remove(0);
        let sub = lms.pending_submissions(&hello).unwrap().remove(0);
        assert!(lms.is_pending(&sub).unwrap());

        assert!(matches!(
            lms.post_evaluation(&sub, "no marker"),
            Err(LmsError::Rejected(_))
        ));
        assert!(fx.comments("Hello", "alice", 1).unwrap().is_empty());

        lms.post_evaluation(&sub, "CodEval Result\nTest 1: PASSED\n").unwrap();
        assert!(lms.pending_submissions(&hello).unwrap().is_empty());
        assert!(!lms.is_pending(&sub).unwrap());
        assert_eq!(fx.comments("Hello", "alice", 1).unwrap().len(), 1);
    }

    #[test]
    fn post_to_withdrawn_submission() {
        let (dir, fx) = setup();
        fx.add_assignment("Hello").unwrap();
        fx.add_file("Hello.codeval", b"T true").unwrap();
        fx.add_submission("Hello", "alice", 1, Some(b"zip")).unwrap();
        let lms = lms(dir.path(), "t");
        let hello = lms.discover_assignments(&course(&lms)).unwrap().remove(0);
        let sub = lms.pending_submissions(&hello).unwrap().remove(0);
        fx.withdraw_submission("Hello", "alice", 1).unwrap();
        assert!(matches!(
            lms.post_evaluation(&sub, "CodEval Result"),
            Err(LmsError::NotFound(_))
        ));
    }

    #[test]
    fn upload_without_zip() {
        let (dir, fx) = setup();
        fx.add_assignment("Hello").unwrap();
        fx.add_file("Hello.codeval", b"T true").unwrap();
        fx.add_submission("Hello", "carol", 1, None).unwrap();
        let lms = lms(dir.path(), "t");
        let hello = lms.discover_assignments(&course(&lms)).unwrap().remove(0);
        let pending = lms.pending_submissions(&hello).unwrap();
        assert_eq!(pending.len(), 1);
        assert_eq!(pending[0].archive_file_id, None);
    }
}

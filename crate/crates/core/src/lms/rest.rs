//! Canvas-style REST backend.

use std::io::Read;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde_json::{json, Value};
use url::Url;

use super::{
    AssignmentInfo, AssignmentRef, BackendCredentials, CommentRecord, CourseRef, FileRef, LmsBackend, LmsError,
    SubmissionRecord, SubmissionRef,
};

const PER_PAGE: &str = "100";
const MAX_PAGES: usize = 1000;
const MAX_DOWNLOAD_BYTES: u64 = 512 * 1024 * 1024;
const REQUEST_TIMEOUT: Duration = Duration::from_secs(60);

pub struct RestBackend {
    base: Url,
    credentials: BackendCredentials,
    agent: ureq::Agent,
}

impl std::fmt::Debug for RestBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RestBackend")
            .field("base", &self.base.as_str())
            .finish()
    }
}

fn map_error(err: ureq::Error) -> LmsError {
    match err {
        ureq::Error::Status(code, resp) => {
            let what = format!("HTTP {code} for {}", resp.get_url());
            match code {
                401 | 403 => LmsError::Auth(what),
                404 => LmsError::NotFound(what),
                429 | 500..=599 => LmsError::Transport(what),
                _ => LmsError::Protocol(what),
            }
        }
        ureq::Error::Transport(t) => LmsError::Transport(t.to_string()),
    }
}

/// The `rel="next"` target of an RFC 8288 `Link` header.
pub(crate) fn next_link(header: &str) -> Option<String> {
    header.split(',').find_map(|part| {
        let mut pieces = part.split(';');
        let target = pieces.next()?.trim();
        let is_next = pieces.any(|p| {
            let p = p.trim();
            p == "rel=\"next\"" || p == "rel=next"
        });
        (is_next && target.starts_with('<') && target.ends_with('>')).then(|| target[1..target.len() - 1].to_string())
    })
}

/// Ids arrive as numbers or strings depending on the server.
fn id_of(value: &Value) -> Option<String> {
    match value {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn field_id(obj: &Value, key: &str) -> Result<String, LmsError> {
    obj.get(key)
        .and_then(id_of)
        .ok_or_else(|| LmsError::Protocol(format!("missing {key} in response")))
}

fn field_str(obj: &Value, key: &str) -> String {
    obj.get(key).and_then(Value::as_str).unwrap_or_default().to_string()
}

fn field_time(obj: &Value, key: &str) -> Option<DateTime<Utc>> {
    obj.get(key)?.as_str()?.parse().ok()
}

fn parse_submission(obj: &Value) -> Result<Option<SubmissionRecord>, LmsError> {
    let Some(attempt) = obj.get("attempt").and_then(Value::as_u64) else {
        // never submitted
        return Ok(None);
    };
    if obj.get("workflow_state").and_then(Value::as_str) == Some("unsubmitted") {
        return Ok(None);
    }
    let archive_file_id = obj
        .get("attachments")
        .and_then(Value::as_array)
        .into_iter()
        .flatten()
        .find(|a| {
            let name = a.get("filename").or_else(|| a.get("display_name"));
            name.and_then(Value::as_str)
                .is_some_and(|n| n.to_ascii_lowercase().ends_with(".zip"))
        })
        .and_then(|a| a.get("id").and_then(id_of));
    let comments = obj
        .get("submission_comments")
        .and_then(Value::as_array)
        .into_iter()
        .flatten()
        .map(|c| CommentRecord {
            text: field_str(c, "comment"),
            attempt: c.get("attempt").and_then(Value::as_u64).map(|a| a as u32),
            created_at: field_time(c, "created_at"),
        })
        .collect();
    Ok(Some(SubmissionRecord {
        student_id: field_id(obj, "user_id")?,
        attempt: attempt as u32,
        archive_file_id,
        submitted_at: field_time(obj, "submitted_at"),
        comments,
    }))
}

impl RestBackend {
    pub fn new(credentials: BackendCredentials) -> Result<Self, LmsError> {
        let base = Url::parse(&credentials.base_url)
            .map_err(|e| LmsError::Rejected(format!("invalid server url {}: {e}", credentials.base_url)))?;
        if !matches!(base.scheme(), "http" | "https") || base.cannot_be_a_base() {
            return Err(LmsError::Rejected(format!("unsupported server url {base}")));
        }
        let agent = ureq::AgentBuilder::new().timeout(REQUEST_TIMEOUT).build();
        Ok(RestBackend {
            base,
            credentials,
            agent,
        })
    }

    fn endpoint(&self, segments: &[&str]) -> Url {
        let mut url = self.base.clone();
        {
            let mut path = url.path_segments_mut().expect("base url checked in new");
            path.pop_if_empty().extend(["api", "v1"]).extend(segments);
        }
        url
    }

    /// Only send the token to the configured server.
    fn same_origin(&self, url: &Url) -> bool {
        url.origin() == self.base.origin()
    }

    fn request(&self, method: &str, url: &Url) -> ureq::Request {
        let req = self.agent.request_url(method, url);
        if self.same_origin(url) {
            req.set("Authorization", &format!("Bearer {}", self.credentials.token.expose()))
        } else {
            req
        }
    }

    fn get_json(&self, url: &Url) -> Result<(Value, Option<String>), LmsError> {
        let resp = self.request("GET", url).call().map_err(map_error)?;
        let next = resp.header("Link").and_then(next_link);
        let body = resp
            .into_json()
            .map_err(|e| LmsError::Protocol(format!("invalid JSON from {url}: {e}")))?;
        Ok((body, next))
    }

    /// Follows `Link: rel="next"` until the listing is exhausted.
    fn get_paginated(&self, mut url: Url) -> Result<Vec<Value>, LmsError> {
        url.query_pairs_mut().append_pair("per_page", PER_PAGE);
        let mut items = Vec::new();
        for _ in 0..MAX_PAGES {
            let (body, next) = self.get_json(&url)?;
            match body {
                Value::Array(page) => items.extend(page),
                other => return Err(LmsError::Protocol(format!("expected a list from {url}, got {other}"))),
            }
            let Some(next) = next else { return Ok(items) };
            let next = url
                .join(&next)
                .map_err(|e| LmsError::Protocol(format!("bad next link {next}: {e}")))?;
            if !self.same_origin(&next) {
                return Err(LmsError::Protocol(format!("next link leaves the server: {next}")));
            }
            url = next;
        }
        Err(LmsError::Protocol(format!("more than {MAX_PAGES} pages")))
    }

    fn submissions_url(&self, assignment: &AssignmentRef, student: Option<&str>) -> Url {
        let mut segments = vec![
            "courses",
            &assignment.course_id,
            "assignments",
            &assignment.id,
            "submissions",
        ];
        segments.extend(student);
        let mut url = self.endpoint(&segments);
        url.query_pairs_mut().append_pair("include[]", "submission_comments");
        url
    }
}

impl LmsBackend for RestBackend {
    fn list_courses(&self) -> Result<Vec<CourseRef>, LmsError> {
        self.get_paginated(self.endpoint(&["courses"]))?
            .iter()
            .map(|c| {
                Ok(CourseRef {
                    id: field_id(c, "id")?,
                    name: field_str(c, "name"),
                })
            })
            .collect()
    }

    fn list_course_files(&self, course: &CourseRef) -> Result<Vec<FileRef>, LmsError> {
        self.get_paginated(self.endpoint(&["courses", &course.id, "files"]))?
            .iter()
            .map(|f| {
                let mut name = field_str(f, "display_name");
                if name.is_empty() {
                    name = field_str(f, "filename");
                }
                Ok(FileRef {
                    id: field_id(f, "id")?,
                    name,
                })
            })
            .collect()
    }

    fn list_assignments(&self, course: &CourseRef) -> Result<Vec<AssignmentInfo>, LmsError> {
        self.get_paginated(self.endpoint(&["courses", &course.id, "assignments"]))?
            .iter()
            .map(|a| {
                Ok(AssignmentInfo {
                    id: field_id(a, "id")?,
                    name: field_str(a, "name"),
                })
            })
            .collect()
    }

    fn list_submissions(&self, assignment: &AssignmentRef) -> Result<Vec<SubmissionRecord>, LmsError> {
        let mut out = Vec::new();
        for item in self.get_paginated(self.submissions_url(assignment, None))? {
            out.extend(parse_submission(&item)?);
        }
        Ok(out)
    }

    fn get_submission(&self, assignment: &AssignmentRef, student_id: &str) -> Result<SubmissionRecord, LmsError> {
        let (body, _) = self.get_json(&self.submissions_url(assignment, Some(student_id)))?;
        parse_submission(&body)?.ok_or_else(|| LmsError::NotFound(format!("submission of {student_id}")))
    }

    fn download(&self, file_id: &str) -> Result<Vec<u8>, LmsError> {
        let (meta, _) = self.get_json(&self.endpoint(&["files", file_id]))?;
        let raw = meta
            .get("url")
            .and_then(Value::as_str)
            .ok_or_else(|| LmsError::Protocol(format!("file {file_id} has no download url")))?;
        let url = self
            .base
            .join(raw)
            .map_err(|e| LmsError::Protocol(format!("bad download url for file {file_id}: {e}")))?;
        let resp = self.request("GET", &url).call().map_err(map_error)?;
        let mut bytes = Vec::new();
        resp.into_reader()
            .take(MAX_DOWNLOAD_BYTES)
            .read_to_end(&mut bytes)
            .map_err(|e| LmsError::Transport(format!("reading file {file_id}: {e}")))?;
        Ok(bytes)
    }

    fn add_comment(&self, submission: &SubmissionRef, text: &str) -> Result<(), LmsError> {
        let url = self.endpoint(&[
            "courses",
            &submission.assignment.course_id,
            "assignments",
            &submission.assignment.id,
            "submissions",
            &submission.student_id,
        ]);
        let body = json!({ "comment": { "text_comment": text, "attempt": submission.attempt } });
        self.request("PUT", &url).send_json(body).map_err(map_error)?;
        Ok(())
    }
}

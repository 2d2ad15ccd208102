//! Minimal in-process Canvas look-alike for backend contract tests.
//!
//! Lists are paginated with a small page size and `Link: rel="next"`
//! headers. File metadata points at a `/download/<id>` URL, like Canvas's
//! pre-signed file URLs.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde_json::{json, Value};
use tiny_http::{Header, Method, Request, Response, Server};

#[derive(Debug, Clone)]
pub struct LoggedRequest {
    pub method: String,
    pub url: String,
    pub authorization: Option<String>,
}

#[derive(Debug, Clone)]
struct Submission {
    course: u64,
    assignment: u64,
    user: u64,
    attempt: u64,
    attachment: Option<u64>,
    submitted_at: String,
    comments: Vec<(String, u64, String)>,
}

#[derive(Default)]
pub struct State {
    /// token -> courses it may see
    tokens: BTreeMap<String, Vec<u64>>,
    courses: Vec<(u64, String)>,
    files: Vec<(u64, u64, String, Vec<u8>)>,
    assignments: Vec<(u64, u64, String)>,
    submissions: Vec<Submission>,
    pub page_size: usize,
    pub fail_file_requests: usize,
    /// Leave `attempt` out of comments, like older servers.
    pub omit_comment_attempt: bool,
    pub log: Vec<LoggedRequest>,
    next_id: u64,
}

impl State {
    fn id(&mut self) -> u64 {
        self.next_id += 1;
        self.next_id
    }
}

pub struct FakeCanvas {
    pub url: String,
    server: Arc<Server>,
    state: Arc<Mutex<State>>,
    worker: Option<JoinHandle<()>>,
}

fn json_response(status: u16, body: &Value) -> Response<std::io::Cursor<Vec<u8>>> {
    Response::from_string(body.to_string())
        .with_status_code(status)
        .with_header(Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..]).unwrap())
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339()
}

impl FakeCanvas {
    pub fn start() -> Self {
        let server = Arc::new(Server::http("127.0.0.1:0").unwrap());
        let port = server.server_addr().to_ip().unwrap().port();
        let url = format!("http://127.0.0.1:{port}");
        let state = Arc::new(Mutex::new(State {
            page_size: 2,
            next_id: 100,
            ..Default::default()
        }));
        let worker = {
            let (server, state, base) = (Arc::clone(&server), Arc::clone(&state), url.clone());
            std::thread::spawn(move || {
                for request in server.incoming_requests() {
                    handle(request, &state, &base);
                }
            })
        };
        FakeCanvas {
            url,
            server,
            state,
            worker: Some(worker),
        }
    }

    pub fn state(&self) -> std::sync::MutexGuard<'_, State> {
        self.state.lock().unwrap()
    }

    pub fn add_course(&self, name: &str, token: &str) -> u64 {
        let mut s = self.state();
        let id = s.id();
        s.courses.push((id, name.to_string()));
        s.tokens.entry(token.to_string()).or_default().push(id);
        id
    }

    pub fn add_file(&self, course: u64, name: &str, bytes: &[u8]) -> u64 {
        let mut s = self.state();
        let id = s.id();
        s.files.push((id, course, name.to_string(), bytes.to_vec()));
        id
    }

    pub fn remove_file(&self, course: u64, name: &str) {
        self.state().files.retain(|f| !(f.1 == course && f.2 == name));
    }

    pub fn add_assignment(&self, course: u64, name: &str) -> u64 {
        let mut s = self.state();
        let id = s.id();
        s.assignments.push((id, course, name.to_string()));
        id
    }

    fn assignment_id(&self, course: u64, name: &str) -> u64 {
        self.state()
            .assignments
            .iter()
            .find(|a| a.1 == course && a.2 == name)
            .map(|a| a.0)
            .expect("assignment exists")
    }

    /// Records a new attempt; the previous attempt's entry is replaced, as
    /// Canvas only lists the current one.
    pub fn submit(&self, course: u64, assignment: &str, user: u64, attempt: u64, archive: Option<&[u8]>) {
        let assignment = self.assignment_id(course, assignment);
        let attachment = match archive {
            Some(bytes) => Some(self.add_file(course, &format!("submission-{user}-{attempt}.zip"), bytes)),
            None => Some(self.add_file(course, &format!("notes-{user}-{attempt}.txt"), b"notes")),
        };
        let mut s = self.state();
        let comments = s
            .submissions
            .iter()
            .find(|x| x.assignment == assignment && x.user == user)
            .map(|x| x.comments.clone())
            .unwrap_or_default();
        s.submissions
            .retain(|x| !(x.assignment == assignment && x.user == user));
        s.submissions.push(Submission {
            course,
            assignment,
            user,
            attempt,
            attachment,
            submitted_at: now(),
            comments,
        });
    }

    pub fn withdraw(&self, course: u64, assignment: &str, user: u64) {
        let assignment = self.assignment_id(course, assignment);
        self.state()
            .submissions
            .retain(|x| !(x.assignment == assignment && x.user == user));
    }

    pub fn comment(&self, course: u64, assignment: &str, user: u64, attempt: u64, text: &str) {
        let assignment = self.assignment_id(course, assignment);
        let mut s = self.state();
        let sub = s
            .submissions
            .iter_mut()
            .find(|x| x.assignment == assignment && x.user == user)
            .expect("submission exists");
        sub.comments.push((text.to_string(), attempt, now()));
    }

    pub fn comments(&self, course: u64, assignment: &str, user: u64) -> Vec<(String, u64)> {
        let assignment = self.assignment_id(course, assignment);
        self.state()
            .submissions
            .iter()
            .find(|x| x.assignment == assignment && x.user == user)
            .map(|x| x.comments.iter().map(|c| (c.0.clone(), c.1)).collect())
            .unwrap_or_default()
    }

    pub fn requests(&self) -> Vec<LoggedRequest> {
        self.state().log.clone()
    }

    pub fn file_requests(&self) -> usize {
        self.requests()
            .iter()
            .filter(|r| r.url.starts_with("/api/v1/files/"))
            .count()
    }
}

impl Drop for FakeCanvas {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

fn paginate(items: Vec<Value>, page_size: usize, base: &str, url: &url::Url) -> Response<std::io::Cursor<Vec<u8>>> {
    let page: usize = url
        .query_pairs()
        .find(|(k, _)| k == "page")
        .and_then(|(_, v)| v.parse().ok())
        .unwrap_or(1);
    let chunk: Vec<Value> = items
        .iter()
        .skip((page - 1) * page_size)
        .take(page_size)
        .cloned()
        .collect();
    let mut response = json_response(200, &Value::Array(chunk));
    if page * page_size < items.len() {
        let mut next = url::Url::parse(&format!("{base}{}", url.path())).unwrap();
        {
            let mut q = next.query_pairs_mut();
            for (k, v) in url.query_pairs().filter(|(k, _)| k != "page") {
                q.append_pair(&k, &v);
            }
            q.append_pair("page", &(page + 1).to_string());
        }
        let link = format!("<{next}>; rel=\"next\", <{base}{}?page=1>; rel=\"first\"", url.path());
        response = response.with_header(Header::from_bytes(&b"Link"[..], link.as_bytes()).unwrap());
    }
    response
}

fn submission_json(s: &Submission, omit_attempt: bool) -> Value {
    let attachments: Vec<Value> = s.attachment.iter().map(|id| json!({"id": id})).collect();
    let comments: Vec<Value> = s
        .comments
        .iter()
        .map(|(text, attempt, created)| {
            let mut c = json!({"comment": text, "created_at": created, "author_id": 1});
            if !omit_attempt {
                c["attempt"] = json!(attempt);
            }
            c
        })
        .collect();
    json!({
        "user_id": s.user,
        "attempt": s.attempt,
        "workflow_state": "submitted",
        "submitted_at": s.submitted_at,
        "attachments": attachments,
        "submission_comments": comments,
    })
}

fn handle(mut request: Request, state: &Mutex<State>, base: &str) {
    let auth = request
        .headers()
        .iter()
        .find(|h| h.field.equiv("Authorization"))
        .map(|h| h.value.as_str().to_string());
    let method = request.method().clone();
    let url = url::Url::parse(&format!("{base}{}", request.url())).unwrap();
    let mut body = String::new();
    let _ = request.as_reader().read_to_string(&mut body);

    let response = {
        let mut s = state.lock().unwrap();
        s.log.push(LoggedRequest {
            method: method.to_string(),
            url: request.url().to_string(),
            authorization: auth.clone(),
        });
        route(&mut s, &method, &url, auth.as_deref(), &body, base)
    };
    let _ = request.respond(response);
}

fn route(
    s: &mut State,
    method: &Method,
    url: &url::Url,
    auth: Option<&str>,
    body: &str,
    base: &str,
) -> Response<std::io::Cursor<Vec<u8>>> {
    let segments: Vec<&str> = url.path_segments().map(|p| p.collect()).unwrap_or_default();
    let not_found = || json_response(404, &json!({"errors": [{"message": "not found"}]}));

    if let ["download", id] = segments[..] {
        return match s.files.iter().find(|f| f.0.to_string() == id) {
            Some(f) => Response::from_data(f.3.clone()),
            None => not_found(),
        };
    }

    let token = auth.and_then(|a| a.strip_prefix("Bearer ")).unwrap_or("");
    let Some(visible) = s.tokens.get(token).cloned() else {
        return json_response(401, &json!({"errors": [{"message": "Invalid access token."}]}));
    };
    let forbidden = || json_response(401, &json!({"status": "unauthorized"}));
    let course_ok = |id: &str| visible.iter().any(|c| c.to_string() == id);
    let page_size = s.page_size;

    match (method, &segments[..]) {
        (Method::Get, ["api", "v1", "courses"]) => {
            let items = s
                .courses
                .iter()
                .filter(|c| visible.contains(&c.0))
                .map(|c| json!({"id": c.0, "name": c.1}))
                .collect();
            paginate(items, page_size, base, url)
        }
        (Method::Get, ["api", "v1", "courses", c, "files"]) => {
            if !course_ok(c) {
                return forbidden();
            }
            let items = s
                .files
                .iter()
                .filter(|f| f.1.to_string() == *c && !f.2.starts_with("submission-") && !f.2.starts_with("notes-"))
                .map(|f| json!({"id": f.0, "display_name": f.2, "filename": f.2.replace(' ', "+")}))
                .collect();
            paginate(items, page_size, base, url)
        }
        (Method::Get, ["api", "v1", "courses", c, "assignments"]) => {
            if !course_ok(c) {
                return forbidden();
            }
            let items = s
                .assignments
                .iter()
                .filter(|a| a.1.to_string() == *c)
                .map(|a| json!({"id": a.0.to_string(), "name": a.2}))
                .collect();
            paginate(items, page_size, base, url)
        }
        (Method::Get, ["api", "v1", "courses", c, "assignments", a, "submissions"]) => {
            if !course_ok(c) {
                return forbidden();
            }
            let omit = s.omit_comment_attempt;
            let items = s
                .submissions
                .iter()
                .filter(|x| x.course.to_string() == *c && x.assignment.to_string() == *a)
                .map(|x| fix_attachment_names(submission_json(x, omit), &s.files))
                .collect();
            paginate(items, page_size, base, url)
        }
        (_, ["api", "v1", "courses", c, "assignments", a, "submissions", u]) => {
            if !course_ok(c) {
                return forbidden();
            }
            let omit = s.omit_comment_attempt;
            let files = s.files.clone();
            let Some(sub) = s
                .submissions
                .iter_mut()
                .find(|x| x.course.to_string() == *c && x.assignment.to_string() == *a && x.user.to_string() == *u)
            else {
                return not_found();
            };
            if *method == Method::Put {
                let v: Value = match serde_json::from_str(body) {
                    Ok(v) => v,
                    Err(_) => return json_response(400, &json!({"error": "bad json"})),
                };
                let text = v["comment"]["text_comment"].as_str().unwrap_or_default().to_string();
                let attempt = v["comment"]["attempt"].as_u64().unwrap_or(sub.attempt);
                sub.comments.push((text, attempt, now()));
            }
            json_response(200, &fix_attachment_names(submission_json(sub, omit), &files))
        }
        (Method::Get, ["api", "v1", "files", id]) => {
            if s.fail_file_requests > 0 {
                s.fail_file_requests -= 1;
                return json_response(503, &json!({"error": "unavailable"}));
            }
            match s
                .files
                .iter()
                .find(|f| f.0.to_string() == *id && course_ok(&f.1.to_string()))
            {
                Some(f) => json_response(
                    200,
                    &json!({"id": f.0, "display_name": f.2, "url": format!("{base}/download/{}?verifier=abc", f.0)}),
                ),
                None => not_found(),
            }
        }
        _ => not_found(),
    }
}

fn fix_attachment_names(mut v: Value, files: &[(u64, u64, String, Vec<u8>)]) -> Value {
    if let Some(list) = v["attachments"].as_array_mut() {
        for a in list {
            if let Some(f) = files.iter().find(|f| Some(f.0) == a["id"].as_u64()) {
                a["filename"] = json!(f.2);
                a["display_name"] = json!(f.2);
            }
        }
    }
    v
}

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use super::workspace::RESERVED_DIR;
use super::{IsolationConfig, Workspace};
use crate::paths::confined_relative;

/// Time between the termination signal and the forced kill.
pub const KILL_GRACE: Duration = Duration::from_secs(2);

/// Per-stream capture limit; the rest is discarded and flagged.
pub const MAX_CAPTURE_BYTES: usize = 10 * 1024 * 1024;

const DEFAULT_TIMEOUT: Duration = Duration::from_secs(20);
const POLL_INTERVAL: Duration = Duration::from_millis(5);
const STEP_SCRIPT: &str = "step.sh";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecRequest {
    pub command: String,
    pub stdin: Vec<u8>,
    pub timeout: Duration,
    /// Relative to the workspace root; `None` means the root itself.
    pub workdir: Option<PathBuf>,
}

impl ExecRequest {
    pub fn new(command: impl Into<String>) -> Self {
        ExecRequest {
            command: command.into(),
            stdin: Vec::new(),
            timeout: DEFAULT_TIMEOUT,
            workdir: None,
        }
    }

    pub fn stdin(mut self, bytes: impl Into<Vec<u8>>) -> Self {
        self.stdin = bytes.into();
        self
    }

    pub fn timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn workdir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.workdir = Some(dir.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExecStatus {
    /// Normal exit; death by signal N is reported as 128 + N.
    Exited {
        code: i32,
    },
    TimedOut,
    SpawnFailed {
        reason: String,
    },
}

#[derive(Debug, Clone)]
pub struct ExecResult {
    pub status: ExecStatus,
    pub stdout: Vec<u8>,
    pub stderr: Vec<u8>,
    pub stdout_truncated: bool,
    pub stderr_truncated: bool,
    pub wall_time: Duration,
}

impl ExecResult {
    fn spawn_failed(reason: impl Into<String>) -> Self {
        ExecResult {
            status: ExecStatus::SpawnFailed { reason: reason.into() },
            stdout: Vec::new(),
            stderr: Vec::new(),
            stdout_truncated: false,
            stderr_truncated: false,
            wall_time: Duration::ZERO,
        }
    }

    pub fn wall_time_s(&self) -> f64 {
        self.wall_time.as_secs_f64()
    }

    pub fn exit_code(&self) -> Option<i32> {
        match self.status {
            ExecStatus::Exited { code } => Some(code),
            _ => None,
        }
    }

    pub fn succeeded(&self) -> bool {
        self.exit_code() == Some(0)
    }

    /// stdout followed by stderr, lossily decoded; for compiler and tool
    /// output shown in reports.
    pub fn combined_output(&self) -> String {
        let mut text = String::from_utf8_lossy(&self.stdout).into_owned();
        if !self.stderr.is_empty() {
            if !text.is_empty() && !text.ends_with('\n') {
                text.push('\n');
            }
            text.push_str(&String::from_utf8_lossy(&self.stderr));
        }
        text
    }
}

/// Runs `request.command` inside the workspace through the isolation
/// template. The command is written to a script under `.codeval/` and the
/// template's `EVALUATE` becomes `sh .codeval/step.sh`, so commands with
/// quotes survive any template quoting.
///
/// Callers must not run two commands in one workspace at the same time.
pub fn execute(workspace: &Workspace, request: &ExecRequest, config: &IsolationConfig) -> ExecResult {
    if request.timeout.is_zero() {
        return ExecResult::spawn_failed("timeout must be positive");
    }
    let workdir = match &request.workdir {
        None => None,
        Some(dir) => match confined_relative(&dir.to_string_lossy()) {
            Some(p) => Some(p),
            None => return ExecResult::spawn_failed(format!("workdir {} escapes the workspace", dir.display())),
        },
    };

    let reserved = workspace.root().join(RESERVED_DIR);
    let script_path = reserved.join(STEP_SCRIPT);
    let mut script = String::new();
    if let Some(dir) = &workdir {
        script.push_str(&format!(
            "cd {} || exit 127\n",
            shell_words::quote(&dir.to_string_lossy())
        ));
    }
    script.push_str(&request.command);
    script.push('\n');
    if let Err(e) = fs::create_dir_all(&reserved).and_then(|_| fs::write(&script_path, script)) {
        return ExecResult::spawn_failed(format!("cannot write step script: {e}"));
    }

    let evaluate = format!("sh {RESERVED_DIR}/{STEP_SCRIPT}");
    let shell_command = match config.render(workspace.root(), &evaluate) {
        Ok(c) => c,
        Err(e) => return ExecResult::spawn_failed(e.to_string()),
    };
    let result = run_shell(&shell_command, workspace.root(), &request.stdin, request.timeout);
    let _ = fs::remove_file(&script_path);
    result
}

/// Runs a command with the host shell, outside any isolation. Used for the
/// operator's precommand.
pub fn run_host_command(command: &str, cwd: &Path, timeout: Duration) -> ExecResult {
    run_shell(command, cwd, &[], timeout)
}

type Capture = Arc<Mutex<(Vec<u8>, bool)>>;

fn spawn_reader<R: Read + Send + 'static>(mut source: R, done: mpsc::Sender<()>) -> Capture {
    let capture: Capture = Arc::new(Mutex::new((Vec::new(), false)));
    let sink = Arc::clone(&capture);
    thread::spawn(move || {
        let mut buf = [0u8; 8192];
        loop {
            match source.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    let mut guard = sink.lock().unwrap();
                    let (data, truncated) = &mut *guard;
                    let room = MAX_CAPTURE_BYTES.saturating_sub(data.len());
                    if n > room {
                        *truncated = true;
                    }
                    data.extend_from_slice(&buf[..n.min(room)]);
                }
            }
        }
        let _ = done.send(());
    });
    capture
}

fn take_capture(capture: &Capture) -> (Vec<u8>, bool) {
    let mut guard = capture.lock().unwrap();
    (std::mem::take(&mut guard.0), guard.1)
}

#[cfg(unix)]
fn signal_group(pgid: u32, signal: libc::c_int) {
    // ESRCH just means the group is already gone.
    unsafe {
        libc::killpg(pgid as libc::pid_t, signal);
    }
}

/// True once the child has exited. The child is left as a zombie, so its
/// pid (and process group id) cannot be reused before we reap it.
#[cfg(unix)]
fn has_exited(pid: u32) -> bool {
    let mut info: libc::siginfo_t = unsafe { std::mem::zeroed() };
    let rc = unsafe {
        libc::waitid(
            libc::P_PID,
            pid as libc::id_t,
            &mut info,
            libc::WEXITED | libc::WNOHANG | libc::WNOWAIT,
        )
    };
    rc != 0 || unsafe { info.si_pid() } != 0
}

fn wait_until(pid: u32, deadline: Instant) -> bool {
    loop {
        if has_exited(pid) {
            return true;
        }
        let now = Instant::now();
        if now >= deadline {
            return false;
        }
        thread::sleep(POLL_INTERVAL.min(deadline - now));
    }
}

fn run_shell(shell_command: &str, cwd: &Path, stdin: &[u8], timeout: Duration) -> ExecResult {
    use std::os::unix::process::{CommandExt, ExitStatusExt};

    let mut cmd = Command::new("sh");
    cmd.arg("-c")
        .arg(shell_command)
        .current_dir(cwd)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0);

    let start = Instant::now();
    let mut child = match cmd.spawn() {
        Ok(c) => c,
        Err(e) => return ExecResult::spawn_failed(format!("cannot start shell: {e}")),
    };
    let pid = child.id();

    let (done_tx, done_rx) = mpsc::channel();
    let stdout = spawn_reader(child.stdout.take().expect("piped stdout"), done_tx.clone());
    let stderr = spawn_reader(child.stderr.take().expect("piped stderr"), done_tx);

    let mut input = child.stdin.take().expect("piped stdin");
    let payload = stdin.to_vec();
    thread::spawn(move || {
        // EPIPE when the program ignores its input is fine.
        let _ = input.write_all(&payload);
    });

    let timed_out = !wait_until(pid, start + timeout);
    if timed_out {
        signal_group(pid, libc::SIGTERM);
        if !wait_until(pid, Instant::now() + KILL_GRACE) {
            signal_group(pid, libc::SIGKILL);
            wait_until(pid, Instant::now() + Duration::from_secs(60));
        }
    }
    let wall_time = start.elapsed();
    // Background processes left behind by the command die with it.
    signal_group(pid, libc::SIGKILL);
    let exit = child.wait();

    // Pipes close once every process in the group is gone; anything that
    // escaped the group gets a short grace before we stop waiting.
    let drain_deadline = Instant::now() + Duration::from_secs(1);
    for _ in 0..2 {
        let left = drain_deadline.saturating_duration_since(Instant::now());
        if done_rx.recv_timeout(left).is_err() {
            break;
        }
    }
    let (stdout, stdout_truncated) = take_capture(&stdout);
    let (stderr, stderr_truncated) = take_capture(&stderr);

    let status = if timed_out {
        ExecStatus::TimedOut
    } else {
        match exit {
            Ok(st) => match (st.code(), st.signal()) {
                (Some(code), _) => ExecStatus::Exited { code },
                (None, Some(sig)) => ExecStatus::Exited { code: 128 + sig },
                (None, None) => ExecStatus::SpawnFailed {
                    reason: "unknown exit status".into(),
                },
            },
            Err(e) => ExecStatus::SpawnFailed {
                reason: format!("wait failed: {e}"),
            },
        }
    };

    ExecResult {
        status,
        stdout,
        stderr,
        stdout_truncated,
        stderr_truncated,
        wall_time,
    }
}

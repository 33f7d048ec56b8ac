use std::env;
use std::ffi::OsString;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, ExitStatus, Stdio};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::procfs;
use super::TraceError;

pub const DEFAULT_SYSCALLS: &[&str] = &["openat", "open", "openat2", "creat"];

/// The program run per traced process, plus any arguments that go before
/// the strace-style options.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TracerCommand {
    pub program: PathBuf,
    pub leading_args: Vec<OsString>,
}

impl TracerCommand {
    pub fn strace(program: impl Into<PathBuf>) -> Self {
        TracerCommand {
            program: program.into(),
            leading_args: Vec::new(),
        }
    }

    /// The tracer built into the `statecap` binary.
    pub fn builtin(statecap_exe: impl Into<PathBuf>) -> Self {
        TracerCommand {
            program: statecap_exe.into(),
            leading_args: vec![OsString::from(crate::BUILTIN_TRACER_SUBCOMMAND)],
        }
    }

    /// `strace` from PATH when installed, otherwise the built-in tracer of
    /// the given `statecap` executable.
    pub fn detect(statecap_exe: Option<&Path>) -> Option<Self> {
        if let Some(strace) = find_in_path("strace") {
            return Some(TracerCommand::strace(strace));
        }
        statecap_exe
            .map(Path::to_path_buf)
            .or_else(crate::locate_statecap_exe)
            .map(TracerCommand::builtin)
    }
}

pub fn find_in_path(program: &str) -> Option<PathBuf> {
    env::split_paths(&env::var_os("PATH")?)
        .map(|dir| dir.join(program))
        .find(|p| p.is_file())
}

/// `ENABLE_TRACE=false` turns tracing off; anything else (or unset) leaves
/// it on.
pub fn tracing_enabled_from_env() -> bool {
    !env::var("ENABLE_TRACE").is_ok_and(|v| v.trim().eq_ignore_ascii_case("false"))
}

#[derive(Clone, Debug)]
pub struct TraceSettings {
    pub log_dir: PathBuf,
    pub tracer: TracerCommand,
    pub syscalls: Vec<String>,
    pub follow_forks: bool,
    pub enabled: bool,
    /// How long start_trace waits for the tracer to attach.
    pub attach_timeout: Duration,
    /// How long stop_trace waits after SIGTERM before SIGKILL.
    pub stop_timeout: Duration,
    pub reap_interval: Duration,
}

impl TraceSettings {
    pub fn new(log_dir: impl Into<PathBuf>, tracer: TracerCommand) -> Self {
        TraceSettings {
            log_dir: log_dir.into(),
            tracer,
            syscalls: DEFAULT_SYSCALLS.iter().map(|s| s.to_string()).collect(),
            follow_forks: true,
            enabled: tracing_enabled_from_env(),
            attach_timeout: Duration::from_secs(5),
            stop_timeout: Duration::from_secs(5),
            reap_interval: Duration::from_millis(500),
        }
    }

    pub fn tracer_args(&self, log_path: &Path, pid: u32) -> Vec<OsString> {
        let mut args = self.tracer.leading_args.clone();
        if self.follow_forks {
            args.push("-f".into());
        }
        args.push("-ttt".into());
        args.push("-e".into());
        args.push(format!("trace={}", self.syscalls.join(",")).into());
        args.push("-o".into());
        args.push(log_path.into());
        args.push("-p".into());
        args.push(pid.to_string().into());
        args
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Active,
    Ended,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSession {
    pub target_pid: u32,
    pub tracer_pid: u32,
    pub log_path: PathBuf,
    /// Working directory of the target when tracing began.
    pub cwd: PathBuf,
    pub started_at: DateTime<Utc>,
    pub status: SessionStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub log_path: PathBuf,
    pub line_count: u64,
    pub duration_s: f64,
}

struct SessionRecord {
    session: TraceSession,
    child: Option<Child>,
    started: Instant,
    stderr_tail: Arc<Mutex<String>>,
    summary: Option<TraceSummary>,
}

impl SessionRecord {
    fn finalize(&mut self, status: SessionStatus) -> TraceSummary {
        self.session.status = status;
        self.child = None;
        let summary = TraceSummary {
            log_path: self.session.log_path.clone(),
            line_count: count_lines(&self.session.log_path),
            duration_s: self.started.elapsed().as_secs_f64(),
        };
        self.summary = Some(summary.clone());
        summary
    }
}

fn count_lines(path: &Path) -> u64 {
    let Ok(file) = fs::File::open(path) else {
        return 0;
    };
    let mut reader = BufReader::new(file);
    let mut buf = Vec::new();
    let mut n = 0;
    while reader.read_until(b'\n', &mut buf).map(|r| r > 0).unwrap_or(false) {
        n += 1;
        buf.clear();
    }
    n
}

fn sanitize_label(label: &str) -> String {
    label
        .chars()
        .filter(|c| c.is_ascii_alphanumeric() || *c == '-' || *c == '_')
        .take(32)
        .collect()
}

/// Owner of every trace session. All mutation goes through one lock, so two
/// active sessions for the same pid cannot coexist.
pub struct TraceRegistry {
    settings: TraceSettings,
    sessions: Mutex<Vec<SessionRecord>>,
}

impl TraceRegistry {
    pub fn new(settings: TraceSettings) -> Self {
        TraceRegistry {
            settings,
            sessions: Mutex::new(Vec::new()),
        }
    }

    pub fn settings(&self) -> &TraceSettings {
        &self.settings
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Vec<SessionRecord>> {
        self.sessions.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn create_log(&self, pid: u32, label: Option<&str>, started_at: DateTime<Utc>) -> Result<PathBuf, TraceError> {
        let label = label.map(sanitize_label).filter(|l| !l.is_empty());
        let stem = match &label {
            Some(l) => format!("trace-p{pid}-{}-{l}", started_at.timestamp()),
            None => format!("trace-p{pid}-{}", started_at.timestamp()),
        };
        for n in 0.. {
            let name = if n == 0 {
                format!("{stem}.log")
            } else {
                format!("{stem}.{n}.log")
            };
            let path = self.settings.log_dir.join(name);
            match OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(_) => return Ok(path),
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(TraceError::io(format!("cannot create {}", path.display()), e)),
            }
        }
        unreachable!("unbounded search always returns")
    }

    pub fn start_trace(&self, pid: u32, label: Option<&str>) -> Result<TraceSession, TraceError> {
        if !self.settings.enabled {
            return Err(TraceError::TracingDisabled);
        }
        if pid == 0 || !procfs::process_exists(pid) || procfs::is_dead(pid) {
            return Err(TraceError::NoSuchProcess(pid));
        }
        let mut sessions = self.lock();
        if sessions
            .iter()
            .any(|r| r.session.target_pid == pid && r.session.status == SessionStatus::Active)
        {
            return Err(TraceError::AlreadyTraced(pid));
        }
        if let Some(other) = procfs::tracer_pid(pid).filter(|t| *t != 0) {
            return Err(TraceError::PermissionDenied(format!(
                "process {pid} is already being traced by pid {other}"
            )));
        }
        let cwd = procfs::cwd(pid).map_err(|e| match e.raw_os_error() {
            Some(libc::ENOENT) | Some(libc::ESRCH) => TraceError::NoSuchProcess(pid),
            _ => TraceError::PermissionDenied(format!("cannot read working directory of {pid}: {e}")),
        })?;
        let started_at = Utc::now();
        let log_path = self.create_log(pid, label, started_at)?;

        let mut child = Command::new(&self.settings.tracer.program)
            .args(self.settings.tracer_args(&log_path, pid))
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| {
                TraceError::TracerFailed(format!(
                    "cannot run tracer {}: {e}",
                    self.settings.tracer.program.display()
                ))
            })?;
        let stderr_tail = Arc::new(Mutex::new(String::new()));
        if let Some(mut stderr) = child.stderr.take() {
            let tail = Arc::clone(&stderr_tail);
            thread::spawn(move || {
                let mut buf = [0u8; 4096];
                while let Ok(n) = stderr.read(&mut buf) {
                    if n == 0 {
                        break;
                    }
                    let mut t = tail.lock().unwrap_or_else(|p| p.into_inner());
                    t.push_str(&String::from_utf8_lossy(&buf[..n]));
                    if t.len() > 8192 {
                        let cut = t.len() - 4096;
                        let cut = (cut..t.len()).find(|i| t.is_char_boundary(*i)).unwrap_or(t.len());
                        t.drain(..cut);
                    }
                }
            });
        }
        let tracer_pid = child.id();

        let deadline = Instant::now() + self.settings.attach_timeout;
        loop {
            if procfs::tracer_pid(pid) == Some(tracer_pid) {
                break;
            }
            if let Ok(Some(status)) = child.try_wait() {
                // give the stderr reader a moment to catch the message
                thread::sleep(Duration::from_millis(20));
                let msg = stderr_tail.lock().map(|s| s.trim().to_string()).unwrap_or_default();
                let _ = fs::remove_file(&log_path);
                return Err(classify_attach_failure(pid, status, msg));
            }
            if procfs::is_dead(pid) {
                // target finished before the attach could be observed
                break;
            }
            if Instant::now() >= deadline {
                let _ = child.kill();
                let _ = child.wait();
                let _ = fs::remove_file(&log_path);
                return Err(TraceError::TracerFailed(format!(
                    "tracer did not attach to {pid} within {:?}",
                    self.settings.attach_timeout
                )));
            }
            thread::sleep(Duration::from_millis(2));
        }

        let session = TraceSession {
            target_pid: pid,
            tracer_pid,
            log_path,
            cwd,
            started_at,
            status: SessionStatus::Active,
        };
        log::info!("tracing pid {pid} into {}", session.log_path.display());
        sessions.push(SessionRecord {
            session: session.clone(),
            child: Some(child),
            started: Instant::now(),
            stderr_tail,
            summary: None,
        });
        Ok(session)
    }

    /// Ends the latest session for `pid`. Calling it again returns the same
    /// summary.
    pub fn stop_trace(&self, pid: u32) -> Result<TraceSummary, TraceError> {
        let mut sessions = self.lock();
        let record = sessions
            .iter_mut()
            .rev()
            .find(|r| r.session.target_pid == pid)
            .ok_or(TraceError::UnknownPid(pid))?;
        if let Some(summary) = &record.summary {
            return Ok(summary.clone());
        }
        let status = match record.child.as_mut() {
            Some(child) => terminate(child, self.settings.stop_timeout),
            None => None,
        };
        let final_status = match status {
            Some(s) if killed_externally(&s) => SessionStatus::Failed,
            _ => SessionStatus::Ended,
        };
        Ok(record.finalize(final_status))
    }

    /// Marks sessions whose tracer has exited. A tracer that died by a signal
    /// we did not send, or that exited while its target lives on, is a failure.
    pub fn reap_sessions(&self) -> Vec<TraceSession> {
        let mut sessions = self.lock();
        let mut changed = Vec::new();
        for record in sessions.iter_mut() {
            let Some(child) = record.child.as_mut() else {
                continue;
            };
            let Ok(Some(status)) = child.try_wait() else {
                continue;
            };
            let target_gone = procfs::is_dead(record.session.target_pid);
            let status = if status.success() && target_gone {
                SessionStatus::Ended
            } else {
                let tail = record.stderr_tail.lock().map(|s| s.clone()).unwrap_or_default();
                log::warn!(
                    "tracer for pid {} exited with {status}: {}",
                    record.session.target_pid,
                    tail.trim()
                );
                SessionStatus::Failed
            };
            record.finalize(status);
            changed.push(record.session.clone());
        }
        changed
    }

    pub fn sessions(&self) -> Vec<TraceSession> {
        self.lock().iter().map(|r| r.session.clone()).collect()
    }

    pub fn session(&self, pid: u32) -> Option<TraceSession> {
        self.lock()
            .iter()
            .rev()
            .find(|r| r.session.target_pid == pid)
            .map(|r| r.session.clone())
    }

    /// Stops every active tracer; used on service shutdown.
    pub fn shutdown(&self) {
        let mut sessions = self.lock();
        for record in sessions.iter_mut().filter(|r| r.child.is_some()) {
            if let Some(child) = record.child.as_mut() {
                terminate(child, self.settings.stop_timeout);
            }
            record.finalize(SessionStatus::Ended);
        }
    }
}

impl Drop for TraceRegistry {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn killed_externally(status: &ExitStatus) -> bool {
    use std::os::unix::process::ExitStatusExt;
    matches!(status.signal(), Some(sig) if sig != libc::SIGTERM)
}

/// SIGTERM, then SIGKILL after `grace`. Returns how the tracer ended, or
/// None if it had already been reaped.
fn terminate(child: &mut Child, grace: Duration) -> Option<ExitStatus> {
    if let Ok(Some(status)) = child.try_wait() {
        return Some(status);
    }
    if let Ok(raw) = libc::pid_t::try_from(child.id()) {
        // SAFETY: the child has not been reaped, so its pid is still ours.
        unsafe { libc::kill(raw, libc::SIGTERM) };
    }
    let deadline = Instant::now() + grace;
    while Instant::now() < deadline {
        match child.try_wait() {
            Ok(Some(status)) => return Some(status),
            Ok(None) => thread::sleep(Duration::from_millis(5)),
            Err(_) => return None,
        }
    }
    let _ = child.kill();
    child.wait().ok()
}

fn classify_attach_failure(pid: u32, status: ExitStatus, stderr: String) -> TraceError {
    if stderr.contains("Operation not permitted") || stderr.contains("EPERM") {
        TraceError::PermissionDenied(stderr)
    } else if stderr.contains("No such process") || !procfs::process_exists(pid) {
        TraceError::NoSuchProcess(pid)
    } else {
        TraceError::TracerFailed(format!("tracer exited with {status}: {stderr}"))
    }
}

use std::fs;
use std::io::{BufRead, BufReader, ErrorKind, Write};
use std::os::unix::fs::PermissionsExt;
use std::os::unix::net::{UnixListener, UnixStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use super::protocol::{OkBody, TraceAction, TraceRequest, TraceResponse};
use super::session::{TraceRegistry, TraceSettings};
use super::{procfs, TraceError};

/// Answers one request against the registry.
pub fn handle_request(registry: &TraceRegistry, line: &str) -> TraceResponse {
    let request: TraceRequest = match serde_json::from_str(line) {
        Ok(r) => r,
        Err(e) => return TraceResponse::error("bad_request", format!("bad request: {e}")),
    };
    let pid = match request.valid_pid() {
        Ok(p) => p,
        Err(msg) => return TraceResponse::error("bad_request", format!("bad request: {msg}")),
    };
    let result = match (&request.action, pid) {
        (TraceAction::StartTrace, Some(pid)) => registry.start_trace(pid, request.label.as_deref()).map(|s| OkBody {
            log_path: Some(s.log_path),
            cwd: Some(s.cwd),
            tracer_pid: Some(s.tracer_pid),
            ..Default::default()
        }),
        (TraceAction::StopTrace, Some(pid)) => registry.stop_trace(pid).map(|s| OkBody {
            log_path: Some(s.log_path),
            line_count: Some(s.line_count),
            duration_s: Some(s.duration_s),
            ..Default::default()
        }),
        (TraceAction::Status, pid) => {
            let sessions = match pid {
                Some(p) => registry.session(p).into_iter().collect(),
                None => registry.sessions(),
            };
            Ok(OkBody {
                sessions: Some(sessions),
                ..Default::default()
            })
        }
        (_, None) => Err(TraceError::BadRequest("pid is required".into())),
    };
    match result {
        Ok(body) => TraceResponse::Ok(body),
        Err(e) => TraceResponse::error(e.code(), e.to_string()),
    }
}

fn serve_connection(registry: Arc<TraceRegistry>, stream: UnixStream) {
    let Ok(mut writer) = stream.try_clone() else {
        return;
    };
    let reader = BufReader::new(stream);
    for line in reader.lines() {
        let Ok(line) = line else {
            break;
        };
        if line.trim().is_empty() {
            continue;
        }
        let response = handle_request(&registry, &line);
        if writer.write_all(response.to_line().as_bytes()).is_err() {
            break;
        }
    }
}

/// Binds the socket, refusing to steal one that a live service answers on.
pub fn bind_socket(socket_path: &Path) -> Result<UnixListener, TraceError> {
    if socket_path.exists() {
        if UnixStream::connect(socket_path).is_ok() {
            return Err(TraceError::AlreadyBound(socket_path.to_path_buf()));
        }
        fs::remove_file(socket_path)
            .map_err(|e| TraceError::io(format!("cannot remove stale socket {}", socket_path.display()), e))?;
    }
    let listener = UnixListener::bind(socket_path).map_err(|e| {
        if e.kind() == ErrorKind::AddrInUse {
            TraceError::AlreadyBound(socket_path.to_path_buf())
        } else {
            TraceError::io(format!("cannot bind {}", socket_path.display()), e)
        }
    })?;
    // any local user may register a process; only the service writes logs
    fs::set_permissions(socket_path, fs::Permissions::from_mode(0o666))
        .map_err(|e| TraceError::io(format!("cannot chmod {}", socket_path.display()), e))?;
    Ok(listener)
}

pub struct ServeOptions {
    /// Refuse to start without root or CAP_SYS_PTRACE.
    pub require_privilege: bool,
}

impl Default for ServeOptions {
    fn default() -> Self {
        ServeOptions {
            require_privilege: true,
        }
    }
}

/// A running service; dropping it does not stop it, call `shutdown`.
pub struct ServiceHandle {
    shutdown: Arc<AtomicBool>,
    thread: Option<thread::JoinHandle<Result<(), TraceError>>>,
    pub registry: Arc<TraceRegistry>,
    pub socket_path: PathBuf,
}

impl ServiceHandle {
    pub fn shutdown(mut self) -> Result<(), TraceError> {
        self.shutdown.store(true, Ordering::SeqCst);
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(TraceError::Internal("service thread panicked".into()))),
            None => Ok(()),
        }
    }
}

fn preflight(socket_path: &Path, settings: &TraceSettings, opts: &ServeOptions) -> Result<UnixListener, TraceError> {
    if opts.require_privilege && !procfs::has_tracing_privilege() {
        return Err(TraceError::InsufficientPrivilege(
            "the trace service needs root or CAP_SYS_PTRACE; run it with sudo or grant the capability \
             (setcap cap_sys_ptrace+ep <statecap binary>)"
                .into(),
        ));
    }
    if !settings.log_dir.is_dir() {
        return Err(TraceError::io(
            format!("log directory {} does not exist", settings.log_dir.display()),
            std::io::Error::from(ErrorKind::NotFound),
        ));
    }
    bind_socket(socket_path)
}

/// Runs the service until `shutdown` becomes true, then stops every tracer
/// and removes the socket.
pub fn serve(
    socket_path: &Path,
    settings: TraceSettings,
    opts: &ServeOptions,
    shutdown: Arc<AtomicBool>,
) -> Result<(), TraceError> {
    let listener = preflight(socket_path, &settings, opts)?;
    run_loop(listener, socket_path, Arc::new(TraceRegistry::new(settings)), shutdown)
}

/// Starts the service on a background thread.
pub fn spawn(socket_path: &Path, settings: TraceSettings, opts: &ServeOptions) -> Result<ServiceHandle, TraceError> {
    let listener = preflight(socket_path, &settings, opts)?;
    let registry = Arc::new(TraceRegistry::new(settings));
    let shutdown = Arc::new(AtomicBool::new(false));
    let thread = {
        let registry = Arc::clone(&registry);
        let shutdown = Arc::clone(&shutdown);
        let path = socket_path.to_path_buf();
        thread::spawn(move || run_loop(listener, &path, registry, shutdown))
    };
    Ok(ServiceHandle {
        shutdown,
        thread: Some(thread),
        registry,
        socket_path: socket_path.to_path_buf(),
    })
}

fn run_loop(
    listener: UnixListener,
    socket_path: &Path,
    registry: Arc<TraceRegistry>,
    shutdown: Arc<AtomicBool>,
) -> Result<(), TraceError> {
    listener
        .set_nonblocking(true)
        .map_err(|e| TraceError::io("cannot configure socket", e))?;
    log::info!("trace service listening on {}", socket_path.display());
    let reap_every = registry.settings().reap_interval;
    let mut last_reap = Instant::now();
    while !shutdown.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                let _ = stream.set_nonblocking(false);
                let registry = Arc::clone(&registry);
                thread::spawn(move || serve_connection(registry, stream));
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(20)),
            Err(e) => log::warn!("accept failed: {e}"),
        }
        if last_reap.elapsed() >= reap_every {
            for s in registry.reap_sessions() {
                log::info!("session for pid {} is now {:?}", s.target_pid, s.status);
            }
            last_reap = Instant::now();
        }
    }
    registry.shutdown();
    let _ = fs::remove_file(socket_path);
    Ok(())
}

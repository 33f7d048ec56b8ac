//! The tracing service: a local-socket daemon that attaches a syscall tracer
//! to registered processes and keeps one log file per process.

mod client;
pub mod procfs;
mod protocol;
pub mod ptrace;
mod server;
mod session;

use std::env;
use std::io;
use std::path::PathBuf;
use std::sync::Arc;

pub use client::TraceClient;
pub use protocol::{OkBody, TraceAction, TraceRequest, TraceResponse};
pub use server::{bind_socket, handle_request, serve, spawn, ServeOptions, ServiceHandle};
pub use session::{
    find_in_path, tracing_enabled_from_env, SessionStatus, TraceRegistry, TraceSession, TraceSettings, TraceSummary,
    TracerCommand, DEFAULT_SYSCALLS,
};

pub const DEFAULT_SOCKET: &str = "/run/statecap/trace.sock";
pub const DEFAULT_LOG_DIR: &str = "/var/lib/statecap";

/// `STATECAP_SOCKET`, or the default socket path.
pub fn socket_path_from_env() -> PathBuf {
    env::var_os("STATECAP_SOCKET")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_SOCKET))
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("no such process: {0}")]
    NoSuchProcess(u32),
    #[error("process {0} is already traced")]
    AlreadyTraced(u32),
    #[error("attach permission denied: {0}")]
    PermissionDenied(String),
    #[error("no trace session for pid {0}")]
    UnknownPid(u32),
    #[error("tracing is disabled (ENABLE_TRACE=false)")]
    TracingDisabled,
    #[error("tracer failed: {0}")]
    TracerFailed(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("socket {0} is already bound by a running service")]
    AlreadyBound(PathBuf),
    #[error("insufficient privilege: {0}")]
    InsufficientPrivilege(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("{0}")]
    Internal(String),
    /// An error code this client does not know, passed through.
    #[error("{code}: {message}")]
    Service { code: String, message: String },
}

impl TraceError {
    pub fn io(context: impl Into<String>, source: io::Error) -> Self {
        TraceError::Io {
            context: context.into(),
            source,
        }
    }

    pub fn code(&self) -> &str {
        match self {
            TraceError::NoSuchProcess(_) => "no_such_process",
            TraceError::AlreadyTraced(_) => "already_traced",
            TraceError::PermissionDenied(_) => "permission_denied",
            TraceError::UnknownPid(_) => "unknown_pid",
            TraceError::TracingDisabled => "tracing_disabled",
            TraceError::TracerFailed(_) => "tracer_failed",
            TraceError::BadRequest(_) => "bad_request",
            TraceError::AlreadyBound(_) => "already_bound",
            TraceError::InsufficientPrivilege(_) => "insufficient_privilege",
            TraceError::Io { .. } => "io",
            TraceError::Protocol(_) => "protocol",
            TraceError::Internal(_) => "internal",
            TraceError::Service { code, .. } => code,
        }
    }

    /// Rebuilds an error from a service response.
    pub fn from_code(code: &str, message: String) -> Self {
        let pid_in = |m: &str| m.rsplit(|c: char| !c.is_ascii_digit()).find(|s| !s.is_empty()).and_then(|s| s.parse().ok());
        match code {
            "no_such_process" => pid_in(&message).map_or(TraceError::Service { code: code.into(), message: message.clone() }, TraceError::NoSuchProcess),
            "unknown_pid" => pid_in(&message).map_or(TraceError::Service { code: code.into(), message: message.clone() }, TraceError::UnknownPid),
            "already_traced" => pid_in(&message).map_or(TraceError::Service { code: code.into(), message: message.clone() }, TraceError::AlreadyTraced),
            "permission_denied" => TraceError::PermissionDenied(message),
            "tracing_disabled" => TraceError::TracingDisabled,
            "tracer_failed" => TraceError::TracerFailed(message),
            "bad_request" => TraceError::BadRequest(message),
            _ => TraceError::Service {
                code: code.to_string(),
                message,
            },
        }
    }
}

/// What a caller needs to know about a trace that just started.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StartedTrace {
    pub log_path: PathBuf,
    pub cwd: PathBuf,
}

/// Anything that can start and stop tracing a pid: the socket client, or a
/// registry in this process.
pub trait TraceControl {
    fn start(&mut self, pid: u32, label: Option<&str>) -> Result<StartedTrace, TraceError>;
    fn stop(&mut self, pid: u32) -> Result<TraceSummary, TraceError>;
}

impl TraceControl for Arc<TraceRegistry> {
    fn start(&mut self, pid: u32, label: Option<&str>) -> Result<StartedTrace, TraceError> {
        self.start_trace(pid, label).map(|s| StartedTrace {
            log_path: s.log_path,
            cwd: s.cwd,
        })
    }

    fn stop(&mut self, pid: u32) -> Result<TraceSummary, TraceError> {
        self.stop_trace(pid)
    }
}

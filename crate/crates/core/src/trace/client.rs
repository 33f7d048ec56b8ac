use std::io::{BufRead, BufReader, Write};
use std::os::unix::net::UnixStream;
use std::path::{Path, PathBuf};
use std::time::Duration;

use super::protocol::{OkBody, TraceRequest, TraceResponse};
use super::session::{TraceSession, TraceSummary};
use super::{StartedTrace, TraceControl, TraceError};

/// Client side of the service socket. One connection serves many requests.
pub struct TraceClient {
    reader: BufReader<UnixStream>,
    writer: UnixStream,
}

impl TraceClient {
    pub fn connect(socket_path: &Path) -> Result<Self, TraceError> {
        let stream = UnixStream::connect(socket_path).map_err(|e| {
            TraceError::io(format!("cannot reach trace service at {}", socket_path.display()), e)
        })?;
        // a wedged service must not hang the caller forever
        let _ = stream.set_read_timeout(Some(Duration::from_secs(30)));
        let writer = stream
            .try_clone()
            .map_err(|e| TraceError::io("cannot clone socket", e))?;
        Ok(TraceClient {
            reader: BufReader::new(stream),
            writer,
        })
    }

    /// Sends one raw line and reads one response line.
    pub fn send_line(&mut self, line: &str) -> Result<TraceResponse, TraceError> {
        let mut out = line.trim_end().to_string();
        out.push('\n');
        self.writer
            .write_all(out.as_bytes())
            .map_err(|e| TraceError::io("cannot send request", e))?;
        let mut resp = String::new();
        let n = self
            .reader
            .read_line(&mut resp)
            .map_err(|e| TraceError::io("cannot read response", e))?;
        if n == 0 {
            return Err(TraceError::Protocol("service closed the connection".into()));
        }
        serde_json::from_str(resp.trim()).map_err(|e| TraceError::Protocol(format!("bad response {resp:?}: {e}")))
    }

    pub fn request(&mut self, request: &TraceRequest) -> Result<OkBody, TraceError> {
        let line = serde_json::to_string(request).expect("request serializes");
        match self.send_line(&line)? {
            TraceResponse::Ok(body) => Ok(body),
            TraceResponse::Error { code, message } => Err(TraceError::from_code(&code, message)),
        }
    }

    pub fn start_trace(&mut self, pid: u32, label: Option<&str>) -> Result<StartedTrace, TraceError> {
        let body = self.request(&TraceRequest::start(pid, label))?;
        Ok(StartedTrace {
            log_path: body
                .log_path
                .ok_or_else(|| TraceError::Protocol("start_trace response lacks log_path".into()))?,
            cwd: body.cwd.unwrap_or_else(|| PathBuf::from("/")),
        })
    }

    pub fn stop_trace(&mut self, pid: u32) -> Result<TraceSummary, TraceError> {
        let body = self.request(&TraceRequest::stop(pid))?;
        Ok(TraceSummary {
            log_path: body
                .log_path
                .ok_or_else(|| TraceError::Protocol("stop_trace response lacks log_path".into()))?,
            line_count: body.line_count.unwrap_or(0),
            duration_s: body.duration_s.unwrap_or(0.0),
        })
    }

    pub fn status(&mut self, pid: Option<u32>) -> Result<Vec<TraceSession>, TraceError> {
        Ok(self.request(&TraceRequest::status(pid))?.sessions.unwrap_or_default())
    }
}

impl TraceControl for TraceClient {
    fn start(&mut self, pid: u32, label: Option<&str>) -> Result<StartedTrace, TraceError> {
        self.start_trace(pid, label)
    }

    fn stop(&mut self, pid: u32) -> Result<TraceSummary, TraceError> {
        self.stop_trace(pid)
    }
}

//! Newline-delimited JSON messages exchanged over the service socket.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::session::TraceSession;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceAction {
    StartTrace,
    StopTrace,
    Status,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRequest {
    pub action: TraceAction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pid: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl TraceRequest {
    pub fn start(pid: u32, label: Option<&str>) -> Self {
        TraceRequest {
            action: TraceAction::StartTrace,
            pid: Some(i64::from(pid)),
            label: label.map(str::to_string),
        }
    }

    pub fn stop(pid: u32) -> Self {
        TraceRequest {
            action: TraceAction::StopTrace,
            pid: Some(i64::from(pid)),
            label: None,
        }
    }

    pub fn status(pid: Option<u32>) -> Self {
        TraceRequest {
            action: TraceAction::Status,
            pid: pid.map(i64::from),
            label: None,
        }
    }

    /// The pid as a positive process id, if present and valid.
    pub fn valid_pid(&self) -> Result<Option<u32>, String> {
        match self.pid {
            None => Ok(None),
            Some(p) if p > 0 => u32::try_from(p).map(Some).map_err(|_| format!("pid {p} out of range")),
            Some(p) => Err(format!("pid must be positive, got {p}")),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OkBody {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cwd: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tracer_pid: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line_count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sessions: Option<Vec<TraceSession>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TraceResponse {
    Ok(OkBody),
    Error { code: String, message: String },
}

impl TraceResponse {
    pub fn error(code: &str, message: impl Into<String>) -> Self {
        TraceResponse::Error {
            code: code.to_string(),
            message: message.into(),
        }
    }

    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("response serializes");
        s.push('\n');
        s
    }
}

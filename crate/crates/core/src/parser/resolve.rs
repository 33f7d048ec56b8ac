use serde::{Deserialize, Serialize};

use super::line::{DirFd, SyscallEvent};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    Path(String),
    Unresolved(String),
}

/// An event paired with the absolute path it touched.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolvedAccess {
    pub event: SyscallEvent,
    pub absolute_path: Resolution,
}

impl ResolvedAccess {
    pub fn path(&self) -> Option<&str> {
        match &self.absolute_path {
            Resolution::Path(p) => Some(p),
            Resolution::Unresolved(_) => None,
        }
    }
}

/// Lexically normalises an absolute path: collapses repeated separators and
/// removes `.` and `..` segments (`..` at the root stays at the root).
/// Returns None for relative input.
pub fn normalize_absolute(path: &str) -> Option<String> {
    if !path.starts_with('/') {
        return None;
    }
    let mut parts: Vec<&str> = Vec::new();
    for seg in path.split('/') {
        match seg {
            "" | "." => {}
            ".." => {
                parts.pop();
            }
            s => parts.push(s),
        }
    }
    Some(format!("/{}", parts.join("/")))
}

fn join(base: &str, rel: &str) -> Option<String> {
    normalize_absolute(&format!("{}/{}", base.trim_end_matches('/'), rel))
}

pub fn resolve_path(event: SyscallEvent, trace_cwd: &str) -> ResolvedAccess {
    let absolute_path = if event.truncated {
        Resolution::Unresolved("truncated".into())
    } else if event.non_utf8 {
        Resolution::Unresolved("non-utf8".into())
    } else if event.path.starts_with('/') {
        Resolution::Path(normalize_absolute(&event.path).expect("absolute"))
    } else {
        match &event.dirfd {
            DirFd::Cwd => join(trace_cwd, &event.path)
                .map(Resolution::Path)
                .unwrap_or_else(|| Resolution::Unresolved("cwd-not-absolute".into())),
            DirFd::DecodedPath(dir) => join(dir, &event.path)
                .map(Resolution::Path)
                .unwrap_or_else(|| Resolution::Unresolved("dirfd-not-absolute".into())),
            DirFd::Fd(_) => Resolution::Unresolved("dirfd-not-decoded".into()),
        }
    };
    ResolvedAccess {
        event,
        absolute_path,
    }
}

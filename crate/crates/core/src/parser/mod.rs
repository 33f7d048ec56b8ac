//! Tracer log parsing: line classification, unfinished/resumed stitching and
//! path resolution.

mod flags;
mod line;
mod resolve;
mod stitch;

use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};

pub use flags::{AccessModeError, OpenFlag, OpenFlags};
pub use line::{parse_line, DirFd, LineKind, RawTraceLine, SyscallEvent, SyscallResult, OPEN_FAMILY};
pub use resolve::{normalize_absolute, resolve_path, Resolution, ResolvedAccess};
pub use stitch::{stitch, StitchDiagnostics, Stitcher};

#[derive(Debug, thiserror::Error)]
#[error("cannot read trace log {path}: {source}")]
pub struct LogReadError {
    pub path: PathBuf,
    #[source]
    pub source: io::Error,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParsedLog {
    pub accesses: Vec<ResolvedAccess>,
    pub diagnostics: StitchDiagnostics,
    pub line_count: usize,
}

/// Parses a whole log from any reader. Invalid UTF-8 is replaced rather than
/// rejected; the tracer escapes path bytes so this only touches garbage lines.
pub fn parse_reader<R: BufRead>(mut reader: R, trace_cwd: &str) -> io::Result<ParsedLog> {
    let mut stitcher = Stitcher::new();
    let mut accesses = Vec::new();
    let mut buf = Vec::new();
    let mut line_count = 0;
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        line_count += 1;
        let text = String::from_utf8_lossy(&buf);
        if let Some(event) = stitcher.push(parse_line(&text)) {
            accesses.push(resolve_path(event, trace_cwd));
        }
    }
    Ok(ParsedLog {
        accesses,
        diagnostics: stitcher.finish(),
        line_count,
    })
}

pub fn parse_log_with_diagnostics(log_path: &Path, trace_cwd: &str) -> Result<ParsedLog, LogReadError> {
    let wrap = |source| LogReadError {
        path: log_path.to_path_buf(),
        source,
    };
    let file = File::open(log_path).map_err(wrap)?;
    parse_reader(BufReader::new(file), trace_cwd).map_err(wrap)
}

/// Reads a tracer log and returns every open-family access it records,
/// resolved against the traced process's working directory.
pub fn parse_log(log_path: &Path, trace_cwd: &str) -> Result<Vec<ResolvedAccess>, LogReadError> {
    parse_log_with_diagnostics(log_path, trace_cwd).map(|p| p.accesses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn empty_file_yields_nothing() {
        let f = tempfile::NamedTempFile::new().unwrap();
        assert!(parse_log(f.path(), "/").unwrap().is_empty());
    }

    #[test]
    fn missing_file_names_path() {
        let err = parse_log(Path::new("/definitely/not/here.log"), "/").unwrap_err();
        assert!(err.to_string().contains("/definitely/not/here.log"));
    }

    #[test]
    fn deterministic() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "1 1.0 openat(AT_FDCWD, \"a\", O_RDONLY) = 3").unwrap();
        writeln!(f, "1 1.1 openat(AT_FDCWD, \"/b\", O_WRONLY|O_CREAT, 0644 <unfinished ...>").unwrap();
        writeln!(f, "2 1.1 +++ exited with 0 +++").unwrap();
        writeln!(f, "1 1.2 <... openat resumed>) = 4").unwrap();
        let a = parse_log(f.path(), "/w").unwrap();
        let b = parse_log(f.path(), "/w").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
        assert_eq!(a[0].path(), Some("/w/a"));
    }
}

//! Classification of single tracer log lines.
//!
//! The pinned log format is the text output of `strace -f -ttt`:
//!
//! ```text
//! 1234  1669900000.123456 openat(AT_FDCWD, "/tmp/a.txt", O_WRONLY|O_CREAT|O_TRUNC, 0666) = 3
//! 1234  1669900000.123500 openat(AT_FDCWD, "/d/x.csv", O_RDONLY <unfinished ...>
//! 1234  1669900000.123900 <... openat resumed>) = 4
//! 1234  1669900000.300000 +++ exited with 0 +++
//! ```

use serde::{Deserialize, Serialize};

use super::flags::OpenFlags;

const UNFINISHED_MARKER: &str = "<unfinished ...>";
const RESUMED_OPEN: &str = "<... ";
const RESUMED_CLOSE: &str = " resumed>";

/// Syscalls the tracer is asked to record.
pub const OPEN_FAMILY: &[&str] = &["openat", "open", "openat2", "creat"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineKind {
    Complete,
    Unfinished,
    Resumed,
    Exit,
    Signal,
    Other,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirFd {
    Cwd,
    Fd(i32),
    /// `3</home/u/nb>` as printed with fd decoding turned on.
    DecodedPath(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyscallResult {
    Ok(u32),
    Err(String),
}

impl SyscallResult {
    pub fn is_ok(&self) -> bool {
        matches!(self, SyscallResult::Ok(_))
    }
}

/// One parsed open-family invocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyscallEvent {
    pub pid: u32,
    pub timestamp_s: f64,
    pub syscall: String,
    pub dirfd: DirFd,
    /// The path argument after unescaping.
    pub path: String,
    /// The tracer cut the string short (`"..."...`).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub truncated: bool,
    /// The path bytes were not UTF-8; `path` holds the escaped form.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub non_utf8: bool,
    pub flags: OpenFlags,
    pub result: SyscallResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawTraceLine {
    pub kind: LineKind,
    /// 0 when the line has no pid column.
    pub pid: u32,
    pub timestamp_s: Option<f64>,
    /// Syscall name for Complete/Unfinished/Resumed lines.
    pub syscall: Option<String>,
    /// Text after the pid/timestamp columns. For Unfinished lines the marker
    /// is stripped; for Resumed lines only the text after `resumed>` is kept.
    pub payload: String,
    /// Present exactly when `kind` is Complete.
    pub event: Option<SyscallEvent>,
}

impl RawTraceLine {
    fn new(kind: LineKind, pid: u32, timestamp_s: Option<f64>, payload: &str) -> Self {
        RawTraceLine {
            kind,
            pid,
            timestamp_s,
            syscall: None,
            payload: payload.to_string(),
            event: None,
        }
    }
}

/// Classifies one log line. Never fails: anything unrecognised is `Other`.
pub fn parse_line(line: &str) -> RawTraceLine {
    let line = line.trim_end_matches(['\n', '\r']);
    let (pid, rest) = split_pid(line);
    let (timestamp_s, body) = split_timestamp(rest);
    let body = body.trim();

    if body.starts_with("+++ ") && body.ends_with(" +++") {
        return RawTraceLine::new(LineKind::Exit, pid, timestamp_s, body);
    }
    if body.starts_with("--- ") && body.ends_with(" ---") {
        return RawTraceLine::new(LineKind::Signal, pid, timestamp_s, body);
    }
    if let Some(after) = body.strip_prefix(RESUMED_OPEN) {
        if let Some(idx) = after.find(RESUMED_CLOSE) {
            let name = &after[..idx];
            if is_ident(name) {
                let mut raw = RawTraceLine::new(
                    LineKind::Resumed,
                    pid,
                    timestamp_s,
                    &after[idx + RESUMED_CLOSE.len()..],
                );
                raw.syscall = Some(name.to_string());
                return raw;
            }
        }
    }
    if let Some(head) = body.strip_suffix(UNFINISHED_MARKER) {
        if let Some(name) = syscall_name(head) {
            let mut raw = RawTraceLine::new(LineKind::Unfinished, pid, timestamp_s, head.trim_end());
            raw.syscall = Some(name.to_string());
            return raw;
        }
    }
    if let Some(name) = syscall_name(body) {
        let mut raw = RawTraceLine::new(LineKind::Other, pid, timestamp_s, body);
        raw.syscall = Some(name.to_string());
        if let Some(event) = parse_call(pid, timestamp_s.unwrap_or(0.0), body) {
            raw.kind = LineKind::Complete;
            raw.event = Some(event);
        }
        return raw;
    }
    RawTraceLine::new(LineKind::Other, pid, timestamp_s, body)
}

/// Accepts both `1234  rest` (file output with -f) and `[pid  1234] rest`.
fn split_pid(line: &str) -> (u32, &str) {
    if let Some(after) = line.strip_prefix("[pid") {
        if let Some(end) = after.find(']') {
            if let Ok(pid) = after[..end].trim().parse() {
                return (pid, &after[end + 1..]);
            }
        }
        return (0, line);
    }
    let digits = line.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 {
        return (0, line);
    }
    // a bare `1669900000.123 ...` is a timestamp, not a pid
    match line.as_bytes().get(digits) {
        Some(b' ') | Some(b'\t') => match line[..digits].parse() {
            Ok(pid) => (pid, &line[digits..]),
            Err(_) => (0, line),
        },
        _ => (0, line),
    }
}

fn split_timestamp(rest: &str) -> (Option<f64>, &str) {
    let trimmed = rest.trim_start();
    let end = trimmed
        .find(|c: char| !(c.is_ascii_digit() || c == '.'))
        .unwrap_or(trimmed.len());
    let token = &trimmed[..end];
    let followed_by_space = trimmed[end..].starts_with([' ', '\t']);
    if token.contains('.') && followed_by_space {
        if let Ok(ts) = token.parse::<f64>() {
            return (Some(ts), &trimmed[end..]);
        }
    }
    (None, trimmed)
}

fn is_ident(s: &str) -> bool {
    !s.is_empty()
        && s.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_')
        && !s.as_bytes()[0].is_ascii_digit()
}

fn syscall_name(body: &str) -> Option<&str> {
    let open = body.find('(')?;
    let name = &body[..open];
    is_ident(name).then_some(name)
}

/// Parses `name(args) = ret` for the open family. Returns None for any other
/// syscall or for text that does not have that shape.
pub(crate) fn parse_call(pid: u32, timestamp_s: f64, body: &str) -> Option<SyscallEvent> {
    let name = syscall_name(body)?;
    if !OPEN_FAMILY.contains(&name) {
        return None;
    }
    let args_start = name.len() + 1;
    let close = matching_paren(body, args_start)?;
    let args = split_args(&body[args_start..close]);
    let result = parse_result(&body[close + 1..])?;

    let (dirfd, path_arg, flags) = match (name, args.as_slice()) {
        ("openat", [dirfd, path, flags, ..]) => (parse_dirfd(dirfd)?, *path, flags.parse().ok()?),
        ("open", [path, flags, ..]) => (DirFd::Cwd, *path, flags.parse().ok()?),
        ("creat", [path, ..]) => (DirFd::Cwd, *path, "O_WRONLY|O_CREAT|O_TRUNC".parse().ok()?),
        ("openat2", [dirfd, path, how, ..]) => {
            (parse_dirfd(dirfd)?, *path, openat2_flags(how)?.parse().ok()?)
        }
        _ => return None,
    };
    let quoted = parse_quoted(path_arg)?;
    Some(SyscallEvent {
        pid,
        timestamp_s,
        syscall: name.to_string(),
        dirfd,
        path: quoted.text,
        truncated: quoted.truncated,
        non_utf8: quoted.non_utf8,
        flags,
        result,
    })
}

/// Index of the `)` closing the argument list that starts at `start`.
fn matching_paren(s: &str, start: usize) -> Option<usize> {
    let bytes = s.as_bytes();
    let mut depth = 0usize;
    let mut in_str = false;
    let mut i = start;
    while i < bytes.len() {
        let b = bytes[i];
        if in_str {
            match b {
                b'\\' => i += 1,
                b'"' => in_str = false,
                _ => {}
            }
        } else {
            match b {
                b'"' => in_str = true,
                b'(' | b'{' | b'[' => depth += 1,
                b')' if depth == 0 => return Some(i),
                b')' | b'}' | b']' => depth = depth.saturating_sub(1),
                _ => {}
            }
        }
        i += 1;
    }
    None
}

/// Splits a top-level comma separated argument list, respecting quotes,
/// braces and `fd<path>` decorations.
fn split_args(s: &str) -> Vec<&str> {
    let bytes = s.as_bytes();
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut in_str = false;
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if in_str {
            match b {
                b'\\' => i += 1,
                b'"' => in_str = false,
                _ => {}
            }
        } else {
            match b {
                b'"' => in_str = true,
                b'(' | b'{' | b'[' | b'<' => depth += 1,
                b')' | b'}' | b']' | b'>' => depth = depth.saturating_sub(1),
                b',' if depth == 0 => {
                    out.push(s[start..i].trim());
                    start = i + 1;
                }
                _ => {}
            }
        }
        i += 1;
    }
    let last = s[start..].trim();
    if !last.is_empty() || !out.is_empty() {
        out.push(last);
    }
    out
}

fn parse_dirfd(arg: &str) -> Option<DirFd> {
    let arg = arg.trim();
    if arg == "AT_FDCWD" || arg.starts_with("AT_FDCWD<") {
        return Some(DirFd::Cwd);
    }
    match arg.find('<') {
        Some(lt) if arg.ends_with('>') => {
            arg[..lt].parse::<i32>().ok()?;
            Some(DirFd::DecodedPath(arg[lt + 1..arg.len() - 1].to_string()))
        }
        Some(_) => None,
        None => arg.parse().ok().map(DirFd::Fd),
    }
}

/// Pulls `flags=...` out of openat2's `{flags=O_RDONLY|O_CLOEXEC, resolve=0}`.
fn openat2_flags(how: &str) -> Option<&str> {
    let inner = how.trim().strip_prefix('{')?.strip_suffix('}')?;
    split_args(inner)
        .into_iter()
        .find_map(|field| field.strip_prefix("flags="))
}

fn parse_result(tail: &str) -> Option<SyscallResult> {
    let rest = tail.trim_start().strip_prefix('=')?.trim_start();
    if rest.starts_with('?') {
        return Some(SyscallResult::Err("?".to_string()));
    }
    let num_end = rest
        .find(|c: char| !(c.is_ascii_digit() || c == '-'))
        .unwrap_or(rest.len());
    let value: i64 = rest[..num_end].parse().ok()?;
    if value >= 0 {
        return u32::try_from(value).ok().map(SyscallResult::Ok);
    }
    let errno = rest[num_end..]
        .split_whitespace()
        .next()
        .filter(|e| e.starts_with('E'))
        .unwrap_or("EUNKNOWN");
    Some(SyscallResult::Err(errno.to_string()))
}

pub(crate) struct Quoted {
    pub text: String,
    pub truncated: bool,
    pub non_utf8: bool,
}

/// Decodes a tracer string literal: `"a\"b\\c\303\251"` with an optional
/// `...` suffix marking truncation.
pub(crate) fn parse_quoted(arg: &str) -> Option<Quoted> {
    let arg = arg.trim();
    let inner_and_rest = arg.strip_prefix('"')?;
    let bytes = inner_and_rest.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    loop {
        let b = *bytes.get(i)?;
        match b {
            b'"' => break,
            b'\\' => {
                let esc = *bytes.get(i + 1)?;
                i += 2;
                match esc {
                    b'n' => out.push(b'\n'),
                    b't' => out.push(b'\t'),
                    b'r' => out.push(b'\r'),
                    b'v' => out.push(0x0b),
                    b'f' => out.push(0x0c),
                    b'x' => {
                        let hex = inner_and_rest.get(i..i + 2)?;
                        out.push(u8::from_str_radix(hex, 16).ok()?);
                        i += 2;
                    }
                    b'0'..=b'7' => {
                        let mut value = u32::from(esc - b'0');
                        let mut n = 1;
                        while n < 3 {
                            match bytes.get(i) {
                                Some(d @ b'0'..=b'7') => {
                                    value = value * 8 + u32::from(d - b'0');
                                    i += 1;
                                    n += 1;
                                }
                                _ => break,
                            }
                        }
                        out.push(u8::try_from(value).ok()?);
                    }
                    other => out.push(other),
                }
                continue;
            }
            other => out.push(other),
        }
        i += 1;
    }
    let truncated = inner_and_rest[i + 1..].starts_with("...");
    let (text, non_utf8) = match String::from_utf8(out) {
        Ok(s) => (s, false),
        Err(_) => (inner_and_rest[..i].to_string(), true),
    };
    Some(Quoted {
        text,
        truncated,
        non_utf8,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::flags::OpenFlag;

    #[test]
    fn complete_write_open() {
        let l = parse_line(
            r#"1234  1669900000.123456 openat(AT_FDCWD, "/tmp/a.txt", O_WRONLY|O_CREAT|O_TRUNC, 0666) = 3"#,
        );
        assert_eq!(l.kind, LineKind::Complete);
        assert_eq!(l.pid, 1234);
        let ev = l.event.unwrap();
        assert_eq!(ev.pid, 1234);
        assert_eq!(ev.path, "/tmp/a.txt");
        assert_eq!(ev.dirfd, DirFd::Cwd);
        assert!((ev.timestamp_s - 1669900000.123456).abs() < 1e-6);
        for f in [OpenFlag::WrOnly, OpenFlag::Creat, OpenFlag::Trunc] {
            assert!(ev.flags.contains(&f));
        }
        assert_eq!(ev.result, SyscallResult::Ok(3));
    }

    #[test]
    fn complete_failed_open() {
        let l = parse_line(
            r#"1234  1669900000.2 openat(AT_FDCWD, "/nope", O_RDONLY) = -1 ENOENT (No such file or directory)"#,
        );
        assert_eq!(l.kind, LineKind::Complete);
        assert_eq!(l.event.unwrap().result, SyscallResult::Err("ENOENT".into()));
    }

    #[test]
    fn exit_and_signal_lines() {
        assert_eq!(parse_line("1234  1669900000.3 +++ exited with 0 +++").kind, LineKind::Exit);
        assert_eq!(parse_line("1234  1669900000.3 +++ killed by SIGKILL +++").kind, LineKind::Exit);
        let s = parse_line(
            "1234  1669900000.3 --- SIGCHLD {si_signo=SIGCHLD, si_code=CLD_EXITED, si_pid=5, si_uid=0, si_status=0} ---",
        );
        assert_eq!(s.kind, LineKind::Signal);
        assert_eq!(s.pid, 1234);
    }

    #[test]
    fn unfinished_and_resumed() {
        let u = parse_line(r#"9     1669900000.5 openat(AT_FDCWD, "/d/x.csv", O_RDONLY <unfinished ...>"#);
        assert_eq!(u.kind, LineKind::Unfinished);
        assert_eq!(u.syscall.as_deref(), Some("openat"));
        assert_eq!(u.payload, r#"openat(AT_FDCWD, "/d/x.csv", O_RDONLY"#);
        let r = parse_line("9     1669900000.6 <... openat resumed>) = 4");
        assert_eq!(r.kind, LineKind::Resumed);
        assert_eq!(r.payload, ") = 4");
        assert_eq!(r.syscall.as_deref(), Some("openat"));
    }

    #[test]
    fn garbage_is_other() {
        for line in ["", "strace: Process 12 attached", "???", "1234", "1234  1.5 ???( <unfinished ...>"] {
            assert_eq!(parse_line(line).kind, LineKind::Other, "{line:?}");
        }
        // a non-open syscall is recognised but carries no event
        let l = parse_line("1  1.0 read(3, \"abc\", 3) = 3");
        assert_eq!(l.kind, LineKind::Other);
        assert!(l.event.is_none());
    }

    #[test]
    fn open_creat_openat2_forms() {
        let o = parse_line(r#"77 1.0 open("rel/p", O_RDWR|O_APPEND) = 5"#).event.unwrap();
        assert_eq!((o.dirfd, o.path.as_str()), (DirFd::Cwd, "rel/p"));
        let c = parse_line(r#"77 1.0 creat("/o.bin", 0644) = 6"#).event.unwrap();
        assert!(c.flags.contains(&OpenFlag::Creat));
        let t = parse_line(
            r#"77 1.0 openat2(AT_FDCWD, "/x", {flags=O_RDONLY|O_CLOEXEC, resolve=RESOLVE_NO_SYMLINKS}, 24) = 7"#,
        )
        .event
        .unwrap();
        assert!(t.flags.contains(&OpenFlag::CloExec));
        assert_eq!(t.result, SyscallResult::Ok(7));
    }

    #[test]
    fn dirfd_forms() {
        let fd = parse_line(r#"5 1.0 openat(7, "x.bin", O_RDONLY) = 8"#).event.unwrap();
        assert_eq!(fd.dirfd, DirFd::Fd(7));
        let dec = parse_line(r#"5 1.0 openat(7</home/u/nb>, "x.bin", O_RDONLY) = 8</home/u/nb/x.bin>"#)
            .event
            .unwrap();
        assert_eq!(dec.dirfd, DirFd::DecodedPath("/home/u/nb".into()));
        assert_eq!(dec.result, SyscallResult::Ok(8));
    }

    #[test]
    fn escapes_and_truncation() {
        let e = parse_line(r#"5 1.0 openat(AT_FDCWD, "/d/a\"b\\c\303\251.txt", O_RDONLY) = 3"#)
            .event
            .unwrap();
        assert_eq!(e.path, "/d/a\"b\\cé.txt");
        let t = parse_line(r#"5 1.0 openat(AT_FDCWD, "/very/long"..., O_RDONLY) = 3"#).event.unwrap();
        assert!(t.truncated);
        let bad = parse_line(r#"5 1.0 openat(AT_FDCWD, "/d/\377", O_RDONLY) = 3"#).event.unwrap();
        assert!(bad.non_utf8);
    }

    #[test]
    fn pid_and_timestamp_columns_are_optional() {
        let l = parse_line(r#"openat(AT_FDCWD, "/a", O_RDONLY) = 3"#);
        assert_eq!((l.kind, l.pid, l.timestamp_s), (LineKind::Complete, 0, None));
        let l = parse_line(r#"1669900000.5 openat(AT_FDCWD, "/a", O_RDONLY) = 3"#);
        assert_eq!((l.pid, l.timestamp_s), (0, Some(1669900000.5)));
        let l = parse_line(r#"[pid  42] 1.25 openat(AT_FDCWD, "/a", O_RDONLY) = 3"#);
        assert_eq!((l.pid, l.timestamp_s), (42, Some(1.25)));
    }

    #[test]
    fn unavailable_result() {
        let l = parse_line(r#"5 1.0 openat(AT_FDCWD, "/a", O_RDONLY) = ?"#);
        assert_eq!(l.event.unwrap().result, SyscallResult::Err("?".into()));
    }
}

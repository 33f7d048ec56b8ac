//! Small readers over `/proc` and process liveness.

use std::fs;
use std::io;
use std::path::PathBuf;

pub fn process_exists(pid: u32) -> bool {
    let Ok(raw) = libc::pid_t::try_from(pid) else {
        return false;
    };
    if raw <= 0 {
        return false;
    }
    // SAFETY: signal 0 performs only the existence and permission check.
    let rc = unsafe { libc::kill(raw, 0) };
    rc == 0 || io::Error::last_os_error().raw_os_error() == Some(libc::EPERM)
}

fn status_field(pid: u32, field: &str) -> Option<String> {
    let text = fs::read_to_string(format!("/proc/{pid}/status")).ok()?;
    text.lines()
        .find_map(|l| l.strip_prefix(field)?.strip_prefix(':').map(|v| v.trim().to_string()))
}

/// Pid of whoever ptrace-attached to `pid`, or 0.
pub fn tracer_pid(pid: u32) -> Option<u32> {
    status_field(pid, "TracerPid")?.parse().ok()
}

/// True when the process has exited but not been reaped, or is gone.
pub fn is_dead(pid: u32) -> bool {
    match status_field(pid, "State") {
        None => true,
        Some(state) => state.starts_with('Z') || state.starts_with('X'),
    }
}

pub fn cwd(pid: u32) -> io::Result<PathBuf> {
    fs::read_link(format!("/proc/{pid}/cwd"))
}

/// Thread ids of a process.
pub fn tasks(pid: u32) -> io::Result<Vec<u32>> {
    let mut out: Vec<u32> = fs::read_dir(format!("/proc/{pid}/task"))?
        .filter_map(|e| e.ok()?.file_name().to_str()?.parse().ok())
        .collect();
    out.sort_unstable();
    Ok(out)
}

const CAP_SYS_PTRACE: u32 = 19;

/// Root, or holding CAP_SYS_PTRACE in the effective set.
pub fn has_tracing_privilege() -> bool {
    // SAFETY: geteuid has no preconditions.
    if unsafe { libc::geteuid() } == 0 {
        return true;
    }
    status_field(std::process::id(), "CapEff")
        .and_then(|hex| u64::from_str_radix(&hex, 16).ok())
        .is_some_and(|caps| caps & (1 << CAP_SYS_PTRACE) != 0)
}

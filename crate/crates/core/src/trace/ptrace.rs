//! A minimal ptrace-based tracer that accepts the subset of `strace` options
//! the service uses and writes the same text format. It is the fallback when
//! no `strace` binary is installed.
//!
//! Supported: `-f`, `-ttt`, `-e trace=a,b,c`, `-o FILE`, `-p PID`.

use std::collections::{HashMap, HashSet};
use std::ffi::CStr;
use std::fs::File;
use std::io::{self, Write};
use std::mem;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use super::procfs;

const PTRACE_GET_SYSCALL_INFO: libc::c_uint = 0x420e;
const SYSCALL_INFO_ENTRY: u8 = 1;
const SYSCALL_INFO_EXIT: u8 = 2;
const PATH_MAX: usize = 4096;

#[repr(C)]
#[derive(Clone, Copy)]
struct SyscallInfoEntry {
    nr: u64,
    args: [u64; 6],
}

#[repr(C)]
#[derive(Clone, Copy)]
struct SyscallInfoExit {
    rval: i64,
    is_error: u8,
}

#[repr(C)]
union SyscallInfoData {
    entry: SyscallInfoEntry,
    exit: SyscallInfoExit,
    seccomp: [u64; 8],
}

#[repr(C)]
struct SyscallInfo {
    op: u8,
    pad: [u8; 3],
    arch: u32,
    instruction_pointer: u64,
    stack_pointer: u64,
    data: SyscallInfoData,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TracerArgs {
    pub follow_forks: bool,
    pub syscalls: Vec<String>,
    pub output: String,
    pub pid: u32,
}

impl TracerArgs {
    /// Parses the strace-style argument list (program name excluded).
    pub fn parse(args: &[String]) -> Result<Self, String> {
        let mut follow_forks = false;
        let mut syscalls = None;
        let mut output = None;
        let mut pid = None;
        let mut it = args.iter();
        while let Some(arg) = it.next() {
            match arg.as_str() {
                "-f" => follow_forks = true,
                "-ttt" => {}
                "-e" => {
                    let expr = it.next().ok_or("-e needs an argument")?;
                    let list = expr
                        .strip_prefix("trace=")
                        .ok_or_else(|| format!("unsupported -e expression {expr:?}"))?;
                    syscalls = Some(list.split(',').map(str::to_string).collect());
                }
                "-o" => output = Some(it.next().ok_or("-o needs an argument")?.clone()),
                "-p" => {
                    let raw = it.next().ok_or("-p needs an argument")?;
                    pid = Some(raw.parse().map_err(|_| format!("invalid pid {raw:?}"))?);
                }
                other => return Err(format!("unsupported option {other:?}")),
            }
        }
        Ok(TracerArgs {
            follow_forks,
            syscalls: syscalls.ok_or("missing -e trace=...")?,
            output: output.ok_or("missing -o")?,
            pid: pid.ok_or("missing -p")?,
        })
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum OpenCall {
    Open,
    OpenAt,
    OpenAt2,
    Creat,
}

impl OpenCall {
    fn name(self) -> &'static str {
        match self {
            OpenCall::Open => "open",
            OpenCall::OpenAt => "openat",
            OpenCall::OpenAt2 => "openat2",
            OpenCall::Creat => "creat",
        }
    }
}

fn syscall_table() -> Vec<(i64, OpenCall)> {
    let mut t = vec![(libc::SYS_openat, OpenCall::OpenAt), (libc::SYS_openat2, OpenCall::OpenAt2)];
    #[cfg(target_arch = "x86_64")]
    {
        t.push((libc::SYS_open, OpenCall::Open));
        t.push((libc::SYS_creat, OpenCall::Creat));
    }
    t
}

#[cfg(target_arch = "x86_64")]
const NATIVE_AUDIT_ARCH: u32 = 0xc000_003e;
#[cfg(target_arch = "aarch64")]
const NATIVE_AUDIT_ARCH: u32 = 0xc000_00b7;

#[cfg(target_arch = "x86_64")]
const O_LARGEFILE_BITS: i32 = 0o100000;
#[cfg(not(target_arch = "x86_64"))]
const O_LARGEFILE_BITS: i32 = 0o400000;

struct Pending {
    call: OpenCall,
    timestamp: String,
    head: String,
    flushed: bool,
}

struct Tracer {
    out: File,
    follow_forks: bool,
    wanted: HashMap<u64, OpenCall>,
    known: HashSet<libc::pid_t>,
    pending: HashMap<libc::pid_t, Pending>,
}

fn timestamp() -> String {
    let now = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default();
    format!("{}.{:06}", now.as_secs(), now.subsec_micros())
}

fn errno() -> i32 {
    io::Error::last_os_error().raw_os_error().unwrap_or(0)
}

unsafe fn ptrace(req: libc::c_uint, pid: libc::pid_t, addr: usize, data: usize) -> libc::c_long {
    libc::ptrace(req, pid, addr as *mut libc::c_void, data as *mut libc::c_void)
}

impl Tracer {
    fn line(&mut self, tid: libc::pid_t, ts: &str, body: &str) {
        // another task is about to print: cut any open calls short
        let others: Vec<libc::pid_t> = self
            .pending
            .iter()
            .filter(|(t, p)| **t != tid && !p.flushed)
            .map(|(t, _)| *t)
            .collect();
        for other in others {
            let p = self.pending.get_mut(&other).expect("listed");
            p.flushed = true;
            let text = format!("{:<5} {} {} <unfinished ...>\n", other, p.timestamp, p.head);
            let _ = self.out.write_all(text.as_bytes());
        }
        let _ = self.out.write_all(format!("{tid:<5} {ts} {body}\n").as_bytes());
    }

    fn resume(&self, tid: libc::pid_t, sig: i32) {
        // SAFETY: tid is a stopped tracee of this process.
        unsafe { ptrace(libc::PTRACE_SYSCALL, tid, 0, sig as usize) };
    }

    fn options(&self) -> usize {
        let mut opts = libc::PTRACE_O_TRACESYSGOOD | libc::PTRACE_O_TRACEEXEC;
        if self.follow_forks {
            opts |= libc::PTRACE_O_TRACEFORK | libc::PTRACE_O_TRACEVFORK | libc::PTRACE_O_TRACECLONE;
        }
        opts as usize
    }

    fn seize(&mut self, tid: libc::pid_t) -> io::Result<()> {
        // SAFETY: PTRACE_SEIZE with an options word; failure is reported via errno.
        let rc = unsafe { ptrace(libc::PTRACE_SEIZE, tid, 0, self.options()) };
        if rc < 0 {
            return Err(io::Error::last_os_error());
        }
        // SAFETY: tid is now our tracee.
        unsafe { ptrace(libc::PTRACE_INTERRUPT, tid, 0, 0) };
        self.known.insert(tid);
        Ok(())
    }

    fn attach(&mut self, pid: u32) -> io::Result<()> {
        let leader = pid as libc::pid_t;
        self.seize(leader)?;
        // threads may appear while we attach; go round until nothing is new
        for _ in 0..16 {
            let mut fresh = false;
            for tid in procfs::tasks(pid).unwrap_or_default() {
                let tid = tid as libc::pid_t;
                if !self.known.contains(&tid) && self.seize(tid).is_ok() {
                    fresh = true;
                }
            }
            if !fresh || !self.follow_forks {
                break;
            }
        }
        Ok(())
    }

    fn syscall_info(&self, tid: libc::pid_t) -> Option<SyscallInfo> {
        // SAFETY: SyscallInfo is plain old data; the kernel fills at most size bytes.
        let mut info: SyscallInfo = unsafe { mem::zeroed() };
        let size = mem::size_of::<SyscallInfo>();
        let rc = unsafe {
            ptrace(
                PTRACE_GET_SYSCALL_INFO,
                tid,
                size,
                &mut info as *mut SyscallInfo as usize,
            )
        };
        (rc > 0).then_some(info)
    }

    fn on_syscall_stop(&mut self, tid: libc::pid_t) {
        let Some(info) = self.syscall_info(tid) else {
            return;
        };
        if info.arch != NATIVE_AUDIT_ARCH {
            return;
        }
        match info.op {
            SYSCALL_INFO_ENTRY => {
                // SAFETY: op says the entry member is active.
                let entry = unsafe { info.data.entry };
                if let Some(&call) = self.wanted.get(&entry.nr) {
                    let head = format_entry(tid, call, &entry.args);
                    self.pending.insert(
                        tid,
                        Pending {
                            call,
                            timestamp: timestamp(),
                            head,
                            flushed: false,
                        },
                    );
                }
            }
            SYSCALL_INFO_EXIT => {
                if let Some(p) = self.pending.remove(&tid) {
                    // SAFETY: op says the exit member is active.
                    let exit = unsafe { info.data.exit };
                    let result = format_result(exit.rval, exit.is_error != 0);
                    if p.flushed {
                        let body = format!("<... {} resumed>) = {}", p.call.name(), result);
                        self.line(tid, &timestamp(), &body);
                    } else {
                        self.line(tid, &p.timestamp, &format!("{}) = {}", p.head, result));
                    }
                }
            }
            _ => {}
        }
    }

    fn on_exit(&mut self, tid: libc::pid_t, status: i32) {
        self.known.remove(&tid);
        if let Some(p) = self.pending.remove(&tid) {
            if !p.flushed {
                let text = format!("{:<5} {} {} <unfinished ...>\n", tid, p.timestamp, p.head);
                let _ = self.out.write_all(text.as_bytes());
            }
        }
        let body = if libc::WIFEXITED(status) {
            format!("+++ exited with {} +++", libc::WEXITSTATUS(status))
        } else {
            let core = if libc::WCOREDUMP(status) { " (core dumped)" } else { "" };
            format!("+++ killed by {}{} +++", signal_name(libc::WTERMSIG(status)), core)
        };
        self.line(tid, &timestamp(), &body);
    }

    fn on_signal(&mut self, tid: libc::pid_t, sig: i32) {
        // SAFETY: siginfo_t is plain old data filled by the kernel.
        let mut si: libc::siginfo_t = unsafe { mem::zeroed() };
        let rc = unsafe { ptrace(libc::PTRACE_GETSIGINFO, tid, 0, &mut si as *mut _ as usize) };
        let detail = if rc == 0 {
            // SAFETY: si_pid/si_uid are valid to read for any siginfo layout we print.
            let (spid, suid) = unsafe { (si.si_pid(), si.si_uid()) };
            format!(
                "{{si_signo={}, si_code={}, si_pid={}, si_uid={}}}",
                signal_name(sig),
                si.si_code,
                spid,
                suid
            )
        } else {
            format!("{{si_signo={}}}", signal_name(sig))
        };
        self.line(tid, &timestamp(), &format!("--- {} {} ---", signal_name(sig), detail));
    }

    /// One wait status for `tid`. Returns false once there is nothing left
    /// to trace.
    fn dispatch(&mut self, tid: libc::pid_t, status: i32) {
        if libc::WIFEXITED(status) || libc::WIFSIGNALED(status) {
            if self.known.contains(&tid) {
                self.on_exit(tid, status);
            }
            return;
        }
        if !libc::WIFSTOPPED(status) {
            return;
        }
        if self.known.insert(tid) {
            // first sighting of an auto-attached child
            self.resume(tid, 0);
            return;
        }
        let sig = libc::WSTOPSIG(status);
        let event = (status >> 16) & 0xffff;
        if sig == (libc::SIGTRAP | 0x80) {
            self.on_syscall_stop(tid);
            self.resume(tid, 0);
        } else if event == libc::PTRACE_EVENT_STOP {
            if matches!(sig, libc::SIGSTOP | libc::SIGTSTP | libc::SIGTTIN | libc::SIGTTOU) {
                // group stop: stay stopped but keep reporting
                // SAFETY: tid is in a group-stop.
                unsafe { ptrace(libc::PTRACE_LISTEN, tid, 0, 0) };
            } else {
                self.resume(tid, 0);
            }
        } else if event != 0 {
            if event == libc::PTRACE_EVENT_EXEC {
                // the old tid may have been replaced by the leader
                self.pending.remove(&tid);
            }
            self.resume(tid, 0);
        } else {
            self.on_signal(tid, sig);
            self.resume(tid, sig);
        }
    }

    fn detach_all(&mut self) {
        let tids: Vec<libc::pid_t> = self.known.iter().copied().collect();
        for &tid in &tids {
            // SAFETY: interrupting our own tracee.
            unsafe { ptrace(libc::PTRACE_INTERRUPT, tid, 0, 0) };
        }
        let deadline = std::time::Instant::now() + Duration::from_secs(2);
        let mut remaining: HashSet<libc::pid_t> = tids.into_iter().collect();
        while !remaining.is_empty() && std::time::Instant::now() < deadline {
            let mut status = 0;
            // SAFETY: status is a valid out pointer.
            let tid = unsafe { libc::waitpid(-1, &mut status, libc::__WALL | libc::WNOHANG) };
            if tid <= 0 {
                if tid < 0 && errno() == libc::ECHILD {
                    break;
                }
                std::thread::sleep(Duration::from_millis(1));
                continue;
            }
            if libc::WIFEXITED(status) || libc::WIFSIGNALED(status) {
                if remaining.remove(&tid) {
                    self.on_exit(tid, status);
                }
                continue;
            }
            let sig = libc::WSTOPSIG(status);
            let event = (status >> 16) & 0xffff;
            let deliver = if event == 0 && sig != (libc::SIGTRAP | 0x80) { sig } else { 0 };
            // SAFETY: tid is stopped.
            unsafe { ptrace(libc::PTRACE_DETACH, tid, 0, deliver as usize) };
            remaining.remove(&tid);
        }
        for (tid, p) in self.pending.drain() {
            if !p.flushed {
                let text = format!("{:<5} {} {} <unfinished ...>\n", tid, p.timestamp, p.head);
                let _ = self.out.write_all(text.as_bytes());
            }
        }
        let _ = self.out.flush();
    }
}

fn read_remote(tid: libc::pid_t, addr: u64, len: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(len.min(PATH_MAX));
    let mut addr = addr;
    let page = 4096u64;
    while out.len() < len {
        // stay inside one page per read so a partially mapped range still yields a prefix
        let chunk = ((page - addr % page) as usize).min(len - out.len());
        let mut buf = vec![0u8; chunk];
        let local = libc::iovec {
            iov_base: buf.as_mut_ptr().cast(),
            iov_len: chunk,
        };
        let remote = libc::iovec {
            iov_base: addr as *mut libc::c_void,
            iov_len: chunk,
        };
        // SAFETY: local iovec points at a live buffer of `chunk` bytes.
        let n = unsafe { libc::process_vm_readv(tid, &local, 1, &remote, 1, 0) };
        if n <= 0 {
            break;
        }
        out.extend_from_slice(&buf[..n as usize]);
        if buf[..n as usize].contains(&0) {
            break;
        }
        addr += n as u64;
    }
    out
}

/// Reads a NUL-terminated string; returns (bytes, truncated).
fn read_c_string(tid: libc::pid_t, addr: u64) -> Option<(Vec<u8>, bool)> {
    if addr == 0 {
        return None;
    }
    let raw = read_remote(tid, addr, PATH_MAX);
    if raw.is_empty() {
        return None;
    }
    match raw.iter().position(|&b| b == 0) {
        Some(end) => Some((raw[..end].to_vec(), false)),
        None => Some((raw, true)),
    }
}

/// Renders bytes the way the tracer quotes strings.
pub fn quote_bytes(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() + 2);
    s.push('"');
    for &b in bytes {
        match b {
            b'"' => s.push_str("\\\""),
            b'\\' => s.push_str("\\\\"),
            b'\n' => s.push_str("\\n"),
            b'\t' => s.push_str("\\t"),
            b'\r' => s.push_str("\\r"),
            0x0b => s.push_str("\\v"),
            0x0c => s.push_str("\\f"),
            0x20..=0x7e => s.push(b as char),
            _ => s.push_str(&format!("\\{b:03o}")),
        }
    }
    s.push('"');
    s
}

fn format_path(tid: libc::pid_t, addr: u64) -> String {
    match read_c_string(tid, addr) {
        Some((bytes, false)) => quote_bytes(&bytes),
        Some((bytes, true)) => format!("{}...", quote_bytes(&bytes)),
        None => format!("{addr:#x}"),
    }
}

fn format_dirfd(raw: u64) -> String {
    let fd = raw as i32;
    if fd == libc::AT_FDCWD {
        "AT_FDCWD".to_string()
    } else {
        fd.to_string()
    }
}

/// Symbolic rendering of open flags, access mode first.
pub fn format_open_flags(flags: i32) -> String {
    let mut parts = vec![match flags & libc::O_ACCMODE {
        libc::O_WRONLY => "O_WRONLY".to_string(),
        libc::O_RDWR => "O_RDWR".to_string(),
        libc::O_RDONLY => "O_RDONLY".to_string(),
        other => format!("{other:#x}"),
    }];
    let mut rest = flags & !libc::O_ACCMODE;
    let table: &[(i32, &str)] = &[
        (libc::O_CREAT, "O_CREAT"),
        (libc::O_EXCL, "O_EXCL"),
        (libc::O_NOCTTY, "O_NOCTTY"),
        (libc::O_TRUNC, "O_TRUNC"),
        (libc::O_APPEND, "O_APPEND"),
        (libc::O_NONBLOCK, "O_NONBLOCK"),
        (libc::O_SYNC, "O_SYNC"),
        (libc::O_DSYNC, "O_DSYNC"),
        (libc::O_ASYNC, "O_ASYNC"),
        (libc::O_DIRECT, "O_DIRECT"),
        (O_LARGEFILE_BITS, "O_LARGEFILE"),
        (libc::O_TMPFILE, "O_TMPFILE"),
        (libc::O_DIRECTORY, "O_DIRECTORY"),
        (libc::O_NOFOLLOW, "O_NOFOLLOW"),
        (libc::O_NOATIME, "O_NOATIME"),
        (libc::O_CLOEXEC, "O_CLOEXEC"),
        (libc::O_PATH, "O_PATH"),
    ];
    for &(bits, name) in table {
        if bits != 0 && rest & bits == bits {
            parts.push(name.to_string());
            rest &= !bits;
        }
    }
    if rest != 0 {
        parts.push(format!("{rest:#x}"));
    }
    parts.join("|")
}

fn needs_mode(flags: i32) -> bool {
    flags & libc::O_CREAT != 0 || flags & libc::O_TMPFILE == libc::O_TMPFILE
}

fn format_entry(tid: libc::pid_t, call: OpenCall, args: &[u64; 6]) -> String {
    match call {
        OpenCall::OpenAt => {
            let flags = args[2] as i32;
            let mut s = format!(
                "openat({}, {}, {}",
                format_dirfd(args[0]),
                format_path(tid, args[1]),
                format_open_flags(flags)
            );
            if needs_mode(flags) {
                s.push_str(&format!(", 0{:03o}", args[3] as u32));
            }
            s
        }
        OpenCall::Open => {
            let flags = args[1] as i32;
            let mut s = format!("open({}, {}", format_path(tid, args[0]), format_open_flags(flags));
            if needs_mode(flags) {
                s.push_str(&format!(", 0{:03o}", args[2] as u32));
            }
            s
        }
        OpenCall::Creat => format!("creat({}, 0{:03o}", format_path(tid, args[0]), args[1] as u32),
        OpenCall::OpenAt2 => {
            let how = read_remote(tid, args[2], 24);
            let how_text = if how.len() == 24 {
                let word = |i: usize| u64::from_ne_bytes(how[i * 8..i * 8 + 8].try_into().expect("8 bytes"));
                let flags = word(0) as i32;
                let mode = if needs_mode(flags) {
                    format!(", mode=0{:03o}", word(1))
                } else {
                    String::new()
                };
                format!("{{flags={}{}, resolve={:#x}}}", format_open_flags(flags), mode, word(2))
            } else {
                format!("{:#x}", args[2])
            };
            format!(
                "openat2({}, {}, {}, {}",
                format_dirfd(args[0]),
                format_path(tid, args[1]),
                how_text,
                args[3]
            )
        }
    }
}

fn format_result(rval: i64, is_error: bool) -> String {
    if is_error {
        let code = (-rval) as i32;
        // SAFETY: strerror returns a pointer to a static or thread-local string.
        let msg = unsafe { CStr::from_ptr(libc::strerror(code)) }.to_string_lossy().into_owned();
        format!("-1 {} ({})", errno_name(code), msg)
    } else {
        rval.to_string()
    }
}

pub fn errno_name(code: i32) -> String {
    let name = match code {
        libc::EPERM => "EPERM",
        libc::ENOENT => "ENOENT",
        libc::ESRCH => "ESRCH",
        libc::EINTR => "EINTR",
        libc::EIO => "EIO",
        libc::ENXIO => "ENXIO",
        libc::EBADF => "EBADF",
        libc::EAGAIN => "EAGAIN",
        libc::ENOMEM => "ENOMEM",
        libc::EACCES => "EACCES",
        libc::EFAULT => "EFAULT",
        libc::EBUSY => "EBUSY",
        libc::EEXIST => "EEXIST",
        libc::EXDEV => "EXDEV",
        libc::ENODEV => "ENODEV",
        libc::ENOTDIR => "ENOTDIR",
        libc::EISDIR => "EISDIR",
        libc::EINVAL => "EINVAL",
        libc::ENFILE => "ENFILE",
        libc::EMFILE => "EMFILE",
        libc::ETXTBSY => "ETXTBSY",
        libc::EFBIG => "EFBIG",
        libc::ENOSPC => "ENOSPC",
        libc::EROFS => "EROFS",
        libc::ENAMETOOLONG => "ENAMETOOLONG",
        libc::ENOSYS => "ENOSYS",
        libc::ELOOP => "ELOOP",
        libc::EOVERFLOW => "EOVERFLOW",
        libc::EOPNOTSUPP => "EOPNOTSUPP",
        libc::ESTALE => "ESTALE",
        libc::EDQUOT => "EDQUOT",
        512 => "ERESTARTSYS",
        513 => "ERESTARTNOINTR",
        514 => "ERESTARTNOHAND",
        516 => "ERESTART_RESTARTBLOCK",
        _ => return format!("E{code}"),
    };
    name.to_string()
}

pub fn signal_name(sig: i32) -> String {
    let name = match sig {
        libc::SIGHUP => "SIGHUP",
        libc::SIGINT => "SIGINT",
        libc::SIGQUIT => "SIGQUIT",
        libc::SIGILL => "SIGILL",
        libc::SIGTRAP => "SIGTRAP",
        libc::SIGABRT => "SIGABRT",
        libc::SIGBUS => "SIGBUS",
        libc::SIGFPE => "SIGFPE",
        libc::SIGKILL => "SIGKILL",
        libc::SIGUSR1 => "SIGUSR1",
        libc::SIGSEGV => "SIGSEGV",
        libc::SIGUSR2 => "SIGUSR2",
        libc::SIGPIPE => "SIGPIPE",
        libc::SIGALRM => "SIGALRM",
        libc::SIGTERM => "SIGTERM",
        libc::SIGCHLD => "SIGCHLD",
        libc::SIGCONT => "SIGCONT",
        libc::SIGSTOP => "SIGSTOP",
        libc::SIGTSTP => "SIGTSTP",
        libc::SIGTTIN => "SIGTTIN",
        libc::SIGTTOU => "SIGTTOU",
        libc::SIGURG => "SIGURG",
        libc::SIGXCPU => "SIGXCPU",
        libc::SIGXFSZ => "SIGXFSZ",
        libc::SIGVTALRM => "SIGVTALRM",
        libc::SIGPROF => "SIGPROF",
        libc::SIGWINCH => "SIGWINCH",
        libc::SIGIO => "SIGIO",
        libc::SIGPWR => "SIGPWR",
        libc::SIGSYS => "SIGSYS",
        _ => return format!("SIG{sig}"),
    };
    name.to_string()
}

fn block_signals(signals: &[i32]) -> libc::sigset_t {
    // SAFETY: sigset manipulation on a local, zero-initialised set.
    unsafe {
        let mut set: libc::sigset_t = mem::zeroed();
        libc::sigemptyset(&mut set);
        for &s in signals {
            libc::sigaddset(&mut set, s);
        }
        libc::pthread_sigmask(libc::SIG_BLOCK, &set, std::ptr::null_mut());
        set
    }
}

/// Runs the tracer until every tracee is gone or a termination signal
/// arrives. Returns the process exit code.
pub fn run(args: &TracerArgs) -> i32 {
    let set = block_signals(&[libc::SIGCHLD, libc::SIGTERM, libc::SIGINT, libc::SIGHUP]);
    let out = match File::create(&args.output) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("strace: can't fopen '{}': {e}", args.output);
            return 1;
        }
    };
    let table = syscall_table();
    let mut wanted = HashMap::new();
    for name in &args.syscalls {
        if let Some(&(nr, call)) = table.iter().find(|(_, c)| c.name() == name) {
            wanted.insert(nr as u64, call);
        }
    }
    let mut tracer = Tracer {
        out,
        follow_forks: args.follow_forks,
        wanted,
        known: HashSet::new(),
        pending: HashMap::new(),
    };
    if let Err(e) = tracer.attach(args.pid) {
        eprintln!("strace: attach: ptrace(PTRACE_SEIZE, {}): {e}", args.pid);
        return 1;
    }
    eprintln!("strace: Process {} attached", args.pid);

    loop {
        // drain every ready status before sleeping
        loop {
            let mut status = 0;
            // SAFETY: status is a valid out pointer.
            let tid = unsafe { libc::waitpid(-1, &mut status, libc::__WALL | libc::WNOHANG) };
            if tid > 0 {
                tracer.dispatch(tid, status);
                continue;
            }
            if tid < 0 && errno() == libc::ECHILD {
                tracer.known.clear();
            }
            break;
        }
        if tracer.known.is_empty() {
            let _ = tracer.out.flush();
            return 0;
        }
        let timeout = libc::timespec {
            tv_sec: 0,
            tv_nsec: 100_000_000,
        };
        // SAFETY: set holds signals blocked above; info may be null.
        let sig = unsafe { libc::sigtimedwait(&set, std::ptr::null_mut(), &timeout) };
        if matches!(sig, libc::SIGTERM | libc::SIGINT | libc::SIGHUP) {
            tracer.detach_all();
            return 0;
        }
    }
}

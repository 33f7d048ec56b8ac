#![allow(dead_code)]

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::time::{Duration, Instant};

use statecap::trace::{self, ServeOptions, ServiceHandle, TraceSettings, TracerCommand};

pub fn statecap_exe() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_statecap"))
}

pub fn settings(log_dir: &Path) -> TraceSettings {
    let mut s = TraceSettings::new(log_dir, TracerCommand::builtin(statecap_exe()));
    s.enabled = true;
    s.reap_interval = Duration::from_millis(100);
    s
}

pub fn service(dir: &Path) -> ServiceHandle {
    let logs = dir.join("logs");
    std::fs::create_dir_all(&logs).unwrap();
    trace::spawn(&dir.join("trace.sock"), settings(&logs), &ServeOptions::default()).expect("service starts")
}

/// A shell process that waits for a line on stdin before running `script`,
/// so a tracer can attach first.
pub struct Gated {
    pub child: Child,
    stdin: Option<ChildStdin>,
}

impl Gated {
    pub fn spawn(script: &str, cwd: &Path) -> Self {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(format!("read go\n{script}"))
            .current_dir(cwd)
            .stdin(Stdio::piped())
            .stdout(Stdio::null())
            .spawn()
            .expect("sh spawns");
        let stdin = child.stdin.take();
        Gated { child, stdin }
    }

    pub fn pid(&self) -> u32 {
        self.child.id()
    }

    pub fn release(&mut self) {
        if let Some(mut s) = self.stdin.take() {
            s.write_all(b"go\n").unwrap();
        }
    }

    pub fn finish(mut self) -> std::process::ExitStatus {
        self.release();
        self.child.wait().unwrap()
    }
}

impl Drop for Gated {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub fn wait_until(timeout: Duration, mut f: impl FnMut() -> bool) -> bool {
    let start = Instant::now();
    while start.elapsed() < timeout {
        if f() {
            return true;
        }
        std::thread::sleep(Duration::from_millis(25));
    }
    f()
}

//! Run the tracing service in-process, register a child process over the
//! socket, and read back its trace log.
//!
//!     cargo build && cargo run --example trace_service
//!
//! Needs root or CAP_SYS_PTRACE. Uses strace when it is on PATH, otherwise
//! the tracer built into the `statecap` binary (hence the `cargo build`).

use std::fs;
use std::io::Write;
use std::process::{Command, Stdio};

use statecap::filter::{self, FilterConfig};
use statecap::parser;
use statecap::trace::{self, ServeOptions, TraceClient, TraceSettings, TracerCommand};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let work = tempfile::tempdir()?;
    let logs = work.path().join("logs");
    fs::create_dir(&logs)?;
    fs::write(work.path().join("input.txt"), "hello\n")?;

    let tracer = TracerCommand::detect(statecap::locate_statecap_exe().as_deref())
        .ok_or("no tracer: install strace or run `cargo build` first")?;
    println!("tracer: {}", tracer.program.display());
    let mut settings = TraceSettings::new(&logs, tracer);
    settings.enabled = true;
    let socket = work.path().join("trace.sock");
    let service = trace::spawn(&socket, settings, &ServeOptions::default())?;

    // the child waits on stdin so nothing happens before the tracer is attached
    let mut child = Command::new("sh")
        .args(["-c", "read go; cat input.txt > copy.txt; ls > /dev/null"])
        .current_dir(work.path())
        .stdin(Stdio::piped())
        .spawn()?;

    let mut client = TraceClient::connect(&socket)?;
    let started = client.start_trace(child.id(), Some("demo"))?;
    println!("tracing pid {} into {}", child.id(), started.log_path.display());
    println!("status: {:?}", client.status(Some(child.id()))?[0].status);

    child.stdin.take().unwrap().write_all(b"go\n")?;
    child.wait()?;
    let summary = client.stop_trace(child.id())?;
    println!("{} log lines over {:.2}s", summary.line_count, summary.duration_s);

    let accesses = parser::parse_log(&summary.log_path, started.cwd.to_str().unwrap())?;
    for dep in filter::shortlist(&accesses, &FilterConfig::defaults()) {
        println!("  {:?} {}", dep.mode, dep.absolute_path);
    }
    service.shutdown()?;
    Ok(())
}

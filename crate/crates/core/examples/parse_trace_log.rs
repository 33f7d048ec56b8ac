//! Parse a tracer log into open events with absolute paths.
//!
//!     cargo run --example parse_trace_log [LOG CWD]
//!
//! Without arguments a small built-in log is used.

use std::io::Cursor;

use statecap::parser::{self, Resolution};

const SAMPLE: &str = r#"4242  1700000000.000100 openat(AT_FDCWD, "data/input.csv", O_RDONLY|O_CLOEXEC) = 3
4243  1700000000.000200 openat(AT_FDCWD, "/home/u/proj/model.bin", O_WRONLY|O_CREAT|O_TRUNC, 0644 <unfinished ...>
4242  1700000000.000300 openat(AT_FDCWD, "missing.txt", O_RDONLY) = -1 ENOENT (No such file or directory)
4243  1700000000.000400 <... openat resumed>) = 4
4242  1700000000.000500 openat(3</home/u/proj/data>, "part-0.parquet", O_RDONLY) = 5
4242  1700000000.000600 openat(AT_FDCWD, "/very/long/pa"..., O_RDONLY) = 6
4243  1700000000.000700 +++ exited with 0 +++
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let parsed = match args.as_slice() {
        [log, cwd] => parser::parse_log_with_diagnostics(log.as_ref(), cwd)?,
        _ => parser::parse_reader(Cursor::new(SAMPLE), "/home/u/proj")?,
    };

    println!("{} lines, {} open events", parsed.line_count, parsed.accesses.len());
    for access in &parsed.accesses {
        let ev = &access.event;
        let target = match &access.absolute_path {
            Resolution::Path(p) => p.clone(),
            Resolution::Unresolved(why) => format!("<unresolved: {why}> {}", ev.path),
        };
        println!("pid {:<6} {:<28} {:?}  {}", ev.pid, ev.flags.to_string(), ev.result, target);
    }
    let d = &parsed.diagnostics;
    println!(
        "orphaned resumed: {}, dangling unfinished: {}, malformed: {}",
        d.orphaned_resumed, d.dangling_unfinished, d.malformed
    );
    Ok(())
}

//! Capture the state of a running computation: the files it touched, the
//! libraries it used and its session, packaged into a portable archive.
//!
//! The pieces, in pipeline order:
//!
//! - [`trace`]: a local-socket service that attaches a syscall tracer to
//!   registered processes and writes one log per process.
//! - [`parser`]: turns tracer logs into structured open events with
//!   absolute paths.
//! - [`filter`]: rule-based shortlist of the files that matter.
//! - [`archive`]: the zip bundle and the restore side.
//! - [`bench`]: tracing-overhead workloads and suite runner.
//! - [`pipeline`] and [`cli`]: the one-shot capture flow and the
//!   `statecap` command line.

pub mod archive;
pub mod bench;
pub mod cli;
pub mod filter;
pub mod parser;
pub mod pipeline;
pub mod trace;

use std::path::PathBuf;

/// Hidden `statecap` subcommand running the built-in tracer.
pub const BUILTIN_TRACER_SUBCOMMAND: &str = "__trace";
/// Hidden `statecap` subcommand running a benchmark workload.
pub const BENCH_WORKER_SUBCOMMAND: &str = "__bench-worker";

/// Finds the `statecap` executable: `STATECAP_EXE`, the running binary if it
/// is `statecap`, a sibling of the running binary (covers `target/*/examples`
/// and `target/*/deps`), or PATH.
pub fn locate_statecap_exe() -> Option<PathBuf> {
    if let Some(p) = std::env::var_os("STATECAP_EXE") {
        return Some(PathBuf::from(p));
    }
    let current = std::env::current_exe().ok();
    if let Some(cur) = &current {
        if cur.file_stem().is_some_and(|s| s == "statecap") {
            return Some(cur.clone());
        }
        for dir in cur.ancestors().skip(1).take(2) {
            let candidate = dir.join("statecap");
            if candidate.is_file() {
                return Some(candidate);
            }
        }
    }
    trace::find_in_path("statecap")
}

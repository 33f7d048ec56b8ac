//! Measure tracing overhead for one IO and one CPU workload.
//!
//!     cargo build && cargo run --example overhead_bench
//!
//! The workload processes are the `statecap` binary, so build it first.
//! Tracing needs root or CAP_SYS_PTRACE.

use std::sync::Arc;

use statecap::bench::{self, SuiteConfig, Workload, MIB};
use statecap::trace::{TraceRegistry, TraceSettings, TracerCommand};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let work = tempfile::tempdir()?;
    let logs = work.path().join("logs");
    std::fs::create_dir(&logs)?;

    let exe = statecap::locate_statecap_exe().ok_or("statecap binary not found; run `cargo build` first")?;
    let tracer = TracerCommand::detect(Some(&exe)).ok_or("no tracer available")?;
    let mut settings = TraceSettings::new(&logs, tracer);
    settings.enabled = true;
    let mut registry = Arc::new(TraceRegistry::new(settings));

    let suite = SuiteConfig {
        workloads: vec![Workload::IoSingle, Workload::CpuParallel],
        io_sizes: vec![4 * MIB, 16 * MIB],
        cpu_sizes: vec![bench::DEFAULT_CPU_LIMIT],
        reps: 3,
        ..SuiteConfig::desk_scale(work.path())
    };
    let csv = work.path().join("overhead.csv");
    let summary = bench::run_suite(&suite, &mut registry, &csv)?;

    print!("{}", std::fs::read_to_string(&csv)?);
    for r in &summary.reports {
        println!(
            "{:<12} size {:>9}: cpu x{:.3}, wall x{:.3}",
            r.workload.to_string(),
            r.traced.config.size,
            r.cpu_ratio,
            r.wall_ratio
        );
    }
    println!("finished in {:.1}s", summary.elapsed_s);
    Ok(())
}

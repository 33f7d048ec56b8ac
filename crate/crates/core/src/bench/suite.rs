use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use super::{
    compare, default_workers, run_paired, BenchConfig, BenchError, OverheadReport, Workload, DEFAULT_CPU_LIMIT,
    DEFAULT_IO_SIZES, DEFAULT_SEED,
};
use crate::trace::TraceControl;

pub const CSV_HEADER: &str = "workload,size,workers,trace,cpu_time_s,wall_time_s,cpu_ratio,wall_ratio,seed,reps";

#[derive(Clone, Debug)]
pub struct SuiteConfig {
    pub workloads: Vec<Workload>,
    /// Per-worker byte counts for the IO workloads.
    pub io_sizes: Vec<u64>,
    /// Counter limits for the CPU workload.
    pub cpu_sizes: Vec<u64>,
    /// Workers for the parallel workloads.
    pub workers: u32,
    pub reps: u32,
    pub seed: u64,
    pub scratch_dir: PathBuf,
}

impl SuiteConfig {
    /// The desk-scale suite: IO {1,16,64,256} MiB single and parallel, CPU
    /// 10^7 counters, 5 repetitions.
    pub fn desk_scale(scratch_dir: impl Into<PathBuf>) -> Self {
        SuiteConfig {
            workloads: Workload::ALL.to_vec(),
            io_sizes: DEFAULT_IO_SIZES.to_vec(),
            cpu_sizes: vec![DEFAULT_CPU_LIMIT],
            workers: default_workers(),
            reps: 5,
            seed: DEFAULT_SEED,
            scratch_dir: scratch_dir.into(),
        }
    }

    /// Configurations in row order, untraced first.
    pub fn configs(&self) -> Vec<(BenchConfig, BenchConfig)> {
        let mut out = Vec::new();
        for &workload in &self.workloads {
            let sizes = if workload.is_io() { &self.io_sizes } else { &self.cpu_sizes };
            for &size in sizes {
                let off = BenchConfig {
                    workload,
                    size,
                    workers: if workload == Workload::IoSingle { 1 } else { self.workers },
                    reps: self.reps,
                    trace: false,
                    scratch_dir: self.scratch_dir.clone(),
                    seed: self.seed,
                };
                let on = BenchConfig { trace: true, ..off.clone() };
                out.push((off, on));
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteRow {
    pub workload: Workload,
    pub size: u64,
    pub workers: u32,
    pub trace: bool,
    pub cpu_time_s: f64,
    pub wall_time_s: f64,
    pub cpu_ratio: f64,
    pub wall_ratio: f64,
    pub seed: u64,
    pub reps: u32,
}

impl SuiteRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{:.6},{:.6},{:.4},{:.4},{},{}",
            self.workload,
            self.size,
            self.workers,
            if self.trace { "on" } else { "off" },
            self.cpu_time_s,
            self.wall_time_s,
            self.cpu_ratio,
            self.wall_ratio,
            self.seed,
            self.reps
        )
    }

    fn from_result(r: &super::BenchResult, cpu_ratio: f64, wall_ratio: f64) -> Self {
        SuiteRow {
            workload: r.config.workload,
            size: r.config.size,
            workers: r.config.workers,
            trace: r.config.trace,
            cpu_time_s: r.cpu_time_s,
            wall_time_s: r.wall_time_s,
            cpu_ratio,
            wall_ratio,
            seed: r.config.seed,
            reps: r.config.reps,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SuiteSummary {
    pub rows: Vec<SuiteRow>,
    pub reports: Vec<OverheadReport>,
    pub elapsed_s: f64,
    pub csv_path: PathBuf,
}

impl SuiteSummary {
    pub fn report(&self, workload: Workload, size: u64) -> Option<&OverheadReport> {
        self.reports
            .iter()
            .find(|r| r.workload == workload && r.traced.config.size == size)
    }
}

/// Runs every (workload, size) untraced and traced, repetitions interleaved,
/// and writes one CSV row per run. Rows follow workload order, then size
/// order, off before on.
pub fn run_suite(
    suite: &SuiteConfig,
    tracer: &mut dyn TraceControl,
    out_csv: &Path,
) -> Result<SuiteSummary, BenchError> {
    let started = Instant::now();
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for (off, on) in suite.configs() {
        log::info!("bench {} size={} workers={}", off.workload, off.size, off.workers);
        let (untraced, traced) = run_paired(&off, &on, &mut *tracer)?;
        let report = compare(&traced, &untraced)?;
        rows.push(SuiteRow::from_result(&untraced, 1.0, 1.0));
        rows.push(SuiteRow::from_result(&traced, report.cpu_ratio, report.wall_ratio));
        reports.push(report);
    }
    write_csv(out_csv, &rows)?;
    Ok(SuiteSummary {
        rows,
        reports,
        elapsed_s: started.elapsed().as_secs_f64(),
        csv_path: out_csv.to_path_buf(),
    })
}

pub(crate) fn write_csv(path: &Path, rows: &[SuiteRow]) -> Result<(), BenchError> {
    let mut text = String::from(CSV_HEADER);
    text.push('\n');
    for row in rows {
        text.push_str(&row.to_csv());
        text.push('\n');
    }
    let io = |e| BenchError::Io {
        context: format!("cannot write {}", path.display()),
        source: e,
    };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(text.as_bytes()).map_err(io)
}

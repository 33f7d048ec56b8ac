//! Tracing-overhead benchmarks: file-writing and counter workloads, timed
//! with and without a tracer attached.

mod suite;
mod worker;

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::trace::{TraceControl, TraceError};

pub use suite::{run_suite, SuiteConfig, SuiteRow, SuiteSummary, CSV_HEADER};
pub use worker::worker_main;

pub const MIB: u64 = 1024 * 1024;
pub const DEFAULT_SEED: u64 = 0x5eed;
pub const DEFAULT_CPU_LIMIT: u64 = 10_000_000;
pub const DEFAULT_IO_SIZES: [u64; 4] = [MIB, 16 * MIB, 64 * MIB, 256 * MIB];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Workload {
    IoSingle,
    IoParallel,
    CpuParallel,
}

impl Workload {
    pub const ALL: [Workload; 3] = [Workload::IoSingle, Workload::IoParallel, Workload::CpuParallel];

    pub fn as_str(self) -> &'static str {
        match self {
            Workload::IoSingle => "io-single",
            Workload::IoParallel => "io-parallel",
            Workload::CpuParallel => "cpu-parallel",
        }
    }

    pub fn is_io(self) -> bool {
        self != Workload::CpuParallel
    }
}

impl fmt::Display for Workload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Workload {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Workload::ALL
            .into_iter()
            .find(|w| w.as_str() == s)
            .ok_or_else(|| format!("unknown workload {s:?} (expected io-single, io-parallel or cpu-parallel)"))
    }
}

/// Host core count, capped at 16.
pub fn default_workers() -> u32 {
    std::thread::available_parallelism().map_or(1, |n| n.get().min(16) as u32)
}

/// Parses `1048576`, `1MiB`, `16M`, `4KiB`, `1GiB`.
pub fn parse_size(s: &str) -> Result<u64, String> {
    let s = s.trim();
    let split = s.find(|c: char| !c.is_ascii_digit()).unwrap_or(s.len());
    let (digits, unit) = s.split_at(split);
    let n: u64 = digits.parse().map_err(|_| format!("invalid size {s:?}"))?;
    let mult = match unit.trim().to_ascii_lowercase().as_str() {
        "" | "b" => 1,
        "k" | "kib" | "kb" => 1024,
        "m" | "mib" | "mb" => MIB,
        "g" | "gib" | "gb" => 1024 * MIB,
        _ => return Err(format!("invalid size unit in {s:?}")),
    };
    n.checked_mul(mult).ok_or_else(|| format!("size {s:?} overflows"))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub workload: Workload,
    /// Bytes per worker for IO workloads, counter limit for the CPU one.
    pub size: u64,
    pub workers: u32,
    pub reps: u32,
    pub trace: bool,
    pub scratch_dir: PathBuf,
    pub seed: u64,
}

impl BenchConfig {
    pub fn new(workload: Workload, size: u64, scratch_dir: impl Into<PathBuf>) -> Self {
        BenchConfig {
            workload,
            size,
            workers: if workload == Workload::IoSingle { 1 } else { default_workers() },
            reps: 5,
            trace: false,
            scratch_dir: scratch_dir.into(),
            seed: DEFAULT_SEED,
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: &str| Err(BenchError::InvalidConfig(m.to_string()));
        if self.size == 0 {
            return bad("size must be positive");
        }
        if self.workers == 0 {
            return bad("workers must be at least 1");
        }
        if self.reps == 0 {
            return bad("reps must be at least 1");
        }
        if self.workload == Workload::IoSingle && self.workers != 1 {
            return bad("io-single runs exactly one worker");
        }
        if self.workload.is_io() && usize::try_from(self.size).is_err() {
            return bad("size does not fit in memory");
        }
        Ok(())
    }

    /// Work a correct run accomplishes: bytes written or counter increments.
    pub fn expected_work(&self) -> u64 {
        self.size * u64::from(self.workers)
    }

    fn same_shape(&self, other: &BenchConfig) -> bool {
        self.workload == other.workload && self.size == other.size && self.workers == other.workers
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub cpu_time_s: f64,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub config: BenchConfig,
    /// Median over samples.
    pub cpu_time_s: f64,
    /// Median over samples.
    pub wall_time_s: f64,
    pub samples: Vec<Sample>,
    /// Bytes written (IO) or iterations (CPU) per repetition.
    pub work: u64,
    /// Trace logs of the traced repetitions.
    pub trace_logs: Vec<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverheadReport {
    pub workload: Workload,
    pub cpu_ratio: f64,
    pub wall_ratio: f64,
    pub traced: BenchResult,
    pub untraced: BenchResult,
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("invalid bench config: {0}")]
    InvalidConfig(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("tracing requested but no tracer is available")]
    TracerUnavailable,
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("workload process failed: {0}")]
    Worker(String),
    #[error("work mismatch: expected {expected}, observed {observed}")]
    WorkMismatch { expected: u64, observed: u64 },
    #[error("cannot compare different configurations: {0}")]
    Mismatch(String),
}

impl BenchError {
    pub fn code(&self) -> &str {
        match self {
            BenchError::InvalidConfig(_) => "invalid_config",
            BenchError::Io { .. } => "io",
            BenchError::TracerUnavailable => "tracer_unavailable",
            BenchError::Trace(e) => e.code(),
            BenchError::Worker(_) => "workload_failed",
            BenchError::WorkMismatch { .. } => "work_mismatch",
            BenchError::Mismatch(_) => "config_mismatch",
        }
    }

    fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        BenchError::Io {
            context: context.into(),
            source,
        }
    }
}

pub(crate) fn timeval_s(tv: libc::timeval) -> f64 {
    tv.tv_sec as f64 + tv.tv_usec as f64 / 1e6
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => (v[n / 2 - 1] + v[n / 2]) / 2.0,
    }
}

/// Removes the per-run scratch directory however the run ends.
struct ScratchGuard(PathBuf);

impl Drop for ScratchGuard {
    fn drop(&mut self) {
        let _ = fs::remove_dir_all(&self.0);
    }
}

struct RepOutcome {
    sample: Sample,
    work: u64,
    log: Option<PathBuf>,
}

fn run_rep(
    exe: &Path,
    config: &BenchConfig,
    dir: &Path,
    tracer: Option<&mut (dyn TraceControl + '_)>,
) -> Result<RepOutcome, BenchError> {
    let mut child = Command::new(exe)
        .arg(crate::BENCH_WORKER_SUBCOMMAND)
        .arg(config.workload.as_str())
        .arg(config.size.to_string())
        .arg(config.workers.to_string())
        .arg(config.seed.to_string())
        .arg(dir)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| BenchError::io(format!("cannot start {}", exe.display()), e))?;
    let pid = child.id();

    let mut traced = None;
    if let Some(t) = tracer {
        match t.start(pid, Some(config.workload.as_str())) {
            Ok(s) => traced = Some((t, s.log_path)),
            Err(e) => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(e.into());
            }
        }
    }

    let mut stdin = child.stdin.take().expect("piped stdin");
    let start = Instant::now();
    let sent = stdin.write_all(b"go\n");
    drop(stdin);
    let mut status = 0;
    let mut ru: libc::rusage = unsafe { std::mem::zeroed() };
    let waited = unsafe { libc::wait4(pid as libc::pid_t, &mut status, 0, &mut ru) };
    let wall = start.elapsed().as_secs_f64();

    let log = match traced {
        Some((t, path)) => {
            t.stop(pid)?;
            Some(path)
        }
        None => None,
    };
    if waited < 0 {
        return Err(BenchError::io("wait4", std::io::Error::last_os_error()));
    }
    sent.map_err(|e| BenchError::io("cannot signal workload", e))?;

    let mut out = String::new();
    let mut err = String::new();
    if let Some(s) = child.stdout.take() {
        BufReader::new(s).read_line(&mut out).ok();
    }
    if let Some(s) = child.stderr.take() {
        std::io::Read::read_to_string(&mut BufReader::new(s), &mut err).ok();
    }
    if !(libc::WIFEXITED(status) && libc::WEXITSTATUS(status) == 0) {
        return Err(BenchError::Worker(format!("status {status}: {}", err.trim())));
    }
    let report: worker::WorkerReport =
        serde_json::from_str(out.trim()).map_err(|e| BenchError::Worker(format!("bad report {out:?}: {e}")))?;

    let observed = if config.workload.is_io() {
        let mut total = 0;
        for w in 0..config.workers {
            let path = worker::scratch_file(dir, w);
            total += fs::metadata(&path)
                .map_err(|e| BenchError::io(format!("missing scratch file {}", path.display()), e))?
                .len();
            fs::remove_file(&path).map_err(|e| BenchError::io("cannot remove scratch file", e))?;
        }
        total
    } else {
        report.work
    };
    if observed != config.expected_work() || report.work != config.expected_work() {
        return Err(BenchError::WorkMismatch {
            expected: config.expected_work(),
            observed: observed.min(report.work),
        });
    }
    let cpu = timeval_s(ru.ru_utime) + timeval_s(ru.ru_stime) - report.startup_cpu_s;
    Ok(RepOutcome {
        sample: Sample {
            cpu_time_s: cpu.max(0.0),
            wall_time_s: wall,
        },
        work: observed,
        log,
    })
}

/// A workload configuration with its executable and scratch directory ready.
struct Prepared<'c> {
    config: &'c BenchConfig,
    exe: PathBuf,
    dir: PathBuf,
    _guard: ScratchGuard,
    samples: Vec<Sample>,
    logs: Vec<PathBuf>,
    work: u64,
}

impl<'c> Prepared<'c> {
    fn new(config: &'c BenchConfig) -> Result<Self, BenchError> {
        config.validate()?;
        let exe = crate::locate_statecap_exe()
            .ok_or_else(|| BenchError::Worker("cannot find the statecap executable".into()))?;
        let dir = config.scratch_dir.join(format!(
            "statecap-bench-{}-{}",
            std::process::id(),
            uuid::Uuid::new_v4().simple()
        ));
        fs::create_dir_all(&dir)
            .map_err(|e| BenchError::io(format!("scratch dir {} not writable", config.scratch_dir.display()), e))?;
        Ok(Prepared {
            config,
            exe,
            _guard: ScratchGuard(dir.clone()),
            dir,
            samples: Vec::with_capacity(config.reps as usize),
            logs: Vec::new(),
            work: 0,
        })
    }

    fn rep(&mut self, tracer: Option<&mut (dyn TraceControl + '_)>) -> Result<(), BenchError> {
        let t = if self.config.trace { tracer } else { None };
        let rep = run_rep(&self.exe, self.config, &self.dir, t)?;
        self.samples.push(rep.sample);
        self.work = rep.work;
        self.logs.extend(rep.log);
        Ok(())
    }

    fn finish(self) -> BenchResult {
        let cpu: Vec<f64> = self.samples.iter().map(|s| s.cpu_time_s).collect();
        let wall: Vec<f64> = self.samples.iter().map(|s| s.wall_time_s).collect();
        BenchResult {
            config: self.config.clone(),
            cpu_time_s: median(&cpu),
            wall_time_s: median(&wall),
            samples: self.samples,
            work: self.work,
            trace_logs: self.logs,
        }
    }
}

/// Runs `config.reps` repetitions, each in a fresh workload process. With
/// `config.trace` the process is registered with `tracer` for its lifetime.
pub fn run_workload(config: &BenchConfig, mut tracer: Option<&mut dyn TraceControl>) -> Result<BenchResult, BenchError> {
    if config.trace && tracer.is_none() {
        return Err(BenchError::TracerUnavailable);
    }
    let mut run = Prepared::new(config)?;
    for _ in 0..config.reps {
        run.rep(tracer.as_deref_mut())?;
    }
    Ok(run.finish())
}

/// Runs an untraced and a traced configuration with their repetitions
/// interleaved, alternating which goes first, so drift over the run (cache
/// warm-up, frequency changes) lands on both sides equally.
pub fn run_paired(
    untraced: &BenchConfig,
    traced: &BenchConfig,
    tracer: &mut dyn TraceControl,
) -> Result<(BenchResult, BenchResult), BenchError> {
    if !untraced.same_shape(traced) || untraced.reps != traced.reps || untraced.trace || !traced.trace {
        return Err(BenchError::Mismatch("run_paired needs one untraced and one traced run of the same shape".into()));
    }
    let mut off = Prepared::new(untraced)?;
    let mut on = Prepared::new(traced)?;
    for rep in 0..untraced.reps {
        if rep % 2 == 0 {
            off.rep(None)?;
            on.rep(Some(&mut *tracer))?;
        } else {
            on.rep(Some(&mut *tracer))?;
            off.rep(None)?;
        }
    }
    Ok((off.finish(), on.finish()))
}

fn ratio(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else if a > 0.0 {
        f64::INFINITY
    } else {
        1.0
    }
}

pub fn compare(traced: &BenchResult, untraced: &BenchResult) -> Result<OverheadReport, BenchError> {
    if !traced.config.same_shape(&untraced.config) {
        return Err(BenchError::Mismatch(format!(
            "{} size={} workers={} vs {} size={} workers={}",
            traced.config.workload,
            traced.config.size,
            traced.config.workers,
            untraced.config.workload,
            untraced.config.size,
            untraced.config.workers
        )));
    }
    Ok(OverheadReport {
        workload: traced.config.workload,
        cpu_ratio: ratio(traced.cpu_time_s, untraced.cpu_time_s),
        wall_ratio: ratio(traced.wall_time_s, untraced.wall_time_s),
        traced: traced.clone(),
        untraced: untraced.clone(),
    })
}

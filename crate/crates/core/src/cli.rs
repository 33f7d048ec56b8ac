//! The `statecap` command line.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::archive::{self, LibraryDependency, PackageInput};
use crate::bench::{self, BenchConfig, SuiteConfig, Workload};
use crate::filter::FileDependency;
use crate::pipeline::{self, CaptureRequest, ShortlistOptions};
use crate::trace::{self, ServeOptions, TraceClient, TraceControl, TraceRegistry, TraceSettings, TracerCommand};

#[derive(Debug, Parser)]
#[command(name = "statecap", version, about = "Capture, package and restore the state of a running computation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Run the tracing service on a local socket.
    Serve(ServeArgs),
    /// Talk to a running tracing service.
    #[command(subcommand)]
    Trace(TraceCmd),
    /// Parse a trace log into accesses, or a filtered shortlist.
    Parse(ParseArgs),
    /// Build an archive from a shortlist.
    Package(PackageArgs),
    /// Parse, filter and package in one step.
    Capture(CaptureArgs),
    /// Put archived files back and emit library pins.
    Restore(RestoreArgs),
    /// Check an archive's checksums and manifest.
    Verify(VerifyArgs),
    /// Measure tracing overhead.
    Bench(BenchArgs),
    #[command(name = crate::BUILTIN_TRACER_SUBCOMMAND, hide = true)]
    Tracer {
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        args: Vec<String>,
    },
    #[command(name = crate::BENCH_WORKER_SUBCOMMAND, hide = true)]
    BenchWorker {
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        args: Vec<String>,
    },
}

#[derive(Debug, Args)]
pub struct SocketArg {
    /// Service socket [env: STATECAP_SOCKET]
    #[arg(long)]
    pub socket: Option<PathBuf>,
}

impl SocketArg {
    fn path(&self) -> PathBuf {
        self.socket.clone().unwrap_or_else(trace::socket_path_from_env)
    }
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub socket: SocketArg,
    #[arg(long, default_value = trace::DEFAULT_LOG_DIR)]
    pub log_dir: PathBuf,
    /// Tracer executable; strace-compatible. Defaults to strace on PATH, else the built-in tracer.
    #[arg(long)]
    pub tracer: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum TraceCmd {
    /// Start tracing a process.
    Start {
        #[command(flatten)]
        socket: SocketArg,
        #[arg(long)]
        pid: u32,
        #[arg(long)]
        label: Option<String>,
    },
    /// Stop tracing a process.
    Stop {
        #[command(flatten)]
        socket: SocketArg,
        #[arg(long)]
        pid: u32,
    },
    /// List sessions.
    Status {
        #[command(flatten)]
        socket: SocketArg,
        #[arg(long)]
        pid: Option<u32>,
    },
}

#[derive(Debug, Args)]
pub struct ShortlistArgs {
    /// JSON rule file; user rules run before the defaults.
    #[arg(long)]
    pub filter_config: Option<PathBuf>,
    /// Ship only files that were read.
    #[arg(long)]
    pub reads_only: bool,
}

#[derive(Debug, Args)]
pub struct ParseArgs {
    pub log: PathBuf,
    /// Working directory of the traced process.
    #[arg(long)]
    pub cwd: String,
    /// Emit the filtered shortlist instead of raw accesses.
    #[arg(long)]
    pub shortlist: bool,
    #[command(flatten)]
    pub filter: ShortlistArgs,
    /// Notebook file, excluded from the shortlist.
    #[arg(long)]
    pub notebook: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PackageArgs {
    /// Shortlist JSON, as written by `parse --shortlist`.
    #[arg(long)]
    pub deps: Option<PathBuf>,
    /// Library manifest, `{"name": "version"}`.
    #[arg(long)]
    pub libs: Option<PathBuf>,
    #[arg(long)]
    pub session: Option<PathBuf>,
    #[arg(long)]
    pub notebook: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CaptureArgs {
    pub log: PathBuf,
    #[arg(long)]
    pub cwd: String,
    #[command(flatten)]
    pub filter: ShortlistArgs,
    #[arg(long)]
    pub libs: Option<PathBuf>,
    #[arg(long)]
    pub session: Option<PathBuf>,
    #[arg(long)]
    pub notebook: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RestoreArgs {
    pub archive: PathBuf,
    /// Prefix every restored path with this directory.
    #[arg(long)]
    pub dest_root: Option<PathBuf>,
    #[arg(long)]
    pub overwrite: bool,
    /// Where to write `name==version` pins.
    #[arg(long)]
    pub requirements: Option<PathBuf>,
    /// Installer command; `{requirements}` is replaced by the pins file.
    #[arg(long)]
    pub install_cmd: Option<String>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    pub archive: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Repeat for several workloads; defaults to all in suite mode.
    #[arg(long, value_parser = parse_workload)]
    pub workload: Vec<Workload>,
    /// Bytes per worker (e.g. 1MiB) or counter limit. Repeatable in suite mode.
    #[arg(long, value_parser = bench::parse_size)]
    pub size: Vec<u64>,
    /// Counter limit for cpu-parallel in suite mode.
    #[arg(long, value_parser = bench::parse_size, default_value_t = bench::DEFAULT_CPU_LIMIT)]
    pub cpu_limit: u64,
    #[arg(long)]
    pub workers: Option<u32>,
    #[arg(long, default_value_t = 5)]
    pub reps: u32,
    #[arg(long, value_enum, default_value_t = OnOff::Off)]
    pub trace: OnOff,
    #[arg(long, default_value_t = bench::DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long)]
    pub scratch_dir: Option<PathBuf>,
    /// Run every workload and size untraced and traced.
    #[arg(long)]
    pub suite: bool,
    #[command(flatten)]
    pub socket: SocketArg,
    /// Trace in-process, writing logs here, instead of using the service.
    #[arg(long)]
    pub log_dir: Option<PathBuf>,
    /// CSV output; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_workload(s: &str) -> Result<Workload, String> {
    s.parse()
}

/// A failure with a stable code, printed as `error: <code>: <message>`.
#[derive(Debug)]
pub struct CliError {
    pub code: String,
    pub message: String,
}

impl CliError {
    fn new(code: impl Into<String>, message: impl ToString) -> Self {
        CliError {
            code: code.into(),
            message: message.to_string(),
        }
    }
}

macro_rules! coded {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::new(e.code(), &e)
            }
        }
    )*};
}
coded!(
    trace::TraceError,
    archive::ArchiveError,
    pipeline::PipelineError,
    bench::BenchError,
    crate::filter::FilterError
);

fn io_err(context: &str) -> impl Fn(io::Error) -> CliError + '_ {
    move |e| CliError::new("io", format!("{context}: {e}"))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => fs::write(p, text).map_err(io_err(&p.display().to_string())),
        None => {
            let mut stdout = io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(io_err("stdout"))
        }
    }
}

fn emit_json<T: serde::Serialize>(out: Option<&Path>, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::new("internal", e))?;
    text.push('\n');
    emit(out, &text)
}

fn tracing_disabled_warning(what: &str) {
    eprintln!("warning: ENABLE_TRACE=false; {what} does nothing");
}

static STOP: AtomicBool = AtomicBool::new(false);

extern "C" fn on_stop_signal(_: libc::c_int) {
    STOP.store(true, Ordering::SeqCst);
}

fn cmd_serve(a: &ServeArgs) -> Result<(), CliError> {
    let tracer = match &a.tracer {
        Some(p) => TracerCommand::strace(p),
        None => TracerCommand::detect(crate::locate_statecap_exe().as_deref())
            .ok_or_else(|| CliError::new("tracer_failed", "no tracer found (strace or statecap)"))?,
    };
    let settings = TraceSettings::new(&a.log_dir, tracer);
    if !settings.enabled {
        log::warn!("ENABLE_TRACE=false; start_trace requests will be refused");
    }
    unsafe {
        libc::signal(libc::SIGTERM, on_stop_signal as *const () as libc::sighandler_t);
        libc::signal(libc::SIGINT, on_stop_signal as *const () as libc::sighandler_t);
    }
    let shutdown = Arc::new(AtomicBool::new(false));
    let relay = Arc::clone(&shutdown);
    std::thread::spawn(move || loop {
        if STOP.load(Ordering::SeqCst) {
            relay.store(true, Ordering::SeqCst);
            break;
        }
        std::thread::sleep(Duration::from_millis(50));
    });
    let socket = a.socket.path();
    eprintln!("statecap: serving on {}", socket.display());
    trace::serve(&socket, settings, &ServeOptions::default(), shutdown)?;
    Ok(())
}

fn cmd_trace(c: &TraceCmd) -> Result<(), CliError> {
    if !trace::tracing_enabled_from_env() {
        tracing_disabled_warning("trace");
        return Ok(());
    }
    match c {
        TraceCmd::Start { socket, pid, label } => {
            let body = TraceClient::connect(&socket.path())?.request(&trace::TraceRequest::start(*pid, label.as_deref()))?;
            emit_json(None, &body)
        }
        TraceCmd::Stop { socket, pid } => {
            let body = TraceClient::connect(&socket.path())?.request(&trace::TraceRequest::stop(*pid))?;
            emit_json(None, &body)
        }
        TraceCmd::Status { socket, pid } => {
            let sessions = TraceClient::connect(&socket.path())?.status(*pid)?;
            emit_json(None, &sessions)
        }
    }
}

fn cmd_parse(a: &ParseArgs) -> Result<(), CliError> {
    if a.shortlist {
        let opts = ShortlistOptions {
            filter_config: a.filter.filter_config.as_deref(),
            notebook: a.notebook.as_deref(),
            reads_only: a.filter.reads_only,
        };
        let deps = pipeline::shortlist_log(&a.log, &a.cwd, &opts)?;
        emit_json(a.out.as_deref(), &deps)
    } else {
        let parsed = crate::parser::parse_log_with_diagnostics(&a.log, &a.cwd)
            .map_err(|e| CliError::new("io", e))?;
        if parsed.diagnostics.total() > 0 {
            eprintln!(
                "warning: {} orphaned resumed, {} dangling unfinished, {} malformed lines",
                parsed.diagnostics.orphaned_resumed, parsed.diagnostics.dangling_unfinished, parsed.diagnostics.malformed
            );
        }
        emit_json(a.out.as_deref(), &parsed.accesses)
    }
}

fn read_deps(path: &Path) -> Result<Vec<FileDependency>, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(&path.display().to_string()))?;
    serde_json::from_str(&text).map_err(|e| CliError::new("invalid_input", format!("{}: {e}", path.display())))
}

fn cmd_package(a: &PackageArgs) -> Result<(), CliError> {
    let deps = a.deps.as_deref().map(read_deps).transpose()?.unwrap_or_default();
    let libs: Vec<LibraryDependency> = a.libs.as_deref().map(pipeline::load_libraries).transpose()?.unwrap_or_default();
    let session = a.session.as_deref().map(pipeline::load_session).transpose()?;
    let input = PackageInput {
        deps: &deps,
        libs: &libs,
        session_blob: session.as_deref(),
        notebook_path: a.notebook.as_deref(),
    };
    let manifest = archive::package(&input, &a.out)?;
    emit_json(None, &manifest)
}

fn cmd_capture(a: &CaptureArgs) -> Result<(), CliError> {
    let req = CaptureRequest {
        log_path: &a.log,
        cwd: &a.cwd,
        filter_config: a.filter.filter_config.as_deref(),
        libs_json: a.libs.as_deref(),
        session_bin: a.session.as_deref(),
        notebook: a.notebook.as_deref(),
        reads_only: a.filter.reads_only,
    };
    let manifest = pipeline::capture_pipeline(&req, &a.out)?;
    emit_json(None, &manifest)
}

fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

fn cmd_restore(a: &RestoreArgs) -> Result<(), CliError> {
    let mut report = archive::restore_files(&a.archive, a.dest_root.as_deref(), a.overwrite)?;
    let requirements = match (&a.requirements, &a.install_cmd) {
        (Some(p), _) => Some(p.clone()),
        (None, Some(_)) => Some(std::env::temp_dir().join(format!("statecap-requirements-{}.txt", std::process::id()))),
        (None, None) => None,
    };
    if let Some(req) = &requirements {
        archive::emit_requirements(&a.archive, req)?;
        report.requirements_path = Some(req.clone());
    }
    for (path, reason) in &report.skipped {
        eprintln!("warning: skipped {}: {reason}", path.display());
    }
    emit_json(None, &report)?;
    if let (Some(cmd), Some(req)) = (&a.install_cmd, &requirements) {
        let line = cmd.replace("{requirements}", &shell_quote(&req.to_string_lossy()));
        let status = Command::new("sh")
            .arg("-c")
            .arg(&line)
            .status()
            .map_err(io_err("cannot run installer"))?;
        if !status.success() {
            return Err(CliError::new("install_failed", format!("`{line}` exited with {status}")));
        }
    }
    Ok(())
}

fn cmd_verify(a: &VerifyArgs) -> Result<(), CliError> {
    let report = archive::verify(&a.archive);
    emit_json(None, &report)?;
    if report.is_ok() {
        Ok(())
    } else {
        let failed = report.entries.iter().filter(|e| e.status != archive::EntryStatus::Pass).count();
        Err(CliError::new(
            "verification_failed",
            format!("{failed} bad entries, {} manifest issues", report.manifest_issues.len()),
        ))
    }
}

fn bench_tracer(a: &BenchArgs) -> Result<Box<dyn TraceControl>, CliError> {
    match &a.log_dir {
        Some(dir) => {
            let tracer = TracerCommand::detect(crate::locate_statecap_exe().as_deref())
                .ok_or_else(|| CliError::new("tracer_failed", "no tracer found (strace or statecap)"))?;
            Ok(Box::new(Arc::new(TraceRegistry::new(TraceSettings::new(dir, tracer)))))
        }
        None => Ok(Box::new(TraceClient::connect(&a.socket.path())?)),
    }
}

fn cmd_bench(a: &BenchArgs) -> Result<(), CliError> {
    let traced = a.trace == OnOff::On || a.suite;
    if traced && !trace::tracing_enabled_from_env() {
        tracing_disabled_warning("bench --trace on");
        return Ok(());
    }
    let scratch = a.scratch_dir.clone().unwrap_or_else(std::env::temp_dir);
    let csv_out = a.out.clone();
    if a.suite {
        let mut suite = SuiteConfig::desk_scale(&scratch);
        if !a.workload.is_empty() {
            suite.workloads = a.workload.clone();
        }
        if !a.size.is_empty() {
            suite.io_sizes = a.size.clone();
        }
        suite.cpu_sizes = vec![a.cpu_limit];
        suite.workers = a.workers.unwrap_or(suite.workers);
        suite.reps = a.reps;
        suite.seed = a.seed;
        let mut tracer = bench_tracer(a)?;
        let (path, _tmp) = match &csv_out {
            Some(p) => (p.clone(), None),
            None => {
                let t = tempfile_path(&scratch);
                (t.clone(), Some(RemoveOnDrop(t)))
            }
        };
        let summary = bench::run_suite(&suite, tracer.as_mut(), &path)?;
        if csv_out.is_none() {
            emit(None, &fs::read_to_string(&path).map_err(io_err("csv"))?)?;
        }
        eprintln!("suite finished in {:.1}s", summary.elapsed_s);
        return Ok(());
    }

    let [workload] = a.workload[..] else {
        return Err(usage("bench needs exactly one --workload unless --suite is given"));
    };
    let [size] = a.size[..] else {
        return Err(usage("bench needs exactly one --size unless --suite is given"));
    };
    let mut config = BenchConfig::new(workload, size, &scratch);
    if let Some(w) = a.workers {
        config.workers = w;
    }
    config.reps = a.reps;
    config.seed = a.seed;
    let rows = if traced {
        let mut tracer = bench_tracer(a)?;
        let on = BenchConfig { trace: true, ..config.clone() };
        let (untraced, result) = bench::run_paired(&config, &on, tracer.as_mut())?;
        let report = bench::compare(&result, &untraced)?;
        vec![suite_row(&untraced, 1.0, 1.0), suite_row(&result, report.cpu_ratio, report.wall_ratio)]
    } else {
        vec![suite_row(&bench::run_workload(&config, None)?, 1.0, 1.0)]
    };
    let mut text = format!("{}\n", bench::CSV_HEADER);
    for r in rows {
        text.push_str(&r.to_csv());
        text.push('\n');
    }
    emit(csv_out.as_deref(), &text)
}

fn suite_row(r: &bench::BenchResult, cpu_ratio: f64, wall_ratio: f64) -> bench::SuiteRow {
    bench::SuiteRow {
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

fn tempfile_path(dir: &Path) -> PathBuf {
    dir.join(format!("statecap-suite-{}.csv", uuid::Uuid::new_v4().simple()))
}

struct RemoveOnDrop(PathBuf);

impl Drop for RemoveOnDrop {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

fn usage(msg: &str) -> CliError {
    CliError::new("usage", msg)
}

/// Runs a parsed command.
pub fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Cmd::Serve(a) => cmd_serve(&a)?,
        Cmd::Trace(c) => cmd_trace(&c)?,
        Cmd::Parse(a) => cmd_parse(&a)?,
        Cmd::Package(a) => cmd_package(&a)?,
        Cmd::Capture(a) => cmd_capture(&a)?,
        Cmd::Restore(a) => cmd_restore(&a)?,
        Cmd::Verify(a) => cmd_verify(&a)?,
        Cmd::Bench(a) => cmd_bench(&a)?,
        Cmd::Tracer { args } => {
            return Ok(match trace::ptrace::TracerArgs::parse(&args) {
                Ok(t) => trace::ptrace::run(&t),
                Err(e) => {
                    eprintln!("statecap tracer: {e}");
                    2
                }
            })
        }
        Cmd::BenchWorker { args } => return Ok(bench::worker_main(&args)),
    }
    Ok(0)
}

/// Parses `args` (without the program name) and runs them; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv = std::iter::once(std::ffi::OsString::from("statecap")).chain(args.into_iter().map(Into::into));
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) if e.code == "usage" => {
            eprintln!("error: usage: {}", e.message);
            2
        }
        Err(e) => {
            eprintln!("error: {}: {}", e.code, e.message);
            1
        }
    }
}

pub fn main_from_env() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    main_with_args(std::env::args_os().skip(1))
}

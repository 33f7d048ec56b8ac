//! The workload process. The harness spawns `statecap __bench-worker`, lets
//! the tracer attach, then sends `go`.

use std::fs::File;
use std::hint::black_box;
use std::io::{BufRead, Read, Write};
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Workload;

/// What the worker prints on stdout when it finishes.
#[derive(Debug, serde::Serialize, serde::Deserialize)]
pub(crate) struct WorkerReport {
    /// Bytes written or iterations, summed over all workers.
    pub work: u64,
    /// CPU seconds this process used before `go`, subtracted by the harness.
    pub startup_cpu_s: f64,
}

pub(crate) fn scratch_file(dir: &Path, worker: u32) -> PathBuf {
    dir.join(format!("bench-{worker:02}.bin"))
}

fn self_cpu_s() -> f64 {
    let mut ru: libc::rusage = unsafe { std::mem::zeroed() };
    unsafe { libc::getrusage(libc::RUSAGE_SELF, &mut ru) };
    super::timeval_s(ru.ru_utime) + super::timeval_s(ru.ru_stime)
}

fn do_work(workload: Workload, size: u64, seed: u64, dir: &Path, worker: u32) -> std::io::Result<u64> {
    match workload {
        Workload::IoSingle | Workload::IoParallel => {
            let mut buf = vec![0u8; size as usize];
            ChaCha8Rng::seed_from_u64(seed.wrapping_add(u64::from(worker))).fill_bytes(&mut buf);
            let mut f = File::create(scratch_file(dir, worker))?;
            f.write_all(&buf)?;
            Ok(buf.len() as u64)
        }
        Workload::CpuParallel => {
            let mut counter = 0u64;
            while counter < size {
                counter = black_box(counter + 1);
            }
            Ok(counter)
        }
    }
}

/// Entry point for `statecap __bench-worker <workload> <size> <workers> <seed> <dir>`.
pub fn worker_main(args: &[String]) -> i32 {
    match run(args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("bench worker: {e}");
            1
        }
    }
}

fn run(args: &[String]) -> Result<(), String> {
    let [workload, size, workers, seed, dir] = args else {
        return Err("usage: <workload> <size> <workers> <seed> <dir>".into());
    };
    let workload: Workload = workload.parse()?;
    let size: u64 = size.parse().map_err(|e| format!("size: {e}"))?;
    let workers: u32 = workers.parse().map_err(|e| format!("workers: {e}"))?;
    let seed: u64 = seed.parse().map_err(|e| format!("seed: {e}"))?;
    let dir = PathBuf::from(dir);

    let mut go = String::new();
    std::io::stdin().lock().read_line(&mut go).map_err(|e| e.to_string())?;
    if go.trim() != "go" {
        return Err(format!("expected go, got {go:?}"));
    }
    let startup_cpu_s = self_cpu_s();

    let mut fds = [0i32; 2];
    if unsafe { libc::pipe(fds.as_mut_ptr()) } != 0 {
        return Err(std::io::Error::last_os_error().to_string());
    }
    let [read_fd, write_fd] = fds;
    let mut children = Vec::new();
    for worker in 0..workers {
        match unsafe { libc::fork() } {
            -1 => return Err(std::io::Error::last_os_error().to_string()),
            0 => {
                let code = match do_work(workload, size, seed, &dir, worker) {
                    Ok(n) => {
                        let bytes = n.to_ne_bytes();
                        let w = unsafe { libc::write(write_fd, bytes.as_ptr().cast(), bytes.len()) };
                        if w == bytes.len() as isize { 0 } else { 1 }
                    }
                    Err(_) => 1,
                };
                unsafe { libc::_exit(code) };
            }
            pid => children.push(pid),
        }
    }
    unsafe { libc::close(write_fd) };

    let mut failed = 0;
    for pid in children {
        let mut status = 0;
        unsafe { libc::waitpid(pid, &mut status, 0) };
        if !(libc::WIFEXITED(status) && libc::WEXITSTATUS(status) == 0) {
            failed += 1;
        }
    }
    let mut raw = Vec::new();
    let mut pipe = unsafe { <File as std::os::fd::FromRawFd>::from_raw_fd(read_fd) };
    pipe.read_to_end(&mut raw).map_err(|e| e.to_string())?;
    if failed > 0 {
        return Err(format!("{failed} of {workers} workers failed"));
    }
    let work = raw
        .chunks_exact(8)
        .map(|c| u64::from_ne_bytes(c.try_into().unwrap()))
        .sum();
    let report = WorkerReport { work, startup_cpu_s };
    println!("{}", serde_json::to_string(&report).expect("report serializes"));
    Ok(())
}

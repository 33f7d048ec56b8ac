//! Hand-checked expectations for `tests/fixtures/corpus.log`, captured from
//! four parallel `cat` processes under the built-in tracer, with one resumed
//! line from an attach in the middle of a call.

use statecap::parser::{self, LineKind, OpenFlag, SyscallResult};

pub const CORPUS: &str = include_str!("../fixtures/corpus.log");

use LineKind::*;

/// (kind, pid, timestamp, syscall) per line.
pub const LINES: &[(LineKind, u32, f64, Option<&str>)] = &[
    (Resumed, 8303, 1792126223.910001, Some("openat")),
    (Complete, 8303, 1792126223.917246, Some("openat")),
    (Complete, 8308, 1792126224.2182, Some("openat")),
    (Complete, 8308, 1792126224.218325, Some("openat")),
    (Unfinished, 8308, 1792126224.218387, Some("openat")),
    (Unfinished, 8310, 1792126224.218495, Some("openat")),
    (Unfinished, 8309, 1792126224.218502, Some("openat")),
    (Resumed, 8308, 1792126224.218506, Some("openat")),
    (Resumed, 8310, 1792126224.218537, Some("openat")),
    (Complete, 8311, 1792126224.218621, Some("openat")),
    (Resumed, 8309, 1792126224.218906, Some("openat")),
    (Complete, 8311, 1792126224.221013, Some("openat")),
    (Complete, 8311, 1792126224.221246, Some("openat")),
    (Complete, 8311, 1792126224.221376, Some("openat")),
    (Unfinished, 8310, 1792126224.221595, Some("openat")),
    (Exit, 8311, 1792126224.221661, None),
    (Resumed, 8310, 1792126224.221668, Some("openat")),
    (Signal, 8303, 1792126224.221714, None),
    (Unfinished, 8308, 1792126224.222567, Some("openat")),
    (Exit, 8309, 1792126224.22261, None),
    (Resumed, 8308, 1792126224.222616, Some("openat")),
    (Signal, 8312, 1792126224.223167, None),
    (Exit, 8312, 1792126224.223199, None),
    (Complete, 8303, 1792126224.223252, Some("openat")),
    (Exit, 8303, 1792126224.223328, None),
];

const R: &[OpenFlag] = &[OpenFlag::RdOnly];
const RC: &[OpenFlag] = &[OpenFlag::RdOnly, OpenFlag::CloExec];
const WCT: &[OpenFlag] = &[OpenFlag::WrOnly, OpenFlag::Creat, OpenFlag::Trunc];

/// Stitched events in emission order: (pid, path, flags, result).
pub fn events() -> Vec<(u32, &'static str, &'static [OpenFlag], SyscallResult)> {
    let ok = SyscallResult::Ok;
    vec![
        (8303, "fifo", R, ok(3)),
        (8308, "/etc/ld.so.cache", RC, ok(3)),
        (8308, "/dev/null", R, ok(0)),
        (8308, "out1.txt", WCT, ok(3)),
        (8310, "out3.txt", WCT, ok(3)),
        (8311, "out4.txt", WCT, ok(3)),
        (8309, "out2.txt", WCT, ok(3)),
        (8311, "a.txt", R, ok(3)),
        (8311, "d/x.csv", R, ok(3)),
        (8311, "missing.txt", R, SyscallResult::Err("ENOENT".into())),
        (8310, "d/x.csv", R, ok(3)),
        (8308, "a.txt", R, ok(3)),
        (8303, "/tmp/corp/d", R, ok(3)),
    ]
}

/// Compares the parser against the tables; returns one message per mismatch.
pub fn check() -> Vec<String> {
    let mut problems = Vec::new();
    let lines: Vec<&str> = CORPUS.lines().collect();
    if lines.len() != LINES.len() {
        problems.push(format!("corpus has {} lines, table has {}", lines.len(), LINES.len()));
    }
    for (i, (text, want)) in lines.iter().zip(LINES).enumerate() {
        let got = parser::parse_line(text);
        let (kind, pid, ts, syscall) = *want;
        if got.kind != kind || got.pid != pid || got.timestamp_s != Some(ts) || got.syscall.as_deref() != syscall {
            problems.push(format!(
                "line {}: got {:?} pid={} ts={:?} syscall={:?}",
                i + 1,
                got.kind,
                got.pid,
                got.timestamp_s,
                got.syscall
            ));
        }
        if (got.kind == Complete) != got.event.is_some() {
            problems.push(format!("line {}: event presence does not match kind", i + 1));
        }
    }
    let (stitched, diag) = parser::stitch(lines.iter().map(|l| parser::parse_line(l)));
    let want = events();
    if stitched.len() != want.len() {
        problems.push(format!("stitched {} events, expected {}", stitched.len(), want.len()));
    }
    for (i, (ev, (pid, path, flags, result))) in stitched.iter().zip(&want).enumerate() {
        let got_flags: Vec<OpenFlag> = ev.flags.iter().cloned().collect();
        let mut want_flags = flags.to_vec();
        want_flags.sort();
        if ev.pid != *pid || ev.path != *path || got_flags != want_flags || ev.result != *result || ev.syscall != "openat" {
            problems.push(format!("event {}: got {:?}", i + 1, ev));
        }
    }
    if (diag.orphaned_resumed, diag.dangling_unfinished, diag.malformed) != (1, 0, 0) {
        problems.push(format!("diagnostics {diag:?}"));
    }
    problems
}

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::line::{parse_call, LineKind, RawTraceLine, SyscallEvent, OPEN_FAMILY};

/// Lines that could not become events, by cause.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StitchDiagnostics {
    /// Resumed line with no pending Unfinished line for that pid.
    pub orphaned_resumed: usize,
    /// Unfinished line never resumed (end of stream, process exit, or a
    /// second Unfinished for the same pid).
    pub dangling_unfinished: usize,
    /// A joined pair whose text did not parse as an open-family call.
    pub malformed: usize,
}

impl StitchDiagnostics {
    pub fn total(&self) -> usize {
        self.orphaned_resumed + self.dangling_unfinished + self.malformed
    }
}

struct Pending {
    timestamp_s: f64,
    syscall: String,
    head: String,
}

/// Incremental joiner for `<unfinished ...>` / `<... resumed>` pairs.
#[derive(Default)]
pub struct Stitcher {
    pending: HashMap<u32, Pending>,
    diagnostics: StitchDiagnostics,
}

impl Stitcher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, line: RawTraceLine) -> Option<SyscallEvent> {
        match line.kind {
            LineKind::Complete => line.event,
            LineKind::Unfinished => {
                let pending = Pending {
                    timestamp_s: line.timestamp_s.unwrap_or(0.0),
                    syscall: line.syscall.unwrap_or_default(),
                    head: line.payload,
                };
                if self.pending.insert(line.pid, pending).is_some() {
                    self.diagnostics.dangling_unfinished += 1;
                }
                None
            }
            LineKind::Resumed => {
                let name = line.syscall.unwrap_or_default();
                match self.pending.remove(&line.pid) {
                    Some(p) if p.syscall == name => {
                        if !OPEN_FAMILY.contains(&name.as_str()) {
                            return None;
                        }
                        let joined = format!("{}{}", p.head.trim_end(), line.payload.trim_start());
                        let event = parse_call(line.pid, p.timestamp_s, &joined);
                        if event.is_none() {
                            self.diagnostics.malformed += 1;
                        }
                        event
                    }
                    Some(_) => {
                        // a different syscall resumed: the pending one was lost
                        self.diagnostics.dangling_unfinished += 1;
                        self.diagnostics.orphaned_resumed += 1;
                        None
                    }
                    None => {
                        self.diagnostics.orphaned_resumed += 1;
                        None
                    }
                }
            }
            LineKind::Exit => {
                if self.pending.remove(&line.pid).is_some() {
                    self.diagnostics.dangling_unfinished += 1;
                }
                None
            }
            LineKind::Signal | LineKind::Other => None,
        }
    }

    pub fn finish(mut self) -> StitchDiagnostics {
        self.diagnostics.dangling_unfinished += self.pending.len();
        self.diagnostics
    }
}

/// Joins split calls and drops non-event lines. Output keeps file order,
/// with a stitched call placed where its Resumed line was.
pub fn stitch<I>(lines: I) -> (Vec<SyscallEvent>, StitchDiagnostics)
where
    I: IntoIterator<Item = RawTraceLine>,
{
    let mut stitcher = Stitcher::new();
    let events = lines.into_iter().filter_map(|l| stitcher.push(l)).collect();
    (events, stitcher.finish())
}

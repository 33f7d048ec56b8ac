//! The portable state archive: UUID-named data files plus JSON metadata, all
//! at the root of a zip file.
//!
//! ```text
//! 3f2a…e1            data file, named by a random 128-bit id
//! files.json         {"<uuid>": {"path": "/abs/path", "size": N, "sha256": "…"}}
//! libraries.json     {"name": "version"}
//! session.bin        opaque session blob (optional)
//! <notebook>.ipynb   the notebook under its own base name (optional)
//! manifest.json      format version, timestamps and counts; written last
//! ```

mod package;
mod restore;
mod verify;

use std::collections::BTreeMap;
use std::io;
use std::path::PathBuf;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub use package::{package, PackageInput};
pub use restore::{emit_requirements, read_manifest, restore_files, ArchiveContents, RestoreReport};
pub use verify::{verify, EntryCheck, EntryStatus, VerificationReport};

pub const FORMAT_VERSION: u32 = 1;
pub const FILES_JSON: &str = "files.json";
pub const LIBRARIES_JSON: &str = "libraries.json";
pub const SESSION_BIN: &str = "session.bin";
pub const MANIFEST_JSON: &str = "manifest.json";

const RESERVED: &[&str] = &[FILES_JSON, LIBRARIES_JSON, SESSION_BIN, MANIFEST_JSON];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileMapEntry {
    pub uuid: String,
    pub original_path: String,
    pub size: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LibraryDependency {
    pub name: String,
    pub version: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchiveManifest {
    pub format_version: u32,
    pub created_at: DateTime<Utc>,
    pub notebook_name: Option<String>,
    pub has_session: bool,
    pub file_count: usize,
    pub library_count: usize,
}

/// Value side of `files.json`.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct FileRecord {
    path: String,
    size: u64,
    sha256: String,
}

type FileMap = BTreeMap<String, FileRecord>;
type LibraryMap = BTreeMap<String, String>;

#[derive(Debug, thiserror::Error)]
pub enum ArchiveError {
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
    #[error("cannot read dependency {path}: {source}")]
    UnreadableDependency {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("dependency listed twice: {0}")]
    DuplicateDependency(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("corrupt archive {archive}: {reason}")]
    Corrupt { archive: PathBuf, reason: String },
    #[error("archive format version {found} is newer than supported version {supported}")]
    UnsupportedVersion { found: u32, supported: u32 },
    #[error("checksum mismatch for entry {uuid} ({path})")]
    ChecksumMismatch { uuid: String, path: String },
}

impl ArchiveError {
    pub fn code(&self) -> &'static str {
        match self {
            ArchiveError::Io { .. } => "io",
            ArchiveError::UnreadableDependency { .. } => "unreadable_dependency",
            ArchiveError::DuplicateDependency(_) => "duplicate_dependency",
            ArchiveError::InvalidInput(_) => "invalid_input",
            ArchiveError::Corrupt { .. } => "corrupt_archive",
            ArchiveError::UnsupportedVersion { .. } => "unsupported_version",
            ArchiveError::ChecksumMismatch { .. } => "checksum_mismatch",
        }
    }

    fn io(context: impl Into<String>) -> impl FnOnce(io::Error) -> ArchiveError {
        let context = context.into();
        move |source| ArchiveError::Io { context, source }
    }
}

pub fn is_data_entry_name(name: &str) -> bool {
    name.len() == 32 && name.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

pub fn new_entry_id() -> String {
    uuid::Uuid::new_v4().simple().to_string()
}

#[cfg(test)]
mod tests;

use std::collections::BTreeSet;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::package::copy_hashed;
use super::restore::{open_zip, read_contents};
use super::*;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "reason")]
pub enum EntryStatus {
    Pass,
    Fail(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryCheck {
    pub uuid: String,
    pub original_path: String,
    #[serde(flatten)]
    pub status: EntryStatus,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub entries: Vec<EntryCheck>,
    pub manifest_issues: Vec<String>,
}

impl VerificationReport {
    pub fn is_ok(&self) -> bool {
        self.manifest_issues.is_empty() && self.entries.iter().all(|e| e.status == EntryStatus::Pass)
    }
}

/// Checks every data entry against its recorded checksum and the manifest
/// counts against the archive. Problems are reported, not raised.
pub fn verify(archive_path: &Path) -> VerificationReport {
    let mut report = VerificationReport::default();
    let mut zip = match open_zip(archive_path) {
        Ok(z) => z,
        Err(e) => {
            report.manifest_issues.push(e.to_string());
            return report;
        }
    };
    let contents = match read_contents(&mut zip, archive_path) {
        Ok(c) => c,
        Err(e) => {
            report.manifest_issues.push(e.to_string());
            return report;
        }
    };
    let names: BTreeSet<String> = zip.file_names().map(str::to_string).collect();

    for entry in &contents.files {
        let status = match zip.by_name(&entry.uuid) {
            Err(_) => EntryStatus::Fail("missing data entry".into()),
            Ok(data) => match copy_hashed(data, io::sink()) {
                Err(e) => EntryStatus::Fail(format!("unreadable: {e}")),
                Ok((size, _)) if size != entry.size => {
                    EntryStatus::Fail(format!("size {size} != recorded {}", entry.size))
                }
                Ok((_, sha)) if sha != entry.sha256 => EntryStatus::Fail("sha256 mismatch".into()),
                Ok(_) => EntryStatus::Pass,
            },
        };
        if let EntryStatus::Fail(reason) = &status {
            if reason == "missing data entry" {
                report
                    .manifest_issues
                    .push(format!("{FILES_JSON} lists {} but the archive has no such entry", entry.uuid));
            }
        }
        report.entries.push(EntryCheck {
            uuid: entry.uuid.clone(),
            original_path: entry.original_path.clone(),
            status,
        });
    }

    let mapped: BTreeSet<&str> = contents.files.iter().map(|f| f.uuid.as_str()).collect();
    for name in names.iter().filter(|n| is_data_entry_name(n)) {
        if !mapped.contains(name.as_str()) {
            report
                .manifest_issues
                .push(format!("data entry {name} is not listed in {FILES_JSON}"));
        }
    }
    let m = &contents.manifest;
    if m.file_count != contents.files.len() {
        report.manifest_issues.push(format!(
            "manifest file_count {} but {FILES_JSON} has {}",
            m.file_count,
            contents.files.len()
        ));
    }
    if m.library_count != contents.libraries.len() {
        report.manifest_issues.push(format!(
            "manifest library_count {} but {LIBRARIES_JSON} has {}",
            m.library_count,
            contents.libraries.len()
        ));
    }
    if m.has_session != names.contains(SESSION_BIN) {
        report
            .manifest_issues
            .push(format!("manifest has_session={} disagrees with archive", m.has_session));
    }
    if let Some(nb) = &m.notebook_name {
        if !names.contains(nb) {
            report.manifest_issues.push(format!("notebook {nb} listed but missing"));
        }
    }
    report
}

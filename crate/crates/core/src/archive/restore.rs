use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use zip::ZipArchive;

use super::package::copy_hashed;
use super::*;
use crate::parser::normalize_absolute;

/// Parsed metadata of an archive.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArchiveContents {
    pub manifest: ArchiveManifest,
    /// Sorted by uuid.
    pub files: Vec<FileMapEntry>,
    /// Sorted by name.
    pub libraries: Vec<LibraryDependency>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RestoreReport {
    pub placed: Vec<PathBuf>,
    pub skipped: Vec<(PathBuf, String)>,
    pub requirements_path: Option<PathBuf>,
}

pub(super) fn open_zip(archive_path: &Path) -> Result<ZipArchive<File>, ArchiveError> {
    let file = File::open(archive_path)
        .map_err(ArchiveError::io(format!("cannot open archive {}", archive_path.display())))?;
    ZipArchive::new(file).map_err(|e| corrupt(archive_path, e.to_string()))
}

pub(super) fn corrupt(archive: &Path, reason: impl Into<String>) -> ArchiveError {
    ArchiveError::Corrupt {
        archive: archive.to_path_buf(),
        reason: reason.into(),
    }
}

fn read_entry(zip: &mut ZipArchive<File>, archive: &Path, name: &str) -> Result<Vec<u8>, ArchiveError> {
    let mut entry = zip
        .by_name(name)
        .map_err(|_| corrupt(archive, format!("missing {name}")))?;
    let mut buf = Vec::new();
    entry
        .read_to_end(&mut buf)
        .map_err(|e| corrupt(archive, format!("cannot read {name}: {e}")))?;
    Ok(buf)
}

fn read_json<T: serde::de::DeserializeOwned>(
    zip: &mut ZipArchive<File>,
    archive: &Path,
    name: &str,
) -> Result<T, ArchiveError> {
    let bytes = read_entry(zip, archive, name)?;
    serde_json::from_slice(&bytes).map_err(|e| corrupt(archive, format!("bad {name}: {e}")))
}

pub(super) fn read_contents(zip: &mut ZipArchive<File>, archive: &Path) -> Result<ArchiveContents, ArchiveError> {
    // the version gate runs before the other documents are interpreted
    let manifest_value: serde_json::Value = read_json(zip, archive, MANIFEST_JSON)?;
    let found = manifest_value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| corrupt(archive, "manifest has no format_version"))?;
    if found > u64::from(FORMAT_VERSION) {
        return Err(ArchiveError::UnsupportedVersion {
            found: u32::try_from(found).unwrap_or(u32::MAX),
            supported: FORMAT_VERSION,
        });
    }
    let manifest: ArchiveManifest =
        serde_json::from_value(manifest_value).map_err(|e| corrupt(archive, format!("bad {MANIFEST_JSON}: {e}")))?;
    let file_map: FileMap = read_json(zip, archive, FILES_JSON)?;
    let lib_map: LibraryMap = read_json(zip, archive, LIBRARIES_JSON)?;
    let files = file_map
        .into_iter()
        .map(|(uuid, rec)| {
            if !is_data_entry_name(&uuid) {
                return Err(corrupt(archive, format!("{FILES_JSON} key {uuid:?} is not a 32-hex id")));
            }
            Ok(FileMapEntry {
                uuid,
                original_path: rec.path,
                size: rec.size,
                sha256: rec.sha256,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let libraries = lib_map
        .into_iter()
        .map(|(name, version)| LibraryDependency { name, version })
        .collect();
    Ok(ArchiveContents {
        manifest,
        files,
        libraries,
    })
}

/// Reads archive metadata without extracting data entries.
pub fn read_manifest(archive_path: &Path) -> Result<ArchiveContents, ArchiveError> {
    let mut zip = open_zip(archive_path)?;
    read_contents(&mut zip, archive_path)
}

/// Where an archived file lands: its original path, optionally re-rooted.
pub(super) fn destination(original: &str, dest_root: Option<&Path>) -> Option<PathBuf> {
    let normal = normalize_absolute(original)?;
    if normal != original || normal == "/" {
        return None;
    }
    Some(match dest_root {
        Some(root) => root.join(&normal[1..]),
        None => PathBuf::from(normal),
    })
}

/// Copies each data entry back to its recorded location, verifying sha256.
pub fn restore_files(
    archive_path: &Path,
    dest_root: Option<&Path>,
    overwrite: bool,
) -> Result<RestoreReport, ArchiveError> {
    let mut zip = open_zip(archive_path)?;
    let contents = read_contents(&mut zip, archive_path)?;
    let mut report = RestoreReport::default();

    let mut entries = contents.files;
    entries.sort_by(|a, b| a.original_path.cmp(&b.original_path));
    for entry in entries {
        let dest = destination(&entry.original_path, dest_root).ok_or_else(|| {
            corrupt(
                archive_path,
                format!("entry {} has unusable path {:?}", entry.uuid, entry.original_path),
            )
        })?;
        if !overwrite && fs::symlink_metadata(&dest).is_ok() {
            report.skipped.push((dest, "exists".into()));
            continue;
        }
        place(&mut zip, archive_path, &entry, &dest)?;
        report.placed.push(dest);
    }
    Ok(report)
}

fn place(zip: &mut ZipArchive<File>, archive: &Path, entry: &FileMapEntry, dest: &Path) -> Result<(), ArchiveError> {
    let parent = dest.parent().unwrap_or(Path::new("/"));
    fs::create_dir_all(parent).map_err(ArchiveError::io(format!("cannot create {}", parent.display())))?;
    let tmp = parent.join(format!(".{}.restore", entry.uuid));
    let src = zip
        .by_name(&entry.uuid)
        .map_err(|_| corrupt(archive, format!("missing data entry {}", entry.uuid)))?;
    let out = OpenOptions::new()
        .write(true)
        .create(true)
        .truncate(true)
        .open(&tmp)
        .map_err(ArchiveError::io(format!("cannot write {}", dest.display())))?;
    let copied = copy_hashed(src, &out);
    drop(out);
    let fail = |e| {
        let _ = fs::remove_file(&tmp);
        e
    };
    let (size, sha) = match copied {
        Ok(v) => v,
        // zip reports CRC failures as InvalidData
        Err(e) if e.kind() == io::ErrorKind::InvalidData => {
            return Err(fail(ArchiveError::ChecksumMismatch {
                uuid: entry.uuid.clone(),
                path: entry.original_path.clone(),
            }))
        }
        Err(e) => return Err(fail(ArchiveError::io(format!("cannot write {}", dest.display()))(e))),
    };
    if size != entry.size || sha != entry.sha256 {
        return Err(fail(ArchiveError::ChecksumMismatch {
            uuid: entry.uuid.clone(),
            path: entry.original_path.clone(),
        }));
    }
    fs::rename(&tmp, dest).map_err(|e| fail(ArchiveError::io(format!("cannot write {}", dest.display()))(e)))
}

/// Writes `name==version` pins sorted by name, one per line.
pub fn emit_requirements(archive_path: &Path, out_path: &Path) -> Result<usize, ArchiveError> {
    let contents = read_manifest(archive_path)?;
    let mut text = String::new();
    for lib in &contents.libraries {
        text.push_str(&lib.name);
        text.push_str("==");
        text.push_str(&lib.version);
        text.push('\n');
    }
    let mut f = File::create(out_path).map_err(ArchiveError::io(format!("cannot write {}", out_path.display())))?;
    f.write_all(text.as_bytes())
        .map_err(ArchiveError::io(format!("cannot write {}", out_path.display())))?;
    Ok(contents.libraries.len())
}

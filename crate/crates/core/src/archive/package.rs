use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use chrono::Utc;
use sha2::{Digest, Sha256};
use zip::write::SimpleFileOptions;
use zip::{CompressionMethod, ZipWriter};

use super::*;
use crate::filter::FileDependency;

#[derive(Clone, Debug, Default)]
pub struct PackageInput<'a> {
    pub deps: &'a [FileDependency],
    pub libs: &'a [LibraryDependency],
    pub session_blob: Option<&'a [u8]>,
    pub notebook_path: Option<&'a Path>,
}

/// Copies `reader` into `writer` while hashing; returns (bytes, hex sha256).
pub(super) fn copy_hashed<R: Read, W: Write>(mut reader: R, mut writer: W) -> io::Result<(u64, String)> {
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 64 * 1024];
    let mut total = 0u64;
    loop {
        let n = match reader.read(&mut buf) {
            Ok(0) => break,
            Ok(n) => n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        };
        hasher.update(&buf[..n]);
        writer.write_all(&buf[..n])?;
        total += n as u64;
    }
    Ok((total, hex::encode(hasher.finalize())))
}

fn options() -> SimpleFileOptions {
    SimpleFileOptions::default()
        .compression_method(CompressionMethod::Deflated)
        .large_file(true)
}

fn validate(input: &PackageInput<'_>) -> Result<Option<String>, ArchiveError> {
    let mut seen = HashSet::new();
    for dep in input.deps {
        if !dep.absolute_path.starts_with('/') {
            return Err(ArchiveError::InvalidInput(format!(
                "dependency path is not absolute: {}",
                dep.absolute_path
            )));
        }
        if !seen.insert(dep.absolute_path.as_str()) {
            return Err(ArchiveError::DuplicateDependency(dep.absolute_path.clone()));
        }
    }
    let mut names = HashSet::new();
    for lib in input.libs {
        if lib.name.is_empty() {
            return Err(ArchiveError::InvalidInput("library with empty name".into()));
        }
        if !names.insert(lib.name.as_str()) {
            return Err(ArchiveError::InvalidInput(format!("library listed twice: {}", lib.name)));
        }
    }
    let Some(nb) = input.notebook_path else {
        return Ok(None);
    };
    let name = nb
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| ArchiveError::InvalidInput(format!("bad notebook path {}", nb.display())))?
        .to_string();
    if RESERVED.contains(&name.as_str()) || is_data_entry_name(&name) {
        return Err(ArchiveError::InvalidInput(format!(
            "notebook name {name} collides with an archive entry name"
        )));
    }
    Ok(Some(name))
}

/// Writes the state archive to `out_path`. The zip is built next to the
/// destination and renamed into place once complete.
pub fn package(input: &PackageInput<'_>, out_path: &Path) -> Result<ArchiveManifest, ArchiveError> {
    let notebook_name = validate(input)?;
    let tmp_path = {
        let mut name = out_path.file_name().unwrap_or_default().to_os_string();
        name.push(".partial");
        out_path.with_file_name(name)
    };
    let result = write_archive(input, notebook_name, &tmp_path);
    match result {
        Ok(manifest) => {
            fs::rename(&tmp_path, out_path)
                .map_err(ArchiveError::io(format!("cannot move archive to {}", out_path.display())))?;
            Ok(manifest)
        }
        Err(e) => {
            let _ = fs::remove_file(&tmp_path);
            Err(e)
        }
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("metadata serializes");
    s.push('\n');
    s
}

fn write_archive(
    input: &PackageInput<'_>,
    notebook_name: Option<String>,
    tmp_path: &Path,
) -> Result<ArchiveManifest, ArchiveError> {
    let write_err = |source: io::Error| ArchiveError::Io {
        context: format!("writing {}", tmp_path.display()),
        source,
    };
    let zip_err = |e: zip::result::ZipError| write_err(io::Error::other(e));
    let file = File::create(tmp_path).map_err(write_err)?;
    let mut zip = ZipWriter::new(BufWriter::new(file));

    let mut files = FileMap::new();
    for dep in input.deps {
        let unreadable = |source| ArchiveError::UnreadableDependency {
            path: dep.absolute_path.clone(),
            source,
        };
        let src = File::open(&dep.absolute_path).map_err(unreadable)?;
        let mut id = new_entry_id();
        while files.contains_key(&id) {
            id = new_entry_id();
        }
        zip.start_file(id.as_str(), options()).map_err(zip_err)?;
        // read and write failures are not distinguishable here; the source is
        // the usual culprit
        let (size, sha256) = copy_hashed(src, &mut zip).map_err(unreadable)?;
        files.insert(
            id,
            FileRecord {
                path: dep.absolute_path.clone(),
                size,
                sha256,
            },
        );
    }

    let libs: LibraryMap = input
        .libs
        .iter()
        .map(|l| (l.name.clone(), l.version.clone()))
        .collect();

    let mut put = |name: &str, bytes: &[u8]| -> Result<(), ArchiveError> {
        zip.start_file(name, options()).map_err(zip_err)?;
        zip.write_all(bytes).map_err(write_err)
    };
    put(FILES_JSON, to_json(&files).as_bytes())?;
    put(LIBRARIES_JSON, to_json(&libs).as_bytes())?;
    if let Some(blob) = input.session_blob {
        put(SESSION_BIN, blob)?;
    }
    if let (Some(nb), Some(name)) = (input.notebook_path, &notebook_name) {
        let bytes = fs::read(nb).map_err(ArchiveError::io(format!("cannot read notebook {}", nb.display())))?;
        put(name, &bytes)?;
    }
    let manifest = ArchiveManifest {
        format_version: FORMAT_VERSION,
        created_at: Utc::now(),
        notebook_name,
        has_session: input.session_blob.is_some(),
        file_count: files.len(),
        library_count: libs.len(),
    };
    put(MANIFEST_JSON, to_json(&manifest).as_bytes())?;
    let mut inner = zip.finish().map_err(zip_err)?;
    inner.flush().map_err(write_err)?;
    Ok(manifest)
}

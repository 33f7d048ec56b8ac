use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};
use tempfile::TempDir;
use zip::write::SimpleFileOptions;

use super::*;
use crate::filter::{AccessMode, FileDependency};

fn dep(path: &Path) -> FileDependency {
    FileDependency {
        absolute_path: path.to_str().unwrap().to_string(),
        mode: AccessMode::Read,
        first_seen: 0,
        event_count: 1,
    }
}

fn lib(name: &str, version: &str) -> LibraryDependency {
    LibraryDependency {
        name: name.into(),
        version: version.into(),
    }
}

fn entry_names(archive: &Path) -> Vec<String> {
    let zip = zip::ZipArchive::new(fs::File::open(archive).unwrap()).unwrap();
    let mut names: Vec<String> = zip.file_names().map(str::to_string).collect();
    names.sort();
    names
}

#[test]
fn single_dep_layout() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("in.csv");
    fs::write(&input, b"a,b\n1,2\n").unwrap();
    let out = dir.path().join("state.zip");
    let deps = [dep(&input)];
    let libs = [lib("pandas", "1.4.2")];
    let manifest = package(
        &PackageInput {
            deps: &deps,
            libs: &libs,
            ..Default::default()
        },
        &out,
    )
    .unwrap();
    assert_eq!((manifest.file_count, manifest.library_count), (1, 1));
    assert!(!manifest.has_session);

    let names = entry_names(&out);
    assert_eq!(names.len(), 4);
    let data: Vec<&String> = names.iter().filter(|n| is_data_entry_name(n)).collect();
    assert_eq!(data.len(), 1);
    assert_ne!(data[0], "in.csv");
    for meta in [FILES_JSON, LIBRARIES_JSON, MANIFEST_JSON] {
        assert!(names.iter().any(|n| n == meta));
    }

    let contents = read_manifest(&out).unwrap();
    assert_eq!(contents.files.len(), 1);
    assert_eq!(&contents.files[0].uuid, data[0]);
    assert_eq!(contents.files[0].original_path, input.to_str().unwrap());
    assert_eq!(contents.files[0].size, 8);
    assert_eq!(contents.files[0].sha256, hex::encode(Sha256::digest(b"a,b\n1,2\n")));
    assert_eq!(contents.libraries, libs);
}

#[test]
fn empty_bundle() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("empty.zip");
    let m = package(&PackageInput::default(), &out).unwrap();
    assert_eq!((m.file_count, m.library_count), (0, 0));
    let mut zip = zip::ZipArchive::new(fs::File::open(&out).unwrap()).unwrap();
    for name in [FILES_JSON, LIBRARIES_JSON] {
        let mut s = String::new();
        zip.by_name(name).unwrap().read_to_string(&mut s).unwrap();
        assert_eq!(s.trim(), "{}");
    }
    assert!(verify(&out).is_ok());
}

#[test]
fn session_and_notebook_entries() {
    let dir = TempDir::new().unwrap();
    let nb = dir.path().join("analysis.ipynb");
    fs::write(&nb, "{}").unwrap();
    let out = dir.path().join("s.zip");
    let m = package(
        &PackageInput {
            session_blob: Some(b"\x80\x04blob"),
            notebook_path: Some(&nb),
            ..Default::default()
        },
        &out,
    )
    .unwrap();
    assert!(m.has_session);
    assert_eq!(m.notebook_name.as_deref(), Some("analysis.ipynb"));
    let names = entry_names(&out);
    assert!(names.contains(&SESSION_BIN.to_string()));
    assert!(names.contains(&"analysis.ipynb".to_string()));
    assert!(verify(&out).is_ok());
}

#[test]
fn package_errors() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("x.zip");
    let missing = dir.path().join("missing.csv");
    let err = package(
        &PackageInput {
            deps: &[dep(&missing)],
            ..Default::default()
        },
        &out,
    )
    .unwrap_err();
    assert!(matches!(err, ArchiveError::UnreadableDependency { .. }));
    assert!(err.to_string().contains("missing.csv"));
    assert!(!out.exists());
    assert!(!dir.path().join("x.zip.partial").exists());

    let a = dir.path().join("a");
    fs::write(&a, "1").unwrap();
    let err = package(
        &PackageInput {
            deps: &[dep(&a), dep(&a)],
            ..Default::default()
        },
        &out,
    )
    .unwrap_err();
    assert!(matches!(err, ArchiveError::DuplicateDependency(_)));
}

#[test]
fn restore_round_trip_and_skip() {
    let dir = TempDir::new().unwrap();
    let src = dir.path().join("data/in.csv");
    fs::create_dir_all(src.parent().unwrap()).unwrap();
    fs::write(&src, b"payload").unwrap();
    let out = dir.path().join("s.zip");
    package(
        &PackageInput {
            deps: &[dep(&src)],
            ..Default::default()
        },
        &out,
    )
    .unwrap();
    let root = dir.path().join("r");
    let report = restore_files(&out, Some(&root), false).unwrap();
    let expected = root.join(src.strip_prefix("/").unwrap());
    assert_eq!(report.placed, std::slice::from_ref(&expected));
    assert_eq!(fs::read(&expected).unwrap(), b"payload");

    let again = restore_files(&out, Some(&root), false).unwrap();
    assert!(again.placed.is_empty());
    assert_eq!(again.skipped, [(expected.clone(), "exists".to_string())]);

    fs::write(&expected, b"changed").unwrap();
    let forced = restore_files(&out, Some(&root), true).unwrap();
    assert_eq!(forced.placed, std::slice::from_ref(&expected));
    assert_eq!(fs::read(&expected).unwrap(), b"payload");
}

#[test]
fn dest_root_remap() {
    assert_eq!(
        restore::destination("/data/x.csv", Some(Path::new("/tmp/r"))).unwrap(),
        Path::new("/tmp/r/data/x.csv")
    );
    assert_eq!(restore::destination("/data/x.csv", None).unwrap(), Path::new("/data/x.csv"));
    assert!(restore::destination("/data/../etc/passwd", Some(Path::new("/tmp/r"))).is_none());
    assert!(restore::destination("relative", None).is_none());
}

#[test]
fn requirements_sorted_and_deterministic() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("s.zip");
    package(
        &PackageInput {
            libs: &[lib("pandas", "1.4.2"), lib("numpy", "1.21.0")],
            ..Default::default()
        },
        &out,
    )
    .unwrap();
    let req = dir.path().join("requirements.txt");
    assert_eq!(emit_requirements(&out, &req).unwrap(), 2);
    let first = fs::read(&req).unwrap();
    assert_eq!(first, b"numpy==1.21.0\npandas==1.4.2\n");
    emit_requirements(&out, &req).unwrap();
    assert_eq!(fs::read(&req).unwrap(), first);

    let empty = dir.path().join("e.zip");
    package(&PackageInput::default(), &empty).unwrap();
    assert_eq!(emit_requirements(&empty, &req).unwrap(), 0);
    assert!(fs::read(&req).unwrap().is_empty());
}

/// Rewrites `src` into `dst`, letting `edit` change or drop entries.
fn rewrite(src: &Path, dst: &Path, edit: impl Fn(&str, Vec<u8>) -> Option<Vec<u8>>) {
    let mut zin = zip::ZipArchive::new(fs::File::open(src).unwrap()).unwrap();
    let mut zout = zip::ZipWriter::new(fs::File::create(dst).unwrap());
    for i in 0..zin.len() {
        let mut e = zin.by_index(i).unwrap();
        let name = e.name().to_string();
        let mut buf = Vec::new();
        e.read_to_end(&mut buf).unwrap();
        if let Some(bytes) = edit(&name, buf) {
            zout.start_file(name, SimpleFileOptions::default()).unwrap();
            zout.write_all(&bytes).unwrap();
        }
    }
    zout.finish().unwrap();
}

fn two_file_archive(dir: &Path) -> std::path::PathBuf {
    let a = dir.join("a.bin");
    let b = dir.join("b.bin");
    fs::write(&a, vec![1u8; 1000]).unwrap();
    fs::write(&b, vec![2u8; 1000]).unwrap();
    let out = dir.join("two.zip");
    package(
        &PackageInput {
            deps: &[dep(&a), dep(&b)],
            ..Default::default()
        },
        &out,
    )
    .unwrap();
    out
}

#[test]
fn verify_flags_flipped_entry_only() {
    let dir = TempDir::new().unwrap();
    let out = two_file_archive(dir.path());
    let report = verify(&out);
    assert!(report.is_ok());
    assert_eq!(report.entries.len(), 2);

    let target = read_manifest(&out).unwrap().files[0].uuid.clone();
    let bad = dir.path().join("bad.zip");
    rewrite(&out, &bad, |name, mut bytes| {
        if name == target {
            bytes[10] ^= 0x01;
        }
        Some(bytes)
    });
    let report = verify(&bad);
    assert!(!report.is_ok());
    for e in &report.entries {
        if e.uuid == target {
            assert!(matches!(e.status, EntryStatus::Fail(_)));
        } else {
            assert_eq!(e.status, EntryStatus::Pass);
        }
    }
    assert!(report.manifest_issues.is_empty());

    let err = restore_files(&bad, Some(&dir.path().join("r")), false).unwrap_err();
    assert!(matches!(err, ArchiveError::ChecksumMismatch { ref uuid, .. } if *uuid == target));
}

#[test]
fn verify_flags_missing_data_entry() {
    let dir = TempDir::new().unwrap();
    let out = two_file_archive(dir.path());
    let target = read_manifest(&out).unwrap().files[1].uuid.clone();
    let bad = dir.path().join("missing.zip");
    rewrite(&out, &bad, |name, bytes| (name != target).then_some(bytes));
    let report = verify(&bad);
    assert!(!report.manifest_issues.is_empty());
    assert!(report.manifest_issues.iter().any(|i| i.contains(&target)));
}

#[test]
fn read_manifest_errors() {
    let dir = TempDir::new().unwrap();
    let out = two_file_archive(dir.path());

    let bytes = fs::read(&out).unwrap();
    let truncated = dir.path().join("trunc.zip");
    fs::write(&truncated, &bytes[..bytes.len() / 2]).unwrap();
    assert!(matches!(read_manifest(&truncated), Err(ArchiveError::Corrupt { .. })));

    let future = dir.path().join("future.zip");
    rewrite(&out, &future, |name, bytes| {
        if name == MANIFEST_JSON {
            let mut v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
            v["format_version"] = 99.into();
            Some(serde_json::to_vec(&v).unwrap())
        } else {
            Some(bytes)
        }
    });
    assert!(matches!(
        read_manifest(&future),
        Err(ArchiveError::UnsupportedVersion { found: 99, .. })
    ));

    for missing in [FILES_JSON, LIBRARIES_JSON, MANIFEST_JSON] {
        let p = dir.path().join(format!("no-{missing}.zip"));
        rewrite(&out, &p, |name, bytes| (name != missing).then_some(bytes));
        assert!(matches!(read_manifest(&p), Err(ArchiveError::Corrupt { .. })), "{missing}");
    }
}

//! Build an archive from a few files, inspect it, verify it, and restore it
//! under a different root.
//!
//!     cargo run --example package_and_restore

use std::fs;

use statecap::archive::{self, LibraryDependency, PackageInput};
use statecap::filter::{AccessMode, FileDependency};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let work = tempfile::tempdir()?;
    let src = work.path().join("project");
    fs::create_dir_all(src.join("data"))?;
    fs::write(src.join("data/iris.csv"), "sepal,petal\n5.1,1.4\n")?;
    fs::write(src.join("weights.bin"), vec![7u8; 4096])?;
    let notebook = src.join("analysis.ipynb");
    fs::write(&notebook, r#"{"cells": [], "nbformat": 4}"#)?;

    let deps: Vec<FileDependency> = [("data/iris.csv", AccessMode::Read), ("weights.bin", AccessMode::Written)]
        .iter()
        .enumerate()
        .map(|(i, (rel, mode))| FileDependency {
            absolute_path: src.join(rel).to_string_lossy().into_owned(),
            mode: *mode,
            first_seen: i,
            event_count: 1,
        })
        .collect();
    let libs = vec![
        LibraryDependency { name: "numpy".into(), version: "1.26.4".into() },
        LibraryDependency { name: "pandas".into(), version: "2.2.1".into() },
    ];

    let zip = work.path().join("state.zip");
    let manifest = archive::package(
        &PackageInput {
            deps: &deps,
            libs: &libs,
            session_blob: Some(b"opaque session bytes"),
            notebook_path: Some(&notebook),
        },
        &zip,
    )?;
    println!("packaged {} files, {} libraries -> {}", manifest.file_count, manifest.library_count, zip.display());

    let contents = archive::read_manifest(&zip)?;
    for f in &contents.files {
        println!("  {} {:>6} bytes  {}", f.uuid, f.size, f.original_path);
    }
    println!("verify ok: {}", archive::verify(&zip).is_ok());

    let dest = work.path().join("elsewhere");
    let report = archive::restore_files(&zip, Some(&dest), false)?;
    for p in &report.placed {
        println!("restored {}", p.display());
    }
    let pins = work.path().join("requirements.txt");
    archive::emit_requirements(&zip, &pins)?;
    print!("{}", fs::read_to_string(&pins)?);

    // a second restore leaves existing files alone
    let again = archive::restore_files(&zip, Some(&dest), false)?;
    println!("second restore skipped {} files", again.skipped.len());
    Ok(())
}

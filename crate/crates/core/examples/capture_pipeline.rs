//! One-shot capture: trace log, library list, session blob and notebook in,
//! archive out. The same flow as `statecap capture`.
//!
//!     cargo run --example capture_pipeline

use std::fs;

use statecap::archive;
use statecap::pipeline::{capture_pipeline, CaptureRequest};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let work = tempfile::tempdir()?;
    let root = work.path();
    fs::create_dir_all(root.join("data"))?;
    fs::write(root.join("data/sales.csv"), "region,total\nnorth,10\n")?;
    fs::write(root.join("report.html"), "<p>done</p>")?;
    fs::write(root.join("sales.ipynb"), r#"{"cells": []}"#)?;
    fs::write(root.join("libs.json"), r#"{"pandas": "2.2.1", "matplotlib": "3.8.3"}"#)?;
    fs::write(root.join("session.bin"), b"session")?;

    let log = format!(
        "900  10.000001 openat(AT_FDCWD, \"sales.ipynb\", O_RDONLY) = 3\n\
         900  10.000002 openat(AT_FDCWD, \"data/sales.csv\", O_RDONLY) = 4\n\
         900  10.000003 openat(AT_FDCWD, \"/usr/lib/python3.11/csv.py\", O_RDONLY) = 5\n\
         900  10.000004 openat(AT_FDCWD, \"{0}/.ipynb_checkpoints/sales-checkpoint.ipynb\", O_WRONLY|O_CREAT|O_TRUNC, 0644) = 6\n\
         900  10.000005 openat(AT_FDCWD, \"report.html\", O_WRONLY|O_CREAT|O_TRUNC, 0666) = 7\n",
        root.display()
    );
    let log_path = root.join("trace.log");
    fs::write(&log_path, log)?;

    let cwd = root.to_str().unwrap();
    let libs = root.join("libs.json");
    let session = root.join("session.bin");
    let notebook = root.join("sales.ipynb");
    let req = CaptureRequest {
        libs_json: Some(&libs),
        session_bin: Some(&session),
        notebook: Some(&notebook),
        ..CaptureRequest::new(&log_path, cwd)
    };
    let out = root.join("sales-state.zip");
    let manifest = capture_pipeline(&req, &out)?;
    println!("{}", serde_json::to_string_pretty(&manifest)?);

    for f in archive::read_manifest(&out)?.files {
        println!("{}  {}", f.uuid, f.original_path);
    }

    // a broken rule file fails in the filter stage
    let rules = root.join("rules.json");
    fs::write(&rules, "not json")?;
    let err = capture_pipeline(&CaptureRequest { filter_config: Some(&rules), ..req.clone() }, &out).unwrap_err();
    println!("failed in {}: {err}", err.stage());
    Ok(())
}

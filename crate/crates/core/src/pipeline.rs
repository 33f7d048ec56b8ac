//! The one-shot capture flow: trace log to shortlist to archive.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::archive::{self, ArchiveError, ArchiveManifest, LibraryDependency, PackageInput};
use crate::filter::{self, AccessMode, FileDependency, FilterConfig, FilterError};
use crate::parser::{self, LogReadError};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("parse stage: {0}")]
    Parse(#[from] LogReadError),
    #[error("filter stage: {0}")]
    Filter(#[from] FilterError),
    #[error("libraries stage: {path}: {message}")]
    Libraries { path: PathBuf, message: String },
    #[error("session stage: cannot read {path}: {source}")]
    Session {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("package stage: {0}")]
    Package(#[from] ArchiveError),
}

impl PipelineError {
    pub fn stage(&self) -> &'static str {
        match self {
            PipelineError::Parse(_) => "parse",
            PipelineError::Filter(_) => "filter",
            PipelineError::Libraries { .. } => "libraries",
            PipelineError::Session { .. } => "session",
            PipelineError::Package(_) => "package",
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            PipelineError::Parse(_) | PipelineError::Session { .. } => "io",
            PipelineError::Filter(e) => e.code(),
            PipelineError::Libraries { .. } => "invalid_input",
            PipelineError::Package(e) => e.code(),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct ShortlistOptions<'a> {
    pub filter_config: Option<&'a Path>,
    /// Shipped separately, so never listed as a data dependency.
    pub notebook: Option<&'a Path>,
    /// Drop files the computation only wrote.
    pub reads_only: bool,
}

/// Parses a trace log and filters it down to the files worth shipping.
pub fn shortlist_log(log_path: &Path, cwd: &str, opts: &ShortlistOptions<'_>) -> Result<Vec<FileDependency>, PipelineError> {
    let accesses = parser::parse_log(log_path, cwd)?;
    let mut config = match opts.filter_config {
        Some(p) => filter::load_rules(Some(p))?,
        None => FilterConfig::defaults(),
    };
    let own = [Some(log_path), opts.notebook];
    for path in own.into_iter().flatten() {
        if let Some(abs) = absolute(path, cwd) {
            config.exclude_path_first(&abs, "capture-artifact");
        }
    }
    let mut deps = filter::shortlist(&accesses, &config);
    // a directory opened without O_DIRECTORY (e.g. `exec 3< dir`) is not data
    deps.retain(|d| !Path::new(&d.absolute_path).is_dir());
    if opts.reads_only {
        deps.retain(|d| d.mode.is_read());
    }
    Ok(deps)
}

fn absolute(path: &Path, cwd: &str) -> Option<String> {
    let joined = if path.is_absolute() {
        path.to_path_buf()
    } else {
        Path::new(cwd).join(path)
    };
    parser::normalize_absolute(joined.to_str()?)
}

/// Reads a `{"name": "version"}` library manifest.
pub fn load_libraries(path: &Path) -> Result<Vec<LibraryDependency>, PipelineError> {
    let err = |message: String| PipelineError::Libraries {
        path: path.to_path_buf(),
        message,
    };
    let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let map: BTreeMap<String, String> = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
    Ok(map
        .into_iter()
        .map(|(name, version)| LibraryDependency { name, version })
        .collect())
}

pub fn load_session(path: &Path) -> Result<Vec<u8>, PipelineError> {
    fs::read(path).map_err(|source| PipelineError::Session {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Clone, Debug)]
pub struct CaptureRequest<'a> {
    pub log_path: &'a Path,
    pub cwd: &'a str,
    pub filter_config: Option<&'a Path>,
    pub libs_json: Option<&'a Path>,
    pub session_bin: Option<&'a Path>,
    pub notebook: Option<&'a Path>,
    pub reads_only: bool,
}

impl<'a> CaptureRequest<'a> {
    pub fn new(log_path: &'a Path, cwd: &'a str) -> Self {
        CaptureRequest {
            log_path,
            cwd,
            filter_config: None,
            libs_json: None,
            session_bin: None,
            notebook: None,
            reads_only: false,
        }
    }
}

/// parse, shortlist and package in one call.
pub fn capture_pipeline(req: &CaptureRequest<'_>, out_zip: &Path) -> Result<ArchiveManifest, PipelineError> {
    let deps = shortlist_log(
        req.log_path,
        req.cwd,
        &ShortlistOptions {
            filter_config: req.filter_config,
            notebook: req.notebook,
            reads_only: req.reads_only,
        },
    )?;
    let libs = req.libs_json.map(load_libraries).transpose()?.unwrap_or_default();
    let session = req.session_bin.map(load_session).transpose()?;
    let input = PackageInput {
        deps: &deps,
        libs: &libs,
        session_blob: session.as_deref(),
        notebook_path: req.notebook,
    };
    Ok(archive::package(&input, out_zip)?)
}

/// Shortlist entries as `(path, mode)` pairs, handy for comparisons.
pub fn dependency_set(deps: &[FileDependency]) -> std::collections::BTreeSet<(String, AccessMode)> {
    deps.iter().map(|d| (d.absolute_path.clone(), d.mode)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn empty_log_gives_empty_archive() {
        let tmp = tempfile::tempdir().unwrap();
        let log = write(tmp.path(), "t.log", "");
        let out = tmp.path().join("a.zip");
        let req = CaptureRequest::new(&log, "/");
        let m = capture_pipeline(&req, &out).unwrap();
        assert_eq!(m.file_count, 0);
        assert!(archive::verify(&out).is_ok());
    }

    #[test]
    fn bad_filter_names_the_stage() {
        let tmp = tempfile::tempdir().unwrap();
        let log = write(tmp.path(), "t.log", "");
        let rules = write(tmp.path(), "rules.json", "{not json");
        let req = CaptureRequest {
            filter_config: Some(&rules),
            ..CaptureRequest::new(&log, "/")
        };
        let e = capture_pipeline(&req, &tmp.path().join("a.zip")).unwrap_err();
        assert_eq!(e.stage(), "filter");
        assert_eq!(e.code(), "filter_config");
        assert!(e.to_string().starts_with("filter stage"));
    }

    #[test]
    fn notebook_and_log_are_not_dependencies() {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().to_str().unwrap();
        let nb = write(tmp.path(), "nb.ipynb", "{}");
        let data = write(tmp.path(), "data.csv", "1,2\n");
        let out_file = tmp.path().join("out.txt");
        let log_body = format!(
            "1  1.0 openat(AT_FDCWD, \"{}\", O_RDONLY) = 3\n\
             1  1.1 openat(AT_FDCWD, \"nb.ipynb\", O_RDONLY) = 4\n\
             1  1.2 openat(AT_FDCWD, \"t.log\", O_RDONLY) = 5\n\
             1  1.3 openat(AT_FDCWD, \"{}\", O_WRONLY|O_CREAT|O_TRUNC, 0666) = 6\n\
             1  1.4 openat(AT_FDCWD, \".\", O_RDONLY) = 7\n",
            data.display(),
            out_file.display()
        );
        fs::write(&out_file, "x").unwrap();
        let log = write(tmp.path(), "t.log", &log_body);
        let opts = ShortlistOptions {
            notebook: Some(&nb),
            ..Default::default()
        };
        let deps = shortlist_log(&log, root, &opts).unwrap();
        let paths: Vec<_> = deps.iter().map(|d| d.absolute_path.as_str()).collect();
        assert_eq!(paths, vec![data.to_str().unwrap(), out_file.to_str().unwrap()]);

        let reads = shortlist_log(&log, root, &ShortlistOptions { reads_only: true, ..opts }).unwrap();
        assert_eq!(reads.len(), 1);
    }

    #[test]
    fn libraries_manifest() {
        let tmp = tempfile::tempdir().unwrap();
        let p = write(tmp.path(), "libs.json", r#"{"pandas":"2.1.0","numpy":"1.26.0"}"#);
        let libs = load_libraries(&p).unwrap();
        assert_eq!(libs[0].name, "numpy");
        let bad = write(tmp.path(), "bad.json", "[1]");
        assert_eq!(load_libraries(&bad).unwrap_err().stage(), "libraries");
    }
}

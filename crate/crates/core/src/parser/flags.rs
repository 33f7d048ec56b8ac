use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// One symbolic open(2) flag as printed by the tracer.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", from = "String")]
pub enum OpenFlag {
    RdOnly,
    WrOnly,
    RdWr,
    Creat,
    Excl,
    NoCtty,
    Trunc,
    Append,
    NonBlock,
    DSync,
    Async,
    Direct,
    LargeFile,
    Directory,
    NoFollow,
    NoAtime,
    CloExec,
    Sync,
    Path,
    TmpFile,
    /// Anything the table below does not know, kept verbatim (e.g. `0x200000`).
    Other(String),
}

const NAMED: &[(&str, OpenFlag)] = &[
    ("O_RDONLY", OpenFlag::RdOnly),
    ("O_WRONLY", OpenFlag::WrOnly),
    ("O_RDWR", OpenFlag::RdWr),
    ("O_CREAT", OpenFlag::Creat),
    ("O_EXCL", OpenFlag::Excl),
    ("O_NOCTTY", OpenFlag::NoCtty),
    ("O_TRUNC", OpenFlag::Trunc),
    ("O_APPEND", OpenFlag::Append),
    ("O_NONBLOCK", OpenFlag::NonBlock),
    ("O_DSYNC", OpenFlag::DSync),
    ("O_ASYNC", OpenFlag::Async),
    ("O_DIRECT", OpenFlag::Direct),
    ("O_LARGEFILE", OpenFlag::LargeFile),
    ("O_DIRECTORY", OpenFlag::Directory),
    ("O_NOFOLLOW", OpenFlag::NoFollow),
    ("O_NOATIME", OpenFlag::NoAtime),
    ("O_CLOEXEC", OpenFlag::CloExec),
    ("O_SYNC", OpenFlag::Sync),
    ("O_PATH", OpenFlag::Path),
    ("O_TMPFILE", OpenFlag::TmpFile),
];

impl OpenFlag {
    pub fn name(&self) -> &str {
        match self {
            OpenFlag::Other(s) => s,
            known => NAMED
                .iter()
                .find(|(_, f)| f == known)
                .map(|(n, _)| *n)
                .unwrap_or("?"),
        }
    }

    pub fn is_access_mode(&self) -> bool {
        matches!(self, OpenFlag::RdOnly | OpenFlag::WrOnly | OpenFlag::RdWr)
    }
}

impl fmt::Display for OpenFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl From<&str> for OpenFlag {
    fn from(s: &str) -> Self {
        let s = s.trim();
        // FASYNC is how older tracers spell O_ASYNC
        let s = if s == "FASYNC" { "O_ASYNC" } else { s };
        NAMED
            .iter()
            .find(|(n, _)| *n == s)
            .map(|(_, f)| f.clone())
            .unwrap_or_else(|| OpenFlag::Other(s.to_string()))
    }
}

impl From<String> for OpenFlag {
    fn from(s: String) -> Self {
        OpenFlag::from(s.as_str())
    }
}

impl From<OpenFlag> for String {
    fn from(f: OpenFlag) -> Self {
        f.name().to_string()
    }
}

/// The flag set of one open call. Always holds exactly one access mode.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "Vec<OpenFlag>", try_from = "Vec<OpenFlag>")]
pub struct OpenFlags(BTreeSet<OpenFlag>);

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("flag set must contain exactly one of O_RDONLY, O_WRONLY, O_RDWR (found {0})")]
pub struct AccessModeError(usize);

impl OpenFlags {
    pub fn new(flags: impl IntoIterator<Item = OpenFlag>) -> Result<Self, AccessModeError> {
        let set: BTreeSet<OpenFlag> = flags.into_iter().collect();
        let modes = set.iter().filter(|f| f.is_access_mode()).count();
        if modes != 1 {
            return Err(AccessModeError(modes));
        }
        Ok(OpenFlags(set))
    }

    pub fn read_only() -> Self {
        OpenFlags([OpenFlag::RdOnly].into_iter().collect())
    }

    pub fn write_only() -> Self {
        OpenFlags([OpenFlag::WrOnly].into_iter().collect())
    }

    pub fn contains(&self, flag: &OpenFlag) -> bool {
        self.0.contains(flag)
    }

    pub fn access_mode(&self) -> &OpenFlag {
        self.0
            .iter()
            .find(|f| f.is_access_mode())
            .expect("OpenFlags always carries an access mode")
    }

    /// True when the call can modify the file: any of WRONLY, RDWR, CREAT,
    /// TRUNC or APPEND.
    pub fn is_write(&self) -> bool {
        [
            OpenFlag::WrOnly,
            OpenFlag::RdWr,
            OpenFlag::Creat,
            OpenFlag::Trunc,
            OpenFlag::Append,
        ]
        .iter()
        .any(|f| self.0.contains(f))
    }

    pub fn iter(&self) -> impl Iterator<Item = &OpenFlag> {
        self.0.iter()
    }
}

impl From<OpenFlags> for Vec<OpenFlag> {
    fn from(f: OpenFlags) -> Self {
        f.0.into_iter().collect()
    }
}

impl TryFrom<Vec<OpenFlag>> for OpenFlags {
    type Error = AccessModeError;

    fn try_from(v: Vec<OpenFlag>) -> Result<Self, Self::Error> {
        OpenFlags::new(v)
    }
}

impl fmt::Display for OpenFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // access mode first, the way the tracer prints it
        write!(f, "{}", self.access_mode())?;
        for flag in self.0.iter().filter(|f| !f.is_access_mode()) {
            write!(f, "|{flag}")?;
        }
        Ok(())
    }
}

impl FromStr for OpenFlags {
    type Err = AccessModeError;

    /// Parses `O_WRONLY|O_CREAT|O_TRUNC`. A set without any access mode is
    /// read-only, since O_RDONLY is the zero value.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut set: BTreeSet<OpenFlag> = s
            .split('|')
            .map(str::trim)
            .filter(|p| !p.is_empty() && *p != "0")
            .map(OpenFlag::from)
            .collect();
        if !set.iter().any(OpenFlag::is_access_mode) {
            set.insert(OpenFlag::RdOnly);
        }
        OpenFlags::new(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_prints_in_tracer_order() {
        let f: OpenFlags = "O_WRONLY|O_CREAT|O_TRUNC".parse().unwrap();
        assert_eq!(f.access_mode(), &OpenFlag::WrOnly);
        assert!(f.contains(&OpenFlag::Trunc));
        assert!(f.is_write());
        assert_eq!(f.to_string(), "O_WRONLY|O_CREAT|O_TRUNC");
    }

    #[test]
    fn unknown_names_survive() {
        let f: OpenFlags = "O_RDONLY|0x200000".parse().unwrap();
        assert!(f.contains(&OpenFlag::Other("0x200000".into())));
        assert!(!f.is_write());
    }

    #[test]
    fn conflicting_modes_rejected() {
        assert!("O_RDONLY|O_WRONLY".parse::<OpenFlags>().is_err());
    }

    #[test]
    fn missing_mode_defaults_to_read() {
        let f: OpenFlags = "O_CLOEXEC".parse().unwrap();
        assert_eq!(f.access_mode(), &OpenFlag::RdOnly);
    }

    #[test]
    fn serde_uses_symbolic_names() {
        let f: OpenFlags = "O_RDWR|O_APPEND".parse().unwrap();
        let json = serde_json::to_string(&f).unwrap();
        assert_eq!(json, r#"["O_RDWR","O_APPEND"]"#);
        let back: OpenFlags = serde_json::from_str(&json).unwrap();
        assert_eq!(back, f);
        assert!(serde_json::from_str::<OpenFlags>(r#"["O_CREAT"]"#).is_err());
    }
}

//! Classify paths with the default rules, then add a user rule file on top.
//!
//!     cargo run --example filter_shortlist

use statecap::filter::{self, Decision, FilterConfig};
use statecap::parser;

const LOG: &str = r#"7  1.0 openat(AT_FDCWD, "/home/u/proj/data/train.csv", O_RDONLY) = 3
7  1.1 openat(AT_FDCWD, "/home/u/proj/__pycache__/util.cpython-311.pyc", O_RDONLY) = 4
7  1.2 openat(AT_FDCWD, "/usr/lib/python3.11/json/decoder.py", O_RDONLY) = 5
7  1.3 openat(AT_FDCWD, "/home/u/proj/out/metrics.json", O_WRONLY|O_CREAT|O_TRUNC, 0666) = 6
7  1.4 openat(AT_FDCWD, "/home/u/proj/data/train.csv", O_RDWR) = 7
7  1.5 openat(AT_FDCWD, "/home/u/proj/tmp/scratch.bin", O_WRONLY|O_CREAT, 0600) = 8
7  1.6 openat(AT_FDCWD, "/home/u/proj/data", O_RDONLY|O_DIRECTORY) = 9
7  1.7 openat(AT_FDCWD, "/etc/localtime", O_RDONLY) = 10
"#;

// user rules sort ahead of the defaults
const USER_RULES: &str = r#"[
  {"order": 1, "matcher": "path_prefix", "pattern": "/home/u/proj/tmp", "action": "exclude", "reason": "scratch"},
  {"order": 2, "matcher": "glob", "pattern": "/usr/lib/python3.11/json/**", "action": "include"}
]"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let accesses = parser::parse_reader(LOG.as_bytes(), "/")?.accesses;

    let defaults = FilterConfig::defaults();
    for p in ["/home/u/proj/notes.md", "/home/u/.cache/pip/wheels/x.whl", "/usr/lib/x86_64-linux-gnu/libz.so.1"] {
        match defaults.classify(p) {
            Decision::Include => println!("include  {p}"),
            Decision::Exclude(reason) => println!("exclude  {p}  ({reason})"),
        }
    }

    let with_defaults = filter::shortlist_with_tally(&accesses, &defaults);
    println!("\ndefault rules:");
    for dep in &with_defaults.dependencies {
        println!("  {:?} {} ({} events)", dep.mode, dep.absolute_path, dep.event_count);
    }
    println!("  tally: {:?}", with_defaults.tally);

    let dir = tempfile::tempdir()?;
    let rules = dir.path().join("rules.json");
    std::fs::write(&rules, USER_RULES)?;
    let custom = filter::load_rules(Some(&rules))?;
    println!("\nwith {}:", rules.display());
    for dep in filter::shortlist(&accesses, &custom) {
        println!("  {:?} {}", dep.mode, dep.absolute_path);
    }
    Ok(())
}

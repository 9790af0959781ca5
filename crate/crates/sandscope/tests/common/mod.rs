#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sandscope::{Pipeline, RunConfig};

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/synthetic")
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

pub fn fixture_config(out: &Path, threads: usize) -> RunConfig {
    let mut cfg = RunConfig::from_file(&fixture_dir().join("sandscope.toml")).unwrap();
    cfg.out_dir = out.to_path_buf();
    cfg.threads = Some(threads);
    cfg
}

/// Runs every stage on the committed fixture into `out`.
pub fn run_fixture(out: &Path, threads: usize) {
    Pipeline::new(fixture_config(out, threads)).unwrap().run_all().unwrap();
}

/// Relative path to file bytes for everything under `dir`, optionally
/// skipping the intermediate stage directory.
pub fn tree(dir: &Path, with_stages: bool) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, with_stages: bool, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            let rel = p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
            if p.is_dir() {
                if rel == "stages" && !with_stages {
                    continue;
                }
                walk(root, &p, with_stages, out);
            } else {
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, with_stages, &mut out);
    out
}

pub fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    rdr.records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect()
}

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_sandscope")
}

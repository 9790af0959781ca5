//! Run configuration: a TOML file plus command-line overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sandscope_core::analytics::DEFAULT_WINDOW_DAYS;
use sandscope_core::model::BlockRange;
use sandscope_core::synth::SynthConfig;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::io;
use crate::provider::ProviderConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub transactions: Option<PathBuf>,
    pub mempool: Option<PathBuf>,
    /// Offline label file; shorthand for `provider.fixture`.
    pub labels: Option<PathBuf>,
    pub forks: Option<PathBuf>,
    /// Month label to `[start_block, end_block]`, inline.
    pub ranges: BTreeMap<String, [u64; 2]>,
    /// Same mapping in a separate TOML file.
    pub ranges_file: Option<PathBuf>,
    pub window_days: u32,
    pub n_max: u32,
    pub top_k: usize,
    /// Exposure index whose cohort feeds the switcher loss comparison.
    pub comparison_n: u32,
    pub strict_visibility_tie: bool,
    pub out_dir: PathBuf,
    pub threads: Option<usize>,
    pub provider: ProviderConfig,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            transactions: None,
            mempool: None,
            labels: None,
            forks: None,
            ranges: BTreeMap::new(),
            ranges_file: None,
            window_days: DEFAULT_WINDOW_DAYS,
            n_max: 10,
            top_k: 10,
            comparison_n: 1,
            strict_visibility_tie: false,
            out_dir: PathBuf::from("out"),
            threads: None,
            provider: ProviderConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

fn rebase(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    /// Parses a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn from_file(path: &Path) -> Result<RunConfig, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.transactions,
            &mut cfg.mempool,
            &mut cfg.labels,
            &mut cfg.forks,
            &mut cfg.ranges_file,
            &mut cfg.provider.fixture,
            &mut cfg.provider.cache_path,
        ] {
            rebase(base, p);
        }
        if cfg.out_dir.is_relative() {
            cfg.out_dir = base.join(&cfg.out_dir);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.window_days < 1 {
            return Err(Error::Config("window_days must be at least 1".into()));
        }
        if self.n_max < 1 {
            return Err(Error::Config("n_max must be at least 1".into()));
        }
        if self.top_k < 1 {
            return Err(Error::Config("top_k must be at least 1".into()));
        }
        if self.comparison_n < 1 {
            return Err(Error::Config("comparison_n must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        for (label, [s, e]) in &self.ranges {
            if s > e {
                return Err(Error::Config(format!("range {label}: start {s} > end {e}")));
            }
        }
        Ok(())
    }

    /// Requires each named input path to be set (a config error) and to
    /// exist (an input error).
    pub fn require_files(&self, which: &[(&str, &Option<PathBuf>)]) -> Result<(), Error> {
        for (name, p) in which {
            match p {
                None => return Err(Error::Config(format!("{name} path is not configured"))),
                Some(p) if !p.is_file() => {
                    return Err(Error::MissingStageInput {
                        path: p.clone(),
                        reason: format!("{name} file does not exist"),
                    })
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Provider settings with the `labels` shorthand folded in.
    pub fn provider_config(&self) -> ProviderConfig {
        let mut p = self.provider.clone();
        if p.fixture.is_none() {
            p.fixture = self.labels.clone();
        }
        p
    }

    /// Month ranges from the inline table and the ranges file, ordered by
    /// start block.
    pub fn month_ranges(&self) -> Result<Vec<BlockRange>, Error> {
        let mut ranges: Vec<BlockRange> = self
            .ranges
            .iter()
            .map(|(l, [s, e])| BlockRange::labeled(*s, *e, l.clone()))
            .collect();
        if let Some(p) = &self.ranges_file {
            ranges.extend(io::load_ranges(p).map_err(|e| Error::Config(e.to_string()))?);
        }
        ranges.sort_by_key(|r| (r.start_block, r.end_block));
        Ok(ranges)
    }

    pub fn threads(&self) -> usize {
        self.threads.unwrap_or(1)
    }
}

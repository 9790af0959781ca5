//! Stage runner. Each stage reads the previous stage's outputs from
//! `{out_dir}/stages`, checks them against that stage's manifest and writes
//! its own outputs plus a manifest of SHA-256 digests.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sandscope_core::analytics::{
    behavior_tables, build_timelines, concentration_tables, nth_sandwich_cohort, sandwich_count_distribution,
    switcher_loss_split, BehaviorTables, Concentration, ExposureHistogram,
};
use sandscope_core::detect::{apply_fork_filter, blocks, detect_block_with_diagnostics, Detection, SandwichEvent};
use sandscope_core::enrich::{
    apply_labels, label_coverage, visibility_mev_crosstab, CrosstabRow, LabelCoverage, MevLabel,
};
use sandscope_core::ingest::{
    label_visibility_in_place, mempool_coverage, monthly_overview, MempoolCoverage, MonthlyOverview, TieRule,
};
use sandscope_core::model::{BlockRange, TxRecord, Usd};
use sandscope_core::stats::{cliffs_delta, mann_whitney_u, summarize, EffectSize, SummaryStats, UTestResult};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::Error;
use crate::io;
use crate::provider::{LabelProvider, ProviderMode};

pub const STAGE_VERSION: u32 = 1;

pub const INGESTED: &str = "ingested.jsonl";
pub const LABELS: &str = "labels.jsonl";
pub const ENRICHED: &str = "enriched.jsonl";
pub const EVENTS: &str = "events.jsonl";
pub const DETECTION: &str = "detection.json";
pub const ANALYSIS: &str = "analysis.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Enrich,
    Detect,
    Analyze,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Enrich => "enrich",
            Stage::Detect => "detect",
            Stage::Analyze => "analyze",
            Stage::Report => "report",
        }
    }
}

pub fn sha256_file(path: &Path) -> Result<String, Error> {
    let bytes = fs::read(path).map_err(|source| io::IoError::Open {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn basename(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: Stage,
    pub version: u32,
    /// File name to SHA-256 of every input read.
    pub inputs: BTreeMap<String, String>,
    /// File name (relative to the stage directory) to SHA-256.
    pub outputs: BTreeMap<String, String>,
    pub config: serde_json::Value,
    #[serde(default)]
    pub notes: BTreeMap<String, serde_json::Value>,
}

/// Configuration as echoed in manifests: file names only, and nothing that
/// must not change the outputs (output location, thread count).
pub fn config_echo(cfg: &RunConfig) -> serde_json::Value {
    let mut v = serde_json::to_value(cfg).expect("config serializes");
    let obj = v.as_object_mut().expect("config is an object");
    obj.remove("out_dir");
    obj.remove("threads");
    obj.remove("synth");
    for key in ["transactions", "mempool", "labels", "forks", "ranges_file"] {
        if let Some(serde_json::Value::String(s)) = obj.get(key) {
            let b = basename(Path::new(s));
            obj.insert(key.into(), b.into());
        }
    }
    if let Some(p) = obj.get_mut("provider").and_then(|p| p.as_object_mut()) {
        for key in ["fixture", "cache_path"] {
            if let Some(serde_json::Value::String(s)) = p.get(key) {
                let b = basename(Path::new(s));
                p.insert(key.into(), b.into());
            }
        }
    }
    v
}

/// Rows about private-path sandwich economics and the loss comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitcherComparison {
    pub n: u32,
    /// Sample order: first-time private adopters, then everyone else.
    pub orientation: String,
    pub switchers: SummaryStats,
    pub non_switchers: SummaryStats,
    pub mann_whitney_u: UTestResult,
    pub effect_size: EffectSize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Economics {
    pub private_victim_losses: Option<SummaryStats>,
    pub private_attack_profits: Option<SummaryStats>,
    pub fork_filtered_private_victim_losses: Option<SummaryStats>,
    pub fork_filtered_private_attack_profits: Option<SummaryStats>,
    pub switcher_comparison: Option<SwitcherComparison>,
    pub skipped: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForkReport {
    pub fork_blocks: u64,
    pub events_before: u64,
    pub removed_count: u64,
    pub removed_private_attacks: u64,
    pub removed_private_victims: u64,
    pub events_after: u64,
}

/// Everything the analyze stage computes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub window_days: u32,
    pub n_max: u32,
    pub dataset_end_ts: u64,
    pub monthly: MonthlyOverview,
    pub crosstab: Vec<CrosstabRow>,
    pub behavior: BehaviorTables,
    pub histogram: ExposureHistogram,
    pub concentration: Concentration,
    pub economics: Economics,
    pub fork_report: Option<ForkReport>,
}

fn collect_private_losses(events: &[SandwichEvent]) -> Vec<Usd> {
    let mut seen = BTreeSet::new();
    events
        .iter()
        .flat_map(|e| e.private_victims())
        .filter(|v| seen.insert(v.tx_hash))
        .filter_map(|v| v.user_loss_usd)
        .collect()
}

fn collect_private_profits(events: &[SandwichEvent]) -> Vec<Usd> {
    events
        .iter()
        .filter(|e| e.any_private_victim)
        .map(|e| e.attacker_profit_usd)
        .collect()
}

fn summary_or_skip(name: &str, values: &[Usd], skipped: &mut BTreeMap<String, String>) -> Option<SummaryStats> {
    match summarize(values) {
        Ok(s) => Some(s),
        Err(_) => {
            skipped.insert(name.into(), "no values".into());
            None
        }
    }
}

pub struct Pipeline {
    pub cfg: RunConfig,
    pool: rayon::ThreadPool,
}

impl Pipeline {
    pub fn new(cfg: RunConfig) -> Result<Pipeline, Error> {
        cfg.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads())
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        Ok(Pipeline { cfg, pool })
    }

    pub fn stage_dir(&self) -> PathBuf {
        self.cfg.out_dir.join("stages")
    }

    fn manifest_path(&self, stage: Stage) -> PathBuf {
        self.stage_dir().join(format!("{}.manifest.json", stage.name()))
    }

    /// Loads a stage's manifest and checks every output it lists.
    pub fn verified_manifest(&self, stage: Stage) -> Result<StageManifest, Error> {
        let mpath = self.manifest_path(stage);
        if !mpath.is_file() {
            return Err(Error::MissingStageInput {
                path: mpath,
                reason: format!("run the {} stage first", stage.name()),
            });
        }
        let m: StageManifest = io::load_json(&mpath).map_err(|e| Error::MissingStageInput {
            path: mpath.clone(),
            reason: e.to_string(),
        })?;
        if m.version != STAGE_VERSION {
            return Err(Error::MissingStageInput {
                path: mpath,
                reason: format!("written by stage version {}", m.version),
            });
        }
        for (name, digest) in &m.outputs {
            let p = self.stage_dir().join(name);
            if !p.is_file() {
                return Err(Error::MissingStageInput {
                    path: p,
                    reason: "listed in manifest but absent".into(),
                });
            }
            if &sha256_file(&p)? != digest {
                return Err(Error::MissingStageInput {
                    path: p,
                    reason: "digest differs from its manifest (stale or edited)".into(),
                });
            }
        }
        Ok(m)
    }

    fn write_manifest(
        &self,
        stage: Stage,
        inputs: BTreeMap<String, String>,
        outputs: &[&str],
        notes: BTreeMap<String, serde_json::Value>,
    ) -> Result<StageManifest, Error> {
        let mut out = BTreeMap::new();
        for name in outputs {
            out.insert(name.to_string(), sha256_file(&self.stage_dir().join(name))?);
        }
        let m = StageManifest {
            stage,
            version: STAGE_VERSION,
            inputs,
            outputs: out,
            config: config_echo(&self.cfg),
            notes,
        };
        io::save_json(&self.manifest_path(stage), &m)?;
        Ok(m)
    }

    fn stage_inputs(&self, prior: &[(Stage, &StageManifest, &str)]) -> BTreeMap<String, String> {
        prior
            .iter()
            .map(|(s, m, name)| (format!("{}/{}", s.name(), name), m.outputs[*name].clone()))
            .collect()
    }

    /// Loads, validates, sorts and visibility-labels the raw transactions.
    pub fn ingest(&self) -> Result<StageManifest, Error> {
        let cfg = &self.cfg;
        cfg.require_files(&[("transactions", &cfg.transactions)])?;
        if cfg.mempool.is_some() {
            cfg.require_files(&[("mempool", &cfg.mempool)])?;
        }
        let tx_path = cfg.transactions.as_ref().expect("checked");
        let mut txs = io::load_transactions(tx_path, None)?;
        let mut inputs = BTreeMap::new();
        inputs.insert(basename(tx_path), sha256_file(tx_path)?);
        let mut notes = BTreeMap::new();

        if let Some(mp) = &cfg.mempool {
            let mempool = io::load_mempool(mp)?;
            inputs.insert(basename(mp), sha256_file(mp)?);
            let rule = TieRule::from_strict_flag(cfg.strict_visibility_tie);
            self.pool.install(|| {
                txs.par_chunks_mut(4096)
                    .for_each(|chunk| label_visibility_in_place(chunk, &mempool, rule))
            });
            let cov: MempoolCoverage = mempool_coverage(&txs, &mempool);
            if cov.observed < cov.total {
                log::warn!(
                    "{:.2}% of transactions are absent from the mempool index and were labeled private",
                    100.0 * cov.absent_fraction()
                );
            }
            notes.insert(
                "mempool_coverage".into(),
                serde_json::to_value(cov).expect("serializable"),
            );
            notes.insert("absent_fraction".into(), serde_json::json!(cov.absent_fraction()));
        } else {
            log::warn!("no mempool index configured; visibility is taken from the input file");
            notes.insert("visibility_source".into(), "input file".into());
        }
        fs::create_dir_all(self.stage_dir()).map_err(io::IoError::from)?;
        io::save_jsonl(&self.stage_dir().join(INGESTED), &txs)?;
        notes.insert("records".into(), txs.len().into());
        self.write_manifest(Stage::Ingest, inputs, &[INGESTED], notes)
    }

    /// Attaches provider labels using the provider the config describes.
    pub fn enrich(&self) -> Result<StageManifest, Error> {
        let pcfg = self.cfg.provider_config();
        if pcfg.mode == ProviderMode::Fixture && pcfg.fixture.is_none() {
            return self.enrich_with(None);
        }
        if let (ProviderMode::Fixture, Some(f)) = (pcfg.mode, &pcfg.fixture) {
            self.cfg.require_files(&[("labels", &Some(f.clone()))])?;
        }
        let provider = LabelProvider::from_config(&pcfg)?;
        self.enrich_with(Some(&provider))
    }

    /// Enrich with an explicit provider; `None` passes records through.
    pub fn enrich_with(&self, provider: Option<&LabelProvider>) -> Result<StageManifest, Error> {
        let prior = self.verified_manifest(Stage::Ingest)?;
        let txs: Vec<TxRecord> = io::load_jsonl(&self.stage_dir().join(INGESTED))?;
        let inputs = self.stage_inputs(&[(Stage::Ingest, &prior, INGESTED)]);
        let mut notes = BTreeMap::new();

        let labels: Vec<MevLabel> = match provider {
            Some(p) => {
                let present: Vec<u64> = txs
                    .iter()
                    .map(|t| t.block_number)
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect();
                p.fetch_blocks(&present)?
            }
            None => {
                log::warn!("no label provider configured; MEV labels are taken from the input file");
                notes.insert("labels".into(), "skipped: no provider configured".into());
                Vec::new()
            }
        };
        let enriched = if labels.is_empty() {
            txs.clone()
        } else {
            apply_labels(&txs, &labels)?
        };
        let cov: LabelCoverage = label_coverage(&txs, &labels);
        if provider.is_some() && cov.labeled == 0 && !txs.is_empty() {
            log::warn!("the provider returned no labels for any transaction");
        }
        notes.insert(
            "label_coverage".into(),
            serde_json::to_value(cov).expect("serializable"),
        );
        io::save_jsonl(&self.stage_dir().join(LABELS), &labels)?;
        io::save_jsonl(&self.stage_dir().join(ENRICHED), &enriched)?;
        self.write_manifest(Stage::Enrich, inputs, &[LABELS, ENRICHED], notes)
    }

    /// Per-block sandwich detection, fanned out over the thread pool.
    pub fn detect(&self) -> Result<StageManifest, Error> {
        let prior = self.verified_manifest(Stage::Enrich)?;
        let txs: Vec<TxRecord> = io::load_jsonl(&self.stage_dir().join(ENRICHED))?;
        let per_block: Vec<&[TxRecord]> = blocks(&txs).collect();
        let results: Vec<_> = self
            .pool
            .install(|| per_block.par_iter().map(|b| detect_block_with_diagnostics(b)).collect());
        let det = Detection::from_block_results(results);
        for e in &det.events {
            e.check_invariants()
                .map_err(|m| Error::Invariant(format!("event at block {}: {m}", e.block_number)))?;
        }
        io::save_jsonl(&self.stage_dir().join(EVENTS), &det.events)?;
        #[derive(Serialize)]
        struct Summary<'a> {
            counters: &'a sandscope_core::detect::DetectionCounters,
            registry: &'a sandscope_core::detect::AttackerRegistry,
        }
        io::save_json(
            &self.stage_dir().join(DETECTION),
            &Summary {
                counters: &det.counters,
                registry: &det.registry,
            },
        )?;
        let inputs = self.stage_inputs(&[(Stage::Enrich, &prior, ENRICHED)]);
        self.write_manifest(Stage::Detect, inputs, &[EVENTS, DETECTION], BTreeMap::new())
    }

    pub fn load_detection(&self) -> Result<Detection, Error> {
        #[derive(Deserialize)]
        struct Summary {
            counters: sandscope_core::detect::DetectionCounters,
            registry: sandscope_core::detect::AttackerRegistry,
        }
        let s: Summary = io::load_json(&self.stage_dir().join(DETECTION))?;
        Ok(Detection {
            events: io::load_events(&self.stage_dir().join(EVENTS))?,
            registry: s.registry,
            counters: s.counters,
        })
    }

    fn month_ranges_for(&self, txs: &[TxRecord]) -> Result<Vec<BlockRange>, Error> {
        let ranges = self.cfg.month_ranges()?;
        if !ranges.is_empty() || txs.is_empty() {
            return Ok(ranges);
        }
        let lo = txs.first().expect("nonempty").block_number;
        let hi = txs.last().expect("nonempty").block_number;
        Ok(vec![BlockRange::labeled(lo, hi, "all")])
    }

    /// Behavioral tables, concentration, economics and the fork filter.
    pub fn analyze(&self) -> Result<StageManifest, Error> {
        let cfg = &self.cfg;
        if cfg.forks.is_some() {
            cfg.require_files(&[("forks", &cfg.forks)])?;
        }
        let enrich_m = self.verified_manifest(Stage::Enrich)?;
        let detect_m = self.verified_manifest(Stage::Detect)?;
        if detect_m.inputs.get(&format!("enrich/{ENRICHED}")) != enrich_m.outputs.get(ENRICHED) {
            return Err(Error::MissingStageInput {
                path: self.stage_dir().join(EVENTS),
                reason: "detection ran on a different enrich output; rerun detect".into(),
            });
        }
        let txs: Vec<TxRecord> = io::load_jsonl(&self.stage_dir().join(ENRICHED))?;
        let det = self.load_detection()?;
        let mut inputs = self.stage_inputs(&[
            (Stage::Enrich, &enrich_m, ENRICHED),
            (Stage::Detect, &detect_m, EVENTS),
            (Stage::Detect, &detect_m, DETECTION),
        ]);

        let end_ts = txs.iter().map(|t| t.timestamp).max().unwrap_or(0);
        let monthly = monthly_overview(&txs, &self.month_ranges_for(&txs)?)?;
        let crosstab = visibility_mev_crosstab(&txs);
        let timelines = build_timelines(&txs, &det.events);
        let behavior = behavior_tables(&timelines, cfg.n_max, cfg.window_days, end_ts);
        let histogram = sandwich_count_distribution(&timelines);
        let concentration = concentration_tables(&det.events, None);

        let mut skipped = BTreeMap::new();
        let losses = collect_private_losses(&det.events);
        let profits = collect_private_profits(&det.events);
        let private_victim_losses = summary_or_skip("private_victim_losses", &losses, &mut skipped);
        let private_attack_profits = summary_or_skip("private_attack_profits", &profits, &mut skipped);

        let (fork_report, filtered_losses, filtered_profits) = match &cfg.forks {
            Some(fp) => {
                let forks = io::load_forks(fp)?;
                inputs.insert(basename(fp), sha256_file(fp)?);
                let out = apply_fork_filter(&det.events, &forks);
                let fl = summary_or_skip(
                    "fork_filtered_private_victim_losses",
                    &collect_private_losses(&out.kept),
                    &mut skipped,
                );
                let fpr = summary_or_skip(
                    "fork_filtered_private_attack_profits",
                    &collect_private_profits(&out.kept),
                    &mut skipped,
                );
                let report = ForkReport {
                    fork_blocks: forks.len() as u64,
                    events_before: det.events.len() as u64,
                    removed_count: out.removed_count,
                    removed_private_attacks: out.removed_private_attacks,
                    removed_private_victims: out.removed_private_victims,
                    events_after: out.kept.len() as u64,
                };
                (Some(report), fl, fpr)
            }
            None => {
                for k in [
                    "fork_report",
                    "fork_filtered_private_victim_losses",
                    "fork_filtered_private_attack_profits",
                ] {
                    skipped.insert(k.into(), "no fork list configured".into());
                }
                (None, None, None)
            }
        };

        let cohort = nth_sandwich_cohort(&timelines, cfg.comparison_n, cfg.window_days, end_ts);
        let (sw, non) = switcher_loss_split(&cohort, &timelines);
        let switcher_comparison = if sw.is_empty() || non.is_empty() {
            skipped.insert(
                "switcher_comparison".into(),
                format!(
                    "{} switchers and {} non-switchers with known losses",
                    sw.len(),
                    non.len()
                ),
            );
            None
        } else {
            Some(SwitcherComparison {
                n: cfg.comparison_n,
                orientation: "switchers, non_switchers".into(),
                switchers: summarize(&sw).expect("nonempty"),
                non_switchers: summarize(&non).expect("nonempty"),
                mann_whitney_u: mann_whitney_u(&sw, &non).expect("nonempty"),
                effect_size: cliffs_delta(&sw, &non).expect("nonempty"),
            })
        };

        let analysis = Analysis {
            window_days: cfg.window_days,
            n_max: cfg.n_max,
            dataset_end_ts: end_ts,
            monthly,
            crosstab,
            behavior,
            histogram,
            concentration,
            economics: Economics {
                private_victim_losses,
                private_attack_profits,
                fork_filtered_private_victim_losses: filtered_losses,
                fork_filtered_private_attack_profits: filtered_profits,
                switcher_comparison,
                skipped,
            },
            fork_report,
        };
        io::save_json(&self.stage_dir().join(ANALYSIS), &analysis)?;
        self.write_manifest(Stage::Analyze, inputs, &[ANALYSIS], BTreeMap::new())
    }

    /// Renders the report bundle into `out_dir`.
    pub fn report(&self) -> Result<Vec<PathBuf>, Error> {
        let ingest_m = self.verified_manifest(Stage::Ingest)?;
        let enrich_m = self.verified_manifest(Stage::Enrich)?;
        let detect_m = self.verified_manifest(Stage::Detect)?;
        let analyze_m = self.verified_manifest(Stage::Analyze)?;
        let analysis: Analysis = io::load_json(&self.stage_dir().join(ANALYSIS))?;
        let det = self.load_detection()?;
        crate::report::write_bundle(
            &self.cfg,
            &[&ingest_m, &enrich_m, &detect_m, &analyze_m],
            &analysis,
            &det,
        )
    }

    pub fn run_all(&self) -> Result<Vec<PathBuf>, Error> {
        self.ingest()?;
        self.enrich()?;
        self.detect()?;
        self.analyze()?;
        self.report()
    }
}

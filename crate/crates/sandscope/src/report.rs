//! Report bundle: CSV tables, plot-data curves and JSON summaries.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use sandscope_core::analytics::{AdoptionTable, ConcentrationTable, IncidenceCurve};
use sandscope_core::detect::Detection;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::Error;
use crate::io;
use crate::pipeline::{config_echo, sha256_file, Analysis, StageManifest, STAGE_VERSION};

pub const BUNDLE_VERSION: u32 = 1;

/// Label carried next to the published full-scale figures. They document
/// what a mainnet-scale run produced; nothing here is checked against them.
pub const REFERENCE_LABEL: &str = "paper-scale reference — not a test target";

#[derive(Debug, Clone, Serialize)]
pub struct ReferenceAnchors {
    pub label: &'static str,
    pub private_attacks: u64,
    pub private_victims: u64,
    pub private_victim_loss_usd: &'static str,
    pub private_attack_profit_usd: &'static str,
    pub adoption_rate_all: &'static str,
    pub churn_rate: &'static str,
    pub top_private_attacker_frontruns: u64,
}

pub const REFERENCE: ReferenceAnchors = ReferenceAnchors {
    label: REFERENCE_LABEL,
    private_attacks: 2_932,
    private_victims: 3_126,
    private_victim_loss_usd: "409236.97",
    private_attack_profit_usd: "293785.95",
    adoption_rate_all: "37.2%",
    churn_rate: "7.5%",
    top_private_attacker_frontruns: 1_901,
};

fn ratio(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn write_concentration(path: &Path, t: &ConcentrationTable) -> Result<(), Error> {
    let rows = t
        .rows
        .iter()
        .enumerate()
        .map(|(k, r)| [(k + 1).to_string(), r.address.to_string(), r.count.to_string()]);
    io::save_csv(path, &["rank", "address", "count"], rows)?;
    Ok(())
}

fn write_adoption(path: &Path, t: &AdoptionTable) -> Result<(), Error> {
    let rows = t.rows.iter().map(|r| {
        [
            r.n.to_string(),
            r.population.to_string(),
            r.switched_count.to_string(),
            ratio(r.rate()),
        ]
    });
    io::save_csv(path, &["n", "population", "switched", "rate"], rows)?;
    Ok(())
}

fn write_curve(path: &Path, c: &IncidenceCurve) -> Result<(), Error> {
    let rows = c.points().map(|(d, f)| [d.to_string(), format!("{f:.6}")]);
    io::save_csv(path, &["day", "cum_fraction"], rows)?;
    Ok(())
}

#[derive(Serialize)]
struct CountersFile<'a> {
    #[serde(flatten)]
    counters: &'a sandscope_core::detect::DetectionCounters,
    private_attackers: u64,
    total_private_frontruns: u64,
    reference: &'a ReferenceAnchors,
}

#[derive(Serialize)]
struct EconomicsFile<'a> {
    #[serde(flatten)]
    economics: &'a crate::pipeline::Economics,
    reference: &'a ReferenceAnchors,
}

#[derive(Serialize)]
struct StageEntry {
    version: u32,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

#[derive(Serialize)]
struct BundleManifest<'a> {
    bundle_version: u32,
    stage_version: u32,
    stages: BTreeMap<&'static str, StageEntry>,
    config: serde_json::Value,
    files: BTreeMap<String, String>,
    skipped: &'a BTreeMap<String, String>,
    reference: &'a ReferenceAnchors,
}

/// Writes every bundle file under `cfg.out_dir` and returns their paths.
pub fn write_bundle(
    cfg: &RunConfig,
    manifests: &[&StageManifest],
    analysis: &Analysis,
    det: &Detection,
) -> Result<Vec<PathBuf>, Error> {
    let out = &cfg.out_dir;
    let curves = out.join("curves");
    if curves.is_dir() {
        fs::remove_dir_all(&curves).map_err(io::IoError::from)?;
    }
    fs::create_dir_all(&curves).map_err(io::IoError::from)?;
    let mut written: Vec<PathBuf> = Vec::new();
    let mut put = |name: &str| {
        let p = out.join(name);
        written.push(p.clone());
        p
    };

    let monthly = analysis.monthly.months.iter().map(|m| {
        [
            m.month.clone(),
            m.start_block.to_string(),
            m.end_block.to_string(),
            m.total_tx_count.to_string(),
            m.block_count.to_string(),
            m.public_count.to_string(),
            m.private_count.to_string(),
            format!("{:.6}", m.public_share()),
            format!("{:.6}", m.private_share()),
        ]
    });
    io::save_csv(
        &put("monthly.csv"),
        &[
            "month",
            "start_block",
            "end_block",
            "total_tx_count",
            "block_count",
            "public_count",
            "private_count",
            "public_share",
            "private_share",
        ],
        monthly,
    )?;

    let crosstab = analysis.crosstab.iter().map(|r| {
        [
            r.visibility.as_str().to_string(),
            r.mev_type.as_str().to_string(),
            r.count.to_string(),
        ]
    });
    io::save_csv(&put("crosstab.csv"), &["visibility", "mev_type", "count"], crosstab)?;

    io::save_json(
        &put("detect_counters.json"),
        &CountersFile {
            counters: &det.counters,
            private_attackers: det.registry.private_attackers().count() as u64,
            total_private_frontruns: det.registry.total_private_frontruns(),
            reference: &REFERENCE,
        },
    )?;
    io::save_jsonl(&put("events.jsonl"), &det.events)?;

    let c = &analysis.concentration;
    write_concentration(&put("top_attackers.csv"), &c.attackers.truncated(cfg.top_k))?;
    write_concentration(&put("top_victims.csv"), &c.victims.truncated(cfg.top_k))?;
    write_concentration(&put("top_destinations.csv"), &c.destinations.truncated(cfg.top_k))?;

    let churn = analysis.behavior.churn.rows.iter().map(|r| {
        [
            r.n.to_string(),
            r.cohort_size.to_string(),
            r.reactivated_count.to_string(),
            ratio(r.churn_rate()),
        ]
    });
    io::save_csv(
        &put("churn.csv"),
        &["n", "cohort_size", "reactivated", "churn_rate"],
        churn,
    )?;
    write_adoption(&put("adoption_all.csv"), &analysis.behavior.adoption_all)?;
    write_adoption(
        &put("adoption_reactivated.csv"),
        &analysis.behavior.adoption_reactivated,
    )?;

    let b = &analysis.behavior;
    for (prefix, set) in [
        ("reactivation", &b.reactivation_curves),
        ("adoption_all", &b.adoption_curves_all),
        ("adoption_reactivated", &b.adoption_curves_reactivated),
    ] {
        for curve in set {
            write_curve(&put(&format!("curves/{prefix}_n{}.csv", curve.n)), curve)?;
        }
    }

    let hist = analysis.histogram.address_count.iter().map(|(k, n)| {
        [
            k.to_string(),
            n.to_string(),
            analysis
                .histogram
                .total_tx_count
                .get(k)
                .copied()
                .unwrap_or(0)
                .to_string(),
        ]
    });
    io::save_csv(
        &put("exposure_histogram.csv"),
        &["sandwiches", "address_count", "total_tx_count"],
        hist,
    )?;

    io::save_json(
        &put("economics.json"),
        &EconomicsFile {
            economics: &analysis.economics,
            reference: &REFERENCE,
        },
    )?;
    match &analysis.fork_report {
        Some(f) => io::save_json(&put("fork_report.json"), f)?,
        None => io::save_json(
            &put("fork_report.json"),
            &serde_json::json!({ "skipped": "no fork list configured" }),
        )?,
    }

    let mut files = BTreeMap::new();
    for p in &written {
        let rel = p.strip_prefix(out).expect("inside out_dir");
        files.insert(rel.to_string_lossy().replace('\\', "/"), sha256_file(p)?);
    }
    let stages = manifests
        .iter()
        .map(|m| {
            (
                m.stage.name(),
                StageEntry {
                    version: m.version,
                    inputs: m.inputs.clone(),
                    outputs: m.outputs.clone(),
                },
            )
        })
        .collect();
    let manifest_path = out.join("manifest.json");
    io::save_json(
        &manifest_path,
        &BundleManifest {
            bundle_version: BUNDLE_VERSION,
            stage_version: STAGE_VERSION,
            stages,
            config: config_echo(cfg),
            files,
            skipped: &analysis.economics.skipped,
            reference: &REFERENCE,
        },
    )?;
    written.push(manifest_path);
    Ok(written)
}

//! Writes a generated chain as the same files a real run consumes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sandscope_core::model::{BlockRange, TxRecord};
use sandscope_core::synth::{generate_chain, SynthChain, SynthConfig, BLOCK_TIME_SECS};

use crate::error::Error;
use crate::io::{self, IoError};

pub const TRANSACTIONS: &str = "transactions.csv";
pub const MEMPOOL: &str = "mempool.csv";
pub const LABELS: &str = "labels.jsonl";
pub const FORKS: &str = "forks.txt";
pub const RANGES: &str = "ranges.toml";
pub const GROUND_TRUTH: &str = "ground_truth.json";
pub const RUN_CONFIG: &str = "sandscope.toml";

const MONTH_BLOCKS: u64 = 30 * 86_400 / BLOCK_TIME_SECS;

/// Chain fields only; visibility comes from the mempool index and MEV
/// fields from the label file.
pub fn write_chain_csv<W: Write>(w: W, txs: &[TxRecord]) -> Result<(), IoError> {
    let mut wtr = csv::Writer::from_writer(w);
    let err = |e: csv::Error| IoError::Io(std::io::Error::other(e));
    wtr.write_record(&io::TX_COLUMNS[..6]).map_err(err)?;
    for t in txs {
        wtr.write_record([
            t.block_number.to_string(),
            t.tx_index.to_string(),
            t.timestamp.to_string(),
            t.tx_hash.to_string(),
            t.sender.to_string(),
            t.destination.map(|d| d.to_string()).unwrap_or_default(),
        ])
        .map_err(err)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Thirty-day block windows covering the generated span.
pub fn synthetic_months(cfg: &SynthConfig) -> Vec<BlockRange> {
    let span_blocks = cfg.span_days as u64 * 86_400 / BLOCK_TIME_SECS;
    let mut out = Vec::new();
    let mut start = cfg.start_block;
    let mut k = 1;
    while start < cfg.start_block + span_blocks {
        let end = (start + MONTH_BLOCKS - 1).min(cfg.start_block + span_blocks - 1);
        out.push(BlockRange::labeled(start, end, format!("m{k:02}")));
        start = end + 1;
        k += 1;
    }
    out
}

fn run_config_text(cfg: &SynthConfig) -> String {
    format!(
        "# Generated alongside a synthetic dataset (seed {seed}).\n\
         transactions = \"{TRANSACTIONS}\"\n\
         mempool = \"{MEMPOOL}\"\n\
         labels = \"{LABELS}\"\n\
         forks = \"{FORKS}\"\n\
         ranges_file = \"{RANGES}\"\n\
         window_days = {window}\n\
         out_dir = \"report\"\n",
        seed = cfg.seed,
        window = cfg.window_days,
    )
}

/// Generates a chain and writes its dataset files into `dir`.
pub fn write_dataset(cfg: &SynthConfig, dir: &Path) -> Result<(SynthChain, Vec<PathBuf>), Error> {
    let chain = generate_chain(cfg)?;
    fs::create_dir_all(dir).map_err(IoError::from)?;
    let path = |n: &str| dir.join(n);

    let f = fs::File::create(path(TRANSACTIONS)).map_err(IoError::from)?;
    write_chain_csv(std::io::BufWriter::new(f), &chain.txs)?;
    io::save_mempool(&path(MEMPOOL), &chain.mempool)?;
    io::save_labels(&path(LABELS), &chain.labels)?;
    io::save_forks(&path(FORKS), &chain.truth.fork_blocks)?;
    io::save_ranges(&path(RANGES), &synthetic_months(cfg))?;
    io::save_json(&path(GROUND_TRUTH), &chain.truth)?;
    fs::write(path(RUN_CONFIG), run_config_text(cfg)).map_err(IoError::from)?;

    let files = [TRANSACTIONS, MEMPOOL, LABELS, FORKS, RANGES, GROUND_TRUTH, RUN_CONFIG]
        .iter()
        .map(|n| path(n))
        .collect();
    Ok((chain, files))
}

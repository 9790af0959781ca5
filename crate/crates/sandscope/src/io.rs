//! File formats: transaction CSV/JSONL, mempool index CSV, label and event
//! JSONL, block-range TOML and fork lists.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rust_decimal::Decimal;
use sandscope_core::detect::{ForkedBlockSet, SandwichEvent};
use sandscope_core::enrich::MevLabel;
use sandscope_core::ingest::{canonicalize, DataError, MempoolIndex};
use sandscope_core::model::{Address, BlockRange, MevType, TxHash, TxRecord, Usd, Visibility};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Open { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{path}: row {row}: {reason}")]
    MalformedRow { path: PathBuf, row: u64, reason: String },
    #[error("{path}: {source}")]
    DuplicateKey { path: PathBuf, source: DataError },
    #[error("{0}: unknown format (expected .csv or .jsonl)")]
    UnknownFormat(PathBuf),
    #[error("{path}: {reason}")]
    InvalidConfig { path: PathBuf, reason: String },
}

impl IoError {
    fn malformed(path: &Path, row: u64, reason: impl ToString) -> Self {
        IoError::MalformedRow {
            path: path.to_path_buf(),
            row,
            reason: reason.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Jsonl,
}

impl Format {
    pub fn from_path(path: &Path) -> Result<Format, IoError> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref()
        {
            Some("csv") => Ok(Format::Csv),
            Some("jsonl") | Some("ndjson") => Ok(Format::Jsonl),
            _ => Err(IoError::UnknownFormat(path.to_path_buf())),
        }
    }
}

fn open(path: &Path) -> Result<File, IoError> {
    File::open(path).map_err(|source| IoError::Open {
        path: path.to_path_buf(),
        source,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let f = File::create(path).map_err(|source| IoError::Open {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(BufWriter::new(f))
}

pub const TX_COLUMNS: [&str; 13] = [
    "block_number",
    "tx_index",
    "timestamp",
    "tx_hash",
    "from",
    "to",
    "visibility",
    "mev_type",
    "protocol",
    "user_loss_usd",
    "extractor_profit_usd",
    "swap_volume_usd",
    "swap_count",
];
const REQUIRED_COLUMNS: usize = 6;

fn parse_field<T: FromStr>(path: &Path, row: u64, col: &str, raw: &str) -> Result<T, IoError>
where
    T::Err: std::fmt::Display,
{
    raw.trim()
        .parse()
        .map_err(|e| IoError::malformed(path, row, format!("{col}: {e}")))
}

fn optional<T: FromStr>(path: &Path, row: u64, col: &str, raw: Option<&str>) -> Result<Option<T>, IoError>
where
    T::Err: std::fmt::Display,
{
    match raw.map(str::trim) {
        None | Some("") => Ok(None),
        Some(s) => parse_field(path, row, col, s).map(Some),
    }
}

fn parse_usd(path: &Path, row: u64, col: &str, raw: Option<&str>) -> Result<Option<Usd>, IoError> {
    let v: Option<Decimal> = optional(path, row, col, raw)?;
    if let Some(d) = v {
        if col != "extractor_profit_usd" && d.is_sign_negative() && !d.is_zero() {
            return Err(IoError::malformed(path, row, format!("{col}: negative amount")));
        }
    }
    Ok(v)
}

fn parse_visibility(path: &Path, row: u64, raw: Option<&str>) -> Result<Visibility, IoError> {
    match raw.map(|s| s.trim().to_ascii_lowercase()).as_deref() {
        None | Some("") => Ok(Visibility::Private),
        Some("public") => Ok(Visibility::Public),
        Some("private") => Ok(Visibility::Private),
        Some(other) => Err(IoError::malformed(
            path,
            row,
            format!("visibility: unknown value {other:?}"),
        )),
    }
}

fn parse_mev(raw: Option<&str>) -> MevType {
    match raw.map(str::trim) {
        None | Some("") => MevType::NoneLabel,
        Some(s) => MevType::from_tag_lenient(s),
    }
}

fn read_csv_transactions<R: Read>(path: &Path, reader: R) -> Result<Vec<TxRecord>, IoError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| IoError::malformed(path, 1, e))?.clone();
    let mut col: BTreeMap<&str, usize> = BTreeMap::new();
    for (k, h) in headers.iter().enumerate() {
        let h = h.trim();
        let Some(name) = TX_COLUMNS.iter().find(|c| **c == h) else {
            return Err(IoError::malformed(path, 1, format!("unknown column {h:?}")));
        };
        if col.insert(name, k).is_some() {
            return Err(IoError::malformed(path, 1, format!("repeated column {h:?}")));
        }
    }
    for c in &TX_COLUMNS[..REQUIRED_COLUMNS] {
        if !col.contains_key(c) {
            return Err(IoError::malformed(path, 1, format!("missing column {c:?}")));
        }
    }

    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let row = e.position().map(|p| p.line()).unwrap_or(0);
            IoError::malformed(path, row, e)
        })?;
        let row = rec.position().map(|p| p.line()).unwrap_or(0);
        let get = |c: &str| col.get(c).and_then(|&k| rec.get(k));
        let req = |c: &str| get(c).ok_or_else(|| IoError::malformed(path, row, format!("{c}: missing value")));
        out.push(TxRecord {
            block_number: parse_field(path, row, "block_number", req("block_number")?)?,
            tx_index: parse_field(path, row, "tx_index", req("tx_index")?)?,
            timestamp: parse_field(path, row, "timestamp", req("timestamp")?)?,
            tx_hash: parse_field::<TxHash>(path, row, "tx_hash", req("tx_hash")?)?,
            sender: parse_field::<Address>(path, row, "from", req("from")?)?,
            destination: optional::<Address>(path, row, "to", get("to"))?,
            visibility: parse_visibility(path, row, get("visibility"))?,
            mev_type: parse_mev(get("mev_type")),
            protocol: get("protocol")
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string),
            user_loss_usd: parse_usd(path, row, "user_loss_usd", get("user_loss_usd"))?,
            extractor_profit_usd: parse_usd(path, row, "extractor_profit_usd", get("extractor_profit_usd"))?,
            swap_volume_usd: parse_usd(path, row, "swap_volume_usd", get("swap_volume_usd"))?,
            swap_count: optional(path, row, "swap_count", get("swap_count"))?,
        });
    }
    Ok(out)
}

fn read_jsonl<T: DeserializeOwned, R: Read>(path: &Path, reader: R) -> Result<Vec<T>, IoError> {
    let mut out = Vec::new();
    for (k, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line).map_err(|e| IoError::malformed(path, k as u64 + 1, e))?;
        out.push(v);
    }
    Ok(out)
}

/// Parses transactions from `reader`, then validates and sorts them by
/// chain position. `path` only labels errors.
pub fn read_transactions<R: Read>(path: &Path, reader: R, format: Format) -> Result<Vec<TxRecord>, IoError> {
    let raw = match format {
        Format::Csv => read_csv_transactions(path, reader)?,
        Format::Jsonl => read_jsonl(path, reader)?,
    };
    canonicalize(raw).map_err(|source| IoError::DuplicateKey {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads a transaction file; the format follows the extension unless given.
pub fn load_transactions(path: &Path, format: Option<Format>) -> Result<Vec<TxRecord>, IoError> {
    let format = match format {
        Some(f) => f,
        None => Format::from_path(path)?,
    };
    read_transactions(path, open(path)?, format)
}

fn opt_str<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

pub fn write_transactions_csv<W: Write>(w: W, txs: &[TxRecord]) -> Result<(), IoError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(TX_COLUMNS).map_err(csv_io)?;
    for t in txs {
        wtr.write_record([
            t.block_number.to_string(),
            t.tx_index.to_string(),
            t.timestamp.to_string(),
            t.tx_hash.to_string(),
            t.sender.to_string(),
            opt_str(&t.destination),
            t.visibility.as_str().to_string(),
            t.mev_type.as_str().to_string(),
            opt_str(&t.protocol),
            opt_str(&t.user_loss_usd),
            opt_str(&t.extractor_profit_usd),
            opt_str(&t.swap_volume_usd),
            opt_str(&t.swap_count),
        ])
        .map_err(csv_io)?;
    }
    wtr.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> IoError {
    IoError::Io(std::io::Error::other(e))
}

pub fn write_jsonl<T: Serialize, W: Write>(mut w: W, items: &[T]) -> Result<(), IoError> {
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| IoError::Io(e.into()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_transactions(path: &Path, txs: &[TxRecord]) -> Result<(), IoError> {
    let w = create(path)?;
    match Format::from_path(path)? {
        Format::Csv => write_transactions_csv(w, txs),
        Format::Jsonl => write_jsonl(w, txs),
    }
}

#[derive(Debug, Deserialize)]
struct MempoolRow {
    tx_hash: String,
    first_seen_ts: String,
}

/// Mempool index from a `tx_hash,first_seen_ts` CSV. Repeated hashes keep
/// the earliest observation.
pub fn read_mempool<R: Read>(path: &Path, reader: R) -> Result<MempoolIndex, IoError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut index = MempoolIndex::new();
    for rec in rdr.deserialize::<MempoolRow>() {
        let rec = rec.map_err(|e| {
            let row = e.position().map(|p| p.line()).unwrap_or(0);
            IoError::malformed(path, row, e)
        })?;
        let row = index.len() as u64 + 2;
        let hash: TxHash = parse_field(path, row, "tx_hash", &rec.tx_hash)?;
        let ts: u64 = parse_field(path, row, "first_seen_ts", &rec.first_seen_ts)?;
        index.observe(hash, ts);
    }
    Ok(index)
}

pub fn load_mempool(path: &Path) -> Result<MempoolIndex, IoError> {
    read_mempool(path, open(path)?)
}

pub fn save_mempool(path: &Path, index: &MempoolIndex) -> Result<(), IoError> {
    let mut wtr = csv::Writer::from_writer(create(path)?);
    wtr.write_record(["tx_hash", "first_seen_ts"]).map_err(csv_io)?;
    for (h, ts) in index.iter() {
        wtr.write_record([h.to_string(), ts.to_string()]).map_err(csv_io)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn load_labels(path: &Path) -> Result<Vec<MevLabel>, IoError> {
    read_jsonl(path, open(path)?)
}

pub fn save_labels(path: &Path, labels: &[MevLabel]) -> Result<(), IoError> {
    write_jsonl(create(path)?, labels)
}

pub fn load_events(path: &Path) -> Result<Vec<SandwichEvent>, IoError> {
    read_jsonl(path, open(path)?)
}

pub fn save_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), IoError> {
    write_jsonl(create(path)?, items)
}

pub fn load_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IoError> {
    read_jsonl(path, open(path)?)
}

/// Fork list: one block number per line; blank lines and `#` comments are
/// ignored.
pub fn read_forks<R: Read>(path: &Path, reader: R) -> Result<ForkedBlockSet, IoError> {
    let mut set = ForkedBlockSet::default();
    for (k, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let s = line.split('#').next().unwrap_or("").trim();
        if s.is_empty() {
            continue;
        }
        set.0.insert(parse_field(path, k as u64 + 1, "block_number", s)?);
    }
    Ok(set)
}

pub fn load_forks(path: &Path) -> Result<ForkedBlockSet, IoError> {
    read_forks(path, open(path)?)
}

pub fn save_forks(path: &Path, blocks: &[u64]) -> Result<(), IoError> {
    let mut w = create(path)?;
    for b in blocks {
        writeln!(w, "{b}")?;
    }
    w.flush()?;
    Ok(())
}

/// Block-range file: a TOML table mapping a month label to
/// `[start_block, end_block]`. Ranges come back ordered by start block.
pub fn parse_ranges(path: &Path, text: &str) -> Result<Vec<BlockRange>, IoError> {
    let table: BTreeMap<String, [u64; 2]> = toml::from_str(text).map_err(|e| IoError::InvalidConfig {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let mut ranges: Vec<BlockRange> = table
        .into_iter()
        .map(|(label, [s, e])| BlockRange::labeled(s, e, label))
        .collect();
    ranges.sort_by_key(|r| (r.start_block, r.end_block));
    Ok(ranges)
}

pub fn load_ranges(path: &Path) -> Result<Vec<BlockRange>, IoError> {
    let text = fs::read_to_string(path).map_err(|source| IoError::Open {
        path: path.to_path_buf(),
        source,
    })?;
    parse_ranges(path, &text)
}

pub fn save_ranges(path: &Path, ranges: &[BlockRange]) -> Result<(), IoError> {
    let mut w = create(path)?;
    for r in ranges {
        writeln!(w, "{:?} = [{}, {}]", r.display_label(), r.start_block, r.end_block)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a value as pretty JSON with a trailing newline.
pub fn save_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| IoError::Io(e.into()))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let f = open(path)?;
    serde_json::from_reader(BufReader::new(f)).map_err(|e| IoError::malformed(path, e.line() as u64, e))
}

/// Writes rows under a header; each row is already formatted.
pub fn save_csv<I, R>(path: &Path, header: &[&str], rows: I) -> Result<(), IoError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut wtr = csv::Writer::from_writer(create(path)?);
    wtr.write_record(header).map_err(csv_io)?;
    for r in rows {
        wtr.write_record(r).map_err(csv_io)?;
    }
    wtr.flush()?;
    Ok(())
}

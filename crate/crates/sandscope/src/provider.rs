//! MEV label provider: an offline fixture or a paced HTTP client, both behind
//! a per-block cache.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use sandscope_core::enrich::MevLabel;
use sandscope_core::model::{BlockRange, MevType, TxHash, Usd};
use serde::{Deserialize, Serialize};

use crate::io;

/// Waits between attempts; one initial try plus one retry per entry.
pub const RETRY_BACKOFF: [Duration; 3] = [Duration::from_secs(1), Duration::from_secs(2), Duration::from_secs(4)];

#[derive(Debug, thiserror::Error)]
pub enum ProviderError {
    #[error("provider unavailable after {attempts} attempts: {url}: {last}")]
    ProviderUnavailable { url: String, attempts: u32, last: String },
    #[error("malformed provider response from {source_name}: {reason}")]
    MalformedResponse { source_name: String, reason: String },
    #[error("corrupt cache file {path}: {reason}")]
    CacheCorrupt { path: PathBuf, reason: String },
    #[error("provider config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] io::IoError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderMode {
    #[default]
    Fixture,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub mode: ProviderMode,
    /// JSONL label file for fixture mode.
    pub fixture: Option<PathBuf>,
    pub base_url: Option<String>,
    /// Blocks fetched between cache flushes.
    pub batch_size: u32,
    pub max_requests_per_second: f64,
    pub cache_path: Option<PathBuf>,
    pub timeout_secs: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            mode: ProviderMode::Fixture,
            fixture: None,
            base_url: None,
            batch_size: 50,
            max_requests_per_second: 5.0,
            cache_path: None,
            timeout_secs: 30,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.batch_size == 0 {
            return Err(ProviderError::Config("batch_size must be positive".into()));
        }
        if !(self.max_requests_per_second > 0.0 && self.max_requests_per_second.is_finite()) {
            return Err(ProviderError::Config("max_requests_per_second must be positive".into()));
        }
        match self.mode {
            ProviderMode::Http if self.base_url.as_deref().is_none_or(str::is_empty) => {
                Err(ProviderError::Config("http mode requires base_url".into()))
            }
            ProviderMode::Fixture if self.fixture.is_none() => Err(ProviderError::Config(
                "fixture mode requires a fixture label file".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Time source for pacing and backoff; swapped out in tests.
pub trait Clock: Send + Sync {
    fn now(&self) -> Duration;
    fn sleep(&self, d: Duration);
}

pub struct SystemClock(Instant);

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock(Instant::now())
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.0.elapsed()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d)
    }
}

/// Virtual clock: sleeping advances time instantly and is recorded.
#[derive(Default)]
pub struct ManualClock {
    now: Mutex<Duration>,
    sleeps: Mutex<Vec<Duration>>,
}

impl ManualClock {
    pub fn advance(&self, d: Duration) {
        *self.now.lock().unwrap() += d;
    }

    pub fn sleeps(&self) -> Vec<Duration> {
        self.sleeps.lock().unwrap().clone()
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Duration {
        *self.now.lock().unwrap()
    }

    fn sleep(&self, d: Duration) {
        self.sleeps.lock().unwrap().push(d);
        self.advance(d);
    }
}

/// Keeps consecutive requests at least `1 / rate` apart.
pub struct RateLimiter {
    interval: Duration,
    last: Mutex<Option<Duration>>,
}

impl RateLimiter {
    pub fn new(max_requests_per_second: f64) -> Self {
        RateLimiter {
            interval: Duration::from_secs_f64(1.0 / max_requests_per_second),
            last: Mutex::new(None),
        }
    }

    pub fn acquire(&self, clock: &dyn Clock) {
        let mut last = self.last.lock().unwrap();
        if let Some(prev) = *last {
            let ready = prev + self.interval;
            let now = clock.now();
            if now < ready {
                clock.sleep(ready - now);
            }
        }
        *last = Some(clock.now());
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("HTTP status {0}")]
    Status(u16),
    #[error("network error: {0}")]
    Network(String),
}

impl TransportError {
    fn retryable(&self) -> bool {
        match self {
            TransportError::Status(s) => *s == 429 || *s >= 500,
            TransportError::Network(_) => true,
        }
    }
}

pub trait Transport: Send + Sync {
    fn get(&self, url: &str) -> Result<String, TransportError>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        UreqTransport { agent }
    }
}

impl Transport for UreqTransport {
    fn get(&self, url: &str) -> Result<String, TransportError> {
        let mut resp = self
            .agent
            .get(url)
            .call()
            .map_err(|e| TransportError::Network(e.to_string()))?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(TransportError::Status(status));
        }
        resp.body_mut()
            .read_to_string()
            .map_err(|e| TransportError::Network(e.to_string()))
    }
}

/// Label object as the HTTP endpoint returns it. Unknown fields are ignored
/// and a few upstream spellings are accepted.
#[derive(Debug, Deserialize)]
struct WireLabel {
    block_number: Option<u64>,
    tx_hash: Option<String>,
    mev_type: Option<String>,
    protocol: Option<String>,
    user_loss_usd: Option<Usd>,
    extractor_profit_usd: Option<Usd>,
    #[serde(alias = "user_swap_volume_usd")]
    swap_volume_usd: Option<Usd>,
    #[serde(alias = "user_swap_count")]
    swap_count: Option<u64>,
}

fn parse_block_response(url: &str, block: u64, body: &str) -> Result<Vec<MevLabel>, ProviderError> {
    let malformed = |reason: String| ProviderError::MalformedResponse {
        source_name: url.to_string(),
        reason,
    };
    let wire: Vec<WireLabel> = serde_json::from_str(body).map_err(|e| malformed(e.to_string()))?;
    wire.into_iter()
        .map(|w| {
            let hash: TxHash = w
                .tx_hash
                .ok_or_else(|| malformed("label without tx_hash".into()))?
                .parse()
                .map_err(|e: sandscope_core::model::ParseIdError| malformed(e.to_string()))?;
            if let Some(b) = w.block_number {
                if b != block {
                    return Err(malformed(format!("label for block {b} in response for block {block}")));
                }
            }
            let mev_type = w
                .mev_type
                .map(|t| MevType::from_tag_lenient(&t.to_ascii_lowercase()))
                .unwrap_or_default();
            Ok(MevLabel {
                block_number: block,
                tx_hash: hash,
                mev_type,
                protocol: w.protocol,
                user_loss_usd: w.user_loss_usd,
                extractor_profit_usd: w.extractor_profit_usd,
                swap_volume_usd: w.swap_volume_usd,
                swap_count: w.swap_count,
            })
        })
        .collect()
}

/// Where uncached labels come from.
pub trait LabelSource: Send + Sync {
    /// Labels for one block; an empty vector for a block without labels.
    fn block_labels(&self, block: u64) -> Result<Vec<MevLabel>, ProviderError>;

    /// Blocks in `range` that can have labels, when the source knows;
    /// `None` means every block must be asked.
    fn labeled_blocks(&self, _range: &BlockRange) -> Option<Vec<u64>> {
        None
    }

    /// Provider calls made so far, retries included.
    fn request_count(&self) -> u64;
}

pub struct FixtureSource {
    by_block: BTreeMap<u64, Vec<MevLabel>>,
    requests: AtomicU64,
}

impl FixtureSource {
    pub fn new(labels: Vec<MevLabel>) -> Self {
        let mut by_block: BTreeMap<u64, Vec<MevLabel>> = BTreeMap::new();
        for l in labels {
            by_block.entry(l.block_number).or_default().push(l);
        }
        FixtureSource {
            by_block,
            requests: AtomicU64::new(0),
        }
    }

    pub fn load(path: &Path) -> Result<Self, ProviderError> {
        Ok(FixtureSource::new(io::load_labels(path)?))
    }
}

impl LabelSource for FixtureSource {
    fn block_labels(&self, block: u64) -> Result<Vec<MevLabel>, ProviderError> {
        self.requests.fetch_add(1, Ordering::Relaxed);
        Ok(self.by_block.get(&block).cloned().unwrap_or_default())
    }

    fn labeled_blocks(&self, range: &BlockRange) -> Option<Vec<u64>> {
        Some(
            self.by_block
                .range(range.start_block..=range.end_block)
                .map(|(b, _)| *b)
                .collect(),
        )
    }

    fn request_count(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }
}

/// `GET {base_url}/mevBlock/{block}`, paced and retried.
pub struct HttpSource {
    base_url: String,
    transport: Box<dyn Transport>,
    clock: std::sync::Arc<dyn Clock>,
    limiter: RateLimiter,
    requests: AtomicU64,
}

impl HttpSource {
    pub fn new(
        base_url: &str,
        max_requests_per_second: f64,
        transport: Box<dyn Transport>,
        clock: std::sync::Arc<dyn Clock>,
    ) -> Self {
        HttpSource {
            base_url: base_url.trim_end_matches('/').to_string(),
            transport,
            clock,
            limiter: RateLimiter::new(max_requests_per_second),
            requests: AtomicU64::new(0),
        }
    }
}

impl LabelSource for HttpSource {
    fn block_labels(&self, block: u64) -> Result<Vec<MevLabel>, ProviderError> {
        let url = format!("{}/mevBlock/{}", self.base_url, block);
        let mut attempt = 0;
        loop {
            self.limiter.acquire(self.clock.as_ref());
            self.requests.fetch_add(1, Ordering::Relaxed);
            attempt += 1;
            match self.transport.get(&url) {
                Ok(body) => return parse_block_response(&url, block, &body),
                Err(e) if e.retryable() && attempt <= RETRY_BACKOFF.len() => {
                    let wait = RETRY_BACKOFF[attempt - 1];
                    log::warn!("{url}: {e}; retrying in {wait:?}");
                    self.clock.sleep(wait);
                }
                Err(e) => {
                    return Err(ProviderError::ProviderUnavailable {
                        url,
                        attempts: attempt as u32,
                        last: e.to_string(),
                    })
                }
            }
        }
    }

    fn request_count(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }
}

/// Directory of `{block_number}.jsonl` files. Writes go through a temporary
/// file and a rename, so readers never see a partial file.
pub struct LabelCache {
    dir: PathBuf,
}

impl LabelCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        LabelCache { dir: dir.into() }
    }

    pub fn path(&self, block: u64) -> PathBuf {
        self.dir.join(format!("{block}.jsonl"))
    }

    pub fn get(&self, block: u64) -> Result<Option<Vec<MevLabel>>, ProviderError> {
        let path = self.path(block);
        if !path.exists() {
            return Ok(None);
        }
        let labels: Vec<MevLabel> = io::load_jsonl(&path).map_err(|e| ProviderError::CacheCorrupt {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        if let Some(l) = labels.iter().find(|l| l.block_number != block) {
            return Err(ProviderError::CacheCorrupt {
                path,
                reason: format!("holds a label for block {}", l.block_number),
            });
        }
        Ok(Some(labels))
    }

    pub fn put(&self, block: u64, labels: &[MevLabel]) -> Result<(), ProviderError> {
        fs::create_dir_all(&self.dir).map_err(io::IoError::from)?;
        let path = self.path(block);
        let tmp = self.dir.join(format!(".{block}.jsonl.tmp"));
        let mut buf = Vec::new();
        io::write_jsonl(&mut buf, labels)?;
        let mut f = fs::File::create(&tmp).map_err(io::IoError::from)?;
        f.write_all(&buf).map_err(io::IoError::from)?;
        f.sync_all().map_err(io::IoError::from)?;
        fs::rename(&tmp, &path).map_err(io::IoError::from)?;
        Ok(())
    }
}

/// A label source with an in-memory cache and an optional on-disk one.
pub struct LabelProvider {
    source: Box<dyn LabelSource>,
    disk: Option<LabelCache>,
    memory: Mutex<BTreeMap<u64, Vec<MevLabel>>>,
    batch_size: usize,
}

impl LabelProvider {
    pub fn new(source: Box<dyn LabelSource>, disk: Option<LabelCache>, batch_size: usize) -> Self {
        LabelProvider {
            source,
            disk,
            memory: Mutex::new(BTreeMap::new()),
            batch_size: batch_size.max(1),
        }
    }

    /// Builds the provider a config describes, with the system clock and
    /// a real HTTP transport.
    pub fn from_config(cfg: &ProviderConfig) -> Result<Self, ProviderError> {
        cfg.validate()?;
        let source: Box<dyn LabelSource> = match cfg.mode {
            ProviderMode::Fixture => Box::new(FixtureSource::load(cfg.fixture.as_deref().expect("validated"))?),
            ProviderMode::Http => Box::new(HttpSource::new(
                cfg.base_url.as_deref().expect("validated"),
                cfg.max_requests_per_second,
                Box::new(UreqTransport::new(Duration::from_secs(cfg.timeout_secs))),
                std::sync::Arc::new(SystemClock::default()),
            )),
        };
        Ok(LabelProvider::new(
            source,
            cfg.cache_path.clone().map(LabelCache::new),
            cfg.batch_size as usize,
        ))
    }

    pub fn request_count(&self) -> u64 {
        self.source.request_count()
    }

    fn cached(&self, block: u64) -> Result<Option<Vec<MevLabel>>, ProviderError> {
        if let Some(v) = self.memory.lock().unwrap().get(&block) {
            return Ok(Some(v.clone()));
        }
        match &self.disk {
            Some(d) => {
                let v = d.get(block)?;
                if let Some(v) = &v {
                    self.memory.lock().unwrap().insert(block, v.clone());
                }
                Ok(v)
            }
            None => Ok(None),
        }
    }

    /// Labels for the given blocks, in block order.
    pub fn fetch_blocks(&self, blocks: &[u64]) -> Result<Vec<MevLabel>, ProviderError> {
        let mut blocks = blocks.to_vec();
        blocks.sort_unstable();
        blocks.dedup();
        let mut out = Vec::new();
        for batch in blocks.chunks(self.batch_size) {
            let mut fresh = Vec::new();
            for &b in batch {
                match self.cached(b)? {
                    Some(v) => out.extend(v),
                    None => {
                        let v = self.source.block_labels(b)?;
                        out.extend(v.iter().cloned());
                        fresh.push((b, v));
                    }
                }
            }
            for (b, v) in fresh {
                if let Some(d) = &self.disk {
                    d.put(b, &v)?;
                }
                self.memory.lock().unwrap().insert(b, v);
            }
        }
        Ok(out)
    }

    /// Labels for every block of `range`.
    pub fn fetch_labels(&self, range: &BlockRange) -> Result<Vec<MevLabel>, ProviderError> {
        if !range.is_valid() {
            return Err(ProviderError::Config(format!(
                "invalid block range {}-{}",
                range.start_block, range.end_block
            )));
        }
        let blocks: Vec<u64> = match self.source.labeled_blocks(range) {
            Some(b) => b,
            None => (range.start_block..=range.end_block).collect(),
        };
        self.fetch_blocks(&blocks)
    }
}

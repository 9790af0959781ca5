//! Command-line front end. Flags override the config file; environment
//! variables are never consulted.

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::dataset;
use crate::error::Error;
use crate::pipeline::Pipeline;
use crate::provider::ProviderMode;

#[derive(Debug, Parser)]
#[command(
    name = "sandscope",
    version,
    about = "Sandwich-attack measurement over public and private transaction routes"
)]
pub struct Cli {
    /// TOML run configuration; relative paths inside resolve against its directory.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(flatten)]
    pub overrides: Overrides,

    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load transactions and label visibility against the mempool index.
    Ingest,
    /// Attach MEV labels from the configured provider.
    Enrich,
    /// Detect sandwiches block by block.
    Detect,
    /// Cohort, concentration, economics and fork-filter analysis.
    Analyze,
    /// Write the report bundle.
    Report,
    /// Generate a synthetic dataset with ground truth into the output directory.
    Synth,
    /// Run ingest through report.
    All,
}

#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// Transactions file (CSV or JSONL).
    #[arg(long, global = true)]
    pub transactions: Option<PathBuf>,
    /// Mempool observations: tx_hash,first_seen_ts.
    #[arg(long, global = true)]
    pub mempool: Option<PathBuf>,
    /// JSONL label fixture.
    #[arg(long, global = true)]
    pub labels: Option<PathBuf>,
    /// Forked block list, one number per line.
    #[arg(long, global = true)]
    pub forks: Option<PathBuf>,
    /// TOML month ranges: label = [start, end].
    #[arg(long, global = true)]
    pub ranges: Option<PathBuf>,
    /// Output directory for stages and the report bundle.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for within-stage parallelism.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Observation window after each anchor, in days.
    #[arg(long, global = true)]
    pub window_days: Option<u32>,
    /// Largest sandwich count n for cohort tables.
    #[arg(long, global = true)]
    pub n_max: Option<u32>,
    /// Rows kept in each concentration table.
    #[arg(long, global = true)]
    pub top_k: Option<usize>,
    /// Count a mempool observation at exactly the block time as private.
    #[arg(long, global = true)]
    pub strict_visibility_tie: bool,
    /// Label source: fixture or http.
    #[arg(long, global = true, value_parser = parse_mode)]
    pub provider: Option<ProviderMode>,
    /// Base URL of the label API.
    #[arg(long, global = true)]
    pub base_url: Option<String>,
    /// Directory for cached per-block label files.
    #[arg(long, global = true)]
    pub cache_dir: Option<PathBuf>,
    /// Request pacing for the label API.
    #[arg(long, global = true)]
    pub max_requests_per_second: Option<f64>,
    /// Generator seed (synth).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Blocks to generate (synth).
    #[arg(long, global = true)]
    pub n_blocks: Option<u32>,
    /// User addresses to generate (synth).
    #[arg(long, global = true)]
    pub n_addresses: Option<u32>,
    /// Share of users who get sandwiched at least once (synth).
    #[arg(long, global = true)]
    pub sandwich_rate: Option<f64>,
}

fn parse_mode(s: &str) -> Result<ProviderMode, String> {
    match s {
        "fixture" => Ok(ProviderMode::Fixture),
        "http" => Ok(ProviderMode::Http),
        _ => Err(format!("unknown provider mode {s:?} (fixture or http)")),
    }
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        macro_rules! set {
            ($src:expr => $dst:expr) => {
                if let Some(v) = $src.clone() {
                    $dst = v.into();
                }
            };
        }
        set!(self.transactions => cfg.transactions);
        set!(self.mempool => cfg.mempool);
        set!(self.labels => cfg.labels);
        set!(self.forks => cfg.forks);
        set!(self.ranges => cfg.ranges_file);
        set!(self.out => cfg.out_dir);
        set!(self.threads => cfg.threads);
        set!(self.window_days => cfg.window_days);
        set!(self.n_max => cfg.n_max);
        set!(self.top_k => cfg.top_k);
        set!(self.provider => cfg.provider.mode);
        set!(self.base_url => cfg.provider.base_url);
        set!(self.cache_dir => cfg.provider.cache_path);
        set!(self.max_requests_per_second => cfg.provider.max_requests_per_second);
        set!(self.seed => cfg.synth.seed);
        set!(self.n_blocks => cfg.synth.n_blocks);
        set!(self.n_addresses => cfg.synth.n_addresses);
        set!(self.sandwich_rate => cfg.synth.sandwich_rate);
        if self.strict_visibility_tie {
            cfg.strict_visibility_tie = true;
        }
        if let Some(w) = self.window_days {
            cfg.synth.window_days = w;
        }
    }
}

pub fn resolve_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    cli.overrides.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<(), Error> {
    let cfg = resolve_config(cli)?;
    let started = Instant::now();
    if let Command::Synth = cli.command {
        let (chain, files) = dataset::write_dataset(&cfg.synth, &cfg.out_dir)?;
        log::info!(
            "generated {} transactions, {} planted sandwiches into {}",
            chain.txs.len(),
            chain.truth.planted.len(),
            cfg.out_dir.display()
        );
        for f in files {
            println!("{}", f.display());
        }
        return Ok(());
    }
    let p = Pipeline::new(cfg)?;
    match cli.command {
        Command::Ingest => drop(p.ingest()?),
        Command::Enrich => drop(p.enrich()?),
        Command::Detect => drop(p.detect()?),
        Command::Analyze => drop(p.analyze()?),
        Command::Report => {
            for f in p.report()? {
                println!("{}", f.display());
            }
        }
        Command::All => {
            for f in p.run_all()? {
                println!("{}", f.display());
            }
        }
        Command::Synth => unreachable!(),
    }
    log::info!("done in {:.2?}", started.elapsed());
    Ok(())
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .try_init();
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    init_logging(cli.verbose);
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

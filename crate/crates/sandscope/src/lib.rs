//! File formats, the label provider, the staged pipeline and report bundle
//! around `sandscope-core`.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod provider;
pub mod report;

pub use config::RunConfig;
pub use error::Error;
pub use pipeline::Pipeline;

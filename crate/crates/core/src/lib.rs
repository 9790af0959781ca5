//! Core types and algorithms for measuring sandwich attacks on private
//! transaction routes: ingest, label enrichment, detection, behavioural
//! analytics and statistics. Allocation only; IO lives in the `sandscope`
//! crate.
#![no_std]
extern crate alloc;

pub mod analytics;
pub mod detect;
pub mod enrich;
pub mod ingest;
pub mod model;
pub mod stats;
pub mod synth;

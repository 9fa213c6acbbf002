//! Hashed n-gram embedding retrieval over local and pooled memory.
//!
//! The crate covers the full read path of an Engram-style conditional
//! memory table: table geometry and file format ([`config`], [`table`]),
//! n-gram hashing into segment addresses ([`ngram`]), read-only storage
//! backends with an analytic fabric model ([`backend`]), asynchronous
//! prefetch against a simulated decode clock ([`retrieval`]), and the
//! bandwidth, latency and cost arithmetic for sizing a memory pool
//! ([`analysis`]).

pub mod analysis;
pub mod backend;
pub mod config;
mod error;
pub mod ngram;
pub mod retrieval;
pub mod table;

pub use backend::{load_table, BackendKind, FabricModel, GatherReport, StorageBackend};
pub use config::EngramConfig;
pub use error::{Error, Result};
pub use ngram::{
    extract_ngram, hash_to_row, plan_gather, GatherPlan, SegmentAddress, TokenContext,
};
pub use retrieval::{
    issue_prefetch, simulate_decode_step, PrefetchHandle, StepRecord, StepTimeline,
};
pub use table::{write_table, TableFileHeader, TableFill};

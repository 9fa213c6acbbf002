//! Subcommand implementations behind the `engram-pool` binary.
//!
//! Each `cmd_*` returns its rows alongside a [`Report`] so callers can
//! inspect results without parsing CSV.

pub mod bench;
pub mod report;
pub mod settings;
pub mod sizing;

use std::path::Path;

use anyhow::{Context, Result};
use engram_pool::{write_table, EngramConfig, TableFill};

pub use bench::{cmd_bench_gather, cmd_simulate, BackendChoice, BenchSpec};
pub use report::Report;
pub use settings::Settings;
pub use sizing::{cmd_cost, cmd_requirements};

/// Writes a table file for `cfg` and returns its size in bytes.
pub fn cmd_build_table(cfg: &EngramConfig, path: &Path, fill: TableFill) -> Result<u64> {
    write_table(path, cfg, fill).with_context(|| format!("building table {}", path.display()))?;
    Ok(std::fs::metadata(path)?.len())
}

//! Bandwidth and latency requirements for an offloaded Engram table, and
//! the local-DRAM versus pooled-memory capital cost comparison.
//!
//! Cost figures use decimal gigabytes (10^9 bytes) and whole currency
//! units.

use crate::error::{Error, Result};

/// Inputs for the requirement checks.
#[derive(Debug, Clone, PartialEq)]
pub struct RequirementsInput {
    /// Target generation throughput, tokens/sec.
    pub throughput_tps: f64,
    /// Bytes retrieved per token for one Engram layer.
    pub s_layer_bytes: f64,
    /// Number of Engram layers.
    pub n_eng: usize,
    /// Tokens concurrently triggering retrieval in one step.
    pub n_token: usize,
    pub layer_exec_ns: Vec<f64>,
    /// 1-based Engram layer under test.
    pub engram_layer: usize,
    /// End-to-end pool latency for one layer's gather.
    pub pool_latency_ns: f64,
}

impl RequirementsInput {
    /// Decode-step case study: 70k tokens/s, 5,120 B/token/layer, Engram
    /// at layers 2 and 15, batch 256, 3.6 ms over 64 uniform layers.
    pub fn case_study() -> Self {
        Self {
            throughput_tps: 70_000.0,
            s_layer_bytes: 5_120.0,
            n_eng: 2,
            n_token: 256,
            layer_exec_ns: vec![3_600_000.0 / 64.0; 64],
            engram_layer: 2,
            pool_latency_ns: 0.0,
        }
    }

    pub fn step_ns(&self) -> f64 {
        self.layer_exec_ns.iter().sum()
    }
}

/// Minimum average pool bandwidth in bytes/sec, `T × S_layer × N_eng`.
pub fn required_bandwidth(inp: &RequirementsInput) -> f64 {
    inp.throughput_tps * inp.s_layer_bytes * inp.n_eng as f64
}

/// Compute time preceding the Engram layer, in ns.
pub fn prefetch_window(inp: &RequirementsInput) -> Result<f64> {
    let k = inp.engram_layer;
    if k == 0 || k > inp.layer_exec_ns.len() {
        return Err(Error::LayerOutOfRange {
            k,
            layers: inp.layer_exec_ns.len(),
        });
    }
    Ok(inp.layer_exec_ns[..k - 1].iter().sum())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintCheck {
    pub required_bandwidth: f64,
    pub prefetch_window_ns: f64,
    pub bandwidth_ok: bool,
    pub latency_ok: bool,
    /// `pool_bandwidth - required_bandwidth`, bytes/sec.
    pub bandwidth_margin: f64,
    /// `prefetch_window - pool_latency`, ns.
    pub latency_margin_ns: f64,
}

/// Both requirements are strict inequalities.
pub fn check_constraints(inp: &RequirementsInput, pool_bandwidth: f64) -> Result<ConstraintCheck> {
    let required = required_bandwidth(inp);
    let window = prefetch_window(inp)?;
    Ok(ConstraintCheck {
        required_bandwidth: required,
        prefetch_window_ns: window,
        bandwidth_ok: pool_bandwidth > required,
        latency_ok: inp.pool_latency_ns < window,
        bandwidth_margin: pool_bandwidth - required,
        latency_margin_ns: window - inp.pool_latency_ns,
    })
}

/// Unit prices and deployment shape for the cost comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct CostInput {
    pub dram_per_gb: f64,
    pub switch_cost: f64,
    pub adapter_cost: f64,
    pub controller_cost: f64,
    pub nodes: u32,
    pub table_gb: f64,
}

/// Bytes per parameter when sizing a table from its parameter count.
pub const DEFAULT_BYTES_PER_PARAM: f64 = 2.0;

/// Decimal gigabytes needed to store `params` parameters.
pub fn params_to_gb(params: f64, bytes_per_param: f64) -> f64 {
    params * bytes_per_param / 1e9
}

impl CostInput {
    /// DDR5 at $15/GB, a $5,800 switch, $210 host adapters and $300
    /// memory-expansion controllers.
    pub fn reference_prices(nodes: u32, table_gb: f64) -> Self {
        Self {
            dram_per_gb: 15.0,
            switch_cost: 5_800.0,
            adapter_cost: 210.0,
            controller_cost: 300.0,
            nodes,
            table_gb,
        }
    }
}

/// Every node holds its own full copy of the table in DRAM.
pub fn local_cost(c: &CostInput) -> f64 {
    c.nodes as f64 * c.table_gb * c.dram_per_gb
}

/// One shared copy behind a switch; each node adds an adapter and a
/// controller.
pub fn pool_cost(c: &CostInput) -> f64 {
    c.switch_cost
        + c.nodes as f64 * (c.adapter_cost + c.controller_cost)
        + c.table_gb * c.dram_per_gb
}

pub fn savings(c: &CostInput) -> f64 {
    local_cost(c) - pool_cost(c)
}

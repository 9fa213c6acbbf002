//! The `requirements` and `cost` subcommands.

use anyhow::{ensure, Result};
use engram_pool::analysis::{
    check_constraints, local_cost, params_to_gb, pool_cost, prefetch_window, required_bandwidth,
    savings, CostInput,
};
use engram_pool::backend::PRESET_NAMES;

use crate::report::{append_config, dollars, grouped, params_label, Csv, Report};
use crate::settings::{CostSettings, Settings};

/// One pool evaluated against one Engram layer's deadline.
#[derive(Debug, Clone, PartialEq)]
pub struct RequirementRow {
    pub engram_layer: usize,
    pub prefetch_window_ns: f64,
    pub required_bandwidth: f64,
    pub pool: String,
    pub pool_latency_ns: Option<f64>,
    pub pool_bandwidth: Option<f64>,
    pub bandwidth_ok: Option<bool>,
    pub latency_ok: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct Requirements {
    pub required_bandwidth: f64,
    /// `(k, window_ns)` for every Engram layer.
    pub windows: Vec<(usize, f64)>,
    pub rows: Vec<RequirementRow>,
    pub report: Report,
}

/// Whole nanoseconds get separators; anything else keeps three decimals.
fn fmt_ns(ns: f64) -> String {
    if ns.fract() == 0.0 && ns.abs() < 1e30 {
        grouped(ns as i128)
    } else {
        format!("{ns:.3}")
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn verdict(ok: Option<bool>) -> &'static str {
    match ok {
        Some(true) => "yes",
        Some(false) => "no",
        None => "n/a",
    }
}

/// Required bandwidth, per-layer prefetch windows, and how each fabric
/// preset (plus any user-supplied pool figures) fares against them. Preset
/// latency is the modeled time for one layer's gather at `n_token` tokens.
pub fn cmd_requirements(settings: &Settings) -> Result<Requirements> {
    let cfg = &settings.engram;
    let r = &settings.requirements;
    ensure!(r.throughput_tps > 0.0, "throughput must be positive");
    ensure!(r.n_token > 0, "n_token must be positive");
    let base = settings.requirements_input(cfg.engram_layers[0])?;
    ensure!(base.s_layer_bytes > 0.0, "s_layer_bytes must be positive");
    let required = required_bandwidth(&base);

    let messages = (r.n_token * cfg.segments_per_token()) as u64;
    let bytes = (r.n_token as f64 * base.s_layer_bytes) as u64;
    let message_bytes = cfg.segment_bytes() as u64;

    let mut windows = Vec::new();
    let mut rows = Vec::new();
    for &k in &cfg.engram_layers {
        let mut inp = settings.requirements_input(k)?;
        let window = prefetch_window(&inp)?;
        windows.push((k, window));
        for name in PRESET_NAMES {
            let model = settings.fabric_model(name)?;
            if model.base_latency_ns == 0.0 && model.per_byte_ns == 0.0 {
                continue;
            }
            inp.pool_latency_ns = model.service(messages, bytes).service_ns;
            let bw = model.effective_bandwidth(message_bytes, messages);
            let c = check_constraints(&inp, bw)?;
            rows.push(RequirementRow {
                engram_layer: k,
                prefetch_window_ns: window,
                required_bandwidth: required,
                pool: model.name.clone(),
                pool_latency_ns: Some(inp.pool_latency_ns),
                pool_bandwidth: Some(bw),
                bandwidth_ok: Some(c.bandwidth_ok),
                latency_ok: Some(c.latency_ok),
            });
        }
        if r.pool_latency_ns.is_some() || r.pool_bandwidth.is_some() {
            inp.pool_latency_ns = r.pool_latency_ns.unwrap_or(0.0);
            let c = check_constraints(&inp, r.pool_bandwidth.unwrap_or(f64::INFINITY))?;
            rows.push(RequirementRow {
                engram_layer: k,
                prefetch_window_ns: window,
                required_bandwidth: required,
                pool: "given".into(),
                pool_latency_ns: r.pool_latency_ns,
                pool_bandwidth: r.pool_bandwidth,
                bandwidth_ok: r.pool_bandwidth.map(|_| c.bandwidth_ok),
                latency_ok: r.pool_latency_ns.map(|_| c.latency_ok),
            });
        }
    }

    let mut csv = Csv::new(
        "requirements",
        &[
            "engram_layer",
            "prefetch_window_ns",
            "required_bandwidth_Bps",
            "pool",
            "pool_latency_ns",
            "pool_bandwidth_Bps",
            "bandwidth_ok",
            "latency_ok",
        ],
    );
    for row in &rows {
        csv.row([
            row.engram_layer.to_string(),
            format!("{:.3}", row.prefetch_window_ns),
            format!("{:.3}", row.required_bandwidth),
            row.pool.clone(),
            opt(row.pool_latency_ns.map(|v| format!("{v:.3}"))),
            opt(row.pool_bandwidth.map(|v| format!("{v:.3}"))),
            opt(row.bandwidth_ok),
            opt(row.latency_ok),
        ]);
    }

    let mut md = String::from("# Pool requirements\n\n## Inputs\n\n");
    md.push_str(&format!(
        "- throughput: {} tokens/s\n- bytes per token per layer: {} B\n- Engram layers: {} ({:?} of {})\n- tokens per step: {}\n- decode step: {} ns\n",
        fmt_ns(base.throughput_tps),
        fmt_ns(base.s_layer_bytes),
        base.n_eng,
        cfg.engram_layers,
        cfg.total_layers,
        r.n_token,
        fmt_ns(base.step_ns()),
    ));
    md.push_str(&format!(
        "\n## Results\n\n- required bandwidth: {} B/s (≈ {:.1} GB/s)\n",
        fmt_ns(required),
        required / 1e9
    ));
    for (k, w) in &windows {
        md.push_str(&format!(
            "- prefetch window before layer {k}: {} ns (≈ {:.0} µs)\n",
            fmt_ns(*w),
            w / 1e3
        ));
    }
    md.push_str(&format!(
        "\n## Pools\n\nModeled pools serve one layer's gather: {messages} reads of {message_bytes} B.\n\n| layer | pool | latency (ns) | bandwidth (B/s) | bandwidth ok | latency ok |\n|---|---|---|---|---|---|\n"
    ));
    for row in &rows {
        md.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} |\n",
            row.engram_layer,
            row.pool,
            row.pool_latency_ns
                .map(|v| format!("{v:.1}"))
                .unwrap_or("-".into()),
            row.pool_bandwidth
                .map(|v| format!("{v:.0}"))
                .unwrap_or("-".into()),
            verdict(row.bandwidth_ok),
            verdict(row.latency_ok),
        ));
    }
    append_config(&mut md, settings);
    Ok(Requirements {
        required_bandwidth: required,
        windows,
        rows,
        report: Report {
            csv,
            extra: Vec::new(),
            markdown: md,
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostRow {
    pub engram_params: f64,
    pub table_gb: f64,
    pub nodes: u32,
    pub local_usd: f64,
    pub pool_usd: f64,
    pub savings_usd: f64,
}

#[derive(Debug, Clone)]
pub struct CostTable {
    pub rows: Vec<CostRow>,
    pub report: Report,
}

/// Local DRAM versus shared pool for every (table size, node count) pair.
pub fn cmd_cost(settings: &Settings, cost: &CostSettings) -> Result<CostTable> {
    ensure!(!cost.nodes.is_empty(), "no node counts given");
    ensure!(!cost.engram_params.is_empty(), "no Engram sizes given");
    ensure!(
        cost.bytes_per_param > 0.0,
        "bytes_per_param must be positive"
    );
    for (name, v) in [
        ("dram_per_gb", cost.dram_per_gb),
        ("switch_cost", cost.switch_cost),
        ("adapter_cost", cost.adapter_cost),
        ("controller_cost", cost.controller_cost),
    ] {
        ensure!(
            v.is_finite() && v >= 0.0,
            "{name} must be a non-negative number"
        );
    }

    let mut rows = Vec::new();
    for &params in &cost.engram_params {
        let table_gb = params_to_gb(params, cost.bytes_per_param);
        for &nodes in &cost.nodes {
            let c = CostInput {
                dram_per_gb: cost.dram_per_gb,
                switch_cost: cost.switch_cost,
                adapter_cost: cost.adapter_cost,
                controller_cost: cost.controller_cost,
                nodes,
                table_gb,
            };
            rows.push(CostRow {
                engram_params: params,
                table_gb,
                nodes,
                local_usd: local_cost(&c),
                pool_usd: pool_cost(&c),
                savings_usd: savings(&c),
            });
        }
    }

    let mut csv = Csv::new(
        "cost",
        &[
            "engram_params",
            "table_gb",
            "nodes",
            "local_usd",
            "pool_usd",
            "savings_usd",
        ],
    );
    let mut md = format!(
        "# Storage cost\n\nDRAM ${}/GB, switch {}, host adapter {}, pool controller {}; {} bytes per parameter, GB = 10^9 bytes.\n\n| Engram | Nodes | Local | CXL Pool | Savings |\n|---|---|---|---|---|\n",
        cost.dram_per_gb,
        dollars(cost.switch_cost),
        dollars(cost.adapter_cost),
        dollars(cost.controller_cost),
        cost.bytes_per_param,
    );
    for r in &rows {
        csv.row([
            format!("{}", r.engram_params),
            format!("{}", r.table_gb),
            r.nodes.to_string(),
            format!("{:.2}", r.local_usd),
            format!("{:.2}", r.pool_usd),
            format!("{:.2}", r.savings_usd),
        ]);
        md.push_str(&format!(
            "| {} | {} | {} | {} | {} |\n",
            params_label(r.engram_params),
            r.nodes,
            dollars(r.local_usd),
            dollars(r.pool_usd),
            dollars(r.savings_usd),
        ));
    }
    let mut resolved = settings.clone();
    resolved.cost = Some(cost.clone());
    append_config(&mut md, &resolved);
    Ok(CostTable {
        rows,
        report: Report {
            csv,
            extra: Vec::new(),
            markdown: md,
        },
    })
}

//! The TOML configuration file.
//!
//! Every section is optional. Missing sections fall back to the desk-scale
//! defaults: Engram-27B row geometry truncated to 65,536 rows (168 MB), the
//! 3.6 ms / 64-layer decode step, and the reference hardware prices.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use engram_pool::analysis::{CostInput, RequirementsInput, DEFAULT_BYTES_PER_PARAM};
use engram_pool::{EngramConfig, FabricModel, StepTimeline};
use serde::{Deserialize, Serialize};

/// Environment variable consulted when `--config` is not given.
pub const CONFIG_ENV: &str = "ENGRAM_POOL_CONFIG";

pub const DESK_ROWS: u64 = 65_536;

fn desk_engram() -> EngramConfig {
    EngramConfig {
        num_rows: DESK_ROWS,
        ..EngramConfig::engram_27b()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    #[serde(default = "desk_engram")]
    pub engram: EngramConfig,
    #[serde(default)]
    pub timeline: TimelineSettings,
    /// Overrides for the built-in fabric presets, or new presets when all
    /// fields are given.
    #[serde(default)]
    pub fabric: BTreeMap<String, FabricOverride>,
    #[serde(default)]
    pub bench: BenchSettings,
    #[serde(default)]
    pub requirements: RequirementsSettings,
    /// Unit prices. When the section is present every price is required.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<CostSettings>,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            engram: desk_engram(),
            timeline: TimelineSettings::default(),
            fabric: BTreeMap::new(),
            bench: BenchSettings::default(),
            requirements: RequirementsSettings::default(),
            cost: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimelineSettings {
    /// Decode step time split evenly over `engram.total_layers`.
    pub step_ns: f64,
    /// Explicit per-layer durations; overrides `step_ns`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layer_exec_ns: Option<Vec<f64>>,
}

impl Default for TimelineSettings {
    fn default() -> Self {
        Self {
            step_ns: 3_600_000.0,
            layer_exec_ns: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FabricOverride {
    pub base_latency_ns: Option<f64>,
    pub per_message_ns: Option<f64>,
    pub per_byte_ns: Option<f64>,
    pub max_inflight: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSettings {
    pub batch_sizes: Vec<usize>,
    pub repetitions: usize,
    pub warmup: usize,
    pub workers: usize,
    pub steps: usize,
    pub seed: u64,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self {
            batch_sizes: (0..10).map(|i| 1 << i).collect(),
            repetitions: 20,
            warmup: 3,
            workers: 8,
            steps: 16,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RequirementsSettings {
    pub throughput_tps: f64,
    /// Defaults to the configured per-token payload.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_layer_bytes: Option<f64>,
    pub n_token: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pool_latency_ns: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pool_bandwidth: Option<f64>,
}

impl Default for RequirementsSettings {
    fn default() -> Self {
        Self {
            throughput_tps: 70_000.0,
            s_layer_bytes: None,
            n_token: 256,
            pool_latency_ns: None,
            pool_bandwidth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSettings {
    pub dram_per_gb: f64,
    pub switch_cost: f64,
    pub adapter_cost: f64,
    pub controller_cost: f64,
    #[serde(default = "default_nodes")]
    pub nodes: Vec<u32>,
    /// Engram table sizes in parameters.
    #[serde(default = "default_params")]
    pub engram_params: Vec<f64>,
    #[serde(default = "default_bytes_per_param")]
    pub bytes_per_param: f64,
}

fn default_nodes() -> Vec<u32> {
    vec![2, 4, 8, 16]
}

fn default_params() -> Vec<f64> {
    vec![100e9, 400e9]
}

fn default_bytes_per_param() -> f64 {
    DEFAULT_BYTES_PER_PARAM
}

impl Default for CostSettings {
    fn default() -> Self {
        let p = CostInput::reference_prices(1, 0.0);
        Self {
            dram_per_gb: p.dram_per_gb,
            switch_cost: p.switch_cost,
            adapter_cost: p.adapter_cost,
            controller_cost: p.controller_cost,
            nodes: default_nodes(),
            engram_params: default_params(),
            bytes_per_param: default_bytes_per_param(),
        }
    }
}

impl Settings {
    pub fn from_toml(text: &str) -> Result<Self> {
        let settings: Self = toml::from_str(text)?;
        settings.engram.check()?;
        Ok(settings)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// `--config` if given, else `$ENGRAM_POOL_CONFIG`, else defaults.
    pub fn resolve(path: Option<&Path>) -> Result<Self> {
        let env_path = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
        match path.or(env_path.as_deref()) {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("settings serialize to TOML")
    }

    /// A built-in preset with any configured overrides applied, or a
    /// fully specified custom preset.
    pub fn fabric_model(&self, name: &str) -> Result<FabricModel> {
        let over = self.fabric.get(name);
        let mut model = match (FabricModel::preset(name), over) {
            (Some(m), _) => m,
            (None, Some(o)) => match (
                o.base_latency_ns,
                o.per_message_ns,
                o.per_byte_ns,
                o.max_inflight,
            ) {
                (Some(base), Some(msg), Some(byte), Some(inflight)) => FabricModel {
                    name: name.to_owned(),
                    base_latency_ns: base,
                    per_message_ns: msg,
                    per_byte_ns: byte,
                    max_inflight: inflight,
                },
                _ => bail!("custom fabric `{name}` must set every parameter"),
            },
            (None, None) => bail!("unknown fabric preset `{name}`"),
        };
        if let Some(o) = over {
            if let Some(v) = o.base_latency_ns {
                model.base_latency_ns = v;
            }
            if let Some(v) = o.per_message_ns {
                model.per_message_ns = v;
            }
            if let Some(v) = o.per_byte_ns {
                model.per_byte_ns = v;
            }
            if let Some(v) = o.max_inflight {
                model.max_inflight = v;
            }
        }
        Ok(model.validate()?)
    }

    pub fn timeline(&self) -> Result<StepTimeline> {
        let cfg = &self.engram;
        let timeline = match &self.timeline.layer_exec_ns {
            Some(durations) => {
                if durations.len() != cfg.total_layers {
                    bail!(
                        "timeline lists {} layer durations but total_layers is {}",
                        durations.len(),
                        cfg.total_layers
                    );
                }
                StepTimeline::new(durations.clone(), cfg.engram_layers.clone())?
            }
            None => StepTimeline::for_config(cfg, self.timeline.step_ns)?,
        };
        Ok(timeline)
    }

    /// Requirement inputs for Engram layer `k`.
    pub fn requirements_input(&self, k: usize) -> Result<RequirementsInput> {
        let r = &self.requirements;
        Ok(RequirementsInput {
            throughput_tps: r.throughput_tps,
            s_layer_bytes: r
                .s_layer_bytes
                .unwrap_or(self.engram.payload_bytes_per_token_layer() as f64),
            n_eng: self.engram.n_eng(),
            n_token: r.n_token,
            layer_exec_ns: self.timeline()?.layer_exec_ns().to_vec(),
            engram_layer: k,
            pool_latency_ns: r.pool_latency_ns.unwrap_or(0.0),
        })
    }
}

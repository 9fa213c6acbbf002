//! `engram-pool`: build tables, benchmark gathers, simulate decode steps,
//! and evaluate pool requirements and costs.

use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use engram_pool::TableFill;
use engram_pool_cli::bench::{parse_backends, plan_trace, sweep_plan};
use engram_pool_cli::settings::CONFIG_ENV;
use engram_pool_cli::{
    cmd_bench_gather, cmd_build_table, cmd_cost, cmd_requirements, cmd_simulate, BenchSpec, Report,
    Settings,
};

#[derive(Parser)]
#[command(name = "engram-pool", version, about)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write an embedding table file for the configured geometry.
    BuildTable {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Fill::Random)]
        fill: Fill,
    },
    /// Gather latency per batch size and backend.
    BenchGather {
        #[command(flatten)]
        run: RunArgs,
        /// Also write the segment plan for the largest batch as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Simulated decode throughput with prefetch and stall accounting.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// Decode steps per (batch, backend).
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Bandwidth and prefetch-window requirements.
    Requirements {
        /// Target throughput in tokens/s.
        #[arg(long)]
        throughput: Option<f64>,
        /// Bytes fetched per token per Engram layer.
        #[arg(long)]
        s_layer_bytes: Option<f64>,
        /// Tokens per decode step.
        #[arg(long)]
        n_token: Option<usize>,
        /// Decode step duration in ns, split evenly over the layers.
        #[arg(long)]
        step_ns: Option<f64>,
        /// Latency of a candidate pool, ns.
        #[arg(long)]
        pool_latency_ns: Option<f64>,
        /// Bandwidth of a candidate pool, bytes/s.
        #[arg(long)]
        pool_bandwidth: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Local DRAM versus shared pool capital cost.
    Cost {
        #[arg(long)]
        dram_per_gb: Option<f64>,
        #[arg(long)]
        switch_cost: Option<f64>,
        #[arg(long)]
        adapter_cost: Option<f64>,
        #[arg(long)]
        controller_cost: Option<f64>,
        /// Comma-separated node counts.
        #[arg(long, value_delimiter = ',')]
        nodes: Option<Vec<u32>>,
        /// Comma-separated Engram sizes in parameters, e.g. 100e9,400e9.
        #[arg(long, value_delimiter = ',')]
        engram_params: Option<Vec<f64>>,
        #[arg(long)]
        bytes_per_param: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Fill {
    Zeros,
    Random,
}

#[derive(Args)]
struct RunArgs {
    /// Comma-separated: local, mapped, modeled:PRESET, modeled:PRESET@mapped.
    #[arg(long)]
    backend: Option<String>,
    /// Table file to serve from; required by `mapped`.
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    batch_sizes: Option<Vec<usize>>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV output; the markdown summary goes next to it.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn spec(&self, settings: Settings, default_backends: &str) -> Result<BenchSpec> {
        let backends = parse_backends(self.backend.as_deref().unwrap_or(default_backends))?;
        let mut spec = BenchSpec::new(settings, backends);
        spec.table = self.table.clone();
        if let Some(v) = &self.batch_sizes {
            spec.batch_sizes = v.clone();
        }
        if let Some(v) = self.workers {
            spec.workers = v;
        }
        if let Some(v) = self.repetitions {
            spec.repetitions = v;
        }
        if let Some(v) = self.warmup {
            spec.warmup = v;
        }
        if let Some(v) = self.seed {
            spec.seed = v;
        }
        Ok(spec)
    }
}

fn emit(report: &Report, out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(path) => {
            for p in report.write(path)? {
                println!("wrote {}", p.display());
            }
        }
        None => print!("{}", report.markdown),
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let mut settings = Settings::resolve(cli.config.as_deref())?;
    match cli.command {
        Command::BuildTable { out, fill } => {
            let fill = match fill {
                Fill::Zeros => TableFill::Zeros,
                Fill::Random => TableFill::SeededRandom,
            };
            let size = cmd_build_table(&settings.engram, &out, fill)?;
            println!("wrote {} ({size} bytes)", out.display());
        }
        Command::BenchGather { run, trace } => {
            let spec = run.spec(settings, "local,modeled:dram,modeled:cxl,modeled:rdma")?;
            let sweep = cmd_bench_gather(&spec)?;
            if let Some(path) = trace {
                let batch = *spec.batch_sizes.iter().max().expect("validated non-empty");
                let csv = plan_trace(&sweep_plan(&spec, batch)?, &spec.settings.engram);
                std::fs::write(&path, csv.as_str())?;
                println!("wrote {}", path.display());
            }
            emit(&sweep.report, run.out.as_ref())?;
        }
        Command::Simulate { run, steps } => {
            let mut spec = run.spec(settings, "modeled:dram,modeled:cxl,modeled:rdma")?;
            if let Some(v) = steps {
                spec.steps = v;
            }
            emit(&cmd_simulate(&spec)?.report, run.out.as_ref())?;
        }
        Command::Requirements {
            throughput,
            s_layer_bytes,
            n_token,
            step_ns,
            pool_latency_ns,
            pool_bandwidth,
            out,
        } => {
            let r = &mut settings.requirements;
            if let Some(v) = throughput {
                r.throughput_tps = v;
            }
            r.s_layer_bytes = s_layer_bytes.or(r.s_layer_bytes);
            if let Some(v) = n_token {
                r.n_token = v;
            }
            r.pool_latency_ns = pool_latency_ns.or(r.pool_latency_ns);
            r.pool_bandwidth = pool_bandwidth.or(r.pool_bandwidth);
            if let Some(v) = step_ns {
                if settings.timeline.layer_exec_ns.is_some() {
                    bail!("--step-ns conflicts with per-layer durations in the config");
                }
                settings.timeline.step_ns = v;
            }
            emit(&cmd_requirements(&settings)?.report, out.as_ref())?;
        }
        Command::Cost {
            dram_per_gb,
            switch_cost,
            adapter_cost,
            controller_cost,
            nodes,
            engram_params,
            bytes_per_param,
            out,
        } => {
            let mut cost = settings.cost.clone().unwrap_or_default();
            let set = |slot: &mut f64, v: Option<f64>| {
                if let Some(v) = v {
                    *slot = v;
                }
            };
            set(&mut cost.dram_per_gb, dram_per_gb);
            set(&mut cost.switch_cost, switch_cost);
            set(&mut cost.adapter_cost, adapter_cost);
            set(&mut cost.controller_cost, controller_cost);
            set(&mut cost.bytes_per_param, bytes_per_param);
            if let Some(v) = nodes {
                cost.nodes = v;
            }
            if let Some(v) = engram_params {
                cost.engram_params = v;
            }
            emit(&cmd_cost(&settings, &cost)?.report, out.as_ref())?;
        }
    }
    Ok(())
}

//! Gather latency sweeps and simulated decode runs.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, ensure, Result};
use engram_pool::ngram::SENTINEL_TOKEN;
use engram_pool::{
    load_table, plan_gather, simulate_decode_step, BackendKind, EngramConfig, FabricModel,
    GatherPlan, StorageBackend, TableFill, TokenContext,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::report::{append_config, mean, percentile, Csv, Report};
use crate::settings::Settings;

/// Measured gathers shorter than this are repeated in a loop and averaged.
const MIN_TIMED_NS: u64 = 1_000;
const INNER_LOOP_TARGET_NS: u64 = 10_000;
/// Tokens in each synthetic prompt before decoding starts.
const PROMPT_LEN: usize = 8;

/// A backend named on the command line: `local`, `mapped`,
/// `modeled:PRESET` (over local memory) or `modeled:PRESET@mapped`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendChoice {
    Local,
    Mapped,
    Modeled { fabric: String, mapped: bool },
}

impl FromStr for BackendChoice {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "local" => Ok(Self::Local),
            "mapped" => Ok(Self::Mapped),
            _ => {
                let Some(rest) = s.strip_prefix("modeled:") else {
                    bail!("unknown backend `{s}` (expected local, mapped or modeled:PRESET)");
                };
                let (fabric, mapped) = match rest.split_once('@') {
                    Some((f, "mapped")) => (f, true),
                    Some((_, inner)) => {
                        bail!("modeled backends wrap `mapped` or local memory, not `{inner}`")
                    }
                    None => (rest, false),
                };
                ensure!(!fabric.is_empty(), "missing preset in `{s}`");
                Ok(Self::Modeled {
                    fabric: fabric.to_owned(),
                    mapped,
                })
            }
        }
    }
}

impl fmt::Display for BackendChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Local => f.write_str("local"),
            Self::Mapped => f.write_str("mapped"),
            Self::Modeled {
                fabric,
                mapped: false,
            } => write!(f, "modeled:{fabric}"),
            Self::Modeled {
                fabric,
                mapped: true,
            } => write!(f, "modeled:{fabric}@mapped"),
        }
    }
}

/// Parses a comma-separated backend list.
pub fn parse_backends(list: &str) -> Result<Vec<BackendChoice>> {
    list.split(',').map(|s| s.trim().parse()).collect()
}

/// Everything a sweep or simulation run needs.
#[derive(Debug, Clone)]
pub struct BenchSpec {
    pub settings: Settings,
    pub backends: Vec<BackendChoice>,
    /// Table file; without one, local memory is filled in place from the
    /// config's seed.
    pub table: Option<PathBuf>,
    pub batch_sizes: Vec<usize>,
    pub repetitions: usize,
    pub warmup: usize,
    pub workers: usize,
    pub steps: usize,
    pub seed: u64,
}

impl BenchSpec {
    pub fn new(settings: Settings, backends: Vec<BackendChoice>) -> Self {
        let b = settings.bench.clone();
        Self {
            settings,
            backends,
            table: None,
            batch_sizes: b.batch_sizes,
            repetitions: b.repetitions,
            warmup: b.warmup,
            workers: b.workers,
            steps: b.steps,
            seed: b.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(!self.backends.is_empty(), "no backends selected");
        ensure!(!self.batch_sizes.is_empty(), "no batch sizes selected");
        ensure!(
            self.batch_sizes.iter().all(|&b| b > 0),
            "batch sizes must be positive"
        );
        ensure!(self.repetitions >= 1, "repetitions must be at least 1");
        ensure!(self.workers >= 1, "workers must be at least 1");
        self.settings.engram.check()?;
        Ok(())
    }

    fn cfg(&self) -> &EngramConfig {
        &self.settings.engram
    }

    /// Opens every selected backend. Local memory is built once and shared.
    fn open_backends(&self) -> Result<Vec<(String, Arc<StorageBackend>)>> {
        let cfg = self.cfg();
        let mut local: Option<StorageBackend> = None;
        let mut mapped: Option<StorageBackend> = None;
        let mut get_local = || -> Result<StorageBackend> {
            if local.is_none() {
                local = Some(match &self.table {
                    Some(path) => load_table(path, cfg, &BackendKind::LocalMemory)?,
                    None => StorageBackend::in_memory(cfg, TableFill::SeededRandom)?,
                });
            }
            Ok(local.clone().unwrap())
        };
        let mut get_mapped = || -> Result<StorageBackend> {
            let Some(path) = &self.table else {
                bail!("the mapped backend needs a table file (--table)");
            };
            if mapped.is_none() {
                mapped = Some(load_table(path, cfg, &BackendKind::MappedFile)?);
            }
            Ok(mapped.clone().unwrap())
        };
        let mut out = Vec::with_capacity(self.backends.len());
        for choice in &self.backends {
            let backend = match choice {
                BackendChoice::Local => get_local()?,
                BackendChoice::Mapped => get_mapped()?,
                BackendChoice::Modeled { fabric, mapped } => {
                    let inner = if *mapped { get_mapped()? } else { get_local()? };
                    StorageBackend::modeled(inner, self.settings.fabric_model(fabric)?)?
                }
            };
            out.push((choice.to_string(), Arc::new(backend)));
        }
        Ok(out)
    }

    fn fabrics(&self) -> Result<Vec<FabricModel>> {
        let mut out = Vec::new();
        for choice in &self.backends {
            if let BackendChoice::Modeled { fabric, .. } = choice {
                let m = self.settings.fabric_model(fabric)?;
                if !out.contains(&m) {
                    out.push(m);
                }
            }
        }
        Ok(out)
    }

    fn describe(&self, md: &mut String) -> Result<()> {
        md.push_str(&format!(
            "\n## Run parameters\n\n- backends: {}\n- table: {}\n- batch sizes: {:?}\n- repetitions: {}, warmup: {}\n- workers: {}\n- steps: {}\n- seed: {}\n",
            self.backends.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(", "),
            self.table
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_else(|| "in-memory, seeded from hash_seed".into()),
            self.batch_sizes,
            self.repetitions,
            self.warmup,
            self.workers,
            self.steps,
            self.seed,
        ));
        let fabrics = self.fabrics()?;
        if !fabrics.is_empty() {
            md.push_str("\n## Fabric models\n\n| name | base_latency_ns | per_message_ns | per_byte_ns | max_inflight |\n|---|---|---|---|---|\n");
            for m in fabrics {
                md.push_str(&format!(
                    "| {} | {} | {} | {} | {} |\n",
                    m.name, m.base_latency_ns, m.per_message_ns, m.per_byte_ns, m.max_inflight
                ));
            }
        }
        append_config(md, &self.settings);
        Ok(())
    }

    fn batch_rng(&self, batch: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed ^ (batch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }
}

fn random_token(rng: &mut impl Rng) -> u32 {
    rng.gen_range(0..SENTINEL_TOKEN)
}

/// `batch` independent sequences of uniformly random token IDs.
pub fn synthetic_batch(rng: &mut impl Rng, batch: usize, len: usize) -> TokenContext {
    let seqs: Vec<Vec<u32>> = (0..batch)
        .map(|_| (0..len).map(|_| random_token(rng)).collect())
        .collect();
    TokenContext::decode_batch(&seqs)
}

/// One row of a gather sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct GatherRow {
    pub batch: usize,
    pub backend: String,
    pub p50_ns: f64,
    pub p99_ns: f64,
    pub mean_ns: f64,
    pub bytes: usize,
    pub modeled_ns: f64,
}

#[derive(Debug, Clone)]
pub struct GatherSweep {
    pub rows: Vec<GatherRow>,
    pub report: Report,
}

fn time_gather(
    backend: &StorageBackend,
    plan: &GatherPlan,
    dst: &mut [u8],
    workers: usize,
) -> Result<f64> {
    let report = backend.read_segments(plan, dst, workers)?;
    if backend.fabric().is_some() {
        return Ok(report.modeled_ns);
    }
    if report.wall_ns >= MIN_TIMED_NS {
        return Ok(report.wall_ns as f64);
    }
    let iters = (INNER_LOOP_TARGET_NS / report.wall_ns.max(1)).clamp(2, 10_000);
    let start = Instant::now();
    for _ in 0..iters {
        backend.read_segments(plan, dst, workers)?;
    }
    Ok(start.elapsed().as_nanos() as f64 / iters as f64)
}

/// Gather latency for every (batch, backend) pair. Real backends report
/// wall-clock percentiles over the repetitions after warmup; modeled
/// backends report the fabric model's service time.
pub fn cmd_bench_gather(spec: &BenchSpec) -> Result<GatherSweep> {
    spec.validate()?;
    let cfg = spec.cfg();
    let backends = spec.open_backends()?;
    let mut rows = Vec::new();
    for &batch in &spec.batch_sizes {
        let mut rng = spec.batch_rng(batch);
        let plans = (0..spec.warmup + spec.repetitions)
            .map(|_| plan_gather(&synthetic_batch(&mut rng, batch, cfg.max_order()), cfg))
            .collect::<Result<Vec<_>, _>>()?;
        let bytes = plans[0].total_bytes();
        let mut dst = vec![0u8; bytes];
        for (label, backend) in &backends {
            let mut samples = Vec::with_capacity(spec.repetitions);
            for (i, plan) in plans.iter().enumerate() {
                let ns = time_gather(backend, plan, &mut dst, spec.workers)?;
                if i >= spec.warmup {
                    samples.push(ns);
                }
            }
            samples.sort_by(f64::total_cmp);
            let p50 = percentile(&samples, 50.0);
            rows.push(GatherRow {
                batch,
                backend: label.clone(),
                p50_ns: p50,
                p99_ns: percentile(&samples, 99.0),
                mean_ns: mean(&samples),
                bytes,
                modeled_ns: match backend.fabric() {
                    Some(m) => m.service(plans[0].len() as u64, bytes as u64).service_ns,
                    None => p50,
                },
            });
        }
    }

    let mut csv = Csv::new(
        "bench-gather",
        &[
            "batch",
            "backend",
            "p50_ns",
            "p99_ns",
            "mean_ns",
            "bytes",
            "modeled_ns",
        ],
    );
    let mut md = String::from(
        "# Gather latency\n\n| batch | backend | p50 (ns) | p99 (ns) | mean (ns) | bytes | modeled (ns) |\n|---|---|---|---|---|---|---|\n",
    );
    for r in &rows {
        let fields = [
            r.batch.to_string(),
            r.backend.clone(),
            format!("{:.1}", r.p50_ns),
            format!("{:.1}", r.p99_ns),
            format!("{:.1}", r.mean_ns),
            r.bytes.to_string(),
            format!("{:.1}", r.modeled_ns),
        ];
        md.push_str(&format!("| {} |\n", fields.join(" | ")));
        csv.row(fields);
    }
    md.push_str("\nMeasured rows are wall-clock times on this host; modeled rows come from the fabric model.\n");
    spec.describe(&mut md)?;
    Ok(GatherSweep {
        rows,
        report: Report {
            csv,
            extra: Vec::new(),
            markdown: md,
        },
    })
}

/// The plan as one CSV row per segment read.
pub fn plan_trace(plan: &GatherPlan, cfg: &EngramConfig) -> Csv {
    let mut csv = Csv::new(
        "plan-trace",
        &["token", "order_idx", "head", "row", "byte_offset", "length"],
    );
    let per_token = cfg.segments_per_token().max(1);
    for (i, a) in plan.addresses.iter().enumerate() {
        csv.row([
            (i / per_token) as u64,
            a.order_idx as u64,
            a.head as u64,
            a.row,
            a.byte_offset,
            a.length as u64,
        ]);
    }
    csv
}

/// Plan for the first measured batch of size `batch` in a sweep.
pub fn sweep_plan(spec: &BenchSpec, batch: usize) -> Result<GatherPlan> {
    let mut rng = spec.batch_rng(batch);
    Ok(plan_gather(
        &synthetic_batch(&mut rng, batch, spec.cfg().max_order()),
        spec.cfg(),
    )?)
}

/// Totals for one (batch, backend) simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSummary {
    pub batch: usize,
    pub backend: String,
    pub steps: usize,
    pub total_ns: f64,
    pub tokens_per_sec: f64,
    pub stall_total_ns: f64,
    pub overhead_pct: f64,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub summaries: Vec<SimSummary>,
    pub report: Report,
}

/// Runs `spec.steps` decode steps per (batch, backend) over synthetic
/// token streams and compares throughput with the no-Engram baseline.
pub fn cmd_simulate(spec: &BenchSpec) -> Result<Simulation> {
    spec.validate()?;
    ensure!(spec.steps >= 1, "steps must be at least 1");
    let cfg = spec.cfg();
    let template = spec.settings.timeline()?;
    let backends = spec.open_backends()?;
    let window = cfg.max_order().max(1);

    let mut steps_csv = Csv::new(
        "simulate-steps",
        &[
            "batch",
            "backend",
            "step",
            "layer",
            "deadline_ns",
            "completion_ns",
            "stall_ns",
            "step_ns",
        ],
    );
    let mut summaries = Vec::new();
    for &batch in &spec.batch_sizes {
        let baseline_ns = template.compute_ns() * spec.steps as f64;
        let throughput = |total_ns: f64| (batch * spec.steps) as f64 / (total_ns * 1e-9);
        summaries.push(SimSummary {
            batch,
            backend: "baseline".into(),
            steps: spec.steps,
            total_ns: baseline_ns,
            tokens_per_sec: throughput(baseline_ns),
            stall_total_ns: 0.0,
            overhead_pct: 0.0,
        });
        for (label, backend) in &backends {
            let mut rng = spec.batch_rng(batch);
            let mut seqs: Vec<Vec<u32>> = (0..batch)
                .map(|_| (0..PROMPT_LEN).map(|_| random_token(&mut rng)).collect())
                .collect();
            let mut total_ns = 0.0;
            let mut stall_ns = 0.0;
            for step in 0..spec.steps {
                for seq in &mut seqs {
                    seq.push(random_token(&mut rng));
                    if seq.len() > window {
                        seq.drain(..seq.len() - window);
                    }
                }
                let ctx = TokenContext::decode_batch(&seqs);
                let rec = simulate_decode_step(cfg, backend, &ctx, &template, spec.workers)?;
                for a in &rec.layers {
                    steps_csv.row([
                        batch.to_string(),
                        label.clone(),
                        step.to_string(),
                        a.layer.to_string(),
                        format!("{:.3}", a.deadline_ns),
                        format!("{:.3}", a.completion_ns),
                        format!("{:.3}", a.stall_ns),
                        format!("{:.3}", rec.step_ns),
                    ]);
                }
                total_ns += rec.step_ns;
                stall_ns += rec.total_stall_ns();
            }
            summaries.push(SimSummary {
                batch,
                backend: label.clone(),
                steps: spec.steps,
                total_ns,
                tokens_per_sec: throughput(total_ns),
                stall_total_ns: stall_ns,
                overhead_pct: (total_ns - baseline_ns) / baseline_ns * 100.0,
            });
        }
    }

    let mut summary_csv = Csv::new(
        "simulate-summary",
        &[
            "batch",
            "backend",
            "steps",
            "total_ns",
            "tokens_per_sec",
            "stall_total_ns",
            "overhead_pct",
        ],
    );
    let mut md = String::from(
        "# Simulated decode throughput\n\n| batch | backend | steps | tokens/s | stall total (ns) | overhead |\n|---|---|---|---|---|---|\n",
    );
    for s in &summaries {
        summary_csv.row([
            s.batch.to_string(),
            s.backend.clone(),
            s.steps.to_string(),
            format!("{:.3}", s.total_ns),
            format!("{:.3}", s.tokens_per_sec),
            format!("{:.3}", s.stall_total_ns),
            format!("{:.4}", s.overhead_pct),
        ]);
        md.push_str(&format!(
            "| {} | {} | {} | {:.1} | {:.1} | {:.3}% |\n",
            s.batch, s.backend, s.steps, s.tokens_per_sec, s.stall_total_ns, s.overhead_pct
        ));
    }
    md.push_str(
        "\nAll gathers are issued at the start of each step. A gather finishing after its layer's \
         deadline stalls the step by the difference; stalls add up across layers, which makes the \
         step time an upper bound.\n",
    );
    spec.describe(&mut md)?;
    Ok(Simulation {
        summaries,
        report: Report {
            csv: steps_csv,
            extra: vec![("summary", summary_csv)],
            markdown: md,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_settings() -> Settings {
        let mut s = Settings::default();
        s.engram.num_rows = 512;
        s
    }

    #[test]
    fn parses_backend_lists() {
        let got = parse_backends("local, mapped,modeled:cxl,modeled:rdma@mapped").unwrap();
        assert_eq!(
            got,
            vec![
                BackendChoice::Local,
                BackendChoice::Mapped,
                BackendChoice::Modeled {
                    fabric: "cxl".into(),
                    mapped: false
                },
                BackendChoice::Modeled {
                    fabric: "rdma".into(),
                    mapped: true
                },
            ]
        );
        for (choice, text) in
            got.iter()
                .zip(["local", "mapped", "modeled:cxl", "modeled:rdma@mapped"])
        {
            assert_eq!(choice.to_string(), text);
        }
        assert!(parse_backends("gpu").is_err());
        assert!(parse_backends("modeled:").is_err());
        assert!(parse_backends("modeled:cxl@local").is_err());
    }

    #[test]
    fn rejects_bad_specs() {
        let mut spec = BenchSpec::new(tiny_settings(), vec![BackendChoice::Local]);
        spec.batch_sizes = vec![4, 0];
        assert!(cmd_bench_gather(&spec).is_err());
        spec.batch_sizes = vec![4];
        spec.repetitions = 0;
        assert!(cmd_bench_gather(&spec).is_err());
        spec.repetitions = 1;
        spec.backends = vec![BackendChoice::Mapped];
        let err = cmd_bench_gather(&spec).unwrap_err();
        assert!(err.to_string().contains("--table"), "{err}");
    }

    #[test]
    fn modeled_sweep_rows_follow_formula() {
        let mut spec = BenchSpec::new(
            tiny_settings(),
            vec![BackendChoice::Modeled {
                fabric: "cxl".into(),
                mapped: false,
            }],
        );
        spec.batch_sizes = vec![1, 256];
        spec.repetitions = 3;
        spec.warmup = 1;
        let sweep = cmd_bench_gather(&spec).unwrap();
        let m = FabricModel::cxl();
        for row in &sweep.rows {
            let want = m
                .service(row.batch as u64 * 16, row.bytes as u64)
                .service_ns;
            assert_eq!(row.p50_ns, want);
            assert_eq!(row.modeled_ns, want);
            assert_eq!(row.bytes, row.batch * 5_120);
        }
    }

    #[test]
    fn trace_lists_every_segment() {
        let spec = BenchSpec::new(tiny_settings(), vec![BackendChoice::Local]);
        let plan = sweep_plan(&spec, 3).unwrap();
        let trace = plan_trace(&plan, &spec.settings.engram);
        assert_eq!(trace.as_str().lines().count(), 2 + 48);
        assert!(trace.as_str().lines().nth(2).unwrap().starts_with("0,0,0,"));
    }

    #[test]
    fn simulate_baseline_and_instant_agree() {
        let mut spec = BenchSpec::new(
            tiny_settings(),
            vec![BackendChoice::Modeled {
                fabric: "instant".into(),
                mapped: false,
            }],
        );
        spec.batch_sizes = vec![8];
        spec.steps = 3;
        let sim = cmd_simulate(&spec).unwrap();
        assert_eq!(sim.summaries.len(), 2);
        assert_eq!(
            sim.summaries[0].tokens_per_sec,
            sim.summaries[1].tokens_per_sec
        );
        assert_eq!(sim.summaries[1].overhead_pct, 0.0);
        assert_eq!(sim.summaries[1].total_ns, 3.0 * 3_600_000.0);
    }
}

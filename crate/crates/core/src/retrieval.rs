//! Prefetch orchestration against a simulated decode clock.
//!
//! All gathers for a decode step are issued at the step start (instant 0).
//! The gather for Engram layer `k` must land before layer `k` starts, i.e.
//! within the compute time of layers `1..k`. Anything later is a stall,
//! and stalls are added to the step time.

use std::sync::Arc;
use std::thread::{self, JoinHandle};

use crate::backend::{GatherReport, StorageBackend};
use crate::config::EngramConfig;
use crate::error::{Error, Result};
use crate::ngram::{plan_gather, GatherPlan, TokenContext};

/// Per-layer outcome of one prefetch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerArrival {
    pub layer: usize,
    pub deadline_ns: f64,
    pub completion_ns: f64,
    pub stall_ns: f64,
}

/// Per-layer compute durations for one decode step and the stalls
/// recorded against them.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTimeline {
    layer_exec_ns: Vec<f64>,
    engram_layers: Vec<usize>,
    arrivals: Vec<LayerArrival>,
}

impl StepTimeline {
    pub fn new(layer_exec_ns: Vec<f64>, engram_layers: Vec<usize>) -> Result<Self> {
        if layer_exec_ns.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::InvalidConfig(
                "layer durations must be finite and non-negative",
            ));
        }
        if let Some(&k) = engram_layers
            .iter()
            .find(|&&k| k == 0 || k > layer_exec_ns.len())
        {
            return Err(Error::LayerOutOfRange {
                k,
                layers: layer_exec_ns.len(),
            });
        }
        Ok(Self {
            layer_exec_ns,
            engram_layers,
            arrivals: Vec::new(),
        })
    }

    /// `total_layers` layers sharing `step_ns` evenly.
    pub fn uniform(total_layers: usize, step_ns: f64, engram_layers: Vec<usize>) -> Result<Self> {
        let per_layer = step_ns / total_layers as f64;
        Self::new(vec![per_layer; total_layers], engram_layers)
    }

    /// Uniform timeline over the config's depth and Engram layers.
    pub fn for_config(cfg: &EngramConfig, step_ns: f64) -> Result<Self> {
        Self::uniform(cfg.total_layers, step_ns, cfg.engram_layers.clone())
    }

    pub fn layer_exec_ns(&self) -> &[f64] {
        &self.layer_exec_ns
    }

    pub fn engram_layers(&self) -> &[usize] {
        &self.engram_layers
    }

    pub fn arrivals(&self) -> &[LayerArrival] {
        &self.arrivals
    }

    /// Same durations and layers, no recorded arrivals.
    pub fn fresh(&self) -> Self {
        Self {
            arrivals: Vec::new(),
            ..self.clone()
        }
    }

    /// Compute time of layers `1..k`, measured from the step start.
    pub fn deadline_ns(&self, k: usize) -> Result<f64> {
        if k == 0 || k > self.layer_exec_ns.len() {
            return Err(Error::LayerOutOfRange {
                k,
                layers: self.layer_exec_ns.len(),
            });
        }
        Ok(self.layer_exec_ns[..k - 1].iter().sum())
    }

    /// Step time with no Engram traffic.
    pub fn compute_ns(&self) -> f64 {
        self.layer_exec_ns.iter().sum()
    }

    pub fn total_stall_ns(&self) -> f64 {
        self.arrivals.iter().map(|a| a.stall_ns).sum()
    }

    pub fn step_ns(&self) -> f64 {
        self.compute_ns() + self.total_stall_ns()
    }

    /// Records that the gather for layer `k` completed at `completion_ns`
    /// and returns the resulting stall.
    pub fn record_completion(&mut self, k: usize, completion_ns: f64) -> Result<f64> {
        if !self.engram_layers.contains(&k) {
            return Err(Error::NotEngramLayer(k));
        }
        let deadline_ns = self.deadline_ns(k)?;
        let stall_ns = (completion_ns - deadline_ns).max(0.0);
        self.arrivals.push(LayerArrival {
            layer: k,
            deadline_ns,
            completion_ns,
            stall_ns,
        });
        Ok(stall_ns)
    }

    /// Blocks until `handle` completes and charges any lateness against
    /// layer `k`.
    pub fn await_before_layer(
        &mut self,
        handle: PrefetchHandle,
        k: usize,
    ) -> Result<(f64, CompletedPrefetch)> {
        if !self.engram_layers.contains(&k) {
            return Err(Error::NotEngramLayer(k));
        }
        let done = handle.wait()?;
        let stall = self.record_completion(k, done.completion_ns)?;
        Ok((stall, done))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrefetchState {
    Issued,
    Complete,
}

/// A gather running concurrently with the caller. The destination buffer
/// is owned by the gather until [`PrefetchHandle::wait`] hands it back.
pub struct PrefetchHandle {
    plan: Arc<GatherPlan>,
    worker: JoinHandle<Result<(Vec<u8>, GatherReport)>>,
}

#[derive(Debug)]
pub struct CompletedPrefetch {
    pub data: Vec<u8>,
    pub report: GatherReport,
    /// Service time of the gather measured from its issue instant.
    pub completion_ns: f64,
}

impl PrefetchHandle {
    pub fn plan(&self) -> &GatherPlan {
        &self.plan
    }

    pub fn state(&self) -> PrefetchState {
        if self.worker.is_finished() {
            PrefetchState::Complete
        } else {
            PrefetchState::Issued
        }
    }

    pub fn wait(self) -> Result<CompletedPrefetch> {
        let (data, report) = self.worker.join().map_err(|_| Error::PrefetchLost)??;
        Ok(CompletedPrefetch {
            data,
            completion_ns: report.modeled_ns,
            report,
        })
    }
}

/// Starts gathering `plan` in the background and returns immediately.
/// Errors surface from [`PrefetchHandle::wait`].
pub fn issue_prefetch(
    backend: Arc<StorageBackend>,
    plan: Arc<GatherPlan>,
    workers: usize,
) -> PrefetchHandle {
    let job_plan = Arc::clone(&plan);
    let worker = thread::Builder::new()
        .name("engram-prefetch".into())
        .spawn(move || {
            let mut dst = vec![0u8; job_plan.total_bytes()];
            let report = backend.read_segments(&job_plan, &mut dst, workers)?;
            Ok((dst, report))
        })
        .expect("failed to spawn prefetch thread");
    PrefetchHandle { plan, worker }
}

/// Result of one simulated decode step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step_ns: f64,
    pub compute_ns: f64,
    pub layers: Vec<LayerArrival>,
    pub bytes_moved: u64,
}

impl StepRecord {
    pub fn total_stall_ns(&self) -> f64 {
        self.layers.iter().map(|a| a.stall_ns).sum()
    }
}

/// Runs one decode step: plans the batch, issues one prefetch per Engram
/// layer at instant 0, then walks the layers, waiting on each prefetch
/// before its layer.
pub fn simulate_decode_step(
    cfg: &EngramConfig,
    backend: &Arc<StorageBackend>,
    batch: &TokenContext,
    template: &StepTimeline,
    workers: usize,
) -> Result<StepRecord> {
    let mut timeline = template.fresh();
    let mut bytes_moved = 0;
    if !batch.positions().is_empty() {
        let plan = Arc::new(plan_gather(batch, cfg)?);
        let handles: Vec<_> = timeline
            .engram_layers()
            .iter()
            .map(|&k| {
                (
                    k,
                    issue_prefetch(Arc::clone(backend), Arc::clone(&plan), workers),
                )
            })
            .collect();
        for (k, handle) in handles {
            let (_, done) = timeline.await_before_layer(handle, k)?;
            bytes_moved += done.report.bytes_moved;
        }
    }
    Ok(StepRecord {
        step_ns: timeline.step_ns(),
        compute_ns: timeline.compute_ns(),
        layers: timeline.arrivals().to_vec(),
        bytes_moved,
    })
}

//! Parallel scatter of planned segments into a contiguous destination.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::{ThreadPool, ThreadPoolBuilder};

use crate::ngram::SegmentAddress;

/// Long-lived worker pools keyed by thread count, so repeated gathers do
/// not pay thread start-up.
fn worker_pool(workers: usize) -> Arc<ThreadPool> {
    static POOLS: OnceLock<Mutex<HashMap<usize, Arc<ThreadPool>>>> = OnceLock::new();
    let mut pools = POOLS.get_or_init(Default::default).lock().unwrap();
    pools
        .entry(workers)
        .or_insert_with(|| {
            Arc::new(
                ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .thread_name(|i| format!("engram-gather-{i}"))
                    .build()
                    .expect("failed to start gather workers"),
            )
        })
        .clone()
}

fn copy_sequential(region: &[u8], addrs: &[SegmentAddress], dst: &mut [u8]) {
    let mut at = 0;
    for a in addrs {
        let src = a.byte_offset as usize;
        dst[at..at + a.length].copy_from_slice(&region[src..src + a.length]);
        at += a.length;
    }
}

/// Copies `addrs` in order into `dst`. Addresses must already be bounds
/// checked against `region` and `dst` must hold their total length.
///
/// The address list is cut into `workers` contiguous runs (a static
/// schedule), one task per run.
pub(crate) fn copy_segments(
    region: &[u8],
    addrs: &[SegmentAddress],
    dst: &mut [u8],
    workers: usize,
) {
    let tasks = workers.min(addrs.len());
    if tasks <= 1 {
        copy_sequential(region, addrs, dst);
        return;
    }
    let per_task = addrs.len().div_ceil(tasks);
    let mut pieces = Vec::with_capacity(tasks);
    let mut rest = dst;
    for run in addrs.chunks(per_task) {
        let bytes: usize = run.iter().map(|a| a.length).sum();
        let (head, tail) = rest.split_at_mut(bytes);
        pieces.push((run, head));
        rest = tail;
    }
    worker_pool(workers).scope(|s| {
        for (run, out) in pieces {
            s.spawn(move |_| copy_sequential(region, run, out));
        }
    });
}

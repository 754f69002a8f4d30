//! Deterministic block-parallel execution for path simulation.
//!
//! Work is cut into fixed blocks that threads claim through an atomic
//! counter, so scheduling is dynamic, but results are returned in block
//! order and every random stream is derived from the block's own indices.
//! The same seed therefore produces bit-identical output whether the run
//! uses one thread or many.

use std::sync::atomic::{AtomicUsize, Ordering};

/// Worker count: the `WDRO_THREADS` environment variable when it parses to
/// a positive integer, otherwise the machine's available parallelism.
pub(crate) fn thread_count() -> usize {
    match std::env::var("WDRO_THREADS") {
        Ok(raw) => raw.trim().parse().ok().filter(|&n| n >= 1).unwrap_or(1),
        Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
    }
}

/// Runs `job(block_index)` for every block in `0..n_blocks` and returns the
/// results ordered by block index, regardless of which thread ran what.
pub(crate) fn run_blocks<T, F>(n_blocks: usize, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let threads = thread_count().min(n_blocks.max(1));
    if threads <= 1 {
        return (0..n_blocks).map(job).collect();
    }
    let counter = AtomicUsize::new(0);
    let mut harvested: Vec<Vec<(usize, T)>> = std::thread::scope(|scope| {
        let workers: Vec<_> = (0..threads)
            .map(|_| {
                scope.spawn(|| {
                    let mut local = Vec::new();
                    loop {
                        let block = counter.fetch_add(1, Ordering::Relaxed);
                        if block >= n_blocks {
                            break;
                        }
                        local.push((block, job(block)));
                    }
                    local
                })
            })
            .collect();
        workers.into_iter().map(|w| w.join().expect("simulation worker panicked")).collect()
    });
    let mut ordered: Vec<Option<T>> = (0..n_blocks).map(|_| None).collect();
    for (block, value) in harvested.drain(..).flatten() {
        ordered[block] = Some(value);
    }
    ordered.into_iter().map(|slot| slot.expect("every block ran exactly once")).collect()
}

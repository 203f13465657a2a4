//! Block-parallel ensemble generation.
//!
//! Work is split into the same fixed blocks of [`PATH_BLOCK`] paths the core
//! uses and merged in block order, so the result is bit-identical to the
//! sequential path for any thread count.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use slowflow_core::flow::FlowModel;
use slowflow_core::integrate::SimGrid;
use slowflow_core::stats::{model_block, truth_block, EnsembleAccumulator, EnsembleStats, PATH_BLOCK};
use slowflow_core::system::System;

use crate::error::AppError;
use crate::Result;

fn run_blocks<F>(n: usize, threads: usize, make: F) -> Result<EnsembleStats>
where
    F: Fn(std::ops::Range<usize>) -> slowflow_core::Result<EnsembleAccumulator> + Sync,
{
    let n_blocks = n.div_ceil(PATH_BLOCK);
    let block_range = |b: usize| b * PATH_BLOCK..((b + 1) * PATH_BLOCK).min(n);
    let threads = threads.max(1).min(n_blocks.max(1));

    let slots: Vec<Mutex<Option<slowflow_core::Result<EnsembleAccumulator>>>> =
        (0..n_blocks).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let b = next.fetch_add(1, Ordering::Relaxed);
                if b >= n_blocks {
                    break;
                }
                let result = make(block_range(b));
                *slots[b].lock().unwrap() = Some(result);
            });
        }
    });

    // Merge in block order regardless of which thread produced what.
    let mut total: Option<EnsembleAccumulator> = None;
    for slot in slots {
        let acc = slot
            .into_inner()
            .unwrap()
            .expect("every block was scheduled")
            .map_err(AppError::Core)?;
        match total.as_mut() {
            Some(t) => t.merge(&acc).map_err(AppError::Core)?,
            None => total = Some(acc),
        }
    }
    Ok(total.expect("n >= 1").finish())
}

#[allow(clippy::too_many_arguments)]
pub fn truth_ensemble_threaded(
    sys: &System,
    x0: &[f64],
    t_end: f64,
    grid: &SimGrid,
    n: usize,
    seed: u64,
    checkpoint_times: &[f64],
    cap: usize,
    threads: usize,
) -> Result<EnsembleStats> {
    run_blocks(n, threads, |range| {
        truth_block(sys, x0, t_end, grid, seed, range, checkpoint_times, cap)
    })
}

#[allow(clippy::too_many_arguments)]
pub fn model_ensemble_threaded(
    model: &FlowModel,
    x0: &[f64],
    n_steps: usize,
    n: usize,
    seed: u64,
    checkpoint_times: &[f64],
    cap: usize,
    threads: usize,
) -> Result<EnsembleStats> {
    run_blocks(n, threads, |range| {
        model_block(model, x0, n_steps, seed, range, checkpoint_times, cap)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use slowflow_core::stats::truth_ensemble;
    use slowflow_core::system::Preset;

    #[test]
    fn threaded_matches_sequential_bitwise() {
        let sys = System::preset(Preset::ExpOu);
        let grid = SimGrid::new(1e-3, 0.01);
        let n = 300; // spans several blocks
        let seq =
            truth_ensemble(&sys, &[1.5], 0.1, &grid, n, 9, &[0.05, 0.1], 1_000_000).unwrap();
        for threads in [1, 3, 7] {
            let par = truth_ensemble_threaded(
                &sys,
                &[1.5],
                0.1,
                &grid,
                n,
                9,
                &[0.05, 0.1],
                1_000_000,
                threads,
            )
            .unwrap();
            assert_eq!(par.mean, seq.mean, "threads {threads}");
            assert_eq!(par.std, seq.std);
            assert_eq!(par.checkpoints, seq.checkpoints);
        }
    }
}

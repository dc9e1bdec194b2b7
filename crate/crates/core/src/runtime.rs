//! Statically scheduled parallel evaluation of comprehensions.
//!
//! A comprehension with `n` frame elements is split into at most `workers`
//! contiguous blocks of `ceil(n / workers)` indices. Each block writes a
//! disjoint slice of the output buffer, so every output element is produced
//! by exactly one task with a fixed internal evaluation order. The assembled
//! buffer is therefore bitwise identical for every worker count.
//!
//! Worker pools are created lazily, once per distinct worker count, and live
//! for the rest of the process. Comprehensions started from inside a running
//! parallel block are evaluated sequentially on the owning worker.

use std::cell::Cell;
use std::collections::HashMap;
use std::ops::Range;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock};

use rayon::{ThreadPool, ThreadPoolBuilder};

/// Environment variable consulted for the default worker count.
pub const MT_ENV: &str = "TENSORLOOM_MT";

/// Default minimum number of output elements before a comprehension goes parallel.
pub const DEFAULT_PARALLEL_THRESHOLD: usize = 4096;

/// How comprehensions are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecConfig {
    workers: usize,
    parallel_threshold: usize,
}

impl ExecConfig {
    /// `workers` is clamped to at least one.
    pub fn new(workers: usize) -> Self {
        Self {
            workers: workers.max(1),
            parallel_threshold: DEFAULT_PARALLEL_THRESHOLD,
        }
    }

    pub fn sequential() -> Self {
        Self::new(1)
    }

    pub fn with_threshold(mut self, parallel_threshold: usize) -> Self {
        self.parallel_threshold = parallel_threshold;
        self
    }

    /// Reads [`MT_ENV`]; falls back to a single worker when unset or invalid.
    pub fn from_env() -> Self {
        let workers = std::env::var(MT_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&w| w >= 1)
            .unwrap_or(1);
        Self::new(workers)
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn parallel_threshold(&self) -> usize {
        self.parallel_threshold
    }

    /// Whether a build of `frame_count` cells of `cell_len` elements runs on the pool.
    pub fn goes_parallel(&self, frame_count: usize, cell_len: usize) -> bool {
        self.workers > 1
            && frame_count > 1
            && frame_count.saturating_mul(cell_len.max(1)) >= self.parallel_threshold
    }
}

impl Default for ExecConfig {
    fn default() -> Self {
        Self::from_env()
    }
}

thread_local! {
    static CURRENT: Cell<Option<ExecConfig>> = const { Cell::new(None) };
    static IN_PARALLEL: Cell<bool> = const { Cell::new(false) };
}

/// The configuration in effect on this thread.
pub fn current_config() -> ExecConfig {
    CURRENT.with(|c| c.get()).unwrap_or_else(|| {
        static ENV_DEFAULT: OnceLock<ExecConfig> = OnceLock::new();
        *ENV_DEFAULT.get_or_init(ExecConfig::from_env)
    })
}

/// Runs `f` with `cfg` as this thread's execution configuration.
pub fn with_config<R>(cfg: ExecConfig, f: impl FnOnce() -> R) -> R {
    struct Restore(Option<ExecConfig>);
    impl Drop for Restore {
        fn drop(&mut self) {
            CURRENT.with(|c| c.set(self.0));
        }
    }
    let _restore = Restore(CURRENT.with(|c| c.replace(Some(cfg))));
    f()
}

/// True while executing inside a parallel block.
pub fn in_parallel_region() -> bool {
    IN_PARALLEL.with(|p| p.get())
}

/// Static chunking of `0..n` over `workers`: block `w` is
/// `[w * c, min((w + 1) * c, n))` with `c = ceil(n / workers)`.
/// Empty trailing blocks are omitted.
pub fn chunk_bounds(n: usize, workers: usize) -> Vec<Range<usize>> {
    let workers = workers.max(1);
    if n == 0 {
        return Vec::new();
    }
    let chunk = n.div_ceil(workers);
    (0..workers)
        .map(|w| (w * chunk).min(n)..((w + 1) * chunk).min(n))
        .filter(|r| !r.is_empty())
        .collect()
}

fn pool(workers: usize) -> Arc<ThreadPool> {
    static POOLS: OnceLock<Mutex<HashMap<usize, Arc<ThreadPool>>>> = OnceLock::new();
    let mut pools = POOLS
        .get_or_init(|| Mutex::new(HashMap::new()))
        .lock()
        .unwrap_or_else(|e| e.into_inner());
    pools
        .entry(workers)
        .or_insert_with(|| {
            Arc::new(
                ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .thread_name(move |i| format!("tensorloom-{workers}-{i}"))
                    .build()
                    .expect("failed to spawn worker pool"),
            )
        })
        .clone()
}

/// Fills a buffer of `frame_count * cell_len` elements block by block.
///
/// `fill(range, out)` receives a contiguous range of frame indices and the
/// output slice for exactly those cells. A block that fails reports its
/// error; the error of the lowest-indexed failing block is returned once
/// every block has stopped. Blocks after a known failure may stop early.
pub fn parallel_chunks<E, F>(
    frame_count: usize,
    cell_len: usize,
    cfg: ExecConfig,
    fill: F,
) -> Result<Vec<f32>, E>
where
    E: Send,
    F: Fn(Range<usize>, &mut [f32]) -> Result<(), E> + Sync,
{
    let mut buf = vec![0.0f32; frame_count * cell_len];
    if frame_count == 0 {
        return Ok(buf);
    }
    if in_parallel_region() || !cfg.goes_parallel(frame_count, cell_len) {
        fill(0..frame_count, &mut buf)?;
        return Ok(buf);
    }

    let ranges = chunk_bounds(frame_count, cfg.workers());
    let mut slots: Vec<Option<E>> = ranges.iter().map(|_| None).collect();
    let first_failed = AtomicUsize::new(usize::MAX);
    {
        let mut rest: &mut [f32] = &mut buf;
        let mut pieces = Vec::with_capacity(ranges.len());
        for r in &ranges {
            let (head, tail) = rest.split_at_mut(r.len() * cell_len);
            pieces.push(head);
            rest = tail;
        }
        let fill = &fill;
        let first_failed = &first_failed;
        pool(cfg.workers()).scope(|s| {
            for (block, ((range, out), slot)) in ranges
                .iter()
                .cloned()
                .zip(pieces)
                .zip(slots.iter_mut())
                .enumerate()
            {
                s.spawn(move |_| {
                    if first_failed.load(Ordering::Acquire) < block {
                        return;
                    }
                    IN_PARALLEL.with(|p| p.set(true));
                    let result = fill(range, out);
                    IN_PARALLEL.with(|p| p.set(false));
                    if let Err(e) = result {
                        first_failed.fetch_min(block, Ordering::AcqRel);
                        *slot = Some(e);
                    }
                });
            }
        });
    }
    match slots.into_iter().flatten().next() {
        Some(e) => Err(e),
        None => Ok(buf),
    }
}

/// Builds a buffer of `frame_count` cells, each `cell_len` elements long,
/// by calling `elem(i, cell)` once per flat frame index `i`.
///
/// Within a block indices are visited in increasing order and evaluation
/// stops at the first failure, so the reported error belongs to the lowest
/// failing index.
pub fn parallel_build<E, F>(
    frame_count: usize,
    cell_len: usize,
    cfg: ExecConfig,
    elem: F,
) -> Result<Vec<f32>, E>
where
    E: Send,
    F: Fn(usize, &mut [f32]) -> Result<(), E> + Sync,
{
    parallel_chunks(frame_count, cell_len, cfg, |range, out| {
        if cell_len == 0 {
            return range.into_iter().try_for_each(|i| elem(i, &mut []));
        }
        range
            .zip(out.chunks_exact_mut(cell_len))
            .try_for_each(|(i, cell)| elem(i, cell))
    })
}

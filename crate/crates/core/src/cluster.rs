//! In-process stand-in for a synchronous message-passing cluster.
//!
//! Each worker owns one shard and one mutable state slot. Worker steps run in
//! parallel on a thread pool; every collective is a barrier. Payload sizes are
//! counted so communication volume can be reported without real sockets.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, GramContribution};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "TADMM_THREADS";

/// Row/column shape of a worker's shard.
pub trait ShardShape {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
}

impl ShardShape for DenseMatrix {
    fn rows(&self) -> usize {
        DenseMatrix::rows(self)
    }
    fn cols(&self) -> usize {
        DenseMatrix::cols(self)
    }
}

/// Anything that can travel between a worker and the driver.
pub trait Payload {
    fn byte_len(&self) -> u64;
}

impl Payload for f64 {
    fn byte_len(&self) -> u64 {
        8
    }
}

impl Payload for Vec<f64> {
    fn byte_len(&self) -> u64 {
        8 * self.len() as u64
    }
}

impl Payload for DenseMatrix {
    fn byte_len(&self) -> u64 {
        8 * self.values().len() as u64
    }
}

impl Payload for GramContribution {
    fn byte_len(&self) -> u64 {
        let n = self.dim() as u64;
        let rhs = if self.rhs.is_some() { n } else { 0 };
        let target = u64::from(self.target_sq.is_some());
        8 * (n * n + rhs + target)
    }
}

impl<A: Payload, B: Payload> Payload for (A, B) {
    fn byte_len(&self) -> u64 {
        self.0.byte_len() + self.1.byte_len()
    }
}

impl<P: Payload> Payload for Option<P> {
    fn byte_len(&self) -> u64 {
        self.as_ref().map_or(0, Payload::byte_len)
    }
}

/// Cumulative communication and timing counters.
///
/// Algorithmic traffic and diagnostic traffic (residuals, objectives, bound
/// checks) are kept apart so the former can be compared across methods.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CommStats {
    pub bytes_up: u64,
    pub bytes_down: u64,
    pub diag_bytes_up: u64,
    pub diag_bytes_down: u64,
    /// Sum over workers of time spent in algorithmic steps.
    pub compute_seconds: f64,
    /// Sum over workers of time spent in diagnostic steps.
    pub diag_seconds: f64,
    /// Sum over workers of time spent idle at barriers after algorithmic steps.
    pub barrier_wait_seconds: f64,
    pub collectives: u64,
}

impl CommStats {
    /// Counter increments from `earlier` to `self`.
    pub fn since(&self, earlier: &CommStats) -> CommStats {
        CommStats {
            bytes_up: self.bytes_up - earlier.bytes_up,
            bytes_down: self.bytes_down - earlier.bytes_down,
            diag_bytes_up: self.diag_bytes_up - earlier.diag_bytes_up,
            diag_bytes_down: self.diag_bytes_down - earlier.diag_bytes_down,
            compute_seconds: self.compute_seconds - earlier.compute_seconds,
            diag_seconds: self.diag_seconds - earlier.diag_seconds,
            barrier_wait_seconds: self.barrier_wait_seconds - earlier.barrier_wait_seconds,
            collectives: self.collectives - earlier.collectives,
        }
    }
}

/// Result of a reduction together with the number of contributors.
#[derive(Debug, Clone, PartialEq)]
pub struct CollectiveResult<T> {
    pub payload: T,
    pub contributing: usize,
}

/// What a worker sees during a step besides its own shard and slot.
#[derive(Debug, Clone, Copy)]
pub struct WorkerCtx<'a> {
    pub index: usize,
    pub n_workers: usize,
    /// Most recent broadcast vector (empty before the first broadcast).
    pub shared: &'a [f64],
}

/// Deterministic per-worker generator: one ChaCha stream per worker index.
pub fn worker_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn thread_count(requested: Option<usize>, workers: usize) -> usize {
    let env = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok());
    let avail = std::thread::available_parallelism().map_or(1, |n| n.get());
    let cap = requested.or(env).unwrap_or(avail).max(1);
    cap.min(workers).max(1)
}

pub struct Cluster<D, S> {
    shards: Vec<D>,
    states: Vec<S>,
    pool: rayon::ThreadPool,
    shared: Vec<f64>,
    stats: CommStats,
}

impl<D, S> std::fmt::Debug for Cluster<D, S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Cluster")
            .field("n_workers", &self.shards.len())
            .field("threads", &self.pool.current_num_threads())
            .field("stats", &self.stats)
            .finish()
    }
}

impl<D: ShardShape + Sync, S: Send> Cluster<D, S> {
    /// Builds a cluster; the thread count comes from `TADMM_THREADS` or the
    /// machine's parallelism, capped at the worker count.
    pub fn spawn(shards: Vec<D>, states: Vec<S>) -> Result<Self> {
        Self::spawn_with_threads(shards, states, None)
    }

    pub fn spawn_with_threads(
        shards: Vec<D>,
        states: Vec<S>,
        threads: Option<usize>,
    ) -> Result<Self> {
        let first = shards.first().ok_or(Error::Empty("cluster shards"))?;
        let cols = first.cols();
        for s in &shards {
            Error::check_len("shard column count", cols, s.cols())?;
        }
        Error::check_len("worker state count", shards.len(), states.len())?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(thread_count(threads, shards.len()))
            .build()
            .map_err(|e| Error::param(format!("thread pool: {e}")))?;
        Ok(Self {
            shards,
            states,
            pool,
            shared: Vec::new(),
            stats: CommStats::default(),
        })
    }

    pub fn n_workers(&self) -> usize {
        self.shards.len()
    }

    pub fn total_rows(&self) -> usize {
        self.shards.iter().map(ShardShape::rows).sum()
    }

    pub fn cols(&self) -> usize {
        self.shards[0].cols()
    }

    pub fn shards(&self) -> &[D] {
        &self.shards
    }

    pub fn states(&self) -> &[S] {
        &self.states
    }

    pub fn into_states(self) -> Vec<S> {
        self.states
    }

    pub fn stats(&self) -> CommStats {
        self.stats
    }

    /// The vector most recently broadcast.
    pub fn shared(&self) -> &[f64] {
        &self.shared
    }

    fn run<R, F>(&mut self, step: F) -> Result<(Vec<R>, Vec<f64>)>
    where
        R: Send,
        F: Fn(WorkerCtx<'_>, &D, &mut S) -> Result<R> + Sync,
    {
        let n_workers = self.shards.len();
        let shared = &self.shared;
        let shards = &self.shards;
        let states = &mut self.states;
        let results: Vec<(Result<R>, f64)> = self.pool.install(|| {
            shards
                .par_iter()
                .zip(states.par_iter_mut())
                .enumerate()
                .map(|(index, (shard, state))| {
                    let ctx = WorkerCtx {
                        index,
                        n_workers,
                        shared,
                    };
                    let start = Instant::now();
                    let out = step(ctx, shard, state);
                    (out, start.elapsed().as_secs_f64())
                })
                .collect()
        });
        let mut outs = Vec::with_capacity(n_workers);
        let mut times = Vec::with_capacity(n_workers);
        for (index, (r, t)) in results.into_iter().enumerate() {
            match r {
                Ok(v) => outs.push(v),
                Err(e) => {
                    return Err(Error::Worker {
                        index,
                        source: Box::new(e),
                    })
                }
            }
            times.push(t);
        }
        Ok((outs, times))
    }

    /// Runs `step` once on every worker, then waits for all of them.
    pub fn all_execute<R, F>(&mut self, step: F) -> Result<Vec<R>>
    where
        R: Send,
        F: Fn(WorkerCtx<'_>, &D, &mut S) -> Result<R> + Sync,
    {
        let (outs, times) = self.run(step)?;
        let slowest = times.iter().cloned().fold(0.0, f64::max);
        self.stats.compute_seconds += times.iter().sum::<f64>();
        self.stats.barrier_wait_seconds += times.iter().map(|t| slowest - t).sum::<f64>();
        Ok(outs)
    }

    /// Like [`Cluster::all_execute`] but timed as diagnostic work.
    pub fn all_execute_diagnostic<R, F>(&mut self, step: F) -> Result<Vec<R>>
    where
        R: Send,
        F: Fn(WorkerCtx<'_>, &D, &mut S) -> Result<R> + Sync,
    {
        let (outs, times) = self.run(step)?;
        self.stats.diag_seconds += times.iter().sum::<f64>();
        Ok(outs)
    }

    fn check_count<P>(&self, payloads: &[P]) -> Result<()> {
        Error::check_len("payloads per worker", self.shards.len(), payloads.len())
    }

    /// Ships per-worker payloads to the driver, in worker order.
    pub fn gather<P: Payload>(&mut self, payloads: Vec<P>) -> Result<Vec<P>> {
        self.check_count(&payloads)?;
        self.stats.bytes_up += payloads.iter().map(Payload::byte_len).sum::<u64>();
        self.stats.collectives += 1;
        Ok(payloads)
    }

    pub fn gather_diagnostic<P: Payload>(&mut self, payloads: Vec<P>) -> Result<Vec<P>> {
        self.check_count(&payloads)?;
        self.stats.diag_bytes_up += payloads.iter().map(Payload::byte_len).sum::<u64>();
        Ok(payloads)
    }

    /// Ordered elementwise sum of one vector per worker.
    pub fn reduce_sum(&mut self, payloads: Vec<Vec<f64>>) -> Result<CollectiveResult<Vec<f64>>> {
        let parts = self.gather(payloads)?;
        let payload = ordered_sum(&parts)?;
        Ok(CollectiveResult {
            payload,
            contributing: parts.len(),
        })
    }

    pub fn reduce_diagnostic(&mut self, payloads: Vec<Vec<f64>>) -> Result<Vec<f64>> {
        let parts = self.gather_diagnostic(payloads)?;
        ordered_sum(&parts)
    }

    /// Makes `x` visible to every worker's next step.
    pub fn broadcast(&mut self, x: Vec<f64>) -> Result<()> {
        if x.is_empty() {
            return Err(Error::Empty("broadcast payload"));
        }
        Error::check_finite("broadcast payload", &x)?;
        self.stats.bytes_down += x.byte_len() * self.shards.len() as u64;
        self.stats.collectives += 1;
        self.shared = x;
        Ok(())
    }

    /// Counts a driver-to-worker diagnostic message without changing the
    /// shared vector.
    pub fn note_diagnostic_broadcast(&mut self, bytes_per_worker: u64) {
        self.stats.diag_bytes_down += bytes_per_worker * self.shards.len() as u64;
    }
}

/// Sums vectors in index order; all must share a length.
pub fn ordered_sum(parts: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = parts.first().ok_or(Error::Empty("reduction payloads"))?;
    let mut acc = vec![0.0; first.len()];
    for p in parts {
        Error::check_len("reduction payload length", acc.len(), p.len())?;
        for (a, v) in acc.iter_mut().zip(p) {
            *a += v;
        }
    }
    Ok(acc)
}

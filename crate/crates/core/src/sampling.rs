//! Deterministic random streams for parallel sampling.
//!
//! Every sample owns a ChaCha stream keyed by `(seed, sample index)`, so the
//! values a sample sees never depend on which worker ran it or in what order.
//! Parallel reductions only ever merge integer counts or index-ordered vectors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

/// Samples per work unit in parallel sweeps. Fixed so the partition of work
/// never depends on the worker count.
const CHUNK: u64 = 4096;

/// Expands a top-level seed into an independent seed for a named subsystem.
pub fn derive_seed(seed: u64, subsystem: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(subsystem.as_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// Factory for per-sample random streams.
#[derive(Clone)]
pub struct StreamFactory {
    base: ChaCha8Rng,
}

impl StreamFactory {
    pub fn new(seed: u64) -> Self {
        StreamFactory {
            base: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// The stream of sample `index`.
    pub fn stream(&self, index: u64) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        rng.set_stream(index);
        rng.set_word_pos(0);
        rng
    }
}

/// Thread-count control for parallel sweeps. `None` uses the global pool.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Workers(pub Option<usize>);

impl Workers {
    pub fn run<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        match self.0 {
            None => f(),
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .expect("thread pool")
                .install(f),
        }
    }
}

/// Counts the samples for which `hit` returns true. Each call of `hit`
/// receives the sample's own stream.
pub fn parallel_count<F>(n: u64, seed: u64, workers: Workers, hit: F) -> u64
where
    F: Fn(&mut ChaCha8Rng) -> bool + Sync,
{
    let factory = StreamFactory::new(seed);
    let chunks = n.div_ceil(CHUNK);
    workers.run(|| {
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let lo = c * CHUNK;
                let hi = (lo + CHUNK).min(n);
                (lo..hi)
                    .filter(|&i| hit(&mut factory.stream(i)))
                    .count() as u64
            })
            .sum()
    })
}

/// Maps every sample index through `f` in parallel, returning results in
/// index order.
pub fn parallel_map<T, F>(n: u64, seed: u64, workers: Workers, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, &mut ChaCha8Rng) -> T + Sync,
{
    let factory = StreamFactory::new(seed);
    workers.run(|| {
        (0..n)
            .into_par_iter()
            .map(|i| f(i, &mut factory.stream(i)))
            .collect()
    })
}

pub fn gaussian_vector<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

/// Uniform point on the unit sphere S^{dim-1}.
pub fn unit_sphere<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let g = gaussian_vector(rng, dim);
        let n = norm(&g);
        if n > 1e-300 {
            return g.into_iter().map(|v| v / n).collect();
        }
    }
}

/// Uniform point in the open ball of radius `radius` in R^dim.
pub fn uniform_ball<R: Rng + ?Sized>(rng: &mut R, dim: usize, radius: f64) -> Vec<f64> {
    let dir = unit_sphere(rng, dim);
    // 1 - U lies in (0, 1]
    let u: f64 = 1.0 - rng.random::<f64>();
    let r = radius * u.powf(1.0 / dim as f64);
    dir.into_iter().map(|v| v * r).collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

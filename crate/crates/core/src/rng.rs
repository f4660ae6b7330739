//! Deterministic randomness with explicit per-party substreams.
//!
//! One master seed drives the whole simulation. Each party (and the channel,
//! and the adversary) forks its own counter-separated stream, so a change in
//! one component's draw pattern never shifts another component's randomness.
//! Identical seed implies an identical full transcript.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::bits::BitSequence;

/// Well-known substreams of a simulation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Alice,
    Bob,
    Channel,
    Adversary,
    Setup,
    Custom(u64),
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Alice => 0,
            Stream::Bob => 1,
            Stream::Channel => 2,
            Stream::Adversary => 3,
            Stream::Setup => 4,
            Stream::Custom(n) => 16 + n,
        }
    }
}

/// Seedable generator handle; single-owner mutable.
#[derive(Debug, Clone)]
pub struct RngHandle {
    seed: u64,
    rng: ChaCha12Rng,
}

impl RngHandle {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha12Rng::seed_from_u64(seed),
        }
    }

    /// Independent substream sharing the master seed.
    pub fn fork(&self, stream: Stream) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(stream.id());
        Self {
            seed: self.seed,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn bit(&mut self) -> bool {
        self.rng.gen()
    }

    pub fn bits(&mut self, n: usize) -> BitSequence {
        (0..n).map(|_| self.rng.gen::<bool>()).collect()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.rng.gen_bool(p.clamp(0.0, 1.0))
    }

    pub fn u64(&mut self) -> u64 {
        self.rng.gen()
    }

    pub fn f64(&mut self) -> f64 {
        self.rng.gen()
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }

    /// Number of Bernoulli(p) attempts up to and including the first success.
    pub fn geometric(&mut self, p: f64) -> u64 {
        assert!(p > 0.0 && p <= 1.0, "geometric needs p in (0, 1]");
        if p >= 1.0 {
            return 1;
        }
        let u: f64 = self.rng.gen_range(f64::EPSILON..1.0);
        (u.ln() / (1.0 - p).ln()).ceil().max(1.0) as u64
    }

    /// `k` distinct indices drawn from `[0, n)` via partial Fisher-Yates.
    pub fn sample_indices(&mut self, k: usize, n: usize) -> Vec<usize> {
        assert!(k <= n);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = self.rng.gen_range(i..n);
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream_same_bits() {
        let a = RngHandle::new(42).fork(Stream::Alice).bits(256);
        let b = RngHandle::new(42).fork(Stream::Alice).bits(256);
        assert_eq!(a, b);
    }

    #[test]
    fn streams_are_independent() {
        let master = RngHandle::new(42);
        let alice = master.fork(Stream::Alice).bits(256);
        let bob = master.fork(Stream::Bob).bits(256);
        assert_ne!(alice, bob);
    }

    #[test]
    fn forks_do_not_disturb_parent() {
        let mut master = RngHandle::new(7);
        let before = master.clone().bits(64);
        let _ = master.fork(Stream::Channel);
        assert_eq!(master.bits(64), before);
    }

    #[test]
    fn geometric_mean_close_to_inverse_p() {
        let mut rng = RngHandle::new(3);
        let p = 0.01;
        let n = 20_000;
        let total: u64 = (0..n).map(|_| rng.geometric(p)).sum();
        let mean = total as f64 / n as f64;
        // mean of geometric(p) is 1/p = 100; 3 sigma of the sample mean
        let sigma = ((1.0 - p) / (p * p) / n as f64).sqrt();
        assert!((mean - 100.0).abs() < 3.0 * sigma, "mean = {mean}");
    }

    #[test]
    fn sample_indices_distinct_and_in_range() {
        let mut rng = RngHandle::new(9);
        let idx = rng.sample_indices(50, 200);
        let mut sorted = idx.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 50);
        assert!(idx.iter().all(|&i| i < 200));
    }
}

//! Replica evaluation over a worker pool with per-replica RNG streams.
//!
//! Replica `i` of role `r` draws from ChaCha8 keyed by `(seed, r)` on
//! stream `i`, so its numbers do not depend on which worker runs it.
//! Results are collected in replica order and reduced sequentially.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Independent random-number roles within one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Main,
    Retry,
    Tail,
}

impl Role {
    fn tag(self) -> u64 {
        match self {
            Role::Main => 0x6d61_696e,
            Role::Retry => 0x7265_7472,
            Role::Tail => 0x7461_696c,
        }
    }
}

/// SplitMix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn replica_rng(seed: u64, role: Role, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed ^ mix(role.tag())));
    rng.set_stream(replica);
    rng
}

/// Worker count: `requested` (default: available cores), capped by the
/// `SUBPATH_THREADS` environment variable.
pub fn resolve_threads(requested: Option<usize>) -> usize {
    let base = requested
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1);
    match std::env::var("SUBPATH_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        Some(cap) if cap > 0 => base.min(cap),
        _ => base,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Runner {
    pub seed: u64,
    pub threads: usize,
}

impl Runner {
    pub fn new(seed: u64, threads: usize) -> Self {
        Runner { seed, threads: threads.max(1) }
    }

    /// Evaluates `f` for replicas `0..n` of `role`, in replica order.
    pub fn map<T, F>(&self, role: Role, n: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&mut ChaCha8Rng) -> Result<T> + Sync + Send,
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
            .map_err(|e| Error::Invariant(format!("worker pool: {e}")))?;
        pool.install(|| {
            (0..n)
                .into_par_iter()
                .map(|i| f(&mut replica_rng(self.seed, role, i as u64)))
                .collect()
        })
    }

    /// A single sequential stream for role `role`, used by experiments that
    /// consume randomness in one pass.
    pub fn stream(&self, role: Role) -> ChaCha8Rng {
        replica_rng(self.seed, role, u64::MAX)
    }
}

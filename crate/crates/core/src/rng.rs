//! Counter-derived random streams and order-independent ensemble mapping.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Identifies the random stream of one trajectory: a master seed plus the
/// trajectory index, which selects an independent ChaCha stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamId {
    pub seed: u64,
    pub index: u64,
}

const NOISE_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

impl StreamId {
    pub fn new(seed: u64, index: u64) -> Self {
        StreamId { seed, index }
    }

    /// Stream driving jump times, channels and initial states.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.index);
        rng
    }

    /// Separate stream for classical drive noise, so that a noiseless drive
    /// consumes exactly the same jump randomness as the plain engine.
    pub fn noise_rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ NOISE_SALT);
        rng.set_stream(self.index);
        rng
    }
}

/// Map `f` over `0..n`, in parallel when the `parallel` feature is on.
/// Results come back in index order, so the outcome never depends on
/// scheduling.
#[cfg(feature = "parallel")]
pub fn map_indices<T, F>(n: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indices<T, F>(n: u64, f: F) -> Vec<T>
where
    F: Fn(u64) -> T,
{
    (0..n).map(f).collect()
}

/// Parallel map over a slice, order preserving.
#[cfg(feature = "parallel")]
pub fn map_slice<'a, I, T, F>(items: &'a [I], f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&'a I) -> T + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_slice<'a, I, T, F>(items: &'a [I], f: F) -> Vec<T>
where
    F: Fn(&'a I) -> T,
{
    items.iter().map(f).collect()
}

/// Run `f` on a dedicated pool with `workers` threads (or the global pool).
#[cfg(feature = "parallel")]
pub fn with_workers<T: Send, F: FnOnce() -> T + Send>(workers: Option<usize>, f: F) -> T {
    match workers {
        Some(w) => match rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        None => f(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_workers<T, F: FnOnce() -> T>(_workers: Option<usize>, f: F) -> T {
    f()
}

//! Small shared utilities: exact float summation and named RNG streams.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Exact sum of a slice of f64 values.
///
/// Uses Shewchuk's expansion algorithm: the partial sums are kept exactly,
/// so the result is the correctly rounded sum regardless of summand order.
/// This makes mix bus summation bitwise permutation invariant.
pub fn exact_sum(values: &[f64]) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for &v in values {
        let mut x = v;
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    // Sum from smallest to largest partial; partials are non-overlapping,
    // so this final pass rounds once.
    partials.iter().sum()
}

/// Deterministic per-purpose RNG streams derived from one session seed.
///
/// Every source of randomness in the toolkit (dataset sampling, weight
/// init, dropout) draws from a named stream so that a single seed fixes
/// the whole run.
#[derive(Debug, Clone)]
pub struct Streams {
    seed: u64,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// RNG for the named sub-stream. Same (seed, name) always yields the
    /// same generator state.
    pub fn stream(&self, name: &str) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a(name.as_bytes()))
    }

    /// Indexed variant for per-item streams (e.g. one per epoch).
    pub fn stream_n(&self, name: &str, n: u64) -> ChaCha8Rng {
        let mut h = fnv1a(name.as_bytes());
        h ^= n.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        ChaCha8Rng::seed_from_u64(self.seed ^ h)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

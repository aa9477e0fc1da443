//! Deterministic randomness shared by every stochastic stage.
//!
//! All shuffles, masks, and parameter initializations run on SplitMix64 so a
//! single 64-bit seed reproduces byte-identical artifacts across runs and
//! platforms. Sub-seeds are derived by hashing a domain label and an item id,
//! which keeps per-problem randomness independent of corpus order.

use sha2::{Digest, Sha256};

/// SplitMix64 generator (Steele, Lea & Flood 2014).
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform f64 in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, bound), unbiased via rejection sampling.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "below(0) is undefined");
        let threshold = u64::MAX - u64::MAX % bound;
        loop {
            let x = self.next_u64();
            if x < threshold {
                return x % bound;
            }
        }
    }

    /// Uniform f64 in [lo, hi).
    pub fn range_f64(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }
}

/// In-place Fisher-Yates shuffle.
pub fn shuffle<T>(items: &mut [T], rng: &mut SplitMix64) {
    for i in (1..items.len()).rev() {
        let j = rng.below(i as u64 + 1) as usize;
        items.swap(i, j);
    }
}

/// Choose `k` distinct indices from `0..n`, returned in increasing order.
pub fn sample_indices(n: usize, k: usize, rng: &mut SplitMix64) -> Vec<usize> {
    assert!(k <= n, "cannot sample {k} of {n}");
    let mut pool: Vec<usize> = (0..n).collect();
    shuffle(&mut pool, rng);
    let mut picked = pool[..k].to_vec();
    picked.sort_unstable();
    picked
}

/// Derive an independent sub-seed from a master seed, a domain label, and an
/// item id. Anything order-dependent must not use this; anything per-item must.
pub fn derive_seed(master: u64, domain: &str, id: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update([0x1f]);
    hasher.update(domain.as_bytes());
    hasher.update([0x1f]);
    hasher.update(id.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

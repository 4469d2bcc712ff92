//! Deterministic RNG used for everything that must reproduce byte-identically
//! across platforms and releases (bootstrap sampling, feature subsampling,
//! dataset balancing).
//!
//! Algorithm: splitmix64 (Steele/Lea/Flood, public domain reference
//! implementation). The state advances by the 64-bit golden-gamma constant and
//! each output is a finalizer over the new state, so the generator is
//! counter-based: output i depends only on (seed, i). Sub-streams are derived
//! by mixing a stream id into the seed, which keeps tree t's randomness
//! independent of how many trees run before it.

const GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Seed for an independent sub-stream, e.g. one per forest tree.
    pub fn derive(seed: u64, stream: u64) -> Self {
        Self::new(mix(seed ^ mix(stream.wrapping_mul(GAMMA))))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GAMMA);
        mix(self.state)
    }

    /// Uniform draw in [0, n). Uses the 128-bit multiply-shift mapping
    /// (Lemire) without rejection; the bias is < n/2^64 and irrelevant here,
    /// while keeping the draw a pure function of a single output.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (((self.next_u64() as u128) * (n as u128)) >> 64) as usize
    }

    /// Uniform f64 in [0, 1) with 53 bits of precision.
    pub fn unit_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// First `k` elements of a Fisher-Yates shuffle over [0, n); the returned
    /// indices are distinct. Order of the result is the draw order.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        debug_assert!(k <= n);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below(n - i);
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

//! Counter-based splittable random streams.
//!
//! Every random draw in the sampler is a pure function of `(seed, node
//! path, purpose, counter)`: a node of the quadtree derives its stream key
//! by hashing the parent key with the child index, and each stream yields
//! values `mix(key + i * GOLDEN)` for counter `i`. This makes samples
//! reproducible regardless of traversal order or parallel scheduling, and
//! lets sibling subtrees be sampled concurrently with no shared state.
//!
//! The generator is the SplitMix64 finalizer over a Weyl sequence, which
//! is the standard splittable construction for non-cryptographic Monte
//! Carlo work.

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;
const SALT_STEP: u64 = 0xd1b5_4a32_d192_ed03;

/// SplitMix64 finalizer: a bijective avalanche mix on 64 bits.
#[inline(always)]
pub fn mix64(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    z
}

/// Derive a child stream key from a parent key and a branch label.
///
/// Two mixing rounds so that related parents with related labels produce
/// statistically unrelated keys.
#[inline(always)]
pub fn derive(key: u64, label: u64) -> u64 {
    mix64(key ^ mix64(label.wrapping_mul(GOLDEN).wrapping_add(SALT_STEP)))
}

/// One random stream: a counter walked through the SplitMix64 mix.
#[derive(Clone, Debug)]
pub struct StreamRng {
    key: u64,
    ctr: u64,
}

impl StreamRng {
    #[inline]
    pub fn new(key: u64) -> Self {
        StreamRng { key, ctr: 0 }
    }

    #[inline(always)]
    pub fn next_u64(&mut self) -> u64 {
        self.ctr = self.ctr.wrapping_add(1);
        mix64(self.key.wrapping_add(self.ctr.wrapping_mul(GOLDEN)))
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    #[inline(always)]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0)
    }

    /// Uniform in `{0, 1, ..., n-1}` (Lemire reduction; the `O(2^-64 n)`
    /// bias is far below anything observable here).
    #[inline(always)]
    pub fn next_below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i + 1);
            items.swap(i, j);
        }
    }
}

/// Purpose labels separating independent streams hanging off one key.
pub mod salt {
    /// Root of the count-tree sampling streams.
    pub const TREE: u64 = 1;
    /// Child-count draws at a node.
    pub const SPLIT: u64 = 2;
    /// Uniform point placement in a leaf square.
    pub const PLACE: u64 = 3;
    /// Output-order permutation of a configuration.
    pub const PERMUTE: u64 = 4;
    /// Replica index expansion for Monte Carlo drivers.
    pub const REPLICA: u64 = 5;
    /// Metropolis chain stream.
    pub const MCMC: u64 = 6;
    /// Conditional resampling below a fixed tree level.
    pub const RESAMPLE: u64 = 7;
}

/// Key for the `idx`-th replica of a run seeded with `seed`.
#[inline]
pub fn replica_key(seed: u64, idx: u64) -> u64 {
    derive(derive(mix64(seed), salt::REPLICA), idx)
}

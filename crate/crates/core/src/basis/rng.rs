//! Pinned pseudo-random streams: splitmix64 seeding into xoshiro256**.
//!
//! Every conforming implementation must emit the same sequence, so none of
//! this may change without bumping the `.solar` format version.

use std::f64::consts::PI;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Offset added to the basis index for pool B when deriving sub-seeds.
pub const POOL_B_TAG: u64 = 1 << 32;
/// Offset used for Monte-Carlo trial streams, disjoint from both pools.
pub(crate) const TRIAL_TAG: u64 = 1 << 33;

/// One splitmix64 step from `x`: add the golden gamma, then finalize.
pub fn splitmix64_mix(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Which basis pool a stream or matrix belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PoolTag {
    /// Row-space pool; bases are `r x n` and fit `A V`.
    A,
    /// Column-space pool; bases are `m x r` and fit `U^T B`.
    B,
}

impl PoolTag {
    pub fn tag_constant(self) -> u64 {
        match self {
            PoolTag::A => 0,
            PoolTag::B => POOL_B_TAG,
        }
    }
}

/// xoshiro256** generator seeded from a 64-bit sub-seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    state: [u64; 4],
}

impl RngStream {
    /// State words are four successive splitmix64 outputs starting at `sub_seed`.
    pub fn from_sub_seed(sub_seed: u64) -> Self {
        let mut sm = sub_seed;
        let mut state = [0u64; 4];
        for word in &mut state {
            let out = splitmix64_mix(sm);
            sm = sm.wrapping_add(GOLDEN_GAMMA);
            *word = out;
        }
        Self { state }
    }

    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.state;
        let result = s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform in `[0, 1)` from the top 53 bits.
    pub fn next_uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal by Box-Muller. Consumes exactly two uniforms and
    /// discards the sine branch.
    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = self.next_uniform();
        let u2 = self.next_uniform();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (2.0 * PI * u2).cos()
    }
}

/// Independent stream for basis `basis_index` of `tag`'s pool.
pub fn derive_substream(master_seed: u64, tag: PoolTag, basis_index: u64) -> RngStream {
    let sub = splitmix64_mix(master_seed ^ tag.tag_constant().wrapping_add(basis_index));
    RngStream::from_sub_seed(sub)
}

pub(crate) fn trial_substream(seed: u64, trial: u64) -> RngStream {
    RngStream::from_sub_seed(splitmix64_mix(seed ^ TRIAL_TAG.wrapping_add(trial)))
}

/// `width` distinct indices from `0..ambient` by partial Fisher-Yates, in draw order.
pub fn sample_index_set(stream: &mut RngStream, ambient: usize, width: usize) -> Vec<usize> {
    assert!(width <= ambient, "index set width {width} exceeds ambient {ambient}");
    let mut pool: Vec<usize> = (0..ambient).collect();
    let mut out = Vec::with_capacity(width);
    for t in 0..width {
        let remaining = ambient - t;
        let pick = t + ((stream.next_uniform() * remaining as f64) as usize).min(remaining - 1);
        pool.swap(t, pick);
        out.push(pool[t]);
    }
    out
}

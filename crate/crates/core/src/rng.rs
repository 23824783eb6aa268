//! Pinned, platform-stable random streams.
//!
//! Every random draw in the harness comes from a [`Stream`]: a ChaCha8
//! generator seeded from a 64-bit key. Keys are derived from a root seed and a
//! tuple of integers with SplitMix64 finalisation, so a substream for
//! `(scenario, window)` is the same no matter which thread or in which order it
//! is requested.
//!
//! Integer and float draws are implemented here rather than through `rand`'s
//! distribution helpers, whose value streams are not guaranteed to be stable
//! across crate versions.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Role tags mixed into derived keys.
pub mod tag {
    pub const DATA: u64 = 0x6461_7461;
    pub const MODEL: u64 = 0x6d_6f64_656c;
    pub const EVAL: u64 = 0x6576_616c;
    pub const WINDOWS: u64 = 0x7769_6e64;
    pub const SCENARIO: u64 = 0x7363_656e;
    pub const BOOTSTRAP: u64 = 0x626f_6f74;
    pub const AUGMENT: u64 = 0x6175_676d;
    pub const SMOOTH: u64 = 0x736d_6f6f;
    pub const MEMBER: u64 = 0x6d65_6d62;
}

/// SplitMix64 finaliser.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Fold `parts` into `root`, one SplitMix64 round per part.
pub fn derive_key(root: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(mix64(root), |acc, &p| mix64(acc ^ mix64(p)))
}

pub struct Stream {
    rng: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl Stream {
    pub fn from_seed(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    pub fn keyed(root: u64, parts: &[u64]) -> Self {
        Self::from_seed(derive_key(root, parts))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..bound` by rejection. `bound` must be positive.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "below(0)");
        let zone = u64::MAX - (u64::MAX % bound);
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % bound;
            }
        }
    }

    /// Uniform integer in the inclusive range `lo..=hi`.
    pub fn range_inclusive(&mut self, lo: usize, hi: usize) -> usize {
        assert!(lo <= hi, "empty range {lo}..={hi}");
        lo + self.below((hi - lo + 1) as u64) as usize
    }

    /// Standard normal via Box–Muller; the second value of each pair is cached.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // 1 - u lies in (0, 1], so the log is finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * angle.sin());
        r * angle.cos()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// First `k` entries of a seeded partial Fisher–Yates shuffle of `pool`.
    pub fn choose_without_replacement(&mut self, pool: &[usize], k: usize) -> Vec<usize> {
        assert!(k <= pool.len(), "cannot choose {k} of {}", pool.len());
        let mut items = pool.to_vec();
        for i in 0..k {
            let j = i + self.below((items.len() - i) as u64) as usize;
            items.swap(i, j);
        }
        items.truncate(k);
        items
    }
}

//! Deterministic pseudo-randomness for the whole crate.
//!
//! Everything random — weight init, point sampling, batch shuffles, K-Means
//! seeding, t-SNE init — draws from [`RngState`], a SplitMix64 generator.
//! Substreams come from [`derive_seed`], so independent pipeline stages
//! (per item, per run, per experiment cell) never share or race a stream,
//! and any stage can be replayed in isolation.

use crate::scalar::Scalar;

/// Weyl-sequence increment from the SplitMix64 reference implementation
/// (2^64 / golden ratio, forced odd).
const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output mix (Stafford's MurmurHash3 variant 13 finalizer).
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent child seed from a parent seed and a stream tag.
///
/// Both inputs pass through the SplitMix64 finalizer, so sequential tags
/// (0, 1, 2, ...) and arbitrary parent seeds yield well-separated streams.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    mix64(seed ^ mix64(tag.wrapping_add(GOLDEN_GAMMA)))
}

/// SplitMix64 generator: a 64-bit counter stepped by [`GOLDEN_GAMMA`] and
/// passed through a finalizer. Tiny state, no warm-up, and splittable —
/// exactly what reproducible experiment plumbing needs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngState {
    state: u64,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        RngState { state: seed }
    }

    /// Next raw 64-bit output.
    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform draw from `[0, 1)` with 53 random mantissa bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw from `[lo, hi)`.
    #[inline]
    pub fn uniform<S: Scalar>(&mut self, lo: S, hi: S) -> S {
        lo + (hi - lo) * S::cast(self.next_f64())
    }

    /// Standard normal draw via Box-Muller (cosine branch).
    ///
    /// Uses two uniforms per draw and discards the sine partner: slightly
    /// wasteful, but every draw is then a pure function of stream position,
    /// which keeps replay semantics trivial.
    pub fn next_gaussian<S: Scalar>(&mut self) -> S {
        // u1 in (0, 1] so the log is finite.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        S::cast(r * (2.0 * std::f64::consts::PI * u2).cos())
    }

    /// Uniform draw from `0..n` (n > 0) via Lemire's multiply-shift.
    ///
    /// The residual bias is at most n / 2^64 — irrelevant here — and unlike
    /// rejection sampling it consumes exactly one output per draw.
    #[inline]
    pub fn next_below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

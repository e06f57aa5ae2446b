//! Seeded SplitMix64 generator and stream derivation.
//!
//! Every random draw in the crate comes from a [`SplitMix64`] whose seed is
//! derived from `(base seed, purpose, layer, step)` through [`stream`], so a
//! given draw can be reproduced without replaying the draws before it.

use rand::RngCore;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Finalizer of SplitMix64 (Stafford variant 13).
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    #[inline]
    pub fn next(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    #[inline]
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> bool {
        if p >= 1.0 {
            // consume a draw anyway so the stream position does not depend on p
            self.next();
            true
        } else {
            self.next_f64() < p
        }
    }
}

impl RngCore for SplitMix64 {
    fn next_u32(&mut self) -> u32 {
        (self.next() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.next()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

/// What a stream of random numbers is used for. The discriminant is mixed
/// into the derived seed, so streams with different purposes never collide
/// for the same base seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Init = 1,
    Dropout = 2,
    Shuffle = 3,
    Dataset = 4,
    KFold = 5,
    Poisson = 6,
    Teacher = 7,
    Bootstrap = 8,
    Probe = 9,
}

/// Derive an independent generator for `(seed, purpose, layer, step)`.
pub fn stream(seed: u64, purpose: Purpose, layer: u64, step: u64) -> SplitMix64 {
    let mut h = mix64(seed ^ GOLDEN_GAMMA);
    h = mix64(h ^ (purpose as u64).wrapping_mul(GOLDEN_GAMMA));
    h = mix64(h ^ layer.wrapping_mul(0xD1B5_4A32_D192_ED03));
    h = mix64(h ^ step.wrapping_mul(0x8CB9_2BA7_2F3D_8DD7));
    SplitMix64::new(h)
}

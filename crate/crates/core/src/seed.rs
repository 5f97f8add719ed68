//! Stable seed derivation.
//!
//! Every random draw in the pipeline comes from a `ChaCha8Rng` seeded by mixing
//! the run seed with a purpose tag and (usually) a clip id. The mixing is a
//! fixed FNV-1a fold followed by a splitmix64 finalizer, so seeds do not depend
//! on iteration order, platform or `std`'s hasher.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy)]
pub struct SeedMixer(u64);

impl SeedMixer {
    pub fn new(seed: u64) -> Self {
        SeedMixer(FNV_OFFSET).u64(seed)
    }

    pub fn bytes(mut self, bytes: &[u8]) -> Self {
        for b in bytes {
            self.0 ^= u64::from(*b);
            self.0 = self.0.wrapping_mul(FNV_PRIME);
        }
        // separator so ("ab","c") and ("a","bc") differ
        self.0 ^= 0xff;
        self.0 = self.0.wrapping_mul(FNV_PRIME);
        self
    }

    pub fn str(self, s: &str) -> Self {
        self.bytes(s.as_bytes())
    }

    pub fn u64(self, v: u64) -> Self {
        self.bytes(&v.to_le_bytes())
    }

    pub fn finish(self) -> u64 {
        splitmix64(self.0)
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.finish())
    }
}

/// Seed for a per-clip random operation.
pub fn clip_seed(seed: u64, purpose: &str, clip_id: &str) -> u64 {
    SeedMixer::new(seed).str(purpose).str(clip_id).finish()
}

pub fn rng_for(seed: u64, purpose: &str) -> ChaCha8Rng {
    SeedMixer::new(seed).str(purpose).rng()
}

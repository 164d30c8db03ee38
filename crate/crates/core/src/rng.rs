//! Deterministic random streams.
//!
//! Every simulated round draws from its own lanes derived from
//! `(seed, role, round index)`, so results do not depend on how rounds are
//! scheduled across threads.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Who consumes a stream. Each role gets an independent key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Alice,
    Bob,
    Charlie,
    Eve,
    Photon,
    Sampling,
}

impl Role {
    fn key(self) -> u64 {
        match self {
            Role::Alice => 0xA11C_E000_0000_0001,
            Role::Bob => 0xB0B0_0000_0000_0002,
            Role::Charlie => 0xC4A2_11E0_0000_0003,
            Role::Eve => 0xE7E0_0000_0000_0004,
            Role::Photon => 0x9407_0000_0000_0005,
            Role::Sampling => 0x5A3F_0000_0000_0006,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1330_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct RandomStream(ChaCha8Rng);

impl RandomStream {
    pub fn from_seed(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Stream for one role in one lane (usually the round index).
    pub fn lane(seed: u64, role: Role, lane: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ role.key()));
        rng.set_stream(lane);
        Self(rng)
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.0.random::<f64>()
    }

    /// `true` with probability `p`; `p` is clamped to `[0, 1]`.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p.clamp(0.0, 1.0)
    }

    pub fn coin(&mut self) -> bool {
        self.0.random::<bool>()
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

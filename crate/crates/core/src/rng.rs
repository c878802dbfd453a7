//! Deterministic random sub-streams.
//!
//! Every random draw in the simulator comes from a [`NoiseStream`] keyed by
//! `(master seed, round, client, purpose)`. Two streams with the same key
//! produce the same sequence within one build; different keys are
//! statistically independent. The generator is ChaCha12.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Client index used for draws owned by the server rather than a client.
pub const SERVER: u64 = u64::MAX;

/// What a sub-stream is used for. Separate purposes never share draws, so
/// e.g. switching the noise mechanism does not perturb batch sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Data,
    Init,
    Selection,
    Sampling,
    Noise,
    Shuffle,
    CurveTraining,
    Bezier,
    MonteCarlo,
    Test,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Data => 1,
            Purpose::Init => 2,
            Purpose::Selection => 3,
            Purpose::Sampling => 4,
            Purpose::Noise => 5,
            Purpose::Shuffle => 6,
            Purpose::CurveTraining => 7,
            Purpose::Bezier => 8,
            Purpose::MonteCarlo => 9,
            Purpose::Test => 10,
        }
    }
}

/// Derivation inputs for a [`NoiseStream`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub round: u64,
    pub client: u64,
    pub purpose: Purpose,
}

impl StreamKey {
    pub fn new(seed: u64, round: u64, client: u64, purpose: Purpose) -> Self {
        Self {
            seed,
            round,
            client,
            purpose,
        }
    }

    /// Key for a sub-stream nested under this one (e.g. a Monte-Carlo chunk
    /// or a merge-tree pair).
    pub fn child(&self, index: u64) -> Self {
        Self {
            seed: splitmix64(self.seed ^ splitmix64(index.wrapping_add(0x5EED))),
            ..*self
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeded pseudo-random stream; implements [`RngCore`] so it plugs into the
/// `rand` ecosystem.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    key: StreamKey,
    rng: ChaCha12Rng,
}

impl NoiseStream {
    pub fn new(key: StreamKey) -> Self {
        let mut seed = [0u8; 32];
        let words = [
            splitmix64(key.seed),
            splitmix64(key.round ^ 0xA5A5_A5A5_A5A5_A5A5),
            splitmix64(key.client ^ 0x3C3C_3C3C_3C3C_3C3C),
            splitmix64(key.purpose.tag()),
        ];
        for (chunk, w) in seed.chunks_exact_mut(8).zip(words) {
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        Self {
            key,
            rng: ChaCha12Rng::from_seed(seed),
        }
    }

    pub fn derive(seed: u64, round: u64, client: u64, purpose: Purpose) -> Self {
        Self::new(StreamKey::new(seed, round, client, purpose))
    }

    pub fn key(&self) -> StreamKey {
        self.key
    }

    /// Uniform draw in the open interval (0, 1).
    pub fn open01(&mut self) -> f64 {
        loop {
            // 53 random mantissa bits
            let u = (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            if u > 0.0 {
                return u;
            }
        }
    }
}

impl RngCore for NoiseStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

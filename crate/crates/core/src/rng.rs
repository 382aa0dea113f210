//! Deterministic random streams.
//!
//! Every stochastic choice in the crate draws from a stream addressed by
//! `(master seed, client id, round index, purpose)`, with one independent
//! substream per coordinate. Results are therefore identical no matter how
//! work is scheduled across threads, and two runs with the same master seed
//! produce bit-identical output.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// What a stream is used for. Keeps draws for different purposes
/// statistically independent even at the same (client, round) address.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    /// Stochastic rounding choices in the uniform quantizer.
    Quantize,
    /// Binomial noise draws.
    Noise,
    /// Per-round batch selection.
    BatchSample,
    /// Dataset partitioning across clients.
    Partition,
    /// Synthetic data generation.
    DataGen,
    /// Model initialization.
    Init,
    /// Standalone reports and test harnesses.
    Report,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Quantize => 1,
            Purpose::Noise => 2,
            Purpose::BatchSample => 3,
            Purpose::Partition => 4,
            Purpose::DataGen => 5,
            Purpose::Init => 6,
            Purpose::Report => 7,
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A stream rooted at `(master_seed, client, round, purpose)`.
///
/// `coord(j)` yields an independent generator for coordinate `j`; drawing any
/// number of values for one coordinate never disturbs another, which is what
/// makes the simulator schedule-invariant.
#[derive(Debug, Clone)]
pub struct Stream {
    base: ChaCha12Rng,
}

impl Stream {
    pub fn new(master_seed: u64, client: u32, round: u64, purpose: Purpose) -> Self {
        let mut state = master_seed ^ 0x42_5147_3144_5053; // "BQG1DPS" salt
        let mut seed = [0u8; 32];
        let a = splitmix64(&mut state);
        state ^= u64::from(client).wrapping_mul(0x0100_0000_01b3);
        let b = splitmix64(&mut state);
        state ^= round.wrapping_mul(0x9e37_79b9);
        let c = splitmix64(&mut state);
        state ^= purpose.tag();
        let d = splitmix64(&mut state);
        seed[0..8].copy_from_slice(&a.to_le_bytes());
        seed[8..16].copy_from_slice(&b.to_le_bytes());
        seed[16..24].copy_from_slice(&c.to_le_bytes());
        seed[24..32].copy_from_slice(&d.to_le_bytes());
        Stream {
            base: ChaCha12Rng::from_seed(seed),
        }
    }

    /// Independent generator for coordinate `j`.
    pub fn coord(&self, j: u64) -> ChaCha12Rng {
        let mut rng = self.base.clone();
        rng.set_stream(j);
        rng
    }

    /// Generator for draws that are not per-coordinate (batch selection,
    /// shuffles). Equivalent to `coord(0)`.
    pub fn whole(&self) -> ChaCha12Rng {
        self.coord(0)
    }
}

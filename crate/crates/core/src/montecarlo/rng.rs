//! Hierarchical seeding. Every random stream in a run is a pure function of
//! `(seed, index, stage)`, so results never depend on how pulses are split
//! across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stage {
    /// Pair-number draws for a chunk of pulses.
    Pairs = 1,
    /// Everything downstream of pair generation for one pulse.
    Event = 2,
    /// Dark counts for a chunk of pulses.
    Dark = 3,
    /// Reference per-pulse path.
    PerPulse = 4,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn substream_key(seed: u64, index: u64, stage: Stage) -> u64 {
    splitmix64(
        splitmix64(splitmix64(seed) ^ index) ^ (stage as u64).wrapping_mul(0xd6e8_feb8_6659_fd93),
    )
}

pub fn substream(seed: u64, index: u64, stage: Stage) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(substream_key(seed, index, stage))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = substream(1, 2, Stage::Event).random();
        let b: u64 = substream(1, 2, Stage::Event).random();
        assert_eq!(a, b);
        let c: u64 = substream(1, 3, Stage::Event).random();
        let d: u64 = substream(1, 2, Stage::Pairs).random();
        let e: u64 = substream(2, 2, Stage::Event).random();
        assert!(a != c && a != d && a != e);
    }
}

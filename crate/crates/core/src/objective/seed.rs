use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Default upper end of the seed range; seeds are drawn from `1..=L`.
pub const DEFAULT_SEED_RANGE: u64 = 1 << 63;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;
const ID_MUL: u64 = 0xd1b5_4a32_d192_ed03;
const REP_MUL: u64 = 0xaef1_7502_108e_f2d9;
const STREAM_DOMAIN: u64 = 0x5851_f42d_4c95_7f2d;

/// SplitMix64 finalizer. Bijective on u64.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Auxiliary random streams a run may need, each independent of the
/// replication seeds and of each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Initial,
    Candidate,
    Ruler,
    HyperboxSample,
    Baseline,
    Trial,
    Reevaluation,
    Cleanup,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Initial => 1,
            Stream::Candidate => 2,
            Stream::Ruler => 3,
            Stream::HyperboxSample => 4,
            Stream::Baseline => 5,
            Stream::Trial => 6,
            Stream::Reevaluation => 7,
            Stream::Cleanup => 8,
        }
    }
}

/// Where the per-replication simulation seeds come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedPolicy {
    pub master_seed: u64,
    #[serde(default = "default_range")]
    pub seed_range: u64,
}

fn default_range() -> u64 {
    DEFAULT_SEED_RANGE
}

impl SeedPolicy {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed, seed_range: DEFAULT_SEED_RANGE }
    }

    /// Seed for replication `rep` of solution `solution_id`, in `1..=seed_range`.
    pub fn derive_seed(&self, solution_id: u64, rep: u64) -> u64 {
        let mut h = mix64(self.master_seed.wrapping_add(GOLDEN_GAMMA));
        h = mix64(h ^ solution_id.wrapping_mul(ID_MUL));
        h = mix64(h ^ rep.wrapping_mul(REP_MUL).wrapping_add(GOLDEN_GAMMA));
        let range = self.seed_range.max(1);
        1 + h % range
    }

    fn stream_seed(&self, stream: Stream, index: u64) -> u64 {
        let mut h = mix64(self.master_seed ^ STREAM_DOMAIN);
        h = mix64(h ^ stream.tag().wrapping_mul(ID_MUL));
        mix64(h ^ index.wrapping_mul(REP_MUL))
    }

    pub fn rng(&self, stream: Stream) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.stream_seed(stream, 0))
    }

    /// A child policy, e.g. one per trial, with the same seed range.
    pub fn child(&self, stream: Stream, index: u64) -> SeedPolicy {
        SeedPolicy { master_seed: self.stream_seed(stream, index), seed_range: self.seed_range }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn deterministic() {
        let p = SeedPolicy::new(1);
        assert_eq!(p.derive_seed(0, 0), p.derive_seed(0, 0));
        assert_eq!(p.derive_seed(7, 3), SeedPolicy::new(1).derive_seed(7, 3));
    }

    #[test]
    fn replications_differ() {
        let p = SeedPolicy::new(1);
        assert_ne!(p.derive_seed(0, 0), p.derive_seed(0, 1));
        assert_ne!(p.derive_seed(0, 0), p.derive_seed(1, 0));
        assert_ne!(p.derive_seed(0, 0), SeedPolicy::new(2).derive_seed(0, 0));
    }

    #[test]
    fn within_range() {
        let p = SeedPolicy { master_seed: 9, seed_range: 10 };
        for i in 0..1000 {
            let s = p.derive_seed(i, i / 3);
            assert!((1..=10).contains(&s));
        }
    }

    #[test]
    fn million_seeds_collision_free() {
        let p = SeedPolicy::new(1);
        let mut seen = HashSet::with_capacity(1_000_000);
        let mut collisions = 0;
        for id in 0..1000u64 {
            for rep in 0..1000u64 {
                if !seen.insert(p.derive_seed(id, rep)) {
                    collisions += 1;
                }
            }
        }
        assert!(collisions <= 3, "{collisions} collisions");
    }

    #[test]
    fn streams_are_distinct() {
        use rand::RngCore;
        let p = SeedPolicy::new(5);
        let a = p.rng(Stream::Candidate).next_u64();
        let b = p.rng(Stream::Ruler).next_u64();
        assert_ne!(a, b);
        assert_ne!(p.child(Stream::Trial, 0), p.child(Stream::Trial, 1));
    }
}

//! Counter-based seed derivation.
//!
//! Every random draw is addressed by a path `(base seed, experiment, replication,
//! stream)`. Each component is folded in with a SplitMix64 finalizer, so any
//! node of any replication can be regenerated independently of the others.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

/// Generator used for every derived stream.
pub type StreamRng = Xoshiro256PlusPlus;

/// Stream id reserved for the root draw from the initial law.
pub const ROOT_STREAM: u64 = 0;
/// Stream id reserved for the generation permutation of a replication.
pub const PERMUTATION_STREAM: u64 = u64::MAX;
/// Stream id reserved for tagged-lineage chains.
pub const LINEAGE_STREAM: u64 = u64::MAX - 1;

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn fold(acc: u64, component: u64) -> u64 {
    splitmix64(acc ^ splitmix64(component))
}

/// FNV-1a hash of an experiment label.
pub fn label_id(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Seed of one replication of one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ReplicationSeed(u64);

impl ReplicationSeed {
    pub fn new(base: u64, experiment: &str, replication: u64) -> Self {
        ReplicationSeed(fold(fold(base, label_id(experiment)), replication))
    }

    pub fn from_raw(raw: u64) -> Self {
        ReplicationSeed(raw)
    }

    pub fn raw(self) -> u64 {
        self.0
    }

    /// Child seed, e.g. one per tree depth inside a replication.
    pub fn child(self, tag: u64) -> Self {
        ReplicationSeed(fold(self.0, tag.wrapping_add(0x5EED)))
    }

    /// Independent stream for a node (or one of the reserved stream ids).
    pub fn stream(self, id: u64) -> StreamRng {
        StreamRng::seed_from_u64(fold(self.0, id))
    }
}

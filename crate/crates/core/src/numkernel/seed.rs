use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

/// Independent random streams derived counter-style from one master seed.
/// The (domain, index, subindex) triple fully determines the stream, so
/// replicates can run in any order or thread layout and still draw the same
/// values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedPlan {
    master: u64,
}

/// Stage labels keeping streams from distinct pipeline stages disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamDomain {
    Population,
    SampleDraw,
    VarianceBootstrap,
    CiBootstrap,
    SecondOrderBootstrap,
    Replicate,
    Oracle,
}

impl StreamDomain {
    fn tag(self) -> u64 {
        match self {
            StreamDomain::Population => 1,
            StreamDomain::SampleDraw => 2,
            StreamDomain::VarianceBootstrap => 3,
            StreamDomain::CiBootstrap => 4,
            StreamDomain::SecondOrderBootstrap => 5,
            StreamDomain::Replicate => 6,
            StreamDomain::Oracle => 7,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl SeedPlan {
    pub fn new(master_seed: u64) -> Self {
        Self {
            master: master_seed,
        }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// Stream for (domain, index); use `stream2` when a replicate spawns
    /// its own sub-replicates.
    pub fn stream(&self, domain: StreamDomain, index: u64) -> ChaCha12Rng {
        self.stream2(domain, index, 0)
    }

    pub fn stream2(&self, domain: StreamDomain, index: u64, subindex: u64) -> ChaCha12Rng {
        let mut s = splitmix64(self.master ^ 0xc2b2_ae3d_27d4_eb4f);
        s = splitmix64(s ^ domain.tag().wrapping_mul(0x9e37_79b9_7f4a_7c15));
        s = splitmix64(s ^ index.wrapping_mul(0xff51_afd7_ed55_8ccd));
        s = splitmix64(s ^ subindex.wrapping_mul(0xc4ce_b9fe_1a85_ec53));
        ChaCha12Rng::seed_from_u64(s)
    }

    /// Derive a child plan (e.g. one per study replicate) whose own streams
    /// stay disjoint from the parent's.
    pub fn child(&self, index: u64) -> SeedPlan {
        let mut s = splitmix64(self.master ^ 0xa076_1d64_78bd_642f);
        s = splitmix64(s ^ index.wrapping_mul(0xe703_7ed1_a0b4_28db));
        SeedPlan { master: s }
    }
}

//! Counter-based random streams. Every draw the sampler makes is keyed by
//! (seed, phase, indices...), so results do not depend on scheduling or on
//! how many worker threads happen to run the sweep.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// splitmix64 finalizer; a bijection on u64.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const PROPAGATE: u64 = 1;
const RESAMPLE: u64 = 2;
const ALTER: u64 = 3;
const DATA_GEN: u64 = 4;
const ORACLE: u64 = 5;
const INIT: u64 = 6;

/// Root of the stream tree for one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    seed: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Dedicated generator for an arbitrary tag path.
    pub fn derive(&self, tags: &[u64]) -> ChaCha8Rng {
        let mut h = mix(self.seed ^ GOLDEN);
        for &t in tags {
            h = mix(h ^ t.wrapping_mul(GOLDEN).wrapping_add(0x632b_e59b_d9b4_e019));
        }
        // Expand the digest to a full 256-bit key so distinct paths cannot
        // collide through the 64-bit seeding shortcut.
        let mut key = [0u8; 32];
        for (i, chunk) in key.chunks_exact_mut(8).enumerate() {
            let word = mix(h ^ (i as u64).wrapping_mul(0xd6e8_feb8_6659_fd93));
            chunk.copy_from_slice(&word.to_le_bytes());
        }
        ChaCha8Rng::from_seed(key)
    }

    pub fn propagate(&self, particle: usize, step: usize) -> ChaCha8Rng {
        self.derive(&[PROPAGATE, particle as u64, step as u64])
    }

    /// Initialization draws are retried until the particle is feasible, so
    /// each attempt needs its own stream.
    pub fn init_attempt(&self, particle: usize, attempt: usize) -> ChaCha8Rng {
        self.derive(&[INIT, particle as u64, attempt as u64])
    }

    pub fn resample(&self, step: usize) -> ChaCha8Rng {
        self.derive(&[RESAMPLE, step as u64])
    }

    pub fn alter(&self, particle: usize, step: usize, effect: usize) -> ChaCha8Rng {
        self.derive(&[ALTER, particle as u64, step as u64, effect as u64])
    }

    pub fn data_gen(&self, replicate: usize) -> ChaCha8Rng {
        self.derive(&[DATA_GEN, replicate as u64])
    }

    pub fn oracle(&self, block: usize) -> ChaCha8Rng {
        self.derive(&[ORACLE, block as u64])
    }
}

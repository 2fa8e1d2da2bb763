//! Named random substreams.
//!
//! Every random draw in the library comes from a [`ChaCha8Rng`] whose 32-byte
//! seed is `SHA-256(master_seed_le || name || 0x00 || index_le)`. A stream is
//! therefore fully identified by `(master_seed, name, index)`, and a reader in
//! another language can reproduce it from those three values.
//!
//! Stream names in use:
//!
//! | name | index | seeded by | consumer |
//! |------|-------|-----------|----------|
//! | `corpus` | 0 | run seed | synthetic corpus |
//! | `benchmark/level` | bits of the target value | run seed | per-level seed (via [`child_seed`]) |
//! | `benchmark/table` | 0 | level seed | the level's joint-table grid draw |
//! | `benchmark/grid` | pair index | level seed | per-pair grid draw |
//! | `benchmark/pair` | pair index | level seed | sizes, labels and pool rows of a pair |
//! | `convergence/rep` | replication | run seed | per-replication seed (via [`child_seed`]) |
//! | `conjugate/pair` | pair index | run or replication seed | conjugate-model pairs |
//! | `curation/pair` | pair index | run seed | curation pair sampling and label noise |
//! | `curation/method` | pair index | run seed | duplicate/remove row choice |
//! | `mc` | pair index | estimate seed | Monte-Carlo PMI |
//! | `eta` | pair index | estimate seed | probe points of the eta route |

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

/// Derives the rng for substream `(name, index)` of `master`.
pub fn substream(master: u64, name: &str, index: u64) -> StreamRng {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(name.as_bytes());
    hasher.update([0u8]);
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(seed)
}

/// Derives a child master seed, for nesting experiments under one seed.
pub fn child_seed(master: u64, name: &str, index: u64) -> u64 {
    use rand::RngCore;
    substream(master, name, index).next_u64()
}

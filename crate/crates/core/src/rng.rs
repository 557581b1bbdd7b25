//! Named, counter-based random substreams.
//!
//! Every randomized choice in the pipeline flows from one master seed
//! through a named substream (`split`, `cv`, `simulate`, ...). Substream
//! seeds are derived by hashing, so streams are independent of each other
//! and stable across platforms and thread schedules.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

/// RNG for the substream `name` of `master`.
pub fn substream(master: u64, name: &str) -> ChaCha20Rng {
    seeded(master, name, None)
}

/// RNG for element `index` of the substream `name` (parallel generation:
/// each worker derives its own stream from the counter, so results do not
/// depend on scheduling).
pub fn substream_indexed(master: u64, name: &str, index: u64) -> ChaCha20Rng {
    seeded(master, name, Some(index))
}

fn seeded(master: u64, name: &str, index: Option<u64>) -> ChaCha20Rng {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update([0xff]);
    hasher.update(name.as_bytes());
    if let Some(i) = index {
        hasher.update([0xfe]);
        hasher.update(i.to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha20Rng::from_seed(seed)
}

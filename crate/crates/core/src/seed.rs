//! Deterministic random streams keyed by the run seed and a string path.
//!
//! Every stochastic component derives its generator here, so results depend
//! only on `(seed, key)` and never on scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// A ChaCha8 stream for `(seed, key...)`.
pub fn keyed_rng(seed: u64, key: &[&str]) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for part in key {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    let digest: [u8; 32] = h.finalize().into();
    ChaCha8Rng::from_seed(digest)
}

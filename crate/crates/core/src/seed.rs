// SPDX-License-Identifier: MIT OR Apache-2.0

//! Named random substreams derived from one root seed.
//!
//! Every stage draws from `substream(root, name)` so adding a consumer never
//! shifts the randomness seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

/// Derive a 64-bit seed from a root seed and a path of names.
pub fn derive(root: u64, names: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    for n in names {
        h.update((n.len() as u64).to_le_bytes());
        h.update(n.as_bytes());
    }
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("digest has 32 bytes"))
}

pub fn substream(root: u64, names: &[&str]) -> Rng {
    ChaCha8Rng::seed_from_u64(derive(root, names))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

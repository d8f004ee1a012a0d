//! Named random streams split from one 64-bit master seed.
//!
//! Every consumer of randomness asks for a stream by purpose label, so adding
//! a new consumer never shifts the draws seen by existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

/// Derive the seed of stream `label` from `master`: first 8 bytes of
/// SHA-256(master_le || label), little endian.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn stream(master: u64, label: &str) -> Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, label))
}

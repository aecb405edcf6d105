//! Seed plumbing. Every stochastic operation takes an explicit generator or seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent sub-seed from a master seed and a purpose string.
///
/// The derivation is a SHA-256 of the little-endian seed followed by the
/// purpose bytes, truncated to the first eight bytes. It is stable across
/// platforms and releases, so documented purposes ("train/init",
/// "prepare/split", ...) reproduce runs exactly.
pub fn derive_seed(master: u64, purpose: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(purpose.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derivation_is_stable_and_purpose_sensitive() {
        assert_eq!(derive_seed(7, "a"), derive_seed(7, "a"));
        assert_ne!(derive_seed(7, "a"), derive_seed(7, "b"));
        assert_ne!(derive_seed(7, "a"), derive_seed(8, "a"));
    }

    #[test]
    fn seeded_streams_repeat() {
        let a: Vec<u32> = seeded(3).sample_iter(rand::distributions::Standard).take(5).collect();
        let b: Vec<u32> = seeded(3).sample_iter(rand::distributions::Standard).take(5).collect();
        assert_eq!(a, b);
    }
}

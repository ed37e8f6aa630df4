//! Named, independent random streams derived from one integer seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Stream for `(seed, domain, content)`. Distinct domains or contents give
/// unrelated streams, so adding a consumer never shifts another one's draws.
pub fn seeded_rng(seed: u64, domain: &str, content: &[u8]) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(domain.as_bytes());
    h.update([0u8]);
    h.update(content);
    let digest: [u8; 32] = h.finalize().into();
    ChaCha8Rng::from_seed(digest)
}

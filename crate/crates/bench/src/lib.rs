//! Shared fixtures for the criterion benches.

use engram_pool::{EngramConfig, TokenContext};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Engram-27B row geometry over a 64 Mi-byte table.
pub fn bench_config() -> EngramConfig {
    EngramConfig {
        num_rows: 26_214,
        ..EngramConfig::engram_27b()
    }
}

/// `batch` decode sequences of random token IDs, each long enough for
/// the widest n-gram.
pub fn random_batch(batch: usize, seed: u64) -> TokenContext {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seqs: Vec<Vec<u32>> = (0..batch)
        .map(|_| (0..4).map(|_| rng.gen()).collect())
        .collect();
    TokenContext::decode_batch(&seqs)
}

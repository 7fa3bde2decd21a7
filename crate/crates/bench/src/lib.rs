//! Deterministic inputs shared by the benchmarks.

use facetrank_core::metrics::{RankedEntry, RankedList};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A ranked pool of `n` candidates with random scores and grades 0-3.
pub fn random_list(n: usize, seed: u64) -> RankedList {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entries = (0..n)
        .map(|i| RankedEntry {
            candidate_id: format!("c{i:04}"),
            score: rng.random(),
            relevance: rng.random_range(0..4),
        })
        .collect();
    RankedList::new("q", entries).expect("ids are unique")
}

/// `(candidate_id, grade)` pairs with grades 0-3.
pub fn random_pool(n: usize, seed: u64) -> Vec<(String, u8)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|i| (format!("c{i:04}"), rng.random_range(0..4))).collect()
}

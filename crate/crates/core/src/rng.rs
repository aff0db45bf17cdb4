//! Seed derivation.
//!
//! Every random stream is derived from the run's root seed:
//! `derive_seed(root, stage, index)` hashes the root, a stage label (for
//! example `"scene"`, `"train-mtcm"`, `"sweep"`) and an index (scene number,
//! trial number) with SHA-256 and takes the first eight bytes. Streams for
//! different stages or indices are therefore independent and stable across
//! code changes elsewhere in the pipeline.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

pub fn derive_seed(root: u64, stage: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update((stage.len() as u64).to_le_bytes());
    h.update(stage.as_bytes());
    h.update(index.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

pub fn rng_for(root: u64, stage: &str, index: u64) -> Rng {
    Rng::seed_from_u64(derive_seed(root, stage, index))
}

pub fn rng_from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

//! Oracles shared by the integration tests and the acceptance run.
#![allow(dead_code)]

pub mod fd;
pub mod lqr;
pub mod qp_oracle;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

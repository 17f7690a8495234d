//! Seed-stream derivation.
//!
//! Every consumer of randomness (context generation, network init, each env
//! worker, evaluation) draws from its own ChaCha stream whose seed is derived
//! from `(master seed, purpose tag, index)` with splitmix64 mixing:
//!
//! ```text
//! h = splitmix64(master)
//! for byte in tag: h = splitmix64(h ^ byte)
//! seed = splitmix64(h ^ splitmix64(index))
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, tag: &str, index: u64) -> u64 {
    let mut h = splitmix64(master);
    for b in tag.bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    splitmix64(h ^ splitmix64(index))
}

pub fn stream(master: u64, tag: &str, index: u64) -> Rng {
    Rng::seed_from_u64(derive_seed(master, tag, index))
}

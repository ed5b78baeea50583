//! Seeded random streams. Each purpose (initialization, shuffling, mixing)
//! draws from its own ChaCha stream so adding draws to one cannot shift
//! another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub const INIT: u64 = 0;
pub const SHUFFLE: u64 = 1;
pub const MIX: u64 = 2;
pub const SHUFFLE_STEP2: u64 = 3;

pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

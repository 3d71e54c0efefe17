//! Small numerical toolkit shared by the dynamics modules.

pub mod ode;
pub mod quad;
pub mod roots;
pub mod stats;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent stream for sample `index` under `seed`; results do not depend on scheduling.
pub fn sample_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(index);
    rng
}

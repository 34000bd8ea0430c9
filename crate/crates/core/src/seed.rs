//! Labeled stream splitting from a single 64-bit master seed.
//!
//! Every random consumer asks for a stream by `(label, index)`:
//!
//! ```text
//! stream_seed(master, label, index)
//!     = splitmix64(master ^ splitmix64(fnv1a64(label) ^ splitmix64(index)))
//! ```
//!
//! and seeds a [`StreamRng`] (ChaCha8) with it. Labels used by the crate:
//!
//! | label        | index                | consumer                               |
//! |--------------|----------------------|----------------------------------------|
//! | `"batch"`    | batch number         | one median-of-means batch              |
//! | `"coef"`     | mask value           | per-coefficient estimator seed         |
//! | `"sample"`   | sample number        | one draw of the marginal sampler       |
//! | `"flip"`     | sample number        | model B biased-coin post-processing    |
//! | `"instance"` | instance number      | random circuit generation in the CLI   |
//!
//! Streams depend only on their key, so results are identical for any thread
//! count or evaluation order.

use rand::SeedableRng;

pub type StreamRng = rand_chacha::ChaCha8Rng;

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a64(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn stream_seed(master: u64, label: &str, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(fnv1a64(label) ^ splitmix64(index)))
}

pub fn stream(master: u64, label: &str, index: u64) -> StreamRng {
    StreamRng::seed_from_u64(stream_seed(master, label, index))
}

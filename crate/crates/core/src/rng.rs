//! Seeded random substreams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::tensor::Latent;

pub const DOMAIN_INIT: u64 = 1;
pub const DOMAIN_NAIVE: u64 = 2;
pub const DOMAIN_PERTURB: u64 = 3;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Independent generator for `(seed, domain, a, b)`. Adding views or steps
/// never shifts the streams of existing ones.
pub fn substream(seed: u64, domain: u64, a: u64, b: u64) -> ChaCha8Rng {
    let mut h = splitmix64(seed);
    for part in [domain, a, b] {
        h = splitmix64(h ^ part);
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// Standard-normal latent of the given shape.
pub fn normal_latent(
    channels: usize,
    height: usize,
    width: usize,
    rng: &mut impl rand::Rng,
) -> Latent {
    Latent::from_fn(channels, height, width, |_, _, _| StandardNormal.sample(rng))
}

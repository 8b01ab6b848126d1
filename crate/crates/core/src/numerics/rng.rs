use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::NumericsError;

/// Generator used everywhere a seeded stream is needed.
pub type BanditRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> BanditRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a path of integer tags, e.g.
/// `derive_seed(master, &[experiment, replication, round])`. Distinct paths
/// give statistically independent streams.
pub fn derive_seed(parent: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(parent), |acc, &tag| {
        splitmix64(acc ^ splitmix64(tag.wrapping_add(0xA24B_AED4_963E_E407)))
    })
}

/// Stable 64-bit tag for a string label (FNV-1a), for use in seed paths.
pub fn label_tag(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325_u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// One draw from `N(mean, variance)`; zero variance returns `mean` exactly
/// without consuming randomness.
pub fn gaussian_sample<R: Rng + ?Sized>(
    rng: &mut R,
    mean: f64,
    variance: f64,
) -> Result<f64, NumericsError> {
    if variance < 0.0 || variance.is_nan() {
        return Err(NumericsError::NegativeVariance(variance));
    }
    if variance == 0.0 {
        return Ok(mean);
    }
    let z: f64 = StandardNormal.sample(rng);
    Ok(mean + variance.sqrt() * z)
}

/// Standard-normal draw that always consumes the generator, so callers that
/// pre-draw noise keep their streams aligned regardless of variances.
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

//! Central-difference gradient verification.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Above this many coordinates only a seeded random subset is probed.
pub const MAX_CHECKED_COORDS: usize = 10_000;
const SUBSET_SEED: u64 = 0x6772_6164;
/// Relative errors are measured against at least this magnitude.
const REL_FLOOR: f64 = 1e-6;

/// Compares `analytic` against central differences of `f` at `params` and
/// returns the largest relative error `|a − n| / max(|a|, |n|, 1e-6)`.
/// A non-finite comparison counts as an infinite error.
pub fn grad_check<F>(mut f: F, params: &[f64], analytic: &[f64], h: f64) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len(), "gradient length must match parameters");
    assert!(h > 0.0 && h <= 1e-2, "step must lie in (0, 1e-2]");

    let coords: Vec<usize> = if params.len() > MAX_CHECKED_COORDS {
        let mut rng = ChaCha8Rng::seed_from_u64(SUBSET_SEED);
        let mut idx = sample(&mut rng, params.len(), MAX_CHECKED_COORDS).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..params.len()).collect()
    };

    let mut probe = params.to_vec();
    let mut worst: f64 = 0.0;
    for i in coords {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = f(&probe);
        probe[i] = orig - h;
        let down = f(&probe);
        probe[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
        if rel.is_nan() {
            return f64::INFINITY;
        }
        worst = worst.max(rel);
    }
    worst
}

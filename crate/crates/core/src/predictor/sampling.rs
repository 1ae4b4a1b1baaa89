use rand::seq::index::sample;
use rand::Rng;

use super::PredictorError;
use crate::localization::Entry;

/// Uniform sample without replacement of `min(t_max, |pool|)` entries,
/// returned in pool order.
pub fn sample_training<R: Rng + ?Sized>(
    pool: &[Entry],
    t_max: usize,
    rng: &mut R,
) -> Result<Vec<Entry>, PredictorError> {
    if pool.is_empty() {
        return Err(PredictorError::EmptyPool);
    }
    if t_max >= pool.len() {
        return Ok(pool.to_vec());
    }
    let mut idx = sample(rng, pool.len(), t_max).into_vec();
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| pool[i]).collect())
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the independent stream for key `(i, j)` under `master`.
pub fn stream_seed(master: u64, i: u32, j: u32) -> u64 {
    splitmix64(master ^ splitmix64((u64::from(i) << 32) | u64::from(j)))
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn pool(n: usize) -> Vec<Entry> {
        (0..n).map(|i| (i, i % 7, i as f64)).collect()
    }

    #[test]
    fn small_pool_returned_whole() {
        let p = pool(100);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_training(&p, 600, &mut rng).unwrap(), p);
    }

    #[test]
    fn large_pool_capped_and_distinct() {
        let p = pool(1000);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sample_training(&p, 600, &mut rng).unwrap();
        assert_eq!(s.len(), 600);
        assert!(s.windows(2).all(|w| w[0].0 < w[1].0));
    }

    #[test]
    fn empty_pool_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            sample_training(&[], 5, &mut rng),
            Err(PredictorError::EmptyPool)
        ));
    }

    #[test]
    fn single_draws_are_uniform() {
        let p = pool(5);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut counts = [0usize; 5];
        for _ in 0..10_000 {
            counts[sample_training(&p, 1, &mut rng).unwrap()[0].0] += 1;
        }
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - 2000.0).powi(2) / 2000.0)
            .sum();
        // 99th percentile of chi-square with 4 degrees of freedom
        assert!(chi2 < 13.277, "{counts:?}");
        assert!(counts.iter().all(|&c| (1800..=2200).contains(&c)));
    }

    #[test]
    fn streams_are_stable_and_distinct() {
        assert_eq!(stream_seed(7, 1, 2), stream_seed(7, 1, 2));
        assert_ne!(stream_seed(7, 1, 2), stream_seed(7, 2, 1));
        assert_ne!(stream_seed(7, 0, 0), stream_seed(8, 0, 0));
    }
}

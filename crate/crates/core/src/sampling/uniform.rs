use rand::Rng;

use super::check_ratio;
use crate::error::{Error, Result};

/// `max(1, round(ratio · total))`.
pub fn sample_count(total: usize, ratio: f64) -> Result<usize> {
    check_ratio("sampling ratio", ratio)?;
    Ok(((ratio * total as f64).round() as usize).clamp(1, total.max(1)))
}

fn uniform_subset<R: Rng + ?Sized>(total: usize, ratio: f64, rng: &mut R) -> Result<Vec<usize>> {
    if total == 0 {
        return Err(Error::Config("cannot sample from an empty set".into()));
    }
    let k = sample_count(total, ratio)?;
    if k == total {
        return Ok((0..total).collect());
    }
    let mut idx = rand::seq::index::sample(rng, total, k).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Uniform subset of `round(p·n)` distinct nodes, sorted.
pub fn uniform_node_sample<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Result<Vec<usize>> {
    uniform_subset(n, p, rng)
}

/// Uniform subset of `round(q·d)` distinct embedding dimensions, sorted.
pub fn uniform_dim_sample<R: Rng + ?Sized>(d: usize, q: f64, rng: &mut R) -> Result<Vec<usize>> {
    uniform_subset(d, q, rng)
}

/// Deterministic split `epoch mod (d/m)` of a partition of `0..d` into
/// consecutive blocks of `m` dimensions.
pub fn rotating_partition(d: usize, m: usize, epoch: u64) -> Result<Vec<usize>> {
    if m == 0 || d == 0 || !d.is_multiple_of(m) {
        return Err(Error::Config(format!("split size {m} must divide dimension {d}")));
    }
    let k = (epoch % (d / m) as u64) as usize;
    Ok((k * m..(k + 1) * m).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    #[test]
    fn counts() {
        assert_eq!(sample_count(100, 0.01).unwrap(), 1);
        assert_eq!(sample_count(100, 0.001).unwrap(), 1);
        assert_eq!(sample_count(512, 0.5).unwrap(), 256);
        assert_eq!(sample_count(10, 0.25).unwrap(), 3);
        assert!(sample_count(10, 0.0).is_err());
        assert!(sample_count(10, 1.5).is_err());
    }

    #[test]
    fn full_ratio_selects_all() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(uniform_node_sample(7, 1.0, &mut rng).unwrap(), (0..7).collect::<Vec<_>>());
        assert_eq!(uniform_dim_sample(5, 1.0, &mut rng).unwrap().len(), 5);
    }

    #[test]
    fn half_of_512_dims() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let idx = uniform_dim_sample(512, 0.5, &mut rng).unwrap();
        assert_eq!(idx.len(), 256);
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
        assert!(*idx.last().unwrap() < 512);
    }

    #[test]
    fn resampling_varies_across_epochs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let subsets: HashSet<Vec<usize>> =
            (0..100).map(|_| uniform_dim_sample(16, 0.5, &mut rng).unwrap()).collect();
        assert!(subsets.len() >= 2);
    }

    #[test]
    fn rotating_wraps() {
        assert_eq!(rotating_partition(8, 4, 0).unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(rotating_partition(8, 4, 1).unwrap(), vec![4, 5, 6, 7]);
        assert_eq!(rotating_partition(8, 4, 2).unwrap(), vec![0, 1, 2, 3]);
        assert!(rotating_partition(8, 3, 0).is_err());
    }

    #[test]
    fn rotating_covers_each_dim_once_per_cycle() {
        let (d, m) = (12, 3);
        for start in 0..5u64 {
            let mut seen = vec![0usize; d];
            for e in start..start + (d / m) as u64 {
                for i in rotating_partition(d, m, e).unwrap() {
                    seen[i] += 1;
                }
            }
            assert!(seen.iter().all(|&c| c == 1));
        }
    }
}

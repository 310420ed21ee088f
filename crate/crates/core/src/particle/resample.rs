use rand::Rng;

use crate::error::{Error, Result};

const NORMALIZATION_TOL: f64 = 1e-9;

fn check_normalized(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::contract("cannot resample an empty particle set"));
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::contract("weights must be finite and nonnegative"));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::contract(format!("weights sum to {total}, expected 1")));
    }
    Ok(())
}

/// Walks the cumulative weights along the sorted positions in `[0, 1)`.
fn walk<I: Iterator<Item = f64>>(weights: &[f64], positions: I) -> Vec<usize> {
    let n = weights.len();
    let mut out = Vec::with_capacity(n);
    let mut j = 0;
    let mut cum = weights[0];
    for pos in positions {
        while pos >= cum && j + 1 < n {
            j += 1;
            cum += weights[j];
        }
        out.push(j);
    }
    out
}

/// Systematic resampling on the grid `(v + k) / N`, `k = 0..N`.
///
/// Returns the parent index of every offspring, in nondecreasing order.
pub fn systematic_resample(weights: &[f64], v: f64) -> Result<Vec<usize>> {
    check_normalized(weights)?;
    if !(0.0..1.0).contains(&v) {
        return Err(Error::contract(format!("systematic offset {v} is outside [0, 1)")));
    }
    let n = weights.len();
    let inv = 1.0 / n as f64;
    Ok(walk(weights, (0..n).map(|k| (v + k as f64) * inv)))
}

/// Multinomial resampling with `N` independent uniforms.
pub fn multinomial_resample<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<Vec<usize>> {
    check_normalized(weights)?;
    let n = weights.len();
    let mut u: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    u.sort_by(|a, b| a.total_cmp(b));
    Ok(walk(weights, u.into_iter()))
}

/// Offspring count of each parent.
pub fn offspring_counts(indices: &[usize], n: usize) -> Vec<usize> {
    let mut counts = vec![0; n];
    for &i in indices {
        counts[i] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_weights_copy_each_once() {
        for v in [0.0, 0.25, 0.999] {
            let idx = systematic_resample(&[0.25; 4], v).unwrap();
            assert_eq!(idx, vec![0, 1, 2, 3]);
        }
    }

    #[test]
    fn hand_traced_grid() {
        // grid {0.15, 0.65}
        assert_eq!(systematic_resample(&[0.5, 0.5], 0.3).unwrap(), vec![0, 1]);
    }

    #[test]
    fn degenerate_weight() {
        assert_eq!(systematic_resample(&[1.0, 0.0, 0.0], 0.7).unwrap(), vec![0, 0, 0]);
        assert_eq!(systematic_resample(&[0.0, 0.0, 1.0], 0.0).unwrap(), vec![2, 2, 2]);
    }

    #[test]
    fn contract_violations() {
        assert!(matches!(systematic_resample(&[0.5, 0.6], 0.1), Err(Error::Contract(_))));
        assert!(systematic_resample(&[1.0], 1.0).is_err());
        assert!(systematic_resample(&[], 0.1).is_err());
        assert!(systematic_resample(&[-0.5, 1.5], 0.1).is_err());
    }

    #[test]
    fn resampling_preserves_weighted_mean_on_average() {
        let weights = [0.1, 0.4, 0.05, 0.3, 0.15];
        let values = [1.0, -2.0, 5.0, 0.5, 3.0];
        let target: f64 = weights.iter().zip(&values).map(|(w, x)| w * x).sum();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let reps = 20_000;
        let mut acc_sys = 0.0;
        let mut acc_mult = 0.0;
        for _ in 0..reps {
            let v: f64 = rng.random();
            let idx = systematic_resample(&weights, v).unwrap();
            acc_sys += idx.iter().map(|&i| values[i]).sum::<f64>() / 5.0;
            let idx = multinomial_resample(&weights, &mut rng).unwrap();
            acc_mult += idx.iter().map(|&i| values[i]).sum::<f64>() / 5.0;
        }
        assert!((acc_sys / reps as f64 - target).abs() < 0.02);
        assert!((acc_mult / reps as f64 - target).abs() < 0.05);
    }

    proptest! {
        #[test]
        fn systematic_counts_are_floor_or_ceil(
            raw in proptest::collection::vec(0.0f64..1.0, 1..40),
            v in 0.0f64..1.0,
        ) {
            let total: f64 = raw.iter().sum();
            prop_assume!(total > 1e-6);
            let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
            let n = w.len();
            let idx = systematic_resample(&w, v).unwrap();
            prop_assert_eq!(idx.len(), n);
            let counts = offspring_counts(&idx, n);
            for (c, wk) in counts.iter().zip(&w) {
                let expected = wk * n as f64;
                // slack for rounding in the cumulative sum
                prop_assert!(*c as f64 >= (expected - 1e-9).floor());
                prop_assert!(*c as f64 <= (expected + 1e-9).ceil());
            }
        }
    }
}

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure, Result};

/// `round_half_up(fraction · n)`, computed in exact integer arithmetic on
/// the fraction's shortest decimal form where possible.
pub fn train_count(n: usize, fraction: f64) -> usize {
    let scaled = fraction * n as f64;
    // nudge absorbs representation error, e.g. 0.8 · 216 = 172.80000000000001
    ((scaled + 0.5 + 1e-9).floor() as usize).min(n)
}

/// Seeded shuffle, then the first `train_count` items train and the rest validate.
pub fn split_dataset<T: Clone>(items: &[T], train_fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    ensure!(!items.is_empty(), "cannot split an empty item list");
    ensure!(
        train_fraction > 0.0 && train_fraction < 1.0,
        "train fraction must lie in (0,1), got {train_fraction}"
    );
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = train_count(items.len(), train_fraction);
    let pick = |idx: &[usize]| idx.iter().map(|&i| items[i].clone()).collect::<Vec<_>>();
    Ok((pick(&order[..n_train]), pick(&order[n_train..])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    #[test]
    fn ratio_examples() {
        let items: Vec<u32> = (0..10).collect();
        let (t, v) = split_dataset(&items, 0.8, 1).unwrap();
        assert_eq!((t.len(), v.len()), (8, 2));
        let items: Vec<u32> = (0..216).collect();
        let (t, v) = split_dataset(&items, 0.8, 42).unwrap();
        assert_eq!((t.len(), v.len()), (173, 43));
        assert_eq!(split_dataset(&items, 0.8, 42).unwrap(), (t, v));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(split_dataset::<u8>(&[], 0.8, 1).is_err());
        assert!(split_dataset(&[1], 0.0, 1).is_err());
        assert!(split_dataset(&[1], 1.0, 1).is_err());
    }

    #[test]
    fn half_up_rounding() {
        assert_eq!(train_count(5, 0.5), 3);
        assert_eq!(train_count(3, 0.5), 2);
        assert_eq!(train_count(1, 0.2), 0);
    }

    proptest! {
        #[test]
        fn disjoint_covering_deterministic(n in 1usize..=500, seed in any::<u64>(), f in 0.01f64..0.99) {
            let items: Vec<usize> = (0..n).collect();
            let (t, v) = split_dataset(&items, f, seed).unwrap();
            // independent oracle: exact decimal rounding of the product
            let expected = (f * n as f64 * 1e6).round() as u128;
            let expected = ((expected + 500_000) / 1_000_000) as usize;
            prop_assert_eq!(t.len(), expected.min(n));
            let all: BTreeSet<_> = t.iter().chain(&v).copied().collect();
            prop_assert_eq!(all.len(), n);
            prop_assert_eq!(t.len() + v.len(), n);
            prop_assert_eq!(split_dataset(&items, f, seed).unwrap(), (t, v));
        }
    }
}

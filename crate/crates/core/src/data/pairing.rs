use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::FeatureMatrix;
use crate::{seed, Error, Result};

/// How rows of two feature sets are matched up before estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PairingPolicy {
    /// Row `i` of `x` goes with row `i` of `y`; both must come from the same
    /// recordings.
    SameRows,
    /// Rows of `y` are randomly permuted against `x` (disjoint corpora). The
    /// pair's mutual information is zero by construction.
    #[default]
    #[serde(alias = "random")]
    SeededRandom,
}

#[derive(Debug, Clone)]
pub struct AlignedPair {
    pub x: FeatureMatrix,
    pub y: FeatureMatrix,
    /// Row `i` of the aligned `y` is row `permutation[i]` of the input `y`.
    pub permutation: Vec<usize>,
}

/// Row-aligns `x` and `y`. Under random pairing the shorter side sets the row
/// count and `y` rows are drawn by a seeded permutation.
pub fn align_pair(
    x: &FeatureMatrix,
    y: &FeatureMatrix,
    policy: PairingPolicy,
    seed_value: u64,
) -> Result<AlignedPair> {
    match policy {
        PairingPolicy::SameRows => {
            if x.rows() != y.rows() {
                return Err(Error::Usage(format!(
                    "same-rows pairing needs equal row counts, got {} and {}",
                    x.rows(),
                    y.rows()
                )));
            }
            Ok(AlignedPair { x: x.clone(), y: y.clone(), permutation: (0..y.rows()).collect() })
        }
        PairingPolicy::SeededRandom => {
            let n = x.rows().min(y.rows());
            let mut perm: Vec<usize> = (0..y.rows()).collect();
            perm.shuffle(&mut seed::rng(seed_value, "pairing", 0));
            perm.truncate(n);
            let xs: Vec<usize> = (0..n).collect();
            Ok(AlignedPair { x: x.select_rows(&xs), y: y.select_rows(&perm), permutation: perm })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(n: usize) -> FeatureMatrix {
        FeatureMatrix::from_rows_named("a", 1, (0..n).map(|i| i as f64).collect()).unwrap()
    }

    #[test]
    fn same_rows_is_identity() {
        let p = align_pair(&m(5), &m(5), PairingPolicy::SameRows, 0).unwrap();
        assert_eq!(p.permutation, vec![0, 1, 2, 3, 4]);
        assert!(matches!(
            align_pair(&m(5), &m(6), PairingPolicy::SameRows, 0),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn random_pairing_is_seeded() {
        let a = align_pair(&m(20), &m(30), PairingPolicy::SeededRandom, 7).unwrap();
        let b = align_pair(&m(20), &m(30), PairingPolicy::SeededRandom, 7).unwrap();
        let c = align_pair(&m(20), &m(30), PairingPolicy::SeededRandom, 8).unwrap();
        assert_eq!(a.permutation, b.permutation);
        assert_ne!(a.permutation, c.permutation);
        assert_eq!(a.x.rows(), 20);
        assert_eq!(a.y.rows(), 20);
        for (i, &p) in a.permutation.iter().enumerate() {
            assert_eq!(a.y.get(i, 0), p as f64);
        }
    }
}

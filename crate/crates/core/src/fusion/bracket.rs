use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One pair's fused estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiBracket {
    /// Lower bound after enforcing `mine <= club`.
    pub mine: f64,
    pub club: f64,
    /// `club - mine`, never negative.
    pub delta: f64,
    pub ksg: f64,
    pub weight: f64,
    #[serde(rename = "final")]
    pub final_estimate: f64,
    /// Lower bound as estimated, before enforcement.
    pub raw_mine: f64,
}

impl MiBracket {
    /// Re-derives the fused value from this row's own fields.
    pub fn recompute_final(&self) -> f64 {
        (1.0 - self.weight) * 0.5 * (self.mine + self.club) + self.weight * self.ksg
    }
}

/// KSG anchor weight: 0.3 while the bracket is at most 1 nat wide, then
/// growing by 0.1 per nat up to 0.6.
pub fn adaptive_weight(delta: f64) -> Result<f64> {
    if !(delta >= 0.0) {
        return Err(Error::Usage(format!("bracket width must be non-negative, got {delta}")));
    }
    Ok(if delta <= 1.0 { 0.3 } else { (0.3 + 0.1 * delta).min(0.6) })
}

pub fn fuse(mine: f64, club: f64, ksg: f64) -> Result<MiBracket> {
    if !(mine.is_finite() && club.is_finite() && ksg.is_finite()) {
        return Err(Error::Domain(format!("non-finite estimate in ({mine}, {club}, {ksg})")));
    }
    let enforced = mine.min(club);
    let delta = club - enforced;
    let weight = adaptive_weight(delta)?;
    let final_estimate = (1.0 - weight) * 0.5 * (enforced + club) + weight * ksg;
    Ok(MiBracket { mine: enforced, club, delta, ksg, weight, final_estimate, raw_mine: mine })
}

/// True when the last `patience` bracket widths are all below `threshold`.
pub fn early_stop_check(deltas: &[f64], threshold: f64, patience: usize) -> bool {
    patience > 0 && deltas.len() >= patience && deltas[deltas.len() - patience..].iter().all(|&d| d < threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn weight_examples() {
        assert_eq!(adaptive_weight(0.14).unwrap(), 0.3);
        assert_eq!(adaptive_weight(1.0).unwrap(), 0.3);
        assert!((adaptive_weight(2.0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(adaptive_weight(4.0).unwrap(), 0.6);
        assert!(matches!(adaptive_weight(-0.01), Err(Error::Usage(_))));
    }

    #[test]
    fn cross_dimension_rows() {
        for ((m, c, k), expect) in [
            ((0.00, 0.14, 0.25), 0.12),
            ((0.00, 0.07, 0.26), 0.10),
            ((0.00, 0.10, 0.21), 0.10),
            ((0.24, 0.59, 0.60), 0.47),
        ] {
            let b = fuse(m, c, k).unwrap();
            assert!((b.final_estimate - expect).abs() <= 0.005, "{b:?}");
            assert_eq!(b.weight, 0.3);
        }
        let b = fuse(0.24, 0.59, 0.60).unwrap();
        assert!((b.delta - 0.35).abs() < 1e-12);
        assert!((b.final_estimate - 0.4705).abs() < 1e-12);
        let b = fuse(0.0, 0.14, 0.25).unwrap();
        assert!((b.final_estimate - 0.124).abs() < 1e-12);
    }

    #[test]
    fn agreement_is_fixed_point_and_inputs_checked() {
        for x in [-0.2, 0.0, 0.37, 5.0] {
            assert!((fuse(x, x, x).unwrap().final_estimate - x).abs() < 1e-12);
        }
        assert!(matches!(fuse(f64::NAN, 0.1, 0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn inverted_bracket_is_enforced() {
        let b = fuse(0.5, 0.2, 0.1).unwrap();
        assert_eq!(b.mine, 0.2);
        assert_eq!(b.raw_mine, 0.5);
        assert_eq!(b.delta, 0.0);
    }

    #[test]
    fn early_stop_window() {
        let mut d = vec![0.5, 0.05, 0.05, 0.05, 0.05, 0.05, 0.05];
        assert!(!early_stop_check(&d[..6], 0.1, 7));
        d.push(0.2);
        assert!(!early_stop_check(&d, 0.1, 7));
        assert!(early_stop_check(&[0.09; 7], 0.1, 7));
        assert!(!early_stop_check(&[0.09; 6], 0.1, 7));
        assert!(!early_stop_check(&[0.1; 9], 0.1, 7));
    }

    proptest! {
        #[test]
        fn early_stop_matches_sliding_scan(deltas in prop::collection::vec(0.0f64..0.2, 0..30)) {
            let mut run = 0;
            for &d in &deltas {
                run = if d < 0.1 { run + 1 } else { 0 };
            }
            prop_assert_eq!(early_stop_check(&deltas, 0.1, 7), run >= 7);
        }

        #[test]
        fn bracket_invariants(m in -2.0f64..5.0, c in -2.0f64..5.0, k in -1.0f64..5.0) {
            let b = fuse(m, c, k).unwrap();
            prop_assert!(b.mine <= b.club);
            prop_assert!(b.delta >= 0.0);
            prop_assert!(b.weight >= 0.3 && b.weight <= 0.6);
            prop_assert!((b.recompute_final() - b.final_estimate).abs() < 1e-12);
        }

        #[test]
        fn final_increases_with_ksg(m in -1.0f64..3.0, c in -1.0f64..3.0, k in -1.0f64..3.0, dk in 1e-3f64..1.0) {
            let a = fuse(m, c, k).unwrap();
            let b = fuse(m, c, k + dk).unwrap();
            prop_assert!(b.final_estimate > a.final_estimate);
            prop_assert!((b.final_estimate - a.final_estimate - a.weight * dk).abs() < 1e-12);
        }

        #[test]
        fn narrow_bracket_is_fixed_blend(m in 0.0f64..1.0, w in 0.0f64..1.0, k in -1.0f64..3.0) {
            let b = fuse(m, m + w, k).unwrap();
            let expected = 0.7 * (m + w / 2.0) + 0.3 * k;
            prop_assert!((b.final_estimate - expected).abs() < 1e-12);
        }

        #[test]
        fn enforcement_moves_toward_anchor_below_bracket(
            c in 0.0f64..2.0, gap in 1e-3f64..0.9, below in 0.0f64..2.0,
        ) {
            // Raw lower bound above the upper bound, anchor at or below the upper bound.
            let raw_mine = c + gap;
            let k = c - below;
            let enforced = fuse(raw_mine, c, k).unwrap();
            let unenforced = 0.7 * 0.5 * (raw_mine + c) + 0.3 * k;
            prop_assert!((enforced.final_estimate - k).abs() <= (unenforced - k).abs() + 1e-12);
        }
    }
}

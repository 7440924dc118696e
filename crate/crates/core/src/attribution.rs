//! Source/filter attribution of a semantic dimension's information.
//!
//! `A_source = I(s; d) / (I(s; d) + I(f; d))` with KSG estimates floored at
//! zero, plus a row-bootstrap percentile interval.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::ksg::{ksg_estimate, KsgConfig};
use crate::{seed, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttributionConfig {
    pub bootstrap: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for AttributionConfig {
    fn default() -> Self {
        Self { bootstrap: 10, level: 0.95, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionResult {
    pub dimension: String,
    /// KSG estimates after flooring at zero.
    pub source_mi: f64,
    pub filter_mi: f64,
    pub raw_source_mi: f64,
    pub raw_filter_mi: f64,
    /// True when either raw estimate was negative and floored.
    pub floored: bool,
    pub source_share: f64,
    pub filter_share: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub bootstrap: usize,
    /// Replicates with a defined ratio.
    pub bootstrap_valid: usize,
    pub level: f64,
    pub ci_method: String,
}

/// Source and filter shares of `source_mi + filter_mi`.
///
/// The smaller share is computed as a quotient and the larger as its
/// complement, so swapping the arguments swaps the outputs exactly.
pub fn shares(source_mi: f64, filter_mi: f64) -> Option<(f64, f64)> {
    let total = source_mi + filter_mi;
    if !(total > 0.0) {
        return None;
    }
    if source_mi <= filter_mi {
        let s = source_mi / total;
        Some((s, 1.0 - s))
    } else {
        let f = filter_mi / total;
        Some((1.0 - f, f))
    }
}

/// Percentile interval with linear interpolation between order statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapInterval {
    pub low: f64,
    pub high: f64,
    pub replicates: Vec<f64>,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Row indices (with replacement) of bootstrap replicate `b`.
pub fn resample_rows(rows: usize, seed_value: u64, b: usize) -> Vec<usize> {
    use rand::Rng;
    let mut rng = seed::rng(seed_value, "bootstrap", b as u64);
    (0..rows).map(|_| rng.random_range(0..rows)).collect()
}

/// Evaluates `statistic` on `b` row resamples and returns the percentile
/// interval at `level`. Replicates for which `statistic` returns `None` are
/// dropped.
pub fn bootstrap_ci<F>(statistic: F, rows: usize, b: usize, level: f64, seed_value: u64) -> Result<BootstrapInterval>
where
    F: Fn(&[usize]) -> Result<Option<f64>> + Sync,
{
    if b < 2 {
        return Err(Error::Usage(format!("bootstrap needs at least 2 replicates, got {b}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Usage(format!("confidence level must lie in (0, 1), got {level}")));
    }
    let values = (0..b)
        .into_par_iter()
        .map(|r| statistic(&resample_rows(rows, seed_value, r)))
        .collect::<Result<Vec<_>>>()?;
    let mut replicates: Vec<f64> = values.into_iter().flatten().collect();
    if replicates.is_empty() {
        return Err(Error::Usage("no bootstrap replicate produced a defined statistic".into()));
    }
    replicates.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok(BootstrapInterval {
        low: quantile(&replicates, tail),
        high: quantile(&replicates, 1.0 - tail),
        replicates,
    })
}

fn check_rows(source: &FeatureMatrix, filter: &FeatureMatrix, dim: &FeatureMatrix) -> Result<usize> {
    let n = dim.rows();
    if source.rows() != n || filter.rows() != n {
        return Err(Error::Shape(format!(
            "attribution inputs have {}, {} and {} rows",
            source.rows(),
            filter.rows(),
            n
        )));
    }
    Ok(n)
}

pub fn attribute(
    dimension: &str,
    source: &FeatureMatrix,
    filter: &FeatureMatrix,
    dim: &FeatureMatrix,
    ksg: &KsgConfig,
    cfg: &AttributionConfig,
) -> Result<AttributionResult> {
    let n = check_rows(source, filter, dim)?;
    let raw_source_mi = ksg_estimate(source, dim, ksg)?;
    let raw_filter_mi = ksg_estimate(filter, dim, ksg)?;
    let source_mi = raw_source_mi.max(0.0);
    let filter_mi = raw_filter_mi.max(0.0);
    let (source_share, filter_share) = shares(source_mi, filter_mi).ok_or_else(|| Error::UndefinedRatio {
        dimension: dimension.to_owned(),
        diagnostic: format!(
            "both KSG estimates are zero after flooring (source {raw_source_mi:.6}, filter {raw_filter_mi:.6})"
        ),
    })?;

    let interval = bootstrap_ci(
        |rows| {
            let s = ksg_estimate(&source.select_rows(rows), &dim.select_rows(rows), ksg)?;
            let f = ksg_estimate(&filter.select_rows(rows), &dim.select_rows(rows), ksg)?;
            Ok(shares(s.max(0.0), f.max(0.0)).map(|(a, _)| a))
        },
        n,
        cfg.bootstrap,
        cfg.level,
        cfg.seed,
    )?;

    Ok(AttributionResult {
        dimension: dimension.to_owned(),
        source_mi,
        filter_mi,
        raw_source_mi,
        raw_filter_mi,
        floored: raw_source_mi < 0.0 || raw_filter_mi < 0.0,
        source_share,
        filter_share,
        ci_low: interval.low,
        ci_high: interval.high,
        bootstrap: cfg.bootstrap,
        bootstrap_valid: interval.replicates.len(),
        level: cfg.level,
        ci_method: "percentile, linear interpolation between order statistics".into(),
    })
}

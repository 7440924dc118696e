use std::collections::BTreeMap;

use rand::seq::index;

use super::FeatureMatrix;
use crate::{seed, Error, Result};

/// Largest-remainder proportional allocation of `n` draws over strata of the
/// given sizes. Remainder ties go to the earlier stratum.
pub fn allocate_strata(sizes: &[usize], n: usize) -> Result<Vec<usize>> {
    let total: usize = sizes.iter().sum();
    if n > total {
        return Err(Error::Usage(format!("cannot sample {n} rows from {total}")));
    }
    if total == 0 {
        return Ok(vec![0; sizes.len()]);
    }
    // Exact integer arithmetic: quota_i = n * size_i / total.
    let mut alloc: Vec<usize> = sizes.iter().map(|&s| n * s / total).collect();
    let mut remainders: Vec<(usize, usize)> =
        sizes.iter().enumerate().map(|(i, &s)| ((n * s) % total, i)).collect();
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let short = n - alloc.iter().sum::<usize>();
    for &(_, i) in remainders.iter().take(short) {
        alloc[i] += 1;
    }
    Ok(alloc)
}

/// Draws `n` rows, proportionally per stratum when the matrix carries strata
/// labels (strata ordered by label), uniformly otherwise. Selected rows keep
/// their original relative order.
pub fn stratified_sample(m: &FeatureMatrix, n: usize, seed_value: u64) -> Result<FeatureMatrix> {
    if n > m.rows() {
        return Err(Error::Usage(format!("cannot sample {n} rows from {}", m.rows())));
    }
    let mut rng = seed::rng(seed_value, "stratified-sample", 0);
    let mut chosen: Vec<usize> = match m.strata() {
        None => index::sample(&mut rng, m.rows(), n).into_vec(),
        Some(labels) => {
            let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
            for (i, l) in labels.iter().enumerate() {
                groups.entry(l.as_str()).or_default().push(i);
            }
            let sizes: Vec<usize> = groups.values().map(Vec::len).collect();
            let alloc = allocate_strata(&sizes, n)?;
            groups
                .values()
                .zip(alloc)
                .flat_map(|(rows, k)| {
                    index::sample(&mut rng, rows.len(), k)
                        .into_iter()
                        .map(|j| rows[j])
                        .collect::<Vec<_>>()
                })
                .collect()
        }
    };
    chosen.sort_unstable();
    Ok(m.select_rows(&chosen))
}

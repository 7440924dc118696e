use serde::{Deserialize, Serialize};

use super::FeatureMatrix;
use crate::{Error, Result};

/// Mean and population standard deviation used to normalise one column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub name: String,
    pub mean: f64,
    /// Population (÷N) standard deviation; 1.0 for a constant column.
    pub std: f64,
    pub constant: bool,
}

/// Z-scores every column with the population standard deviation.
///
/// Constant columns are centred and left unscaled (std recorded as 1).
pub fn zscore(m: &FeatureMatrix) -> Result<(FeatureMatrix, Vec<ColumnStats>)> {
    let n = m.rows();
    if n < 2 {
        return Err(Error::Usage(format!("z-scoring needs at least 2 rows, got {n}")));
    }
    let stats: Vec<ColumnStats> = (0..m.cols())
        .map(|j| {
            let mean = m.column(j).sum::<f64>() / n as f64;
            let var = m.column(j).map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let std = var.sqrt();
            let constant = !(std > 1e-12 * (1.0 + mean.abs()));
            if constant {
                log::warn!("column `{}` has zero variance; centred without scaling", m.names()[j]);
            }
            ColumnStats {
                name: m.names()[j].clone(),
                mean,
                std: if constant { 1.0 } else { std },
                constant,
            }
        })
        .collect();
    let out = m.map_values(|j, v| {
        let s = &stats[j];
        if s.constant {
            0.0
        } else {
            (v - s.mean) / s.std
        }
    });
    Ok((out, stats))
}

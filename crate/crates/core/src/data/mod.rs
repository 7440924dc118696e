//! Feature matrices and everything that prepares them for estimation:
//! delimited-file ingestion, z-scoring, stratified subsampling, synthetic
//! ground-truth generators and row pairing.

mod batch;
mod io;
mod normalize;
mod pairing;
mod sample;
mod synth;

pub use batch::{plan_epoch, BatchPlan, EpochPlan, MarginalSampling, PairBatch};
pub use io::{load_features, save_features, STRATA_COLUMN};
pub use normalize::{zscore, ColumnStats};
pub use pairing::{align_pair, AlignedPair, PairingPolicy};
pub use sample::{allocate_strata, stratified_sample};
pub use synth::{synth_generate, SyntheticFamily, SyntheticPair, SyntheticSpec};

use crate::{Error, Result};

/// `rows × cols` real-valued features, row-major, with column names and
/// optional per-row strata labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    names: Vec<String>,
    values: Vec<f64>,
    rows: usize,
    strata: Option<Vec<String>>,
    provenance: String,
}

impl FeatureMatrix {
    pub fn new(names: Vec<String>, values: Vec<f64>, rows: usize) -> Result<Self> {
        let cols = names.len();
        if cols == 0 {
            return Err(Error::Shape("feature matrix needs at least one column".into()));
        }
        if values.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values cannot fill {rows} rows × {cols} columns",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite value at row {}, column `{}`",
                pos / cols,
                names[pos % cols]
            )));
        }
        Ok(Self { names, values, rows, strata: None, provenance: String::new() })
    }

    /// Columns named `prefix0`, `prefix1`, ...
    pub fn from_rows_named(prefix: &str, cols: usize, values: Vec<f64>) -> Result<Self> {
        let names = (0..cols).map(|j| format!("{prefix}{j}")).collect();
        let rows = if cols == 0 { 0 } else { values.len() / cols };
        Self::new(names, values, rows)
    }

    pub fn with_strata(mut self, strata: Vec<String>) -> Result<Self> {
        if strata.len() != self.rows {
            return Err(Error::Shape(format!(
                "{} strata labels for {} rows",
                strata.len(),
                self.rows
            )));
        }
        self.strata = Some(strata);
        Ok(self)
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into();
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn strata(&self) -> Option<&[String]> {
        self.strata.as_deref()
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.cols();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols() + j]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().skip(j).step_by(self.cols()).copied()
    }

    /// New matrix made of the given rows, in the given order (repeats allowed).
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let d = self.cols();
        let mut values = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Self {
            names: self.names.clone(),
            values,
            rows: indices.len(),
            strata: self
                .strata
                .as_ref()
                .map(|s| indices.iter().map(|&i| s[i].clone()).collect()),
            provenance: self.provenance.clone(),
        }
    }

    /// Applies `f(column, value)` to every entry.
    pub fn map_values(&self, mut f: impl FnMut(usize, f64) -> f64) -> Self {
        let d = self.cols();
        let values = self.values.iter().enumerate().map(|(k, &v)| f(k % d, v)).collect();
        Self { values, ..self.clone() }
    }
}

pub(crate) fn check_aligned(x: &FeatureMatrix, y: &FeatureMatrix) -> Result<usize> {
    if x.rows() != y.rows() {
        return Err(Error::Shape(format!(
            "paired matrices have {} and {} rows",
            x.rows(),
            y.rows()
        )));
    }
    Ok(x.rows())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_validates() {
        assert!(FeatureMatrix::new(vec!["a".into()], vec![1.0, 2.0], 2).is_ok());
        assert!(matches!(
            FeatureMatrix::new(vec!["a".into(), "b".into()], vec![1.0, 2.0, 3.0], 2),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            FeatureMatrix::new(vec!["a".into()], vec![1.0, f64::INFINITY], 2),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn select_rows_repeats_and_reorders() {
        let m = FeatureMatrix::from_rows_named("c", 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
            .unwrap()
            .with_strata(vec!["a".into(), "b".into(), "c".into()])
            .unwrap();
        let s = m.select_rows(&[2, 0, 2]);
        assert_eq!(s.values(), &[5.0, 6.0, 1.0, 2.0, 5.0, 6.0]);
        assert_eq!(s.strata().unwrap(), &["c", "a", "c"]);
        assert_eq!(m.column(1).collect::<Vec<_>>(), vec![2.0, 4.0, 6.0]);
    }
}

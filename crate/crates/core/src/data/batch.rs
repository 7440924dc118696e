use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::FeatureMatrix;

/// Source of the product-of-marginals samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MarginalSampling {
    /// Permute `y` among the rows of the same minibatch.
    #[default]
    WithinBatch,
    /// Pair each minibatch `x` with `y` rows from an independent shuffle of
    /// the whole dataset.
    DatasetShuffle,
}

/// Row indices for one minibatch: joint pairs `(x[joint[i]], y[joint[i]])`
/// and marginal pairs `(x[joint[i]], y[marginal_y[i]])`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchPlan {
    pub joint: Vec<usize>,
    pub marginal_y: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochPlan {
    pub batches: Vec<BatchPlan>,
}

/// Shuffles `rows` indices into minibatches of `batch_size` (the last may be
/// shorter) and draws the marginal pairing for each.
pub fn plan_epoch<R: Rng + ?Sized>(
    rows: usize,
    batch_size: usize,
    sampling: MarginalSampling,
    rng: &mut R,
) -> EpochPlan {
    let batch_size = batch_size.max(1);
    let mut order: Vec<usize> = (0..rows).collect();
    order.shuffle(rng);
    let shuffled_y = match sampling {
        MarginalSampling::WithinBatch => None,
        MarginalSampling::DatasetShuffle => {
            let mut o: Vec<usize> = (0..rows).collect();
            o.shuffle(rng);
            Some(o)
        }
    };
    let batches = order
        .chunks(batch_size)
        .enumerate()
        .map(|(b, joint)| {
            let marginal_y = match &shuffled_y {
                None => {
                    let mut m = joint.to_vec();
                    m.shuffle(rng);
                    m
                }
                Some(o) => o[b * batch_size..b * batch_size + joint.len()].to_vec(),
            };
            BatchPlan { joint: joint.to_vec(), marginal_y }
        })
        .collect();
    EpochPlan { batches }
}

/// Gathered minibatch of `(x, y)` pairs in row-major buffers.
#[derive(Debug, Clone)]
pub struct PairBatch {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub dx: usize,
    pub dy: usize,
}

impl PairBatch {
    pub fn gather(x: &FeatureMatrix, y: &FeatureMatrix, x_rows: &[usize], y_rows: &[usize]) -> Self {
        debug_assert_eq!(x_rows.len(), y_rows.len());
        let mut xb = Vec::with_capacity(x_rows.len() * x.cols());
        let mut yb = Vec::with_capacity(y_rows.len() * y.cols());
        for (&i, &j) in x_rows.iter().zip(y_rows) {
            xb.extend_from_slice(x.row(i));
            yb.extend_from_slice(y.row(j));
        }
        Self { x: xb, y: yb, dx: x.cols(), dy: y.cols() }
    }

    pub fn joint(x: &FeatureMatrix, y: &FeatureMatrix, plan: &BatchPlan) -> Self {
        Self::gather(x, y, &plan.joint, &plan.joint)
    }

    pub fn marginal(x: &FeatureMatrix, y: &FeatureMatrix, plan: &BatchPlan) -> Self {
        Self::gather(x, y, &plan.joint, &plan.marginal_y)
    }

    pub fn len(&self) -> usize {
        if self.dx == 0 {
            0
        } else {
            self.x.len() / self.dx
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rows `[x_i; y_i]`, x first.
    pub fn concatenated(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.x.len() + self.y.len());
        for i in 0..self.len() {
            out.extend_from_slice(&self.x[i * self.dx..(i + 1) * self.dx]);
            out.extend_from_slice(&self.y[i * self.dy..(i + 1) * self.dy]);
        }
        out
    }
}

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::FeatureMatrix;
use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticFamily {
    /// Standard normals; the first `coupled` coordinate pairs have correlation ρ.
    CorrelatedGaussian,
    /// Independent `U(0, 1)` coordinates on both sides.
    IndependentUniform,
    /// `y = x` with standard normal `x`.
    DeterministicMap,
}

/// Generator for a pair of feature sets with known mutual information.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub family: SyntheticFamily,
    pub dx: usize,
    pub dy: usize,
    /// Number of coupled coordinate pairs; defaults to `min(dx, dy)`.
    #[serde(default)]
    pub coupled: Option<usize>,
    #[serde(default)]
    pub rho: f64,
    pub n: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn gaussian(rho: f64, n: usize, seed: u64) -> Self {
        Self {
            family: SyntheticFamily::CorrelatedGaussian,
            dx: 1,
            dy: 1,
            coupled: None,
            rho,
            n,
            seed,
        }
    }

    pub fn coupled_pairs(&self) -> usize {
        self.coupled.unwrap_or(self.dx.min(self.dy))
    }

    /// Closed-form mutual information in nats; `+∞` for the deterministic map.
    pub fn true_mi(&self) -> f64 {
        match self.family {
            SyntheticFamily::CorrelatedGaussian => {
                -0.5 * self.coupled_pairs() as f64 * (1.0 - self.rho * self.rho).ln()
            }
            SyntheticFamily::IndependentUniform => 0.0,
            SyntheticFamily::DeterministicMap => f64::INFINITY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dx == 0 || self.dy == 0 {
            return Err(Error::Usage("synthetic dimensions must be positive".into()));
        }
        if self.n < 2 {
            return Err(Error::Usage("synthetic sample size must be at least 2".into()));
        }
        match self.family {
            SyntheticFamily::CorrelatedGaussian => {
                if !(self.rho > -1.0 && self.rho < 1.0) {
                    return Err(Error::Usage(format!("rho must lie in (-1, 1), got {}", self.rho)));
                }
                if self.coupled_pairs() > self.dx.min(self.dy) {
                    return Err(Error::Usage(format!(
                        "{} coupled pairs exceed min(dx, dy) = {}",
                        self.coupled_pairs(),
                        self.dx.min(self.dy)
                    )));
                }
            }
            SyntheticFamily::DeterministicMap if self.dx != self.dy => {
                return Err(Error::Usage("deterministic map needs dx == dy".into()));
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticPair {
    pub x: FeatureMatrix,
    pub y: FeatureMatrix,
    pub true_mi: f64,
}

pub fn synth_generate(spec: &SyntheticSpec) -> Result<SyntheticPair> {
    spec.validate()?;
    let mut rng = seed::rng(spec.seed, "synthetic", 0);
    let (n, dx, dy) = (spec.n, spec.dx, spec.dy);
    let mut x = vec![0.0; n * dx];
    let mut y = vec![0.0; n * dy];
    match spec.family {
        SyntheticFamily::CorrelatedGaussian => {
            let c = spec.coupled_pairs();
            let noise = (1.0 - spec.rho * spec.rho).sqrt();
            for i in 0..n {
                for j in 0..dx {
                    x[i * dx + j] = rng.sample(StandardNormal);
                }
                for j in 0..dy {
                    let z: f64 = rng.sample(StandardNormal);
                    y[i * dy + j] = if j < c { spec.rho * x[i * dx + j] + noise * z } else { z };
                }
            }
        }
        SyntheticFamily::IndependentUniform => {
            x.iter_mut().for_each(|v| *v = rng.random());
            y.iter_mut().for_each(|v| *v = rng.random());
        }
        SyntheticFamily::DeterministicMap => {
            x.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
            y.copy_from_slice(&x);
        }
    }
    let tag = format!("synthetic:{:?}:seed={}", spec.family, spec.seed);
    Ok(SyntheticPair {
        x: FeatureMatrix::from_rows_named("x", dx, x)?.with_provenance(tag.clone()),
        y: FeatureMatrix::from_rows_named("y", dy, y)?.with_provenance(tag),
        true_mi: spec.true_mi(),
    })
}

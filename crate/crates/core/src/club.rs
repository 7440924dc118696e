//! Contrastive log-ratio upper bound with a diagonal Gaussian conditional
//! `q(y|x) = N(μ(x), diag(exp(logvar(x))))`.
//!
//! `μ` and `logvar` are separate two-layer networks. Log-variances are clamped
//! to `[-6, 2]` everywhere they are used. Log-likelihoods omit the
//! `-(d_y/2) ln 2π` constant, which cancels in the bound.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{check_aligned, plan_epoch, EpochPlan, FeatureMatrix, MarginalSampling, PairBatch};
use crate::mine::EpochStats;
use crate::nn::{adam_step, clip_grad_norm, AdamConfig, AdamState, MlpNet, ParamMut};
use crate::{Error, Result};

pub const LOGVAR_MIN: f64 = -6.0;
pub const LOGVAR_MAX: f64 = 2.0;

pub fn clamp_logvar(raw: &[f64]) -> Vec<f64> {
    raw.iter().map(|v| v.clamp(LOGVAR_MIN, LOGVAR_MAX)).collect()
}

/// How the product-of-marginals term of the bound is averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ClubMarginal {
    /// One permuted partner per row (the batch's marginal pairs).
    #[default]
    Permuted,
    /// Every `(x_i, y_j)` combination in the batch; `O(batch²)`.
    AllPairs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClubConfig {
    pub hidden: usize,
    pub leaky_slope: f64,
    pub adam: AdamConfig,
    pub clip_norm: f64,
    pub marginal: ClubMarginal,
}

impl Default for ClubConfig {
    fn default() -> Self {
        Self {
            hidden: crate::nn::DEFAULT_HIDDEN,
            leaky_slope: crate::nn::DEFAULT_LEAKY_SLOPE,
            adam: AdamConfig::default(),
            clip_norm: 1.0,
            marginal: ClubMarginal::Permuted,
        }
    }
}

/// `-½ Σ_j [lv_j + (y_j - μ_j)² / exp(lv_j)]` for one row, `lv` already clamped.
fn log_likelihood_row(mu: &[f64], logvar: &[f64], y: &[f64]) -> f64 {
    -0.5 * mu
        .iter()
        .zip(logvar)
        .zip(y)
        .map(|((m, lv), yj)| lv + (yj - m) * (yj - m) * (-lv).exp())
        .sum::<f64>()
}

#[derive(Debug, Clone)]
pub struct ClubEstimator {
    mean_net: MlpNet,
    logvar_net: MlpNet,
    optimizer: AdamState,
    config: ClubConfig,
    /// Smallest and largest clamped log-variance emitted so far.
    emitted_range: (f64, f64),
}

impl ClubEstimator {
    pub fn new<R: Rng + ?Sized>(dx: usize, dy: usize, config: ClubConfig, rng: &mut R) -> Self {
        let mean_net = MlpNet::new(dx, config.hidden, dy, config.leaky_slope, rng);
        let logvar_net = MlpNet::new(dx, config.hidden, dy, config.leaky_slope, rng);
        Self::from_nets(mean_net, logvar_net, config).expect("heads built with matching shapes")
    }

    pub fn from_nets(mean_net: MlpNet, logvar_net: MlpNet, config: ClubConfig) -> Result<Self> {
        if mean_net.in_dim() != logvar_net.in_dim() || mean_net.out_dim() != logvar_net.out_dim() {
            return Err(Error::Shape(format!(
                "mean head {} -> {} and log-variance head {} -> {} disagree",
                mean_net.in_dim(),
                mean_net.out_dim(),
                logvar_net.in_dim(),
                logvar_net.out_dim()
            )));
        }
        Ok(Self {
            mean_net,
            logvar_net,
            optimizer: AdamState::new(config.adam),
            config,
            emitted_range: (f64::INFINITY, f64::NEG_INFINITY),
        })
    }

    pub fn dx(&self) -> usize {
        self.mean_net.in_dim()
    }

    pub fn dy(&self) -> usize {
        self.mean_net.out_dim()
    }

    pub fn mean_net(&self) -> &MlpNet {
        &self.mean_net
    }

    pub fn logvar_net(&self) -> &MlpNet {
        &self.logvar_net
    }

    pub fn mean_net_mut(&mut self) -> &mut MlpNet {
        &mut self.mean_net
    }

    pub fn logvar_net_mut(&mut self) -> &mut MlpNet {
        &mut self.logvar_net
    }

    pub fn optimizer(&self) -> &AdamState {
        &self.optimizer
    }

    pub fn optimizer_mut(&mut self) -> &mut AdamState {
        &mut self.optimizer
    }

    /// Range of clamped log-variances produced so far, `None` before any.
    pub fn emitted_logvar_range(&self) -> Option<(f64, f64)> {
        (self.emitted_range.0 <= self.emitted_range.1).then_some(self.emitted_range)
    }

    fn record(&mut self, logvar: &[f64]) {
        for &v in logvar {
            assert!(
                (LOGVAR_MIN..=LOGVAR_MAX).contains(&v),
                "clamped log-variance {v} escaped [{LOGVAR_MIN}, {LOGVAR_MAX}]"
            );
            self.emitted_range.0 = self.emitted_range.0.min(v);
            self.emitted_range.1 = self.emitted_range.1.max(v);
        }
    }

    /// `(μ, clamped logvar)` for a row-major batch of `x`.
    pub fn predict(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mu = self.mean_net.predict(x)?;
        let lv = clamp_logvar(&self.logvar_net.predict(x)?);
        Ok((mu, lv))
    }

    pub fn log_likelihood(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != self.dx() || y.len() != self.dy() {
            return Err(Error::Shape(format!(
                "conditional expects |x| = {}, |y| = {}, got {} and {}",
                self.dx(),
                self.dy(),
                x.len(),
                y.len()
            )));
        }
        let (mu, lv) = self.predict(x)?;
        Ok(log_likelihood_row(&mu, &lv, y))
    }

    fn check_batch(&self, batch: &PairBatch) -> Result<()> {
        if batch.dx != self.dx() || batch.dy != self.dy() {
            return Err(Error::Shape(format!(
                "batch widths ({}, {}) do not match conditional ({}, {})",
                batch.dx,
                batch.dy,
                self.dx(),
                self.dy()
            )));
        }
        if batch.is_empty() {
            return Err(Error::Usage("empty minibatch".into()));
        }
        Ok(())
    }

    fn bound_from(&self, mu: &[f64], lv: &[f64], joint: &PairBatch, marginal: &PairBatch) -> Result<f64> {
        let dy = self.dy();
        let n = joint.len();
        let rows = |v: &[f64], i: usize| -> std::ops::Range<usize> {
            debug_assert!(v.len() >= (i + 1) * dy);
            i * dy..(i + 1) * dy
        };
        let mean_ll = |mu: &[f64], lv: &[f64], ys: &[f64]| -> f64 {
            (0..n)
                .map(|i| log_likelihood_row(&mu[rows(mu, i)], &lv[rows(lv, i)], &ys[rows(ys, i)]))
                .sum::<f64>()
                / n as f64
        };
        let joint_ll = mean_ll(mu, lv, &joint.y);
        let marginal_ll = match self.config.marginal {
            ClubMarginal::Permuted if marginal.x == joint.x => mean_ll(mu, lv, &marginal.y),
            ClubMarginal::Permuted => {
                let (mu_m, lv_m) = self.predict(&marginal.x)?;
                mean_ll(&mu_m, &lv_m, &marginal.y)
            }
            ClubMarginal::AllPairs => {
                let mut total = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        total += log_likelihood_row(&mu[rows(mu, i)], &lv[rows(lv, i)], &joint.y[rows(&joint.y, j)]);
                    }
                }
                total / (n * n) as f64
            }
        };
        Ok(joint_ll - marginal_ll)
    }

    /// Mean joint log-likelihood minus mean product-of-marginals
    /// log-likelihood on one batch.
    pub fn bound(&mut self, joint: &PairBatch, marginal: &PairBatch) -> Result<f64> {
        self.check_batch(joint)?;
        self.check_batch(marginal)?;
        if marginal.len() != joint.len() {
            return Err(Error::Usage("joint and marginal batches differ in size".into()));
        }
        let (mu, lv) = self.predict(&joint.x)?;
        self.record(&lv);
        self.bound_from(&mu, &lv, joint, marginal)
    }

    /// Mean negative log-likelihood of the joint pairs (clamped log-variance).
    pub fn negative_log_likelihood(&self, joint: &PairBatch) -> Result<f64> {
        self.check_batch(joint)?;
        let dy = self.dy();
        let (mu, lv) = self.predict(&joint.x)?;
        let total: f64 = (0..joint.len())
            .map(|i| {
                let r = i * dy..(i + 1) * dy;
                log_likelihood_row(&mu[r.clone()], &lv[r.clone()], &joint.y[r])
            })
            .sum();
        Ok(-total / joint.len() as f64)
    }

    /// Overwrites the gradients of both heads with those of
    /// [`negative_log_likelihood`](Self::negative_log_likelihood) and returns
    /// its value. Log-variance outputs outside the clamp get zero gradient.
    pub fn accumulate_gradients(&mut self, joint: &PairBatch) -> Result<f64> {
        self.check_batch(joint)?;
        let dy = self.dy();
        let (mu, cache_mu) = self.mean_net.forward(&joint.x)?;
        let (raw_lv, cache_lv) = self.logvar_net.forward(&joint.x)?;
        let lv = clamp_logvar(&raw_lv);
        self.record(&lv);
        let b = joint.len() as f64;
        let mut nll = 0.0;
        let mut grad_mu = vec![0.0; mu.len()];
        let mut grad_lv = vec![0.0; mu.len()];
        for i in 0..joint.len() {
            let r = i * dy..(i + 1) * dy;
            nll -= log_likelihood_row(&mu[r.clone()], &lv[r.clone()], &joint.y[r.clone()]);
            for k in r {
                let inv_var = (-lv[k]).exp();
                let resid = joint.y[k] - mu[k];
                grad_mu[k] = -resid * inv_var / b;
                let inside = (LOGVAR_MIN..=LOGVAR_MAX).contains(&raw_lv[k]);
                grad_lv[k] = if inside { 0.5 * (1.0 - resid * resid * inv_var) / b } else { 0.0 };
            }
        }
        self.mean_net.zero_grad();
        self.logvar_net.zero_grad();
        self.mean_net.backward(&cache_mu, &grad_mu)?;
        self.logvar_net.backward(&cache_lv, &grad_lv)?;
        Ok(nll / b)
    }

    /// One maximum-likelihood step on the joint pairs; returns
    /// `(negative log-likelihood, pre-clip gradient norm)`.
    pub fn train_step(&mut self, joint: &PairBatch) -> Result<(f64, f64)> {
        let nll = self.accumulate_gradients(joint)?;
        let clip = self.config.clip_norm;
        let Self { mean_net, logvar_net, optimizer, .. } = self;
        let mut params = mean_net.params_mut("mean");
        params.extend(logvar_net.params_mut("logvar"));
        let norm = clip_grad_norm(&mut params, clip);
        adam_step(&mut params, optimizer)?;
        Ok((nll, norm))
    }

    /// Both heads' parameters, mean head first.
    pub fn params_mut(&mut self) -> Vec<ParamMut<'_>> {
        let mut p = self.mean_net.params_mut("mean");
        p.extend(self.logvar_net.params_mut("logvar"));
        p
    }

    /// Per batch: a likelihood step, then the bound with the updated
    /// conditional. Returns the epoch-mean bound.
    pub fn train_epoch(&mut self, x: &FeatureMatrix, y: &FeatureMatrix, plan: &EpochPlan) -> Result<EpochStats> {
        check_aligned(x, y)?;
        if plan.batches.is_empty() {
            return Err(Error::Usage("epoch plan has no batches".into()));
        }
        let (mut sum, mut norms) = (0.0, 0.0);
        for bp in &plan.batches {
            let joint = PairBatch::joint(x, y, bp);
            let marginal = PairBatch::marginal(x, y, bp);
            let (_, norm) = self.train_step(&joint)?;
            norms += norm;
            sum += self.bound(&joint, &marginal)?;
        }
        let n = plan.batches.len() as f64;
        Ok(EpochStats { estimate: sum / n, batches: plan.batches.len(), grad_norm: norms / n })
    }

    pub fn train_epoch_shuffled<R: Rng + ?Sized>(
        &mut self,
        x: &FeatureMatrix,
        y: &FeatureMatrix,
        batch_size: usize,
        sampling: MarginalSampling,
        rng: &mut R,
    ) -> Result<EpochStats> {
        let plan = plan_epoch(x.rows(), batch_size, sampling, rng);
        self.train_epoch(x, y, &plan)
    }
}

//! Donsker-Varadhan lower bound with an EMA-stabilised partition function.
//!
//! The critic `T(x, y)` is a two-layer [`MlpNet`] on the concatenation `[x; y]`.
//! Per minibatch the objective is
//!
//! ```text
//! mean_joint(T) - ln(Ẑ + ε),   Ẑ = bias-corrected EMA of mean_marginal(exp T)
//! ```
//!
//! and the gradient treats `Ẑ` as a constant scale on the marginal term:
//! `∇ = mean_joint(∇T) - mean_marginal(exp(T) ∇T) / Ẑ`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{check_aligned, plan_epoch, EpochPlan, FeatureMatrix, MarginalSampling, PairBatch};
use crate::nn::{adam_step, clip_grad_norm, AdamConfig, AdamState, MlpNet, ParamMut};
use crate::{Error, Result};

/// Added to `Ẑ` inside the logarithm.
pub const PARTITION_EPS: f64 = 1e-8;

/// Running estimate of the partition function `E_{p(x)p(y)}[exp T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmaState {
    mean: f64,
    alpha: f64,
    count: u64,
}

impl EmaState {
    pub fn new(alpha: f64) -> Self {
        Self { mean: 0.0, alpha, count: 0 }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Raw (biased) running mean `Z̄`.
    pub fn raw(&self) -> f64 {
        self.mean
    }

    /// Bias-corrected `Ẑ = Z̄ / (1 - (1-α)^t)`; `None` before the first update.
    pub fn corrected(&self) -> Option<f64> {
        (self.count > 0).then(|| self.mean / self.correction(self.count))
    }

    fn correction(&self, t: u64) -> f64 {
        1.0 - (1.0 - self.alpha).powf(t as f64)
    }

    fn check(value: f64) -> Result<()> {
        if value > 0.0 && value.is_finite() {
            Ok(())
        } else {
            Err(Error::Domain(format!("partition sample must be positive and finite, got {value}")))
        }
    }

    /// Folds in one batch mean of `exp T` and returns the corrected estimate.
    pub fn update(&mut self, batch_mean_exp: f64) -> Result<f64> {
        Self::check(batch_mean_exp)?;
        self.mean = (1.0 - self.alpha) * self.mean + self.alpha * batch_mean_exp;
        self.count += 1;
        Ok(self.mean / self.correction(self.count))
    }

    /// The corrected estimate `update` would return, without committing it.
    pub fn preview(&self, batch_mean_exp: f64) -> Result<f64> {
        Self::check(batch_mean_exp)?;
        let mean = (1.0 - self.alpha) * self.mean + self.alpha * batch_mean_exp;
        Ok(mean / self.correction(self.count + 1))
    }
}

/// When the partition EMA advances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EmaCadence {
    /// One update per minibatch; `t` counts batches.
    #[default]
    PerBatch,
    /// One update per epoch with the epoch's mean of batch partition samples;
    /// within the epoch each batch uses the uncommitted preview.
    PerEpoch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MineConfig {
    pub hidden: usize,
    pub leaky_slope: f64,
    pub ema_alpha: f64,
    pub ema_cadence: EmaCadence,
    pub adam: AdamConfig,
    pub clip_norm: f64,
}

impl Default for MineConfig {
    fn default() -> Self {
        Self {
            hidden: crate::nn::DEFAULT_HIDDEN,
            leaky_slope: crate::nn::DEFAULT_LEAKY_SLOPE,
            ema_alpha: 0.01,
            ema_cadence: EmaCadence::PerBatch,
            adam: AdamConfig::default(),
            clip_norm: 1.0,
        }
    }
}

/// Summary of one training epoch of either neural estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// Mean of the per-batch bound values.
    pub estimate: f64,
    pub batches: usize,
    /// Mean pre-clipping gradient norm.
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct MineEstimator {
    critic: MlpNet,
    ema: EmaState,
    optimizer: AdamState,
    config: MineConfig,
    dx: usize,
    dy: usize,
}

impl MineEstimator {
    pub fn new<R: Rng + ?Sized>(dx: usize, dy: usize, config: MineConfig, rng: &mut R) -> Self {
        let critic = MlpNet::new(dx + dy, config.hidden, 1, config.leaky_slope, rng);
        Self::with_critic(critic, dx, dy, config).expect("critic built with matching width")
    }

    pub fn with_critic(critic: MlpNet, dx: usize, dy: usize, config: MineConfig) -> Result<Self> {
        if critic.in_dim() != dx + dy || critic.out_dim() != 1 {
            return Err(Error::Shape(format!(
                "critic maps {} -> {}, expected {} -> 1",
                critic.in_dim(),
                critic.out_dim(),
                dx + dy
            )));
        }
        Ok(Self {
            critic,
            ema: EmaState::new(config.ema_alpha),
            optimizer: AdamState::new(config.adam),
            config,
            dx,
            dy,
        })
    }

    pub fn critic(&self) -> &MlpNet {
        &self.critic
    }

    pub fn critic_mut(&mut self) -> &mut MlpNet {
        &mut self.critic
    }

    pub fn ema(&self) -> &EmaState {
        &self.ema
    }

    pub fn optimizer(&self) -> &AdamState {
        &self.optimizer
    }

    pub fn optimizer_mut(&mut self) -> &mut AdamState {
        &mut self.optimizer
    }

    pub fn config(&self) -> &MineConfig {
        &self.config
    }

    /// `T([x; y])` for a single pair.
    pub fn critic_score(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != self.dx || y.len() != self.dy {
            return Err(Error::Shape(format!(
                "critic expects |x| = {}, |y| = {}, got {} and {}",
                self.dx,
                self.dy,
                x.len(),
                y.len()
            )));
        }
        let input: Vec<f64> = x.iter().chain(y).copied().collect();
        Ok(self.critic.predict(&input)?[0])
    }

    pub fn critic_scores(&self, batch: &PairBatch) -> Result<Vec<f64>> {
        self.check_batch(batch)?;
        self.critic.predict(&batch.concatenated())
    }

    fn check_batch(&self, batch: &PairBatch) -> Result<()> {
        if batch.dx != self.dx || batch.dy != self.dy {
            return Err(Error::Shape(format!(
                "batch widths ({}, {}) do not match critic ({}, {})",
                batch.dx, batch.dy, self.dx, self.dy
            )));
        }
        if batch.is_empty() {
            return Err(Error::Usage("empty minibatch".into()));
        }
        Ok(())
    }

    fn check_pair(&self, joint: &PairBatch, marginal: &PairBatch) -> Result<()> {
        self.check_batch(joint)?;
        self.check_batch(marginal)?;
        if joint.len() != marginal.len() {
            return Err(Error::Usage(format!(
                "joint and marginal batches differ in size ({} vs {})",
                joint.len(),
                marginal.len()
            )));
        }
        Ok(())
    }

    fn partition(&mut self, batch_mean_exp: f64) -> Result<f64> {
        match self.config.ema_cadence {
            EmaCadence::PerBatch => self.ema.update(batch_mean_exp),
            EmaCadence::PerEpoch => self.ema.preview(batch_mean_exp),
        }
    }

    /// Stabilised objective on one batch; advances the EMA (per-batch cadence).
    pub fn batch_objective(&mut self, joint: &PairBatch, marginal: &PairBatch) -> Result<f64> {
        self.check_pair(joint, marginal)?;
        let tj = self.critic_scores(joint)?;
        let tm = self.critic_scores(marginal)?;
        let mean_exp = tm.iter().map(|t| t.exp()).sum::<f64>() / tm.len() as f64;
        let z_hat = self.partition(mean_exp)?;
        Ok(mean(&tj) - (z_hat + PARTITION_EPS).ln())
    }

    /// Plain Donsker-Varadhan value `mean_joint(T) - ln mean_marginal(exp T)`
    /// without touching the EMA or parameters.
    pub fn dv_bound(&self, joint: &PairBatch, marginal: &PairBatch) -> Result<f64> {
        self.check_pair(joint, marginal)?;
        let tj = self.critic_scores(joint)?;
        let tm = self.critic_scores(marginal)?;
        let max = tm.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + (tm.iter().map(|t| (t - max).exp()).sum::<f64>() / tm.len() as f64).ln();
        Ok(mean(&tj) - lse)
    }

    /// `-mean_joint(T) + mean_marginal(exp T) / z_hat`: a loss whose gradient
    /// is the stabilised MINE gradient when `z_hat` is held fixed.
    pub fn surrogate_loss(&self, joint: &PairBatch, marginal: &PairBatch, z_hat: f64) -> Result<f64> {
        self.check_pair(joint, marginal)?;
        let tj = self.critic_scores(joint)?;
        let tm = self.critic_scores(marginal)?;
        Ok(-mean(&tj) + tm.iter().map(|t| t.exp()).sum::<f64>() / (tm.len() as f64 * z_hat))
    }

    /// Overwrites the critic gradients with those of
    /// [`surrogate_loss`](Self::surrogate_loss) and returns the batch
    /// `(mean joint score, mean marginal exp score)`.
    pub fn accumulate_gradients(&mut self, joint: &PairBatch, marginal: &PairBatch, z_hat: f64) -> Result<(f64, f64)> {
        self.check_pair(joint, marginal)?;
        let (tj, exp_m, _) = critic_gradients(&mut self.critic, joint, marginal, |_| Ok(z_hat))?;
        Ok((tj, exp_m))
    }

    pub fn params_mut(&mut self) -> Vec<ParamMut<'_>> {
        self.critic.params_mut("critic")
    }

    /// Objective, gradient, clip and Adam step on one batch. Returns
    /// `(objective, pre-clip gradient norm, batch partition sample)`.
    fn train_step(&mut self, joint: &PairBatch, marginal: &PairBatch) -> Result<(f64, f64, f64)> {
        self.check_pair(joint, marginal)?;
        let Self { critic, ema, optimizer, config, .. } = self;
        let (mean_joint, mean_exp, z_hat) = critic_gradients(critic, joint, marginal, |m| match config.ema_cadence {
            EmaCadence::PerBatch => ema.update(m),
            EmaCadence::PerEpoch => ema.preview(m),
        })?;
        let objective = mean_joint - (z_hat + PARTITION_EPS).ln();
        let mut params = critic.params_mut("critic");
        let norm = clip_grad_norm(&mut params, config.clip_norm);
        adam_step(&mut params, optimizer)?;
        Ok((objective, norm, mean_exp))
    }

    /// Runs every batch of `plan` and returns the epoch-mean objective.
    pub fn train_epoch(&mut self, x: &FeatureMatrix, y: &FeatureMatrix, plan: &EpochPlan) -> Result<EpochStats> {
        check_aligned(x, y)?;
        if plan.batches.is_empty() {
            return Err(Error::Usage("epoch plan has no batches".into()));
        }
        let (mut sum, mut norms, mut partition) = (0.0, 0.0, 0.0);
        for bp in &plan.batches {
            let joint = PairBatch::joint(x, y, bp);
            let marginal = PairBatch::marginal(x, y, bp);
            let (obj, norm, z) = self.train_step(&joint, &marginal)?;
            sum += obj;
            norms += norm;
            partition += z;
        }
        let n = plan.batches.len() as f64;
        if self.config.ema_cadence == EmaCadence::PerEpoch {
            self.ema.update(partition / n)?;
        }
        Ok(EpochStats { estimate: sum / n, batches: plan.batches.len(), grad_norm: norms / n })
    }

    /// Convenience wrapper drawing a fresh epoch plan from `rng`.
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

/// Forward passes, then `partition(mean exp T_m)` picks `Ẑ` before the
/// backward pass. Returns `(mean T_j, mean exp T_m, Ẑ)`.
fn critic_gradients(
    critic: &mut MlpNet,
    joint: &PairBatch,
    marginal: &PairBatch,
    partition: impl FnOnce(f64) -> Result<f64>,
) -> Result<(f64, f64, f64)> {
    let (tj, cache_j) = critic.forward(&joint.concatenated())?;
    let (tm, cache_m) = critic.forward(&marginal.concatenated())?;
    let b = tj.len() as f64;
    let exps: Vec<f64> = tm.iter().map(|t| t.exp()).collect();
    let mean_exp = mean(&exps);
    let z_hat = partition(mean_exp)?;
    if !(z_hat > 0.0 && z_hat.is_finite()) {
        return Err(Error::Domain(format!("partition estimate must be positive and finite, got {z_hat}")));
    }
    let grad_j = vec![-1.0 / b; tj.len()];
    let grad_m: Vec<f64> = exps.iter().map(|e| e / (b * z_hat)).collect();
    critic.zero_grad();
    critic.backward(&cache_j, &grad_j)?;
    critic.backward(&cache_m, &grad_m)?;
    Ok((mean(&tj), mean_exp, z_hat))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

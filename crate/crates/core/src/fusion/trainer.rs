use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bracket::{early_stop_check, fuse, MiBracket};
use crate::club::{ClubConfig, ClubEstimator, ClubMarginal};
use crate::data::{check_aligned, plan_epoch, zscore, FeatureMatrix, MarginalSampling};
use crate::ksg::{ksg_estimate, KsgConfig};
use crate::mine::{EmaCadence, MineConfig, MineEstimator};
use crate::nn::{AdamConfig, PlateauScheduler, WeightDecayMode};
use crate::{seed, Error, Result};

/// Ensemble training protocol. Defaults are the published settings except
/// `batch_size`, which the protocol leaves open.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub members: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub hidden: usize,
    pub leaky_slope: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub weight_decay_mode: WeightDecayMode,
    pub clip_norm: f64,
    pub scheduler_factor: f64,
    pub scheduler_patience: usize,
    pub early_stop_threshold: f64,
    pub early_stop_patience: usize,
    pub final_window: usize,
    pub ema_alpha: f64,
    pub ema_cadence: EmaCadence,
    pub marginal: MarginalSampling,
    pub club_marginal: ClubMarginal,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            members: 3,
            max_epochs: 100,
            batch_size: 128,
            hidden: crate::nn::DEFAULT_HIDDEN,
            leaky_slope: crate::nn::DEFAULT_LEAKY_SLOPE,
            learning_rate: 1e-4,
            weight_decay: 1e-5,
            weight_decay_mode: WeightDecayMode::Decoupled,
            clip_norm: 1.0,
            scheduler_factor: 0.5,
            scheduler_patience: 10,
            early_stop_threshold: 0.1,
            early_stop_patience: 7,
            final_window: 10,
            ema_alpha: 0.01,
            ema_cadence: EmaCadence::PerBatch,
            marginal: MarginalSampling::WithinBatch,
            club_marginal: ClubMarginal::Permuted,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Every violated constraint, one message per field.
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        let mut need = |ok: bool, msg: &str| {
            if !ok {
                p.push(msg.to_owned());
            }
        };
        need(self.members >= 1, "members must be at least 1");
        need(self.max_epochs >= 1, "max_epochs must be at least 1");
        need(self.batch_size >= 2, "batch_size must be at least 2");
        need(self.hidden >= 1, "hidden must be at least 1");
        need(self.leaky_slope.is_finite(), "leaky_slope must be finite");
        need(self.learning_rate > 0.0 && self.learning_rate.is_finite(), "learning_rate must be positive");
        need(self.weight_decay >= 0.0 && self.weight_decay.is_finite(), "weight_decay must be non-negative");
        need(self.clip_norm > 0.0, "clip_norm must be positive");
        need(self.scheduler_factor > 0.0 && self.scheduler_factor < 1.0, "scheduler_factor must lie in (0, 1)");
        need(self.scheduler_patience >= 1, "scheduler_patience must be at least 1");
        need(self.early_stop_threshold >= 0.0, "early_stop_threshold must be non-negative");
        need(self.early_stop_patience >= 1, "early_stop_patience must be at least 1");
        need(self.final_window >= 1, "final_window must be at least 1");
        need(self.ema_alpha > 0.0 && self.ema_alpha <= 1.0, "ema_alpha must lie in (0, 1]");
        p
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            decay_mode: self.weight_decay_mode,
            ..AdamConfig::default()
        }
    }

    pub fn mine_config(&self) -> MineConfig {
        MineConfig {
            hidden: self.hidden,
            leaky_slope: self.leaky_slope,
            ema_alpha: self.ema_alpha,
            ema_cadence: self.ema_cadence,
            adam: self.adam(),
            clip_norm: self.clip_norm,
        }
    }

    pub fn club_config(&self) -> ClubConfig {
        ClubConfig {
            hidden: self.hidden,
            leaky_slope: self.leaky_slope,
            adam: self.adam(),
            clip_norm: self.clip_norm,
            marginal: self.club_marginal,
        }
    }
}

/// Per-epoch trajectory of one ensemble member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberTrace {
    pub member: usize,
    pub seed: u64,
    pub mine: Vec<f64>,
    pub club: Vec<f64>,
    pub delta: Vec<f64>,
    pub learning_rate: Vec<f64>,
    pub early_stop_epoch: Option<usize>,
    /// Epochs averaged for the member's final values.
    pub window: usize,
    pub final_mine: f64,
    pub final_club: f64,
}

impl MemberTrace {
    pub fn epochs(&self) -> usize {
        self.mine.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub members: Vec<MemberTrace>,
    /// Member-averaged final-window lower bound (before enforcement).
    pub mine: f64,
    pub club: f64,
    pub ksg: f64,
    pub bracket: MiBracket,
    pub rows: usize,
    pub config: TrainConfig,
    pub ksg_config: KsgConfig,
}

fn tail_mean(v: &[f64], window: usize) -> f64 {
    let w = window.min(v.len());
    v[v.len() - w..].iter().sum::<f64>() / w as f64
}

fn train_member(x: &FeatureMatrix, y: &FeatureMatrix, cfg: &TrainConfig, member: usize) -> Result<MemberTrace> {
    let member_seed = seed::derive(cfg.seed, "member", member as u64);
    let (dx, dy) = (x.cols(), y.cols());
    let mut mine = MineEstimator::new(dx, dy, cfg.mine_config(), &mut seed::rng(member_seed, "mine-init", 0));
    let mut club = ClubEstimator::new(dx, dy, cfg.club_config(), &mut seed::rng(member_seed, "club-init", 0));
    let mut batches = seed::rng(member_seed, "batches", 0);
    let mut scheduler = PlateauScheduler::new(cfg.scheduler_factor, cfg.scheduler_patience);
    let mut lr = cfg.learning_rate;

    let mut trace = MemberTrace {
        member,
        seed: member_seed,
        mine: Vec::new(),
        club: Vec::new(),
        delta: Vec::new(),
        learning_rate: Vec::new(),
        early_stop_epoch: None,
        window: 0,
        final_mine: f64::NAN,
        final_club: f64::NAN,
    };
    for epoch in 1..=cfg.max_epochs {
        let wrap = |e: Error| Error::Training { member, epoch, source: Box::new(e) };
        let plan = plan_epoch(x.rows(), cfg.batch_size, cfg.marginal, &mut batches);
        let lower = mine.train_epoch(x, y, &plan).map_err(wrap)?.estimate;
        let upper = club.train_epoch(x, y, &plan).map_err(wrap)?.estimate;
        if !(lower.is_finite() && upper.is_finite()) {
            return Err(wrap(Error::Domain(format!("non-finite epoch estimate (mine {lower}, club {upper})"))));
        }
        let delta = upper - lower;
        trace.mine.push(lower);
        trace.club.push(upper);
        trace.delta.push(delta);
        trace.learning_rate.push(lr);
        if early_stop_check(&trace.delta, cfg.early_stop_threshold, cfg.early_stop_patience) {
            trace.early_stop_epoch = Some(epoch);
            break;
        }
        lr = scheduler.step(delta, lr);
        mine.optimizer_mut().set_learning_rate(lr);
        club.optimizer_mut().set_learning_rate(lr);
    }
    trace.window = cfg.final_window.min(trace.epochs());
    trace.final_mine = tail_mean(&trace.mine, cfg.final_window);
    trace.final_club = tail_mean(&trace.club, cfg.final_window);
    Ok(trace)
}

/// Trains `members` independent MINE/CLUB pairs, averages each member's last
/// `final_window` epochs and then the members, computes KSG on the same rows
/// and fuses the three.
pub fn train_pair(
    x: &FeatureMatrix,
    y: &FeatureMatrix,
    cfg: &TrainConfig,
    ksg_cfg: &KsgConfig,
) -> Result<EnsembleResult> {
    let n = check_aligned(x, y)?;
    let problems = cfg.problems();
    if !problems.is_empty() {
        return Err(Error::Usage(problems.join("; ")));
    }
    ksg_cfg.validate(n)?;
    let (x, _) = zscore(x)?;
    let (y, _) = zscore(y)?;

    let (members, ksg) = rayon::join(
        || {
            (0..cfg.members)
                .into_par_iter()
                .map(|m| train_member(&x, &y, cfg, m))
                .collect::<Result<Vec<_>>>()
        },
        || ksg_estimate(&x, &y, ksg_cfg),
    );
    let members = members?;
    let ksg = ksg?;
    let m = members.len() as f64;
    let mine = members.iter().map(|t| t.final_mine).sum::<f64>() / m;
    let club = members.iter().map(|t| t.final_club).sum::<f64>() / m;
    let bracket = fuse(mine, club, ksg)?;
    Ok(EnsembleResult {
        members,
        mine,
        club,
        ksg,
        bracket,
        rows: n,
        config: cfg.clone(),
        ksg_config: ksg_cfg.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_generate, SyntheticSpec};

    fn quick() -> TrainConfig {
        TrainConfig { members: 2, max_epochs: 12, hidden: 32, batch_size: 64, seed: 5, ..TrainConfig::default() }
    }

    #[test]
    fn deterministic_under_seed() {
        let p = synth_generate(&SyntheticSpec::gaussian(0.5, 256, 1)).unwrap();
        let a = train_pair(&p.x, &p.y, &quick(), &KsgConfig::default()).unwrap();
        let b = train_pair(&p.x, &p.y, &quick(), &KsgConfig::default()).unwrap();
        assert_eq!(a, b);
        let c = train_pair(&p.x, &p.y, &TrainConfig { seed: 6, ..quick() }, &KsgConfig::default()).unwrap();
        assert_ne!(a.members[0].mine, c.members[0].mine);
    }

    #[test]
    fn aggregates_follow_window_means() {
        let p = synth_generate(&SyntheticSpec::gaussian(0.5, 256, 2)).unwrap();
        let r = train_pair(&p.x, &p.y, &quick(), &KsgConfig::default()).unwrap();
        for t in &r.members {
            assert_eq!(t.mine.len(), t.epochs());
            assert_eq!(t.club.len(), t.epochs());
            assert_eq!(t.delta.len(), t.epochs());
            assert_eq!(t.learning_rate.len(), t.epochs());
            let w = t.window;
            let m: f64 = t.mine[t.epochs() - w..].iter().sum::<f64>() / w as f64;
            assert!((m - t.final_mine).abs() < 1e-15);
        }
        let mean = (r.members[0].final_mine + r.members[1].final_mine) / 2.0;
        assert!((r.mine - mean).abs() < 1e-15);
        assert!((r.bracket.recompute_final() - r.bracket.final_estimate).abs() < 1e-12);
    }

    #[test]
    fn single_member_is_plain_window_mean() {
        let p = synth_generate(&SyntheticSpec::gaussian(0.3, 200, 3)).unwrap();
        let cfg = TrainConfig { members: 1, ..quick() };
        let r = train_pair(&p.x, &p.y, &cfg, &KsgConfig::default()).unwrap();
        assert_eq!(r.members.len(), 1);
        assert_eq!(r.mine, r.members[0].final_mine);
        assert_eq!(r.club, r.members[0].final_club);
    }

    #[test]
    fn short_runs_average_completed_epochs() {
        assert_eq!(tail_mean(&[1.0, 2.0, 3.0], 10), 2.0);
        assert_eq!(tail_mean(&[1.0, 2.0, 3.0, 5.0], 2), 4.0);
    }

    #[test]
    fn invalid_config_lists_every_problem() {
        let cfg = TrainConfig { members: 0, batch_size: 0, learning_rate: -1.0, ..TrainConfig::default() };
        assert_eq!(cfg.problems().len(), 3);
        let p = synth_generate(&SyntheticSpec::gaussian(0.3, 50, 3)).unwrap();
        assert!(matches!(train_pair(&p.x, &p.y, &cfg, &KsgConfig::default()), Err(Error::Usage(_))));
    }
}

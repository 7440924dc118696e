use std::collections::BTreeMap;

use mi_bracket::attribution::{attribute, AttributionConfig, AttributionResult};
use mi_bracket::data::{
    align_pair, load_features, stratified_sample, synth_generate, zscore, ColumnStats, FeatureMatrix, PairingPolicy,
};
use mi_bracket::fusion::{train_pair, MemberTrace, MiBracket, TrainConfig};
use mi_bracket::{seed, Error};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::Failure;

pub const REPORT_FORMAT: u32 = 1;

/// One estimated pair. `Final` must be recomputable from the bracket fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub name: String,
    pub x: String,
    pub y: String,
    pub rows: usize,
    pub seed: u64,
    /// Closed-form value for synthetic pairs.
    pub true_mi: Option<f64>,
    pub bracket: MiBracket,
    pub members: Vec<MemberTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub format: u32,
    pub combination: String,
    pub master_seed: u64,
    pub pairing: PairingPolicy,
    pub pairs: Vec<PairReport>,
    pub attribution: Vec<AttributionResult>,
    pub config: RunConfig,
}

/// Per-run provenance: everything needed to replay a sub-result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub master_seed: u64,
    pub std_convention: String,
    pub ksg_tie_policy: String,
    pub pairing: PairingPolicy,
    pub feature_sets: BTreeMap<String, FeatureSetMeta>,
    pub pairs: Vec<PairMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSetMeta {
    pub path: String,
    pub rows_in_file: usize,
    pub rows_used: usize,
    pub sample_seed: u64,
    pub normalisation: Vec<ColumnStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMeta {
    pub name: String,
    pub pairing_seed: Option<u64>,
    /// Row `i` of the aligned `y` is row `permutation[i]` of the sampled `y`.
    pub permutation: Vec<usize>,
    pub train_seed: u64,
    pub member_seeds: Vec<u64>,
    pub normalisation_x: Vec<ColumnStats>,
    pub normalisation_y: Vec<ColumnStats>,
}

pub const STD_CONVENTION: &str = "population standard deviation (divide by N); constant columns are centred only";

fn tie_policy(cfg: &RunConfig) -> String {
    format!(
        "inputs z-scored, then jitter of {:e} times a hashed uniform in [-1, 1) per (row, column), jitter seed {}; \
         marginal counts are strict (distance < radius); k = {}",
        cfg.ksg.noise, cfg.ksg.jitter_seed, cfg.ksg.k
    )
}

struct Loaded {
    sets: BTreeMap<String, FeatureMatrix>,
    meta: BTreeMap<String, FeatureSetMeta>,
}

fn data_failure(context: &str, e: Error) -> Failure {
    Failure::Data(format!("{context}: {e}"))
}

fn load_sets(cfg: &RunConfig, names: &[&String]) -> Result<Loaded, Failure> {
    let mut sets = BTreeMap::new();
    let mut meta = BTreeMap::new();
    // One seed for every file, so files from the same recordings (equal row
    // count and strata) keep the same rows and stay aligned.
    let sample_seed = seed::derive(cfg.seed, "sample", 0);
    for name in cfg.features.keys() {
        if !names.contains(&name) {
            continue;
        }
        let path = &cfg.features[name];
        let raw = load_features(path).map_err(|e| data_failure(&format!("feature set `{name}`"), e))?;
        let sampled = stratified_sample(&raw, cfg.sample_size, sample_seed)
            .map_err(|e| data_failure(&format!("sampling `{name}`"), e))?;
        let (_, stats) = zscore(&sampled).map_err(|e| data_failure(&format!("normalising `{name}`"), e))?;
        meta.insert(
            name.clone(),
            FeatureSetMeta {
                path: path.display().to_string(),
                rows_in_file: raw.rows(),
                rows_used: sampled.rows(),
                sample_seed,
                normalisation: stats,
            },
        );
        sets.insert(name.clone(), sampled);
    }
    Ok(Loaded { sets, meta })
}

struct Job {
    name: String,
    x_name: String,
    y_name: String,
    x: FeatureMatrix,
    y: FeatureMatrix,
    true_mi: Option<f64>,
    pairing_seed: Option<u64>,
    permutation: Vec<usize>,
}

fn jobs(cfg: &RunConfig, loaded: &Loaded) -> Result<Vec<Job>, Failure> {
    let mut out = Vec::new();
    for (i, p) in cfg.pairs.iter().enumerate() {
        let pairing_seed = seed::derive(cfg.seed, "pairing", i as u64);
        let aligned = align_pair(&loaded.sets[&p.x], &loaded.sets[&p.y], cfg.pairing, pairing_seed)
            .map_err(|e| data_failure(&format!("pair `{}`", p.name), e))?;
        out.push(Job {
            name: p.name.clone(),
            x_name: p.x.clone(),
            y_name: p.y.clone(),
            x: aligned.x,
            y: aligned.y,
            true_mi: None,
            pairing_seed: (cfg.pairing == PairingPolicy::SeededRandom).then_some(pairing_seed),
            permutation: aligned.permutation,
        });
    }
    for s in &cfg.synthetic {
        let pair = synth_generate(&s.spec).map_err(|e| data_failure(&format!("synthetic `{}`", s.name), e))?;
        out.push(Job {
            name: s.name.clone(),
            x_name: format!("{}.x", s.name),
            y_name: format!("{}.y", s.name),
            permutation: (0..pair.x.rows()).collect(),
            x: pair.x,
            y: pair.y,
            true_mi: Some(pair.true_mi),
            pairing_seed: None,
        });
    }
    Ok(out)
}

fn train_failure(pair: &str, e: Error) -> Failure {
    if e.is_training_fault() {
        Failure::Training(format!("pair `{pair}`: {e}"))
    } else {
        Failure::Data(format!("pair `{pair}`: {e}"))
    }
}

/// Runs every configured pair, and attribution when configured.
pub fn estimate(cfg: &RunConfig) -> Result<(RunReport, Metadata), Failure> {
    let mut wanted: Vec<&String> = cfg.pairs.iter().flat_map(|p| [&p.x, &p.y]).collect();
    if cfg.attribution.configured() {
        wanted.extend(cfg.attribution.source.iter().chain(&cfg.attribution.filter).chain(&cfg.attribution.dimensions));
    }
    let loaded = load_sets(cfg, &wanted)?;
    let jobs = jobs(cfg, &loaded)?;

    let results: Vec<(PairReport, PairMeta)> = jobs
        .par_iter()
        .enumerate()
        .map(|(i, job)| {
            let train_seed = seed::derive(cfg.seed, "train", i as u64);
            let train = TrainConfig { seed: train_seed, ..cfg.training.clone() };
            let r = train_pair(&job.x, &job.y, &train, &cfg.ksg).map_err(|e| train_failure(&job.name, e))?;
            log::info!("pair `{}`: final {:.4} over {} rows", job.name, r.bracket.final_estimate, r.rows);
            let stats = |m: &FeatureMatrix| zscore(m).map(|(_, s)| s).map_err(|e| train_failure(&job.name, e));
            let meta = PairMeta {
                name: job.name.clone(),
                pairing_seed: job.pairing_seed,
                permutation: job.permutation.clone(),
                train_seed,
                member_seeds: r.members.iter().map(|m| m.seed).collect(),
                normalisation_x: stats(&job.x)?,
                normalisation_y: stats(&job.y)?,
            };
            let report = PairReport {
                name: job.name.clone(),
                x: job.x_name.clone(),
                y: job.y_name.clone(),
                rows: r.rows,
                seed: train_seed,
                true_mi: job.true_mi,
                bracket: r.bracket,
                members: r.members,
            };
            Ok((report, meta))
        })
        .collect::<Result<_, Failure>>()?;
    let (pairs, pair_meta): (Vec<_>, Vec<_>) = results.into_iter().unzip();

    let attribution = if cfg.attribution.configured() { attribution_rows(cfg, &loaded)? } else { Vec::new() };
    let report = RunReport {
        format: REPORT_FORMAT,
        combination: cfg.combination.clone(),
        master_seed: cfg.seed,
        pairing: cfg.pairing,
        pairs,
        attribution,
        config: cfg.clone(),
    };
    let meta = Metadata {
        master_seed: cfg.seed,
        std_convention: STD_CONVENTION.into(),
        ksg_tie_policy: tie_policy(cfg),
        pairing: cfg.pairing,
        feature_sets: loaded.meta,
        pairs: pair_meta,
    };
    Ok((report, meta))
}

/// Source, filter and dimension files must describe the same recordings row
/// for row.
fn attribution_rows(cfg: &RunConfig, loaded: &Loaded) -> Result<Vec<AttributionResult>, Failure> {
    let a = &cfg.attribution;
    let (source_name, filter_name) = (a.source.as_ref().expect("validated"), a.filter.as_ref().expect("validated"));
    let (source, filter) = (&loaded.sets[source_name], &loaded.sets[filter_name]);
    let acfg = AttributionConfig { bootstrap: a.bootstrap, level: a.level, seed: seed::derive(cfg.seed, "bootstrap", 0) };
    a.dimensions
        .par_iter()
        .map(|name| {
            attribute(name, source, filter, &loaded.sets[name], &cfg.ksg, &acfg).map_err(|e| match e {
                Error::UndefinedRatio { .. } => Failure::Data(e.to_string()),
                other => data_failure(&format!("attribution of `{name}`"), other),
            })
        })
        .collect()
}

/// Checks that every row's `Final` follows from its own fields.
pub fn self_consistency(report: &RunReport) -> Result<(), Failure> {
    for p in &report.pairs {
        let again = p.bracket.recompute_final();
        if (again - p.bracket.final_estimate).abs() > 1e-12 {
            return Err(Failure::Validation(format!(
                "pair `{}`: stored final {} but its fields give {again}",
                p.name, p.bracket.final_estimate
            )));
        }
    }
    Ok(())
}

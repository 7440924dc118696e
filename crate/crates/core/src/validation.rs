//! Gaussian-oracle battery: trains the full bracket on correlated Gaussian
//! pairs with known mutual information and checks every estimator against
//! its tolerance band.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{synth_generate, SyntheticSpec};
use crate::fusion::{fuse, train_pair, TrainConfig};
use crate::ksg::{digamma, ksg_detail_with, KsgConfig};
use crate::{seed, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub rhos: Vec<f64>,
    pub rows: usize,
    pub seeds: usize,
    pub master_seed: u64,
    /// Fraction of seeds per correlation that must pass every check.
    pub min_pass_rate: f64,
    pub cell_seconds: f64,
    pub ksg_tolerance: f64,
    /// `(below, above)` truth.
    pub mine_band: (f64, f64),
    pub club_band: (f64, f64),
    pub final_tolerance: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            rhos: vec![0.0, 0.3, 0.6, 0.9],
            rows: 2000,
            seeds: 10,
            master_seed: 0,
            min_pass_rate: 0.9,
            cell_seconds: 60.0,
            ksg_tolerance: 0.08,
            mine_band: (0.15, 0.05),
            club_band: (0.05, 0.25),
            final_tolerance: 0.12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub low: f64,
    pub high: f64,
}

impl Check {
    fn new(name: &str, value: f64, low: f64, high: f64) -> Self {
        Self { name: name.to_owned(), value, low, high }
    }

    pub fn passed(&self) -> bool {
        self.value >= self.low && self.value <= self.high
    }

    /// Distance to the nearer edge of the band; negative when outside.
    pub fn margin(&self) -> f64 {
        (self.value - self.low).min(self.high - self.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub rho: f64,
    pub seed: u64,
    pub truth: f64,
    pub checks: Vec<Check>,
}

impl CellOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub cells: Vec<CellOutcome>,
    /// `(rho, fraction of seeds passing)`.
    pub pass_rates: Vec<(f64, f64)>,
    pub min_pass_rate: f64,
}

impl GridSummary {
    pub fn passed(&self) -> bool {
        self.pass_rates.iter().all(|&(_, r)| r >= self.min_pass_rate)
    }

    pub fn failures(&self) -> impl Iterator<Item = (&CellOutcome, &Check)> {
        self.cells.iter().flat_map(|c| c.checks.iter().filter(|k| !k.passed()).map(move |k| (c, k)))
    }
}

/// Runs one `(rho, seed)` cell. `count_psi` is handed to KSG for the
/// neighbour-count terms; pass [`digamma`] for a clean run.
pub fn run_cell(
    spec: &GridSpec,
    rho: f64,
    index: usize,
    train: &TrainConfig,
    ksg: &KsgConfig,
    count_psi: &dyn Fn(f64) -> Result<f64>,
) -> Result<CellOutcome> {
    let data_seed = seed::derive(spec.master_seed, "grid-data", index as u64);
    let train_seed = seed::derive(spec.master_seed, "grid-train", index as u64);
    let started = Instant::now();
    let pair = synth_generate(&SyntheticSpec::gaussian(rho, spec.rows, data_seed))?;
    let result = train_pair(&pair.x, &pair.y, &TrainConfig { seed: train_seed, ..train.clone() }, ksg)?;
    let ksg_value = ksg_detail_with(&pair.x, &pair.y, ksg, count_psi)?.estimate;
    let bracket = fuse(result.mine, result.club, ksg_value)?;
    let seconds = started.elapsed().as_secs_f64();
    let t = pair.true_mi;
    Ok(CellOutcome {
        rho,
        seed: index as u64,
        truth: t,
        checks: vec![
            Check::new("ksg", ksg_value, t - spec.ksg_tolerance, t + spec.ksg_tolerance),
            Check::new("mine", result.mine, t - spec.mine_band.0, t + spec.mine_band.1),
            Check::new("club", result.club, t - spec.club_band.0, t + spec.club_band.1),
            Check::new("final", bracket.final_estimate, t - spec.final_tolerance, t + spec.final_tolerance),
            Check::new("seconds", seconds, 0.0, spec.cell_seconds),
        ],
    })
}

/// Every correlation times every seed, in order. `progress` sees each cell
/// as it completes.
pub fn run_grid(
    spec: &GridSpec,
    train: &TrainConfig,
    ksg: &KsgConfig,
    count_psi: &dyn Fn(f64) -> Result<f64>,
    mut progress: impl FnMut(&CellOutcome),
) -> Result<GridSummary> {
    let mut cells = Vec::with_capacity(spec.rhos.len() * spec.seeds);
    let mut pass_rates = Vec::with_capacity(spec.rhos.len());
    for &rho in &spec.rhos {
        let mut passed = 0;
        for s in 0..spec.seeds {
            let cell = run_cell(spec, rho, s, train, ksg, count_psi)?;
            progress(&cell);
            passed += usize::from(cell.passed());
            cells.push(cell);
        }
        pass_rates.push((rho, passed as f64 / spec.seeds.max(1) as f64));
    }
    Ok(GridSummary { cells, pass_rates, min_pass_rate: spec.min_pass_rate })
}

/// The clean digamma, for callers that want a plain run.
pub fn clean_psi(x: f64) -> Result<f64> {
    digamma(x)
}

use serde::{Deserialize, Serialize};

/// Reduce-on-plateau learning-rate schedule for a lower-is-better metric.
///
/// After `patience` consecutive epochs with no strict improvement over the
/// best value seen, the rate is multiplied by `factor` and the counter resets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauScheduler {
    pub factor: f64,
    pub patience: usize,
    best: f64,
    epochs_since_improvement: usize,
    reductions: usize,
}

impl PlateauScheduler {
    pub fn new(factor: f64, patience: usize) -> Self {
        Self {
            factor,
            patience,
            best: f64::INFINITY,
            epochs_since_improvement: 0,
            reductions: 0,
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn reductions(&self) -> usize {
        self.reductions
    }

    pub fn step(&mut self, metric: f64, current_lr: f64) -> f64 {
        if metric < self.best {
            self.best = metric;
            self.epochs_since_improvement = 0;
            return current_lr;
        }
        self.epochs_since_improvement += 1;
        if self.epochs_since_improvement >= self.patience {
            self.epochs_since_improvement = 0;
            self.reductions += 1;
            current_lr * self.factor
        } else {
            current_lr
        }
    }
}

impl Default for PlateauScheduler {
    fn default() -> Self {
        Self::new(0.5, 10)
    }
}

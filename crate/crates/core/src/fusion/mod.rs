//! Combining the three estimates into one bracketed value, and the ensemble
//! protocol that produces the neural estimates.

mod bracket;
mod trainer;

pub use bracket::{adaptive_weight, early_stop_check, fuse, MiBracket};
pub use trainer::{train_pair, EnsembleResult, MemberTrace, TrainConfig};

//! Bracketed mutual-information estimation.
//!
//! Three estimators look at the same pair of feature sets from different
//! directions:
//!
//! - [`mine`]: a Donsker-Varadhan lower bound trained with an EMA-stabilised
//!   partition function,
//! - [`club`]: a contrastive log-ratio upper bound with a diagonal Gaussian
//!   variational conditional,
//! - [`ksg`]: the Kraskov-Stögbauer-Grassberger k-nearest-neighbour estimator.
//!
//! [`fusion`] enforces the bracket, weights the KSG anchor by the bracket width
//! and runs the seeded ensemble protocol. [`attribution`] splits a semantic
//! dimension's information between source and filter feature groups.
//!
//! All quantities are in nats and all arithmetic is `f64`.

pub mod attribution;
pub mod club;
pub mod data;
mod error;
pub mod fusion;
pub mod ksg;
pub mod mine;
pub mod nn;
pub mod seed;
pub mod validation;

pub use error::{Error, Result};

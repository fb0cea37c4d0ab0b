//! Forward-curve stochastic-volatility engine on the Filipović space.
//!
//! Curves live in a weighted Sobolev space `H_w`; the forward curve `X` is
//! driven by a rank-one volatility `Z ⊗ Y` whose factor `Y` is itself an
//! Ornstein–Uhlenbeck process in `H_w`. The crate simulates the pair,
//! prices options on delivery-period averages and computes directional
//! sensitivities with three independent estimators.

pub mod analytics;
pub mod error;
pub mod filipovic;
pub mod greeks;
pub mod operators;
pub mod parallel;
pub mod pricing;
pub mod rng;
pub mod scenario;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
pub use filipovic::{Grid, HwElement, Space, WeightFn, WeightKind};
pub use greeks::{Estimator, GreekEstimate};
pub use operators::{CovOp, FiniteRankOp, RankOneOp, SemigroupSpec};
pub use parallel::McConfig;
pub use pricing::{OptionSpec, Payoff};
pub use simulate::{Direction, ModelSpec, Parameter, PathBundle, Probe, ZPolicy};

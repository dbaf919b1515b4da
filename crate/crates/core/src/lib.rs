//! Spot volatility estimation in time-changed price models.
//!
//! Prices are observed at the arrival times of a point process with
//! intensity `λ(u)`, and each transaction moves the efficient log-price with
//! variance `σ²(u)`. Clock-time volatility then factors as `σ²(u)·λ(u)`, and
//! the crate estimates either side of that identity from noisy tick data.

pub mod asymptotics;
pub mod curve;
pub mod error;
pub mod estimators;
pub mod ingest;
pub mod kernels;
pub mod mc;
pub mod rng;
pub mod series;
pub mod sim;

pub use curve::CurveSpec;
pub use error::{Error, MalformedRow, Result};
pub use estimators::{CurveEstimate, CurvePoint, EstimatorConfig, EstimatorTag, PavgTerms, VolScale};
pub use kernels::{KernelSpec, PreAvgWeight, WeightConstants, WeightShape};
pub use mc::{MCReport, Registry, Scenario};
pub use series::TickSeries;
pub use sim::{NoiseModel, SimConfig};

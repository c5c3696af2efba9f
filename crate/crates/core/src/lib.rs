//! Bayesian-network structure learning and release-quality analysis for
//! software usage data.
//!
//! Numeric kernels are generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar for common use. Scores, p-values and the quality
//! pipeline always work in `f64`.

pub mod data;
pub mod discrete;
pub mod error;
pub mod gaussian;
pub mod graph;
pub mod linalg;
pub mod loess;
pub mod metrics;
pub mod quality;
pub mod rng;
pub mod scalar;
pub mod regression;
pub mod search;
pub mod simstudy;
pub mod stats;

pub use data::Dataset;
pub use discrete::{DiscreteDataset, DiscretizationMethod, DiscretizationSpec};
pub use error::{Error, Result};
pub use gaussian::{GaussianBn, NodeParams};
pub use graph::{Dag, VariableSet};
pub use scalar::Real;
pub use quality::{DailySeries, ReleaseAggregate, Timeline, UsageRecord};
pub use regression::{CvSpec, Forest, ForestConfig};
pub use search::{ArcConfidence, AveragedNetwork, HcConfig, Learner, Observations, Restrict};

pub type DatasetF64 = Dataset<f64>;
pub type DatasetF32 = Dataset<f32>;
pub type GaussianBnF64 = GaussianBn<f64>;
pub type GaussianBnF32 = GaussianBn<f32>;
pub type ForestF64 = Forest<f64>;
pub type ForestF32 = Forest<f32>;

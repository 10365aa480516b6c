//! Interval mapping of a quantitative trait locus in a backcross when the
//! two genotypic distributions may differ in both location and scale.
//!
//! The crate fits four-group location-scale mixtures, computes likelihood
//! ratio statistics with and without an equal-scale restriction, simulates
//! their limiting null distributions and local-power limits, and provides
//! nonparametric k-sample competitors plus a simulation harness and a
//! genome-scan driver.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod error;
pub mod io;
pub mod estimate;
pub mod kernel;
pub mod likelihood;
pub mod lrt;
pub mod nonparam;
pub mod quadrature;
pub mod rng;
pub mod scan;
pub mod sim;

pub use asymptotics::{NullDistTable, NullKind};
pub use error::{Error, Result};
pub use estimate::{FitConfig, MixtureFit, ModelKind};
pub use kernel::{InfoMatrix, KernelFamily, LocScaleParams};
pub use likelihood::{IntervalConfig, MixtureParams, PhenotypeGroups};
pub use lrt::{StatisticKind, TestOutcome};

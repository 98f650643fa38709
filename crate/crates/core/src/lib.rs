//! Desk-scale simulator and learning toolkit for heterogeneous multi-RAT
//! network selection: patient edge nodes (PENs) split compressed medical
//! data across radio access networks (RANs), RANs allocate bandwidth, and a
//! team-based multi-agent deterministic policy-gradient trainer learns both
//! sides jointly, benchmarked against classical allocation baselines.

// Validation guards use `!(x > 0.0)` deliberately: the negated form also
// rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod checkpoint;
pub mod compression;
pub mod config;
pub mod env;
pub mod harness;
pub mod marl;
pub mod metrics;
pub mod nn;
pub mod radio;
pub mod real;

pub use real::Real;

/// Scalar used by the simulator, the trainer and the harness.
pub type Scalar = f64;

/// Concrete aliases over the generic numeric core.
pub type RanProfile = radio::RanProfile<Scalar>;
pub type ChannelParams = radio::ChannelParams<Scalar>;
pub type LinkState = radio::LinkState<Scalar>;
pub type DistortionModel = compression::DistortionModel<Scalar>;
pub type CompressionDecision = compression::CompressionDecision<Scalar>;
pub type MlpNet = nn::MlpNet<Scalar>;
pub type AdamConfig = nn::AdamConfig<Scalar>;

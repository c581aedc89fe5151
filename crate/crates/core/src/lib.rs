//! Finite-key security analysis and system simulation for side-channel-secure
//! quantum key distribution.
//!
//! The crate computes secure key rates under collective and coherent attacks
//! from vacuum-projection source bounds, simulates the detection statistics
//! of the symmetric linear model (with a Monte Carlo cross-check), optimizes
//! the protocol parameters per channel, and simulates the two-phase-scan
//! phase-compensation loop.
//!
//! Everything numeric is generic over [`scalar::Real`]; the aliases below
//! pin the common `f64` instantiations.

pub mod channel;
pub mod config;
pub mod error;
pub mod keyrate;
pub mod mapping;
pub mod model;
pub mod optimizer;
pub mod phaselock;
pub mod scalar;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Real;

/// `f64` instantiations of the core records and helpers.
pub type SourceBounds = model::SourceBounds<f64>;
pub type ProtocolParams = model::ProtocolParams<f64>;
pub type ChannelParams = model::ChannelParams<f64>;
pub type ObservedStatistics = model::ObservedStatistics<f64>;
pub type EpsilonBudget = model::EpsilonBudget<f64>;
pub type KeyRateReport = model::KeyRateReport<f64>;
pub type CostBreakdown = model::CostBreakdown<f64>;
pub type FailureProb = stats::FailureProb<f64>;
pub type ChernoffBound = stats::ChernoffBound<f64>;
pub type Transmittance = channel::Transmittance<f64>;
pub type PhaseErrorTerms = keyrate::PhaseErrorTerms<f64>;
pub type GridSpec = optimizer::GridSpec<f64>;
pub type SweepRow = optimizer::SweepRow<f64>;
pub type FrameTiming = phaselock::FrameTiming<f64>;
pub type InterferenceModel = phaselock::InterferenceModel<f64>;
pub type DriftModel = phaselock::DriftModel<f64>;
pub type PhaseLockState = phaselock::PhaseLockState<f64>;
pub type CountingMatrix = phaselock::CountingMatrix<f64>;
pub type FeedbackSample = phaselock::FeedbackSample<f64>;
pub type QberSample = phaselock::QberSample<f64>;

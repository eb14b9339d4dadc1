//! Two-stage image-computable model of visual motion perception.
//!
//! Stage one is a bank of 256 trainable spatiotemporal Gabor energy units
//! over an 8-level image pyramid (a V1 analogue). Stage two builds an
//! attention graph over the energy map, recurrently integrates motion with
//! separable Conv-GRUs, and decodes dense optical flow each iteration (an MT
//! analogue). Supporting modules provide stimulus generators, in-silico
//! tuning analyses, flow metrics and interchange, and a desk-scale trainer
//! with a reverse-mode tape.
//!
//! All numeric code is generic over the scalar type; the crate root exports
//! concrete `f32`/`f64` aliases for the main entry types.

pub mod energy;
pub mod error;
pub mod grid;
pub mod metrics;
pub mod scalar;
pub mod stimuli;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Concrete aliases for the common double-precision instantiation.
pub type FrameSequence64 = stimuli::FrameSequence<f64>;
pub type MotionSpec64 = stimuli::MotionSpec<f64>;
pub type EnergyBank64 = energy::EnergyBank<f64>;
pub type EnergyMap64 = energy::EnergyMap<f64>;
pub type FlowField64 = metrics::FlowField<f64>;

/// Single-precision aliases.
pub type FrameSequence32 = stimuli::FrameSequence<f32>;
pub type MotionSpec32 = stimuli::MotionSpec<f32>;
pub type EnergyBank32 = energy::EnergyBank<f32>;
pub type EnergyMap32 = energy::EnergyMap<f32>;
pub type FlowField32 = metrics::FlowField<f32>;

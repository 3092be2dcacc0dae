//! Explicit semi-discrete integrators for the scalar SDE
//! `dx = -10 x^3 dt + x^2 dW` and the Monte Carlo machinery used to check
//! their long-time behaviour.
//!
//! The numerical kernels ([`truncation`], [`schemes`], [`stability`]) are
//! generic over the scalar type through [`Real`]; the Monte Carlo layers
//! ([`noise`], [`analysis`]) run in `f64`. Concrete aliases for the common
//! instantiations live at the crate root.

// `!(x > 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod noise;
pub mod real;
pub mod schemes;
pub mod stability;
pub mod stats;
pub mod truncation;

pub use error::{Error, Result};
pub use noise::{BrownianPath, RngSeed};
pub use real::Real;
pub use schemes::{IntegralMode, SchemeKind};

pub type TruncationPolicy = truncation::TruncationPolicy<f64>;
pub type EmTruncationPolicy = truncation::EmTruncationPolicy<f64>;
pub type Scheme = schemes::Scheme<f64>;
pub type SdeProblem = schemes::SdeProblem<f64>;
pub type SchemeState = schemes::SchemeState<f64>;
pub type TimeGrid = schemes::TimeGrid<f64>;
pub type Trajectory = schemes::Trajectory<f64>;

pub type TruncationPolicyF32 = truncation::TruncationPolicy<f32>;
pub type SchemeF32 = schemes::Scheme<f32>;

//! Forward scattering by dispersive nano-particles in an inhomogeneous
//! background, and recovery of the background permittivity from the
//! particles' plasmonic resonances.
//!
//! All numerics are generic over [`Real`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar to `f64`, with `*32` variants for `f32`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::assign_op_pattern, clippy::needless_range_loop)]

pub mod error;
pub mod forward;
pub mod inversion;
pub mod greens;
pub mod linalg;
pub mod media;
pub mod resonance;
pub mod scalar;
pub mod shapes;

pub use error::{Error, Result};
pub use scalar::{Real, C};

pub type Vec3 = linalg::Vec3<f64>;
pub type LorentzModel = media::LorentzModel<f64>;
pub type LorentzModel32 = media::LorentzModel<f32>;
pub type BackgroundField = media::BackgroundField<f64>;
pub type BackgroundField32 = media::BackgroundField<f32>;
pub type Scene = media::Scene<f64>;
pub type Scene32 = media::Scene<f32>;
pub type Dispersion = resonance::Dispersion<f64>;
pub type Dispersion32 = resonance::Dispersion<f32>;
pub type EigenMode = shapes::EigenMode<f64>;
pub type EigenMode32 = shapes::EigenMode<f32>;
pub type HeterogeneousKernel = greens::HeterogeneousKernel<f64>;
pub type HeterogeneousKernel32 = greens::HeterogeneousKernel<f32>;
pub type ForwardModel = forward::ForwardModel<f64>;
pub type ForwardModel32 = forward::ForwardModel<f32>;
pub type MeasurementSeries = inversion::MeasurementSeries<f64>;
pub type MeasurementSeries32 = inversion::MeasurementSeries<f32>;
pub type DrmInterpolant = inversion::DrmInterpolant<f64>;
pub type DrmInterpolant32 = inversion::DrmInterpolant<f32>;
pub type Reconstruction = inversion::Reconstruction<f64>;
pub type Reconstruction32 = inversion::Reconstruction<f32>;

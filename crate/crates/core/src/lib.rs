//! Projections of planar point volumes as a group action on image space,
//! checkers for the volumes that make that action well defined, and an SO(2)
//! variational autoencoder that infers poses from 1D projections.
//!
//! Geometry and the autodiff engine are generic over [`scalar::Real`]; the
//! aliases below fix the scalar type.

pub mod autodiff;
pub mod compatibility;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod nn;
pub mod scalar;
pub mod vae;

pub use error::{Error, Result};

pub type Rotation64 = geometry::Rotation<f64>;
pub type PointVolume64 = geometry::PointVolume<f64>;
pub type ProjectedMasses64 = geometry::ProjectedMasses<f64>;
pub type Image1D64 = geometry::Image1D<f64>;
pub type Tensor64 = autodiff::Tensor<f64>;
pub type Tape64 = autodiff::Tape<f64>;
pub type Mlp64 = nn::Mlp<f64>;

pub type Rotation32 = geometry::Rotation<f32>;
pub type PointVolume32 = geometry::PointVolume<f32>;
pub type ProjectedMasses32 = geometry::ProjectedMasses<f32>;
pub type Image1D32 = geometry::Image1D<f32>;
pub type Tensor32 = autodiff::Tensor<f32>;
pub type Tape32 = autodiff::Tape<f32>;
pub type Mlp32 = nn::Mlp<f32>;

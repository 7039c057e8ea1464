//! Audio-driven talking-face pipeline with learned head pose.
//!
//! Audio is converted to MFCC features, regressed to 3D-morphable-model
//! expression and pose trajectories by a recurrent mapper, rendered through a
//! parametric face model with spherical-harmonics lighting, composited over
//! pose-matched backgrounds, and refined into realistic frames by a
//! memory-augmented attention GAN. A metrics suite (PSNR/SSIM/LMD, head-pose
//! similarity, audio-pose correlation) evaluates the output.
//!
//! All numeric modules are generic over the scalar type via [`num::Real`]
//! (`f32` or `f64`); concrete aliases for the main types live at the crate
//! root.

pub mod audio2coef;
pub mod audiofeat;
pub mod container;
pub mod error;
pub mod evalmetrics;
pub mod face3d;
pub mod linalg;
pub mod nn;
pub mod pipeline;
pub mod refinegan;
pub mod renderpipe;
pub mod tables;
pub mod num;

pub use error::{Error, Result};
pub use num::Real;

// Concrete aliases for the most commonly used generic types.
pub type CoefficientSet32 = face3d::CoefficientSet<f32>;
pub type CoefficientSet64 = face3d::CoefficientSet<f64>;
pub type FaceBasis32 = face3d::FaceBasis<f32>;
pub type FaceBasis64 = face3d::FaceBasis<f64>;
pub type FaceMesh32 = face3d::FaceMesh<f32>;
pub type FaceMesh64 = face3d::FaceMesh<f64>;
pub type Camera32 = face3d::Camera<f32>;
pub type Camera64 = face3d::Camera<f64>;
pub type Pose32 = face3d::Pose<f32>;
pub type Pose64 = face3d::Pose<f64>;

//! Taylor-series optimal stabilization of smooth control systems.
//!
//! * [`polytensor`]: symmetric coefficient tensors and graded polynomials,
//!   generic over the float type.
//! * [`albrekht`]: Riccati solve plus degree-by-degree cost and feedback
//!   expansion for finite-dimensional systems.
//! * [`spectral`]: Neumann cosine modes and the Fredholm kernel recursions
//!   for the 1-D controlled reaction–diffusion problem.
//! * [`galerkin`]: projection of that problem onto finitely many modes.
//! * [`simulate`]: closed-loop RK4 simulation under full or masked feedback.
//! * [`acceptance`]: the end-to-end verification checks.
//!
//! The engine modules work in `f64`; the aliases below fix the generic
//! tensor types to that scalar.

pub mod acceptance;
pub mod albrekht;
pub mod error;
pub mod galerkin;
pub mod linalg;
pub mod polytensor;
pub mod simulate;
pub mod spectral;

pub use error::{Error, Result};
pub use polytensor::{MultiIndex, Scalar, SymmetrizeMode};

pub type SymTensor = polytensor::SymTensor<f64>;
pub type GradedPoly = polytensor::GradedPoly<f64>;
pub type Poly = polytensor::Poly<f64>;
pub type CoefficientFile = polytensor::CoefficientFile<f64>;

pub type SymTensorF32 = polytensor::SymTensor<f32>;
pub type GradedPolyF32 = polytensor::GradedPoly<f32>;

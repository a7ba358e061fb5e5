//! Semigroup calculus for degenerate Kolmogorov-Fokker-Planck operators
//! `tr(Q∇²u) + <BX, ∇u>`: Gaussian kernels, fractional powers, Riesz potentials,
//! nonlocal perimeters and Besov seminorms, evaluated by exact Gaussian sampling
//! and deterministic quadrature.

pub mod besov;
pub mod error;
pub mod field;
pub mod fractional;
pub mod matlin;
pub mod mc;
pub mod operator;
pub mod perimeter;
pub mod quad;
pub mod region;
pub mod semigroup;

pub use error::{KfpError, Result};

//! Numerical computation of vector-valued harmonic weak Maass forms for the
//! Weil representation of the lattice (Z, N x^2).
//!
//! The computation follows the automorphy (Hejhal) method: a truncated Fourier
//! expansion is sampled on a closed horocycle, each sample point is pulled back
//! into the standard fundamental domain of PSL(2,Z), and the transformation law
//! under the metaplectic group turns finite Fourier inversion into a square
//! linear system for the unknown coefficients.  A second phase extends a solved
//! coefficient block to arbitrary index ranges by explicit inversion on fresh
//! horocycles.
//!
//! Modules:
//! - [`bigarith`]: precision contexts and arbitrary-precision real/complex helpers
//! - [`specialfun`]: erfc, half-integral incomplete gamma, the W kernel, truncation estimates
//! - [`weilrep`]: metaplectic group elements and evaluation of the Weil representation
//! - [`fundom`]: pullback to the fundamental domain and automorphy factors
//! - [`maassform`]: index sets, principal parts, coefficient tables, pairings
//! - [`solver`]: horocycle sampling, system assembly, LU solve, phase-2 extension
//! - [`harness`]: a-posteriori accuracy checks and reports

pub mod bigarith;
pub mod error;
pub mod fundom;
pub mod harness;
pub mod maassform;
pub mod solver;
pub mod specialfun;
pub mod weilrep;

pub use error::{Error, Result};

//! Wavelets, Besov norms and sampling frames on stratified Lie groups.
//!
//! Functions on a group are represented on a truncated coordinate box
//! ([`grid`]). Spectral multipliers of a finite-volume sub-Laplacian
//! ([`spectral`]) produce Littlewood-Paley and Mexican-hat wavelets
//! ([`wavelets`]), which in turn define homogeneous Besov norms ([`besov`])
//! and discrete wavelet frames over lattices ([`frames`]).

pub mod besov;
pub mod error;
pub mod frames;
pub mod grid;
pub mod group;
pub mod io;
pub mod spectral;
pub mod wavelets;

pub use besov::{BesovParams, LPCoefficients, ScaleGrid, TestFamily};
pub use error::{Error, Result};
pub use frames::{CoefficientArray, Frame, SamplingSet};
pub use grid::{GridFunction, GridSpec};
pub use group::{GroupDescriptor, GroupPoint, GroupSpec, MultiIndex};
pub use io::KernelCache;
pub use num_complex::Complex64;
pub use spectral::{Backend, BasisChange, MultiplierProfile, SubLaplacian};
pub use wavelets::{BumpSpec, LPWavelet};

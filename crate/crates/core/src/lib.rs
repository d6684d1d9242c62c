//! Faddeev-type Green operators for the conjugated polyharmonic operator
//! `(-Delta)^m + q`, complex geometrical optics solutions, Dirichlet-to-Neumann
//! simulation and Fourier-coefficient reconstruction of the potential.

pub mod carleman;
pub mod cgo;
pub mod error;
pub mod field;
pub mod forward;
pub mod green;
pub mod interp;
pub mod io;
pub mod quadrature;
pub mod recon;
pub mod symbol;

pub use error::{Error, Result};
pub use field::{ComplexField, GridSpec, Representation, WeightedNormSpec, C64};
pub use green::{assemble, Backend, GreenConfig, GreenOperator};
pub use symbol::ZetaVector;

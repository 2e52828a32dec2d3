//! Group-equivariant Fourier neural operators on periodic 2-D grids,
//! together with the spectral toolkit, reverse-mode autodiff, a
//! pseudo-spectral Navier-Stokes data generator, and a training and
//! evaluation harness.

pub mod autodiff;
pub mod error;
pub mod group;
pub mod harness;
pub mod io;
pub mod operator;
pub mod oracle;
pub mod pde;
pub mod rng;
pub mod spectral;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Dtype, Tensor};

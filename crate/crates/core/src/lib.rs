//! Weighted convolution with an optimisable rank-1 density function.
//!
//! The crate provides the operators ([`conv`]), the density parameterisation
//! ([`density`]), a small image-to-image network trained with SGD ([`net`]),
//! the DIRECT-L global optimiser ([`direct`]) used to search densities,
//! spectral checks of the operator's analytic properties ([`spectral`]) and
//! the experiment drivers that tie them together ([`experiments`]).

pub mod conv;
pub mod density;
pub mod direct;
pub mod error;
pub mod experiments;
pub mod net;
pub mod spectral;
pub mod tensor;

pub use error::{Error, Result};

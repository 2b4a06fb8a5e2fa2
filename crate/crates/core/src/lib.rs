//! Slow–fast rough PDEs on a spectral Galerkin truncation.
//!
//! The crate covers the numerical pipeline end to end: the Hilbert scale and
//! semigroup ([`hilbert_scale`]), grid rough paths ([`rough_path`]) and their
//! random drivers ([`drivers`]), controlled paths ([`controlled_path`]), the
//! semigroup rough integral ([`rough_convolution`]), the coupled solver
//! ([`slowfast`]), frozen-equation averaging ([`averaging`]) and the
//! experiment harness ([`harness`]).

pub mod averaging;
pub mod controlled_path;
pub mod drivers;
pub mod error;
pub mod harness;
pub mod hilbert_scale;
pub mod rough_convolution;
pub mod rough_path;
pub mod seed;
pub mod slowfast;
pub mod stats;

pub use error::{Error, Result};
pub use hilbert_scale::{ScaleVector, SpectralOperator};
pub use rough_path::GridRoughPath;

//! Wavelet phase-harmonic analysis and signal recovery from harmonic
//! correlation descriptors.

pub mod descriptors;
pub mod error;
pub mod filterbank;
pub mod lbfgs;
pub mod phase_harmonics;
pub mod recovery;
pub mod signal_io;
pub mod spectral;
pub mod transform;

pub use error::{Error, Result};

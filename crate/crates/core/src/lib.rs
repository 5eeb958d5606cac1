//! Informative frequency band selection for machinery diagnostics.
//!
//! A signal's magnitude spectrogram is factorized into non-negative frequency
//! profiles and activations, either by plain NMF or by non-negative matrix
//! underapproximation (NMU, which adds the constraint `WV <= S`). Each
//! frequency profile is used as a filter characteristic; the filter whose
//! output has the highest kurtosis marks the band carrying the fault impulses.

pub mod error;
pub mod factorize;
pub mod harness;
pub mod metrics;
pub mod selectors;
pub mod signal_io;
pub mod tfr;

pub use error::{Error, Result};
pub use signal_io::Signal;

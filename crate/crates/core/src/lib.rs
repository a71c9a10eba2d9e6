//! Synthetic class-conditional Gaussian benchmark for the robustness-accuracy
//! quality of representations: data synthesis, Gaussian fitting, robust linear
//! classifiers, expected-margin curves, area-ratio scores, file formats, and
//! independent checkers.

// `!(x > 0.0)` style guards are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Reference constants are kept at the precision they were computed to.
#![allow(clippy::excessive_precision)]

pub mod dataio;
pub mod error;
pub mod math;
pub mod oracle;
pub mod robust;
pub mod scoring;
pub mod spectral;
pub mod synth;

pub use error::{Error, Result};

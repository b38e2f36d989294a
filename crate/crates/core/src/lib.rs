//! Unpaired image-to-image translation with a semantic robustness constraint.
//!
//! The crate implements a contrastive translation backbone (least-squares
//! adversarial loss plus patch-contrastive loss), a multi-scale robustness
//! loss driven by feature-space perturbations, a set of alternative
//! constraints used for comparison, synthetic dataset generation with
//! deliberately mismatched semantics statistics, and the metrics needed to
//! measure semantic flips. Everything runs deterministically on CPU in f64.

pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod losses;
pub mod models;
pub mod nn;
pub mod plot;
pub mod rng;
pub mod train;

pub use error::{Category, Error, Result};
pub use rng::SeedStream;

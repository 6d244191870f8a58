//! Continual-learning experiments with frozen, language-derived classifier
//! heads, plus the trainable-head paradigm and standard anti-forgetting
//! baselines for comparison.

pub mod clmethods;
pub mod error;
pub mod metrics;
pub mod numcore;
pub mod rng;
pub mod runner;
pub mod supervision;
pub mod taskstream;

pub use error::{Error, Result};

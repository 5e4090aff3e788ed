//! Prototype-guided representation learning for long-tailed recognition.
//!
//! The library operates on normalized embedding vectors throughout: a
//! matching stage pulls image and text features toward per-class unit
//! prototypes (updated by frequency-weighted EMA, optionally with noisy
//! candidate-text filtering), and a recognition stage fuses a learnable
//! linear classifier with the prototype classifier to trade head-class
//! bias against tail-class recall. A synthetic long-tailed generator, an
//! alignment/uniformity metric suite, and a reproducible experiment CLI
//! round out the toolkit.

pub mod bank;
pub mod classifier;
pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod filter;
pub mod format;
pub mod geometry;
pub mod loss;
pub mod metrics;
pub mod pipeline;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};

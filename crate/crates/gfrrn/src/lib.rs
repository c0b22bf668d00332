//! Dual-stream single-image reflection removal at desk scale.
//!
//! The crate packages the pieces of a gap-free reflection removal network:
//! a unified-label pipeline, Gaussian adaptive frequency blocks, dynamic
//! agent attention, Mona adapter tuning, the full loss suite, and a small
//! training/evaluation harness. Everything runs in double precision on CPU
//! and every differentiable op carries an analytic backward pass that the
//! test suite verifies against central finite differences.

pub mod adapters;
pub mod attention;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod frequency;
pub mod gradcheck;
pub mod img;
pub mod labels;
pub mod network;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod params;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};

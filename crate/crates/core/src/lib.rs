//! Joint generative/discriminative diagnosis models for incomplete
//! multivariate lab-test sequences.
//!
//! The crate is `no_std` (it needs `alloc`) and contains every numeric piece:
//! preprocessing of day-grouped lab sequences, a small reverse-mode layer
//! library with Adam, diagonal-Gaussian building blocks, the five model
//! families (NN, AE+NN, VAE+NN, RNN+NN, VRNN+NN), heuristic and model-based
//! imputation, and the evaluation metrics. File formats and the command line
//! live in the `labdx` companion crate.
//!
//! Missing lab values are carried as a boolean mask next to a zero-filled
//! value grid. Every model reads its inputs through that mask, so the
//! contents of unobserved cells never reach a loss or a gradient.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod data;
pub mod error;
pub mod imputation;
pub mod metrics;
pub mod models;
pub mod numcore;
pub mod problayer;
pub mod rng;

pub use error::{Error, Result};

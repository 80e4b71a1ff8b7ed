//! Conditional-computation neural network engine.
//!
//! A fully-connected ReLU network where each hidden layer's weight matrix
//! carries a low-rank SVD factorization used to predict the sign of
//! pre-nonlinearity activations. Units predicted negative are skipped
//! (ReLU would zero them anyway), and a FLOP ledger quantifies the
//! savings. An MNIST harness reproduces the accuracy-vs-rank trade-off.

pub mod checkpoint;
pub mod config;
pub mod costmodel;
pub mod data;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod linalg;
pub mod network;
pub mod rng;
pub mod svd;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use svd::{truncated_svd, LowRankFactors, Svd};

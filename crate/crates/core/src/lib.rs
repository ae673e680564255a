//! Semi-supervised deep clustering.
//!
//! An autoencoder whose latent space is shaped by a k-means style cluster
//! loss and a margin-hinged symmetric KL pairwise loss, trained on a few
//! labeled samples plus pseudo-labeled unlabeled data. Cluster centers are
//! seeded from labeled means, so each center stays tied to one class and
//! nearest-center lookup doubles as a classifier.
//!
//! The crate is `no_std` (it needs `alloc`). The `std` feature, on by
//! default, only enables runtime CPU detection in the GEMM kernels.

#![no_std]

extern crate alloc;
#[cfg(any(feature = "std", test))]
extern crate std;

pub mod clustering;
pub mod constraints;
pub mod data;
mod error;
pub mod losses;
pub mod matrix;
pub mod metrics;
pub mod network;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
pub use matrix::Matrix;

#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Online change-point detection for streams of point clouds.
//!
//! Each batch is summarized by its empirical measure, transported onto a
//! reference barycenter, and represented as a displacement field in the
//! tangent space at that barycenter. Functional PCA of calibration fields
//! gives two control charts, Hotelling T² on the leading scores and the
//! squared prediction error of the remainder, with thresholds set by order
//! statistics of the calibration values.

pub mod barycenter;
pub mod baselines;
pub mod detector;
pub mod error;
pub mod harness;
pub mod mfpca;
pub mod ot;
pub mod seeds;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    struct Readme;
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/transport.md")]
    struct Transport;
    #[doc = include_str!("../../../book/src/barycenter.md")]
    struct Barycenter;
    #[doc = include_str!("../../../book/src/mfpca.md")]
    struct Mfpca;
    #[doc = include_str!("../../../book/src/detector.md")]
    struct Detector;
    #[doc = include_str!("../../../book/src/synthetic.md")]
    struct Synthetic;
    #[doc = include_str!("../../../book/src/benchmark.md")]
    struct Benchmark;
    #[doc = include_str!("../../../book/src/cli.md")]
    struct Cli;
}

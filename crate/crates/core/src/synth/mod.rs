//! Synthetic streams for testing and benchmarking.
//!
//! Continuous streams push a fixed base sample from a product-Beta mixture
//! through a fresh random convex-gradient deformation at every step; the
//! change replaces the base sample. Discrete streams draw Poisson counts or
//! ordinal categories, embedded at their integer values.

mod copula;
mod deform;
mod mixture;
mod streams;

pub use copula::{iman_conover, sample_correlation};
pub use deform::{
    h_beta, monotonicity_check, sigmoid, softplus, DeformationParams, MonotonicityReport, PointMap,
    RotationField,
};
pub use mixture::{reweight, shift_locations, BetaComponent, ProductBetaMixture, SampleUniforms};
pub use streams::{
    gen_stream, ordinal_shift, sample_reference, Scenario, StreamGenerator, StreamSpec,
    ORDINAL_CATEGORIES,
};

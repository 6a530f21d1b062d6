//! The type-1 pathway generated exponential (PGE-1) law and inference for the
//! stress-strength reliability `R = P(X > Y)`.

pub mod bootstrap;
pub mod distribution;
pub mod error;
pub mod gof;
pub mod io;
pub mod likelihood;
pub mod reliability;
pub mod rng;
pub mod sim;

pub use distribution::{MgfSeries, Pge1Params, SupportBound, SupportKind};
pub use error::{Category, Error, Result};
pub use likelihood::{
    fit_law, fit_mle, loglik, observed_information, score, FitOptions, FitResult, FixedMask, Param,
    SsModel, TwoSample,
};
pub use reliability::{
    asymptotic_ci, delta_gradient, reliability, reliability_mle, Method, ReliabilityEstimate,
};
pub use rng::{derive_seed, SeededRng};

//! Sequential Bayesian quantile regression with time-varying parameters and
//! dynamic averaging over regressor subsets.
//!
//! The observation noise is an asymmetric Laplace scale mixture, so conditional
//! on the mixing variables the model is linear Gaussian and coefficient paths
//! are drawn with a Kalman filter and smoother. A population of Gibbs chains
//! is extended one observation at a time and swept until a rate-of-convergence
//! monitor settles. Model probabilities evolve with a forgetting factor.

pub mod data;
pub mod dgp;
pub mod distributions;
pub mod dma;
pub mod error;
pub mod gibbs;
pub mod io;
pub mod pipeline;
pub mod rng;
pub mod smcmc;
pub mod ssm;

pub use data::SeriesData;
pub use distributions::QuantileConfig;
pub use dma::ModelSpec;
pub use error::{Error, Result};
pub use gibbs::{ChainState, PriorHyper, SweepMode};
pub use pipeline::{fit_full_model, fit_model, run_dma, DmaRun, FitRun, Settings};
pub use smcmc::{ChainPopulation, ConvergenceConfig, Execution};

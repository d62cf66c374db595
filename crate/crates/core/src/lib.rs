//! Kernel-regularized MAP identification of continuous-time LTI systems from
//! Lebesgue-sampled (event-based, amplitude-quantized) output data.
//!
//! The pipeline: [`lti`] simulates ZOH-driven systems exactly, [`sampling`]
//! turns fine-grid outputs into threshold-crossing events and per-step bands,
//! [`kernel`] builds the stable-spline Gram matrix `K = Φ 𝒪_β Φᵀ`,
//! [`hyper`] fits the hyperparameters by EM with Gibbs-sampled second moments
//! ([`truncnorm`]), [`weights`] computes the representer weights by MAP-EM,
//! and [`estimator`] assembles transfer-function and impulse-response
//! estimates. [`experiment`] runs the seeded Monte Carlo benchmarks.

pub mod error;
pub mod estimator;
pub mod experiment;
pub mod hyper;
pub mod kernel;
pub mod linalg;
pub mod lti;
pub mod optim;
pub mod sampling;
pub mod special;
pub mod truncnorm;
pub mod weights;

pub use error::{Error, Result, Stage};
pub use estimator::{
    estimate, estimate_lebesgue, estimate_oracle, estimate_riemann, fit_metric, EstimateResult, EstimatorConfig,
    FitScore, Method,
};
pub use experiment::{preset, run_experiment, summarize, ExperimentConfig, RunOptions, RunRecord};
pub use hyper::{HyperEmConfig, HyperParams};
pub use kernel::{InputMatrix, StableSpline};
pub use lti::{RationalTf, StateSpace, ZohSignal};
pub use sampling::{sample_events, Bands, Event, LebesgueDataset};
pub use weights::WeightsConfig;

//! Latent change-point model for log response times.
//!
//! Each respondent follows a log-normal response-time model with latent
//! speed `xi ~ N(0, 1)` until an unobserved change-point `tau`, after which
//! item means shift by item-specific effects `gamma_j`. The change-point
//! distribution depends on speed through a logistic no-change probability.
//!
//! The crate covers marginal maximum likelihood by Gauss–Hermite quadrature
//! and quasi-Newton optimization, observed-information standard errors,
//! respondent-level posterior inference over `tau`, model selection over the
//! boundary `c`, and a simulation harness for parameter recovery studies.

pub mod error;
pub mod estimation;
pub mod io;
pub mod lbfgs;
pub mod likelihood;
pub mod model;
pub mod numeric;
pub mod params;
pub mod posterior;
pub mod quadrature;
pub mod report;
pub mod selection;
pub mod simulation;
pub mod table;

pub use error::{Error, Result};
pub use estimation::{fit, fit_from, initialize, FitOptions, FitResult, QuadratureMode};
pub use likelihood::{marginal_loglik, posterior_weights, score, Adaptation, Likelihood, PosteriorWeights, Reduction};
pub use model::{
    changepoint_pmf, conditional_logdensity, residual, ItemParams, LatentState, ModelConfig, RtMatrix, StructuralParams,
};
pub use params::{ParamLayout, ParamVector};
pub use posterior::{PosteriorTable, TauPosterior};
pub use quadrature::QuadratureGrid;
pub use report::{AnalysisOptions, Provenance, ResultBundle};
pub use simulation::{RecoveryReport, SimCondition};

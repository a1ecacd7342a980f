//! Choosing the boundary `c` by AIC, BIC and ICL.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{fit, FitOptions, FitResult};
use crate::model::{ModelConfig, RtMatrix};
use crate::params::ParamLayout;
use crate::posterior::TauPosterior;

/// Criterion values closer than this count as tied.
const TIE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Criteria {
    pub aic: f64,
    pub bic: f64,
    pub icl: f64,
}

impl Criteria {
    /// `AIC = -2l + 2d`, `BIC = -2l + d log N`, `ICL = BIC + 2 * entropy`.
    pub fn compute(loglik: f64, n_params: usize, n_respondents: usize, entropy_total: f64) -> Self {
        let d = n_params as f64;
        let bic = -2.0 * loglik + d * (n_respondents as f64).ln();
        Self {
            aic: -2.0 * loglik + 2.0 * d,
            bic,
            icl: bic + 2.0 * entropy_total,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateFit {
    pub boundary: usize,
    pub loglik: f64,
    pub n_params: usize,
    pub entropy_total: f64,
    pub criteria: Criteria,
    pub converged: bool,
    #[serde(skip)]
    pub fit: Option<FitResult>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FailedCandidate {
    pub boundary: usize,
    pub error: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selected {
    pub aic: usize,
    pub bic: usize,
    pub icl: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionResult {
    pub n_respondents: usize,
    pub candidates: Vec<CandidateFit>,
    pub failed: Vec<FailedCandidate>,
    pub selected: Selected,
}

impl SelectionResult {
    pub fn candidate(&self, boundary: usize) -> Option<&CandidateFit> {
        self.candidates.iter().find(|c| c.boundary == boundary)
    }
}

/// `sum_i sum_tau -p log p` over posteriors on the change-point alone.
pub fn total_entropy<'a>(posteriors: impl IntoIterator<Item = &'a [f64]>) -> f64 {
    posteriors
        .into_iter()
        .flat_map(|p| p.iter())
        .filter(|p| **p > 0.0)
        .map(|p| -p * p.ln())
        .sum()
}

/// Fits every candidate boundary and ranks them.
pub fn select_c(data: &RtMatrix, candidates: &[usize], options: &FitOptions) -> Result<SelectionResult> {
    if candidates.is_empty() {
        return Err(Error::config("no candidate boundaries given"));
    }
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let j = data.n_items();
    let configs = sorted
        .iter()
        .map(|&c| {
            ModelConfig::new(j, c)
                .map_err(|_| Error::config(format!("candidate c = {c} must satisfy 1 <= c < J - 1 = {}", j - 1)))
        })
        .collect::<Result<Vec<_>>>()?;
    let outcomes: Vec<(usize, Result<CandidateFit>)> = configs
        .par_iter()
        .map(|config| (config.boundary(), fit_candidate(data, config, options)))
        .collect();

    let mut fits = Vec::new();
    let mut failed = Vec::new();
    for (c, outcome) in outcomes {
        match outcome {
            Ok(f) => fits.push(f),
            Err(e) => {
                warn!("candidate c = {c} failed: {e}");
                failed.push(FailedCandidate {
                    boundary: c,
                    error: e.to_string(),
                });
            }
        }
    }
    if fits.is_empty() {
        return Err(Error::Numerical("every candidate fit failed".into()));
    }
    let selected = Selected {
        aic: argmin(&fits, |c| c.criteria.aic),
        bic: argmin(&fits, |c| c.criteria.bic),
        icl: argmin(&fits, |c| c.criteria.icl),
    };
    Ok(SelectionResult {
        n_respondents: data.n_respondents(),
        candidates: fits,
        failed,
        selected,
    })
}

fn fit_candidate(data: &RtMatrix, config: &ModelConfig, options: &FitOptions) -> Result<CandidateFit> {
    let result = fit(data, config, options)?;
    let grid = result.grid()?;
    let lik = result.likelihood(data, &grid, config)?;
    let posteriors = lik
        .posterior_weights(&result.theta_hat)?
        .into_iter()
        .map(|w| TauPosterior::new(config, w.tau_marginal()))
        .collect::<Result<Vec<_>>>()?;
    let entropy_total = total_entropy(posteriors.iter().map(|p| p.probs()));
    let n_params = ParamLayout::new(config).dim() - options.fixed.len();
    Ok(CandidateFit {
        boundary: config.boundary(),
        loglik: result.loglik,
        n_params,
        entropy_total,
        criteria: Criteria::compute(result.loglik, n_params, data.n_respondents(), entropy_total),
        converged: result.converged,
        fit: Some(result),
    })
}

/// Smallest value wins; values within [`TIE`] of the minimum go to the
/// larger boundary.
fn argmin(fits: &[CandidateFit], value: impl Fn(&CandidateFit) -> f64) -> usize {
    let best = fits.iter().map(&value).fold(f64::INFINITY, f64::min);
    fits.iter()
        .filter(|c| value(c) - best <= TIE)
        .map(|c| c.boundary)
        .max()
        .expect("at least one candidate")
}

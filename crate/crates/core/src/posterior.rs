//! Respondent-level posterior summaries over the change-point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{posterior_weights, Likelihood};
use crate::model::{changepoint_pmf, ModelConfig};
use crate::params::ParamVector;
use crate::quadrature::QuadratureGrid;

/// Slack on the credible-set mass target, absorbing rounding in the
/// cumulative sum.
const MASS_SLACK: f64 = 1e-12;

/// Posterior over `tau in {c+1, ..., J}` for one respondent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauPosterior {
    /// First support point, `c + 1`.
    first: usize,
    probs: Vec<f64>,
}

impl TauPosterior {
    pub fn new(config: &ModelConfig, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != config.n_support() {
            return Err(Error::domain(format!(
                "expected {} probabilities, got {}",
                config.n_support(),
                probs.len()
            )));
        }
        if probs.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
            return Err(Error::domain("probabilities must be finite and nonnegative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!("probabilities sum to {total}")));
        }
        Ok(Self {
            first: config.boundary() + 1,
            probs,
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Support points in order.
    pub fn support(&self) -> std::ops::Range<usize> {
        self.first..self.first + self.probs.len()
    }

    pub fn prob(&self, tau: usize) -> f64 {
        tau.checked_sub(self.first)
            .and_then(|s| self.probs.get(s))
            .copied()
            .unwrap_or(0.0)
    }

    /// Most probable change-point; ties go to the smaller `tau`.
    pub fn mode(&self) -> usize {
        let mut best = 0;
        for (s, p) in self.probs.iter().enumerate() {
            if *p > self.probs[best] {
                best = s;
            }
        }
        self.first + best
    }

    /// `E[tau | y]`, with `tau = J` included.
    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(s, p)| (self.first + s) as f64 * p)
            .sum()
    }

    /// `P(tau < J | y)`, defined as one minus the no-change mass.
    pub fn p_change(&self) -> f64 {
        1.0 - self.probs[self.probs.len() - 1]
    }

    /// Shannon entropy divided by `log(J - c)`.
    pub fn entropy_normalized(&self) -> Result<f64> {
        let n = self.probs.len();
        if n < 2 {
            return Err(Error::domain("normalized entropy needs at least two support points"));
        }
        let h: f64 = self.probs.iter().filter(|p| **p > 0.0).map(|p| -p * p.ln()).sum();
        Ok((h / (n as f64).ln()).clamp(0.0, 1.0))
    }

    /// Highest-probability set: support sorted by descending probability
    /// (ties to smaller `tau`), shortest prefix with mass at least
    /// `1 - alpha`. Zero-probability points are never included.
    pub fn credible_set(&self, alpha: f64) -> Result<Vec<usize>> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::domain(format!("alpha must lie in [0, 1), got {alpha}")));
        }
        let mut order: Vec<usize> = (0..self.probs.len()).collect();
        order.sort_by(|&a, &b| self.probs[b].total_cmp(&self.probs[a]).then(a.cmp(&b)));
        let target = 1.0 - alpha - MASS_SLACK;
        let mut mass = 0.0;
        let mut out = Vec::new();
        for s in order {
            if mass >= target || self.probs[s] == 0.0 {
                break;
            }
            mass += self.probs[s];
            out.push(self.first + s);
        }
        Ok(out)
    }

    pub fn classify(&self, threshold: f64) -> Classification {
        classify(self.p_change(), threshold)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Changed,
    Unchanged,
}

/// Changed iff `p_change >= threshold`.
pub fn classify(p_change: f64, threshold: f64) -> Classification {
    if p_change >= threshold {
        Classification::Changed
    } else {
        Classification::Unchanged
    }
}

/// `P(tau | y)` for one response vector on the plain grid.
pub fn tau_posterior(
    y: &[f64],
    theta: &ParamVector,
    grid: &QuadratureGrid,
    config: &ModelConfig,
) -> Result<TauPosterior> {
    let w = posterior_weights(y, theta, grid, config)?;
    TauPosterior::new(config, w.tau_marginal())
}

/// Summary row for one respondent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorRow {
    pub probs: Vec<f64>,
    pub mode: usize,
    pub mean: f64,
    pub p_change: f64,
    pub entropy_normalized: f64,
    pub credible_set: Vec<usize>,
    pub classification: Classification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorTable {
    pub first_tau: usize,
    pub alpha: f64,
    pub threshold: f64,
    pub rows: Vec<PosteriorRow>,
}

impl PosteriorTable {
    /// Posterior for every respondent in `lik`'s data, reusing its grid
    /// and placement.
    pub fn compute(lik: &Likelihood<'_>, theta: &ParamVector, alpha: f64, threshold: f64) -> Result<Self> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Error::domain(format!("threshold must lie in (0, 1), got {threshold}")));
        }
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::domain(format!("alpha must lie in [0, 1), got {alpha}")));
        }
        let config = lik.config();
        let rows = lik
            .posterior_weights(theta)?
            .into_iter()
            .map(|w| {
                let post = TauPosterior::new(config, w.tau_marginal())?;
                Ok(PosteriorRow {
                    mode: post.mode(),
                    mean: post.mean(),
                    p_change: post.p_change(),
                    entropy_normalized: post.entropy_normalized()?,
                    credible_set: post.credible_set(alpha)?,
                    classification: post.classify(threshold),
                    probs: post.probs,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            first_tau: config.boundary() + 1,
            alpha,
            threshold,
            rows,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Last support point, `J`.
    pub fn last_tau(&self) -> usize {
        self.first_tau + self.rows.first().map_or(1, |r| r.probs.len()) - 1
    }

    pub fn summary(&self) -> PosteriorSummary {
        let n = self.rows.len().max(1) as f64;
        let sorted = |f: fn(&PosteriorRow) -> f64| {
            let mut v: Vec<f64> = self.rows.iter().map(f).collect();
            v.sort_by(f64::total_cmp);
            v
        };
        let entropies = sorted(|r| r.entropy_normalized);
        let p_change = sorted(|r| r.p_change);
        let changers: Vec<&PosteriorRow> = self
            .rows
            .iter()
            .filter(|r| r.classification == Classification::Changed)
            .collect();
        let last = self.last_tau();
        PosteriorSummary {
            respondents: self.rows.len(),
            threshold: self.threshold,
            changed: changers.len(),
            unchanged: self.rows.len() - changers.len(),
            changed_at_0_8: self.rows.iter().filter(|r| r.p_change >= 0.8).count(),
            mean_p_change: p_change.iter().sum::<f64>() / n,
            median_p_change: median(&p_change),
            modal_no_change_share: self.rows.iter().filter(|r| r.mode == last).count() as f64 / n,
            mean_posterior_mean: self.rows.iter().map(|r| r.mean).sum::<f64>() / n,
            mean_posterior_mean_changers: (!changers.is_empty())
                .then(|| changers.iter().map(|r| r.mean).sum::<f64>() / changers.len() as f64),
            mean_entropy: entropies.iter().sum::<f64>() / n,
            median_entropy: median(&entropies),
        }
    }

    /// `(tau, count)` of posterior modes, for locations that occur.
    pub fn mode_distribution(&self) -> Vec<(usize, usize)> {
        let width = self.rows.first().map_or(0, |r| r.probs.len());
        let mut counts = vec![0; width];
        for row in &self.rows {
            counts[row.mode - self.first_tau] += 1;
        }
        counts
            .into_iter()
            .enumerate()
            .filter(|(_, n)| *n > 0)
            .map(|(s, n)| (self.first_tau + s, n))
            .collect()
    }

    /// Population-average posterior over `tau`.
    pub fn average_posterior(&self) -> Vec<f64> {
        let width = self.rows.first().map_or(0, |r| r.probs.len());
        let mut avg = vec![0.0; width];
        for row in &self.rows {
            for (a, p) in avg.iter_mut().zip(&row.probs) {
                *a += p;
            }
        }
        let n = self.rows.len().max(1) as f64;
        avg.iter_mut().for_each(|a| *a /= n);
        avg
    }
}

fn median(sorted: &[f64]) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => sorted[n / 2],
        n => 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]),
    }
}

/// Aggregate classification and uncertainty figures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub respondents: usize,
    pub threshold: f64,
    pub changed: usize,
    pub unchanged: usize,
    pub changed_at_0_8: usize,
    pub mean_p_change: f64,
    pub median_p_change: f64,
    /// Share of respondents whose posterior mode is `J`.
    pub modal_no_change_share: f64,
    pub mean_posterior_mean: f64,
    /// `None` when nobody is classified as changed.
    pub mean_posterior_mean_changers: Option<f64>,
    pub mean_entropy: f64,
    pub median_entropy: f64,
}

/// Model-implied prior over `tau` next to the average posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorPosteriorCheck {
    pub tau: Vec<usize>,
    /// `P(tau | xi = 0)`.
    pub prior_at_zero: Vec<f64>,
    /// `P(tau)` with `xi` integrated out on the grid.
    pub prior_marginal: Vec<f64>,
    pub average_posterior: Vec<f64>,
}

pub fn prior_posterior_check(
    table: &PosteriorTable,
    theta: &ParamVector,
    grid: &QuadratureGrid,
    config: &ModelConfig,
) -> Result<PriorPosteriorCheck> {
    let psi = theta.psi();
    let tau: Vec<usize> = config.support().collect();
    let prior_at_zero = tau
        .iter()
        .map(|&t| changepoint_pmf(t, 0.0, &psi, config))
        .collect::<Result<Vec<_>>>()?;
    let prior_marginal = tau
        .iter()
        .map(|&t| {
            grid.iter()
                .map(|(xi, w)| changepoint_pmf(t, xi, &psi, config).map(|p| w * p))
                .sum::<Result<f64>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PriorPosteriorCheck {
        tau,
        prior_at_zero,
        prior_marginal,
        average_posterior: table.average_posterior(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn post(c: usize, j: usize, probs: Vec<f64>) -> TauPosterior {
        TauPosterior::new(&ModelConfig::new(j, c).unwrap(), probs).unwrap()
    }

    #[test]
    fn degenerate_posterior() {
        let mut probs = vec![0.0; 15];
        probs[7] = 1.0; // tau = 13
        let p = post(5, 20, probs);
        assert_eq!(p.mode(), 13);
        assert_eq!(p.mean(), 13.0);
        assert_eq!(p.entropy_normalized().unwrap(), 0.0);
        assert_eq!(p.credible_set(0.05).unwrap(), vec![13]);
        assert_eq!(p.credible_set(0.0).unwrap(), vec![13]);
        assert_eq!(p.p_change(), 1.0);
    }

    #[test]
    fn uniform_posterior() {
        let p = post(5, 20, vec![1.0 / 15.0; 15]);
        assert!((p.mean() - 13.0).abs() < 1e-12);
        assert!((p.entropy_normalized().unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(p.mode(), 6);

        let mut probs = vec![1.0 / 14.0; 14];
        probs.push(0.0);
        let p = post(5, 20, probs);
        assert_eq!(p.credible_set(0.05).unwrap(), (6..=19).collect::<Vec<_>>());
        assert_eq!(p.credible_set(0.0).unwrap(), (6..=19).collect::<Vec<_>>());
        assert_eq!(p.p_change(), 1.0);
    }

    #[test]
    fn credible_set_by_hand() {
        let p = post(2, 5, vec![0.15, 0.6, 0.25]);
        assert_eq!(p.credible_set(0.2).unwrap(), vec![4, 5]);
        assert_eq!(p.credible_set(0.5).unwrap(), vec![4]);
        assert!(p.credible_set(1.0).is_err());
    }

    #[test]
    fn classification_threshold_is_inclusive() {
        assert_eq!(classify(0.5, 0.5), Classification::Changed);
        assert_eq!(classify(0.0, 0.1), Classification::Unchanged);
        assert_eq!(classify(0.79, 0.8), Classification::Unchanged);
    }

    #[test]
    fn entropy_needs_two_points() {
        // J - c = 2 is the smallest support a configuration allows
        let p = post(3, 5, vec![0.5, 0.5]);
        assert!((p.entropy_normalized().unwrap() - 1.0).abs() < 1e-12);
        let single = TauPosterior {
            first: 5,
            probs: vec![1.0],
        };
        assert!(single.entropy_normalized().is_err());
    }

    #[test]
    fn p_change_is_exact_complement() {
        let p = post(2, 6, vec![0.1, 0.2, 0.3, 0.4]);
        assert_eq!(p.p_change() + p.probs()[3], 1.0);
        assert_eq!(p.prob(6), 0.4);
        assert_eq!(p.prob(2), 0.0);
    }
}

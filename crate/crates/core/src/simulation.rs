//! Data generation from the model and parameter-recovery studies.

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{fit, FitOptions};
use crate::model::{changepoint_pmf, ItemParams, ModelConfig, RtMatrix, StructuralParams};
use crate::params::{ParamLayout, ParamVector};
use crate::posterior::PosteriorTable;

/// Share of failed replications above which a condition is abandoned.
const MAX_FAILURE_SHARE: f64 = 0.2;

/// One cell of a recovery study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimCondition {
    pub n_respondents: usize,
    pub n_items: usize,
    pub boundary: usize,
    /// Share of respondents expected to change, `pi`.
    pub prevalence: f64,
    pub psi1: f64,
    pub psi3: f64,
    pub replications: usize,
    pub seed: u64,
}

impl SimCondition {
    pub fn new(n_respondents: usize, n_items: usize, boundary: usize, prevalence: f64) -> Self {
        Self {
            n_respondents,
            n_items,
            boundary,
            prevalence,
            psi1: 0.2,
            psi3: -0.5,
            replications: 50,
            seed: 0,
        }
    }

    pub fn with_replications(mut self, replications: usize) -> Self {
        self.replications = replications;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// `log((1 - pi) / pi)`, which makes `logistic(psi2) = 1 - pi`.
    pub fn psi2(&self) -> f64 {
        ((1.0 - self.prevalence) / self.prevalence).ln()
    }

    pub fn config(&self) -> Result<ModelConfig> {
        ModelConfig::new(self.n_items, self.boundary)
    }

    pub fn validate(&self) -> Result<()> {
        self.config()?;
        if !(self.prevalence > 0.0 && self.prevalence < 1.0) {
            return Err(Error::config(format!(
                "prevalence must lie in (0, 1), got {}",
                self.prevalence
            )));
        }
        if self.n_respondents < 2 {
            return Err(Error::config("need at least 2 respondents"));
        }
        if self.replications == 0 {
            return Err(Error::config("need at least one replication"));
        }
        if !(self.psi1.is_finite() && self.psi3.is_finite()) {
            return Err(Error::config("psi1 and psi3 must be finite"));
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        format!(
            "N={}, J={}, c={}, pi={}",
            self.n_respondents, self.n_items, self.boundary, self.prevalence
        )
    }
}

/// Random stream for `(seed, replication, slot)`. Slot 0 draws the item
/// parameters; respondent `i` uses slot `i + 1`.
pub fn stream(seed: u64, replication: usize, slot: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((replication as u64) << 32) | slot as u64);
    rng
}

/// Parameters and latent draws behind one simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueParams {
    pub theta: ParamVector,
    pub xi: Vec<f64>,
    pub tau: Vec<usize>,
}

/// Item parameters from the design's uniform ranges; structural
/// parameters from the condition.
pub fn draw_item_params(condition: &SimCondition, rng: &mut impl Rng) -> Result<ParamVector> {
    let config = condition.config()?;
    let j = config.n_items();
    let beta = (0..j).map(|_| rng.random_range(3.0..4.0)).collect();
    let alpha = (0..j).map(|_| rng.random_range(0.5..1.5)).collect();
    let gamma: Vec<f64> = (0..config.n_free_gamma()).map(|_| rng.random_range(0.3..0.8)).collect();
    let sigma = (0..j).map(|_| rng.random_range(0.2..0.4)).collect();
    let items = ItemParams::new(&config, beta, alpha, &gamma, sigma)?;
    let psi = StructuralParams::new(condition.psi1, condition.psi2(), condition.psi3)?;
    Ok(ParamVector::pack(&items, &psi, &config))
}

/// Draws `tau` by inverse CDF over the support at speed `xi`.
pub fn draw_tau(xi: f64, psi: &StructuralParams, config: &ModelConfig, rng: &mut impl Rng) -> Result<usize> {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for tau in config.support() {
        acc += changepoint_pmf(tau, xi, psi, config)?;
        if u < acc {
            return Ok(tau);
        }
    }
    Ok(config.n_items())
}

/// One respondent: `(log response times, xi, tau)`.
pub fn simulate_respondent(
    items: &ItemParams,
    psi: &StructuralParams,
    config: &ModelConfig,
    rng: &mut impl Rng,
) -> Result<(Vec<f64>, f64, usize)> {
    let xi: f64 = rng.sample(StandardNormal);
    let tau = draw_tau(xi, psi, config, rng)?;
    let y = (0..config.n_items())
        .map(|j| {
            let shift = if j + 1 > tau { items.gamma()[j] } else { 0.0 };
            let noise: f64 = rng.sample(StandardNormal);
            items.beta()[j] - items.alpha()[j] * xi + shift + items.sigma()[j] * noise
        })
        .collect();
    Ok((y, xi, tau))
}

/// Dataset for replication `replication` of `condition`, with fresh item
/// parameters.
pub fn simulate_replication(condition: &SimCondition, replication: usize) -> Result<(TrueParams, RtMatrix)> {
    condition.validate()?;
    let theta = draw_item_params(condition, &mut stream(condition.seed, replication, 0))?;
    simulate_dataset(condition, replication, theta)
}

/// Dataset for replication `replication` under given parameters.
pub fn simulate_dataset(
    condition: &SimCondition,
    replication: usize,
    theta: ParamVector,
) -> Result<(TrueParams, RtMatrix)> {
    let config = condition.config()?;
    let (items, psi) = theta.unpack(&config)?;
    let mut rows = Vec::with_capacity(condition.n_respondents);
    let mut xi = Vec::with_capacity(condition.n_respondents);
    let mut tau = Vec::with_capacity(condition.n_respondents);
    for i in 0..condition.n_respondents {
        let mut rng = stream(condition.seed, replication, i + 1);
        let (y, x, t) = simulate_respondent(&items, &psi, &config, &mut rng)?;
        rows.push(y);
        xi.push(x);
        tau.push(t);
    }
    Ok((TrueParams { theta, xi, tau }, RtMatrix::from_log_rows(rows)?))
}

/// What an estimator returns for one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationEstimate {
    pub theta_hat: ParamVector,
    pub modes: Vec<usize>,
    pub means: Vec<f64>,
}

/// Fit with `c` known, then posterior modes and means.
pub fn fit_and_classify(data: &RtMatrix, config: &ModelConfig, options: &FitOptions) -> Result<ReplicationEstimate> {
    let result = fit(data, config, options)?;
    if !result.converged {
        return Err(Error::Numerical(format!(
            "fit did not converge (score sup-norm {:.3e} after {} iterations)",
            result.gradient_norm_at_solution, result.n_iterations
        )));
    }
    let grid = result.grid()?;
    let lik = result.likelihood(data, &grid, config)?;
    let table = PosteriorTable::compute(&lik, &result.theta_hat, 0.05, 0.5)?;
    Ok(ReplicationEstimate {
        modes: table.rows.iter().map(|r| r.mode).collect(),
        means: table.rows.iter().map(|r| r.mean).collect(),
        theta_hat: result.theta_hat,
    })
}

/// Bias and RMSE of one parameter across replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRecovery {
    pub name: String,
    pub bias: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationOutcome {
    pub replication: usize,
    /// `None` when the replication failed.
    pub mae_mode: Option<f64>,
    pub mae_mean: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub condition: SimCondition,
    pub replications_used: usize,
    pub failures: usize,
    /// Natural scale: `sigma` rather than `log sigma`.
    pub parameters: Vec<ParamRecovery>,
    pub mae_mode: f64,
    pub mae_mean: f64,
    pub replications: Vec<ReplicationOutcome>,
}

impl RecoveryReport {
    pub fn parameter(&self, name: &str) -> Option<&ParamRecovery> {
        self.parameters.iter().find(|p| p.name == name)
    }
}

/// Names and natural-scale values of every parameter.
fn natural_scale(theta: &ParamVector, config: &ModelConfig) -> Vec<(String, f64)> {
    let layout = ParamLayout::new(config);
    let j = config.n_items();
    layout
        .names()
        .into_iter()
        .zip(theta.values())
        .enumerate()
        .map(|(r, (name, v))| {
            if (layout.log_sigma(0)..layout.log_sigma(0) + j).contains(&r) {
                (name.replace("log_sigma", "sigma"), v.exp())
            } else {
                (name, *v)
            }
        })
        .collect()
}

/// Runs every replication with the default estimator.
pub fn run_condition(condition: &SimCondition, options: &FitOptions) -> Result<RecoveryReport> {
    run_condition_with(condition, |data, _, config, replication| {
        let options = FitOptions {
            seed: options.seed ^ replication as u64,
            standard_errors: false,
            ..options.clone()
        };
        fit_and_classify(data, config, &options)
    })
}

/// Runs every replication with a caller-supplied estimator, which sees the
/// data, the truth (for harness checks), the configuration and the
/// replication index.
pub fn run_condition_with<F>(condition: &SimCondition, estimator: F) -> Result<RecoveryReport>
where
    F: Fn(&RtMatrix, &TrueParams, &ModelConfig, usize) -> Result<ReplicationEstimate> + Sync,
{
    condition.validate()?;
    let config = condition.config()?;
    let outcomes: Vec<(usize, Result<(TrueParams, ReplicationEstimate)>)> = (0..condition.replications)
        .into_par_iter()
        .map(|r| {
            let run = || -> Result<(TrueParams, ReplicationEstimate)> {
                let (truth, data) = simulate_replication(condition, r)?;
                let estimate = estimator(&data, &truth, &config, r)?;
                if estimate.modes.len() != data.n_respondents() || estimate.means.len() != data.n_respondents() {
                    return Err(Error::Simulation(
                        "estimator returned the wrong number of respondents".into(),
                    ));
                }
                Ok((truth, estimate))
            };
            (r, run())
        })
        .collect();

    let mut replications = Vec::with_capacity(outcomes.len());
    let mut used = Vec::new();
    for (r, outcome) in outcomes {
        match outcome {
            Ok((truth, est)) => {
                let n = truth.tau.len() as f64;
                let mae_mode = truth
                    .tau
                    .iter()
                    .zip(&est.modes)
                    .map(|(t, m)| (*t as f64 - *m as f64).abs())
                    .sum::<f64>()
                    / n;
                let mae_mean = truth
                    .tau
                    .iter()
                    .zip(&est.means)
                    .map(|(t, m)| (*t as f64 - m).abs())
                    .sum::<f64>()
                    / n;
                replications.push(ReplicationOutcome {
                    replication: r,
                    mae_mode: Some(mae_mode),
                    mae_mean: Some(mae_mean),
                    error: None,
                });
                used.push((truth, est, mae_mode, mae_mean));
            }
            Err(e) => {
                warn!("{}: replication {r} failed: {e}", condition.label());
                replications.push(ReplicationOutcome {
                    replication: r,
                    mae_mode: None,
                    mae_mean: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    let failures = condition.replications - used.len();
    if used.is_empty() || failures as f64 > MAX_FAILURE_SHARE * condition.replications as f64 {
        return Err(Error::Simulation(format!(
            "{}: {failures} of {} replications failed",
            condition.label(),
            condition.replications
        )));
    }
    if failures > 0 {
        info!("{}: {failures} replications excluded", condition.label());
    }

    let k = used.len() as f64;
    let mut sums: Vec<(String, f64, f64)> = Vec::new();
    for (truth, est, _, _) in &used {
        let t = natural_scale(&truth.theta, &config);
        let e = natural_scale(&est.theta_hat, &config);
        if sums.is_empty() {
            sums = t.iter().map(|(name, _)| (name.clone(), 0.0, 0.0)).collect();
        }
        for ((slot, (_, tv)), (_, ev)) in sums.iter_mut().zip(&t).zip(&e) {
            let d = ev - tv;
            slot.1 += d;
            slot.2 += d * d;
        }
    }
    let parameters = sums
        .into_iter()
        .map(|(name, s, s2)| ParamRecovery {
            name,
            bias: s / k,
            rmse: (s2 / k).sqrt(),
        })
        .collect();
    Ok(RecoveryReport {
        condition: condition.clone(),
        replications_used: used.len(),
        failures,
        parameters,
        mae_mode: used.iter().map(|u| u.2).sum::<f64>() / k,
        mae_mean: used.iter().map(|u| u.3).sum::<f64>() / k,
        replications,
    })
}

/// Named condition grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    /// `c in {5, 10, 15}` by `pi in {0.15, 0.25, 0.40}`, `N = 256`, `J = 20`.
    Primary,
    /// `N in {200, 600, 1800}` by `J in {20, 30, 40}` (with `c` = 12, 18,
    /// 24), `pi = 0.15`.
    Secondary,
}

pub fn grid_conditions(kind: GridKind, replications: usize, seed: u64) -> Vec<SimCondition> {
    let mut out = Vec::with_capacity(9);
    match kind {
        GridKind::Primary => {
            for c in [5, 10, 15] {
                for pi in [0.15, 0.25, 0.40] {
                    out.push(SimCondition::new(256, 20, c, pi));
                }
            }
        }
        GridKind::Secondary => {
            for n in [200, 600, 1800] {
                for (j, c) in [(20, 12), (30, 18), (40, 24)] {
                    out.push(SimCondition::new(n, j, c, 0.15));
                }
            }
        }
    }
    out.into_iter()
        .map(|c| c.with_replications(replications).with_seed(seed))
        .collect()
}

/// Runs conditions one after another (replications run in parallel).
pub fn run_grid(conditions: &[SimCondition], options: &FitOptions) -> Result<Vec<RecoveryReport>> {
    conditions
        .iter()
        .map(|c| {
            info!("running {}", c.label());
            run_condition(c, options)
        })
        .collect()
}

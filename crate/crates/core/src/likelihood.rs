//! Quadrature approximation of the marginal log-likelihood, posterior
//! weights over the `(tau, node)` lattice, and the analytic score.
//!
//! For respondent `i` the lattice term is
//! `L[s, k] = log w_k + log f(y_i | xi_k, tau_s) + log P(tau_s | xi_k)`.
//! The conditional log-density is assembled from the no-change density plus
//! suffix sums of per-item shift corrections, so a respondent costs
//! `O(K J)` rather than `O(K J (J - c))`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{location_mean, log_location_normalizer, ItemParams, ModelConfig, RtMatrix, StructuralParams};
use crate::numeric::{log_logistic, logistic, LN_2PI};
use crate::params::{ParamLayout, ParamVector};
use crate::quadrature::QuadratureGrid;

/// How per-respondent contributions are summed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Reduction {
    /// Fixed-size chunks merged in respondent order; bit-reproducible
    /// regardless of thread count.
    #[default]
    Ordered,
    /// Rayon's work-stealing reduction; summation order may vary.
    Unordered,
}

const CHUNK: usize = 32;

/// Normalized posterior mass over the `(tau, node)` lattice for one
/// respondent, stored row-major with one row per support point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorWeights {
    n_support: usize,
    n_nodes: usize,
    values: Vec<f64>,
}

impl PosteriorWeights {
    pub fn n_support(&self) -> usize {
        self.n_support
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Weight at support index `s` (0 is `tau = c+1`) and node `k`.
    #[inline]
    pub fn get(&self, s: usize, k: usize) -> f64 {
        self.values[s * self.n_nodes + k]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `P(tau_s | y)`: the weights summed over nodes.
    pub fn tau_marginal(&self) -> Vec<f64> {
        self.values
            .chunks_exact(self.n_nodes)
            .map(|row| row.iter().sum())
            .collect()
    }

    /// Posterior over quadrature nodes, summed over change-points.
    pub fn node_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_nodes];
        for row in self.values.chunks_exact(self.n_nodes) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out
    }
}

/// Respondent-specific affine placement of the quadrature rule.
///
/// Respondent `i` integrates on `xi_ik = center_i + scale_i z_k`, where `z_k`
/// are the grid's standard-normal nodes, with weights reweighted by
/// `scale_i phi(xi_ik) / phi(z_k)`. Centering on each respondent's posterior
/// keeps a small rule accurate when the posterior of `xi` is much narrower
/// than the prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adaptation {
    center: Vec<f64>,
    scale: Vec<f64>,
}

impl Adaptation {
    /// Every respondent on the plain grid.
    pub fn identity(n: usize) -> Self {
        Self {
            center: vec![0.0; n],
            scale: vec![1.0; n],
        }
    }

    pub fn new(center: Vec<f64>, scale: Vec<f64>) -> Result<Self> {
        if center.len() != scale.len() {
            return Err(Error::domain("center and scale lengths differ"));
        }
        if center.iter().any(|c| !c.is_finite()) || scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::domain("centers must be finite and scales positive"));
        }
        Ok(Self { center, scale })
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn len(&self) -> usize {
        self.center.len()
    }

    pub fn is_empty(&self) -> bool {
        self.center.is_empty()
    }
}

/// Smallest scale an adaptation step may produce.
const MIN_SCALE: f64 = 1e-4;

/// Unpacked parameters plus quantities shared by every respondent.
struct Prepared<'a> {
    config: &'a ModelConfig,
    grid: &'a QuadratureGrid,
    adaptation: Option<&'a Adaptation>,
    layout: ParamLayout,
    items: ItemParams,
    psi: StructuralParams,
    inv_var: Vec<f64>,
    log_sigma: Vec<f64>,
    /// `a psi1 - log Z(psi1)` for each change location.
    location_log: Vec<f64>,
    location_mean: f64,
}

impl<'a> Prepared<'a> {
    fn new(
        theta: &ParamVector,
        grid: &'a QuadratureGrid,
        adaptation: Option<&'a Adaptation>,
        config: &'a ModelConfig,
    ) -> Result<Self> {
        let (items, psi) = theta.unpack(config)?;
        if items.sigma().iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Numerical("residual sd underflowed or overflowed".into()));
        }
        let n_locations = config.n_locations();
        let log_z = log_location_normalizer(psi.psi1, n_locations);
        Ok(Self {
            config,
            grid,
            adaptation,
            layout: ParamLayout::new(config),
            inv_var: items.sigma().iter().map(|s| 1.0 / (s * s)).collect(),
            log_sigma: items.sigma().iter().map(|s| s.ln()).collect(),
            location_log: (0..n_locations).map(|a| a as f64 * psi.psi1 - log_z).collect(),
            location_mean: location_mean(psi.psi1, n_locations),
            items,
            psi,
        })
    }

    /// Writes respondent `i`'s nodes, `log w_k + log P(tau_s | xi_k)` and
    /// `P(tau = J | xi_k)` into `scratch`. Unadapted nodes are shared, so
    /// they are filled once per scratch.
    fn place_nodes(&self, i: usize, scratch: &mut Scratch) {
        match self.adaptation {
            Some(a) => self.place_at(a.center[i], a.scale[i], scratch),
            None if scratch.placed => {}
            None => {
                self.place_at(0.0, 1.0, scratch);
                scratch.placed = true;
            }
        }
    }

    fn place_at(&self, center: f64, scale: f64, scratch: &mut Scratch) {
        scratch.placed = false;
        let adapted = center != 0.0 || scale != 1.0;
        let n_support = self.config.n_support();
        let log_scale = scale.ln();
        for (k, (z, w)) in self.grid.iter().enumerate() {
            let xi = center + scale * z;
            let mut lw = w.ln();
            if adapted {
                lw += log_scale + 0.5 * (z * z - xi * xi);
            }
            let eta = self.psi.psi2 + self.psi.psi3 * xi;
            let log_change = log_logistic(-eta);
            let row = &mut scratch.log_prior[k * n_support..(k + 1) * n_support];
            for (slot, loc) in row.iter_mut().zip(&self.location_log) {
                *slot = lw + loc + log_change;
            }
            row[n_support - 1] = lw + log_logistic(eta);
            scratch.xi[k] = xi;
            scratch.q[k] = logistic(eta);
        }
    }
}

/// Per-thread scratch space.
struct Scratch {
    /// Whether the shared unadapted nodes are already in place.
    placed: bool,
    xi: Vec<f64>,
    q: Vec<f64>,
    /// `log w_k + log P(tau_s | xi_k)`, `[k][s]`.
    log_prior: Vec<f64>,
    /// No-change residuals `r0[k][j]`.
    r0: Vec<f64>,
    /// Lattice log terms, then normalized weights, `[s][k]`.
    lattice: Vec<f64>,
    /// Shift corrections suffix sum for the current node, indexed by item.
    suffix: Vec<f64>,
    /// `sum_{tau < j} p[tau, k]` for the current node, indexed by item.
    before: Vec<f64>,
}

impl Scratch {
    fn new(config: &ModelConfig, k: usize) -> Self {
        let j = config.n_items();
        Self {
            placed: false,
            xi: vec![0.0; k],
            q: vec![0.0; k],
            log_prior: vec![0.0; k * config.n_support()],
            r0: vec![0.0; k * j],
            lattice: vec![0.0; config.n_support() * k],
            suffix: vec![0.0; j + 1],
            before: vec![0.0; j],
        }
    }
}

/// Fills `scratch.lattice` with normalized weights and returns the
/// respondent's log-likelihood contribution.
fn respondent_lattice(prep: &Prepared<'_>, y: &[f64], scratch: &mut Scratch, index: usize) -> Result<f64> {
    prep.place_nodes(index, scratch);
    lattice_at_placed_nodes(prep, y, scratch, index)
}

fn lattice_at_placed_nodes(prep: &Prepared<'_>, y: &[f64], scratch: &mut Scratch, index: usize) -> Result<f64> {
    let config = prep.config;
    let n_items = config.n_items();
    let c = config.boundary();
    let n_support = config.n_support();
    let n_nodes = prep.grid.len();
    let beta = prep.items.beta();
    let alpha = prep.items.alpha();
    let gamma = prep.items.gamma();
    let const_term: f64 = -0.5 * LN_2PI * n_items as f64 - prep.log_sigma.iter().sum::<f64>();

    let mut max = f64::NEG_INFINITY;
    for k in 0..n_nodes {
        let xi = scratch.xi[k];
        let r0 = &mut scratch.r0[k * n_items..(k + 1) * n_items];
        let mut base = const_term;
        for j in 0..n_items {
            let r = y[j] - beta[j] + alpha[j] * xi;
            r0[j] = r;
            base -= 0.5 * r * r * prep.inv_var[j];
        }
        // suffix[t] = sum over 0-based items j >= t of the log-density change
        // caused by shifting item j; tau (1-based) shifts items j >= tau.
        scratch.suffix[n_items] = 0.0;
        for j in (0..n_items).rev() {
            let g = gamma[j];
            let delta = g * (2.0 * r0[j] - g) * 0.5 * prep.inv_var[j];
            scratch.suffix[j] = scratch.suffix[j + 1] + delta;
        }
        let prior = &scratch.log_prior[k * n_support..(k + 1) * n_support];
        for s in 0..n_support {
            let tau = c + 1 + s;
            let v = base + scratch.suffix[tau] + prior[s];
            scratch.lattice[s * n_nodes + k] = v;
            if v > max {
                max = v;
            }
        }
    }
    if !max.is_finite() {
        return Err(Error::Estimation {
            respondent: index,
            message: format!("lattice maximum is {max}"),
        });
    }
    let mut total = 0.0;
    for v in scratch.lattice.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    let ll = max + total.ln();
    if !ll.is_finite() {
        return Err(Error::Estimation {
            respondent: index,
            message: "non-finite log-likelihood contribution".into(),
        });
    }
    let inv_total = 1.0 / total;
    scratch.lattice.iter_mut().for_each(|v| *v *= inv_total);
    Ok(ll)
}

/// Adds respondent `i`'s score to `grad`, using the normalized lattice
/// currently held in `scratch`.
fn accumulate_score(prep: &Prepared<'_>, scratch: &mut Scratch, grad: &mut [f64]) {
    let config = prep.config;
    let layout = prep.layout;
    let n_items = config.n_items();
    let c = config.boundary();
    let n_support = config.n_support();
    let n_nodes = prep.grid.len();
    let gamma = prep.items.gamma();
    let first_gamma = config.first_gamma_item() - 1;
    let last = n_support - 1;

    let mut psi1 = 0.0;
    let mut psi2 = 0.0;
    let mut psi3 = 0.0;
    for k in 0..n_nodes {
        let xi = scratch.xi[k];
        // before[j]: posterior mass on change-points tau <= j (0-based item j
        // is post-change). tau = c+1+s first shifts 0-based item c+1+s;
        // entries j <= c stay zero.
        let mut cum = 0.0;
        let mut node_total = 0.0;
        for s in 0..n_support {
            let p = scratch.lattice[s * n_nodes + k];
            node_total += p;
            if s < last {
                psi1 += p * (s as f64 - prep.location_mean);
            }
            cum += p;
            if c + 1 + s < n_items {
                scratch.before[c + 1 + s] = cum;
            }
        }
        let p_no = scratch.lattice[last * n_nodes + k];
        let qk = scratch.q[k];
        psi2 += p_no - qk * node_total;
        psi3 += xi * (p_no - qk * node_total);

        let r0 = &scratch.r0[k * n_items..(k + 1) * n_items];
        for j in 0..n_items {
            let r = r0[j];
            let iv = prep.inv_var[j];
            let g = gamma[j];
            let shifted = scratch.before[j];
            let mean_r = node_total * r - g * shifted;
            grad[layout.beta(j)] += mean_r * iv;
            grad[layout.alpha(j)] -= xi * mean_r * iv;
            if j >= first_gamma {
                grad[layout.gamma(j - first_gamma)] += shifted * (r - g) * iv;
            }
            let mean_r2 = node_total * r * r + shifted * g * (g - 2.0 * r);
            grad[layout.log_sigma(j)] += mean_r2 * iv - node_total;
        }
    }
    grad[layout.psi1()] += psi1;
    grad[layout.psi2()] += psi2;
    grad[layout.psi3()] += psi3;
}

/// Marginal log-likelihood and score evaluator for one dataset.
pub struct Likelihood<'a> {
    data: &'a RtMatrix,
    grid: &'a QuadratureGrid,
    config: &'a ModelConfig,
    adaptation: Option<&'a Adaptation>,
    reduction: Reduction,
}

impl<'a> Likelihood<'a> {
    pub fn new(data: &'a RtMatrix, grid: &'a QuadratureGrid, config: &'a ModelConfig) -> Result<Self> {
        data.check_config(config)?;
        Ok(Self {
            data,
            grid,
            config,
            adaptation: None,
            reduction: Reduction::Ordered,
        })
    }

    /// Integrates each respondent on its own placement of the grid.
    pub fn with_adaptation(mut self, adaptation: &'a Adaptation) -> Result<Self> {
        if adaptation.len() != self.data.n_respondents() {
            return Err(Error::config(format!(
                "adaptation covers {} respondents, data has {}",
                adaptation.len(),
                self.data.n_respondents()
            )));
        }
        self.adaptation = Some(adaptation);
        Ok(self)
    }

    pub fn adaptation(&self) -> Option<&Adaptation> {
        self.adaptation
    }

    /// Centers each respondent's nodes on the posterior mean of `xi` at
    /// `theta` and scales them by its posterior sd, iterating from the
    /// current placement until the moments settle.
    pub fn adapt(&self, theta: &ParamVector) -> Result<Adaptation> {
        const MAX_ROUNDS: usize = 30;
        let prep = Prepared::new(theta, self.grid, None, self.config)?;
        let n = self.data.n_respondents();
        let n_nodes = self.grid.len();
        let start = self.adaptation.cloned().unwrap_or_else(|| Adaptation::identity(n));
        let run = |range: std::ops::Range<usize>| -> Result<Vec<(f64, f64)>> {
            let mut scratch = Scratch::new(self.config, n_nodes);
            range
                .map(|i| {
                    let (mut center, mut scale) = (start.center[i], start.scale[i]);
                    for _ in 0..MAX_ROUNDS {
                        prep.place_at(center, scale, &mut scratch);
                        lattice_at_placed_nodes(&prep, self.data.row(i), &mut scratch, i)?;
                        let (mean, var) = node_moments(&scratch, n_nodes);
                        let next = var.sqrt().max(MIN_SCALE);
                        let settled = (mean - center).abs() <= 1e-3 * scale && (next / scale).ln().abs() <= 1e-3;
                        center = mean;
                        scale = next;
                        if settled {
                            break;
                        }
                    }
                    Ok((center, scale))
                })
                .collect()
        };
        let parts: Vec<Result<Vec<(f64, f64)>>> = chunk_ranges(n).into_par_iter().map(run).collect();
        let mut center = Vec::with_capacity(n);
        let mut scale = Vec::with_capacity(n);
        for part in parts {
            for (c, s) in part? {
                center.push(c);
                scale.push(s);
            }
        }
        Adaptation::new(center, scale)
    }

    pub fn with_reduction(mut self, reduction: Reduction) -> Self {
        self.reduction = reduction;
        self
    }

    pub fn config(&self) -> &ModelConfig {
        self.config
    }

    pub fn grid(&self) -> &QuadratureGrid {
        self.grid
    }

    pub fn data(&self) -> &RtMatrix {
        self.data
    }

    pub fn dim(&self) -> usize {
        ParamLayout::new(self.config).dim()
    }

    pub fn loglik(&self, theta: &ParamVector) -> Result<f64> {
        Ok(self.evaluate(theta, false)?.0)
    }

    pub fn loglik_and_score(&self, theta: &ParamVector) -> Result<(f64, Vec<f64>)> {
        let (ll, grad) = self.evaluate(theta, true)?;
        Ok((ll, grad.expect("gradient requested")))
    }

    /// Per-respondent log-likelihood contributions.
    pub fn contributions(&self, theta: &ParamVector) -> Result<Vec<f64>> {
        let prep = Prepared::new(theta, self.grid, self.adaptation, self.config)?;
        let mut scratch = Scratch::new(self.config, self.grid.len());
        (0..self.data.n_respondents())
            .map(|i| respondent_lattice(&prep, self.data.row(i), &mut scratch, i))
            .collect()
    }

    pub fn posterior_weights(&self, theta: &ParamVector) -> Result<Vec<PosteriorWeights>> {
        let prep = Prepared::new(theta, self.grid, self.adaptation, self.config)?;
        let n = self.data.n_respondents();
        let run = |range: std::ops::Range<usize>| -> Result<Vec<PosteriorWeights>> {
            let mut scratch = Scratch::new(self.config, self.grid.len());
            range
                .map(|i| {
                    respondent_lattice(&prep, self.data.row(i), &mut scratch, i)?;
                    Ok(PosteriorWeights {
                        n_support: self.config.n_support(),
                        n_nodes: self.grid.len(),
                        values: scratch.lattice.clone(),
                    })
                })
                .collect()
        };
        let chunks: Vec<Result<Vec<PosteriorWeights>>> = chunk_ranges(n).into_par_iter().map(run).collect();
        let mut out = Vec::with_capacity(n);
        for chunk in chunks {
            out.extend(chunk?);
        }
        Ok(out)
    }

    fn evaluate(&self, theta: &ParamVector, want_grad: bool) -> Result<(f64, Option<Vec<f64>>)> {
        let prep = Prepared::new(theta, self.grid, self.adaptation, self.config)?;
        let d = prep.layout.dim();
        let n = self.data.n_respondents();
        let run = |range: std::ops::Range<usize>| -> Result<(f64, Vec<f64>)> {
            let mut scratch = Scratch::new(self.config, self.grid.len());
            let mut grad = if want_grad { vec![0.0; d] } else { Vec::new() };
            let mut ll = 0.0;
            for i in range {
                ll += respondent_lattice(&prep, self.data.row(i), &mut scratch, i)?;
                if want_grad {
                    accumulate_score(&prep, &mut scratch, &mut grad);
                }
            }
            Ok((ll, grad))
        };
        let merge = |a: Result<(f64, Vec<f64>)>, b: Result<(f64, Vec<f64>)>| -> Result<(f64, Vec<f64>)> {
            let (la, mut ga) = a?;
            let (lb, gb) = b?;
            for (x, y) in ga.iter_mut().zip(&gb) {
                *x += y;
            }
            Ok((la + lb, ga))
        };
        let (ll, grad) = match self.reduction {
            Reduction::Ordered => {
                let parts: Vec<Result<(f64, Vec<f64>)>> = chunk_ranges(n).into_par_iter().map(run).collect();
                parts
                    .into_iter()
                    .fold(Ok((0.0, if want_grad { vec![0.0; d] } else { Vec::new() })), merge)?
            }
            Reduction::Unordered => chunk_ranges(n)
                .into_par_iter()
                .map(run)
                .reduce(|| Ok((0.0, if want_grad { vec![0.0; d] } else { Vec::new() })), merge)?,
        };
        Ok((ll, want_grad.then_some(grad)))
    }
}

/// Posterior mean and variance of `xi` from the lattice held in `scratch`.
fn node_moments(scratch: &Scratch, n_nodes: usize) -> (f64, f64) {
    let mut mass = vec![0.0; n_nodes];
    for row in scratch.lattice.chunks_exact(n_nodes) {
        for (m, v) in mass.iter_mut().zip(row) {
            *m += v;
        }
    }
    let mean: f64 = mass.iter().zip(&scratch.xi).map(|(m, x)| m * x).sum();
    let var: f64 = mass.iter().zip(&scratch.xi).map(|(m, x)| m * (x - mean).powi(2)).sum();
    (mean, var)
}

fn chunk_ranges(n: usize) -> Vec<std::ops::Range<usize>> {
    (0..n.div_ceil(CHUNK))
        .map(|c| c * CHUNK..((c + 1) * CHUNK).min(n))
        .collect()
}

/// `sum_i log sum_{tau, k} w_k f(y_i | xi_k, tau) P(tau | xi_k)`.
pub fn marginal_loglik(
    data: &RtMatrix,
    theta: &ParamVector,
    grid: &QuadratureGrid,
    config: &ModelConfig,
) -> Result<f64> {
    Likelihood::new(data, grid, config)?.loglik(theta)
}

/// Gradient of [`marginal_loglik`] with respect to the free parameters.
pub fn score(data: &RtMatrix, theta: &ParamVector, grid: &QuadratureGrid, config: &ModelConfig) -> Result<Vec<f64>> {
    Ok(Likelihood::new(data, grid, config)?.loglik_and_score(theta)?.1)
}

/// Normalized lattice weights `p_{tau k}` for one response vector.
pub fn posterior_weights(
    y: &[f64],
    theta: &ParamVector,
    grid: &QuadratureGrid,
    config: &ModelConfig,
) -> Result<PosteriorWeights> {
    if y.len() != config.n_items() {
        return Err(Error::data("response vector length does not match J"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("response vector contains non-finite values"));
    }
    let prep = Prepared::new(theta, grid, None, config)?;
    let mut scratch = Scratch::new(config, grid.len());
    respondent_lattice(&prep, y, &mut scratch, 0)?;
    let weights = PosteriorWeights {
        n_support: config.n_support(),
        n_nodes: grid.len(),
        values: scratch.lattice,
    };
    debug_assert!((weights.values.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    Ok(weights)
}

//! Two-stage marginal maximum likelihood, observed-information standard
//! errors, and the tests built on them.

use log::{debug, warn};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::lbfgs::{self, LbfgsOptions, Outcome};
use crate::likelihood::{Adaptation, Likelihood, Reduction};
use crate::model::{ModelConfig, RtMatrix};
use crate::numeric::logistic;
use crate::params::{ParamLayout, ParamVector};
use crate::quadrature::{QuadratureGrid, DEFAULT_NODES};

/// How the quadrature rule is placed for each respondent during fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuadratureMode {
    /// The standard-normal grid for everyone.
    Fixed,
    /// The grid recentred and rescaled on each respondent's posterior of
    /// `xi`, refreshed until it is consistent with the returned estimate.
    #[default]
    Adaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Sup-norm of the unpenalized score that counts as converged.
    pub gradient_tolerance: f64,
    pub ridge_gamma: f64,
    pub ridge_psi1: f64,
    pub quadrature_nodes: usize,
    pub quadrature: QuadratureMode,
    /// Also start from the initializer with the sign of every `gamma`
    /// flipped. Change effects of either sign leave a second mode in which
    /// change and no-change swap roles.
    pub mirror_start: bool,
    /// Extra jittered starts beyond the deterministic ones.
    pub multistart: usize,
    pub seed: u64,
    pub reduction: Reduction,
    /// Compute the observed information and standard errors.
    pub standard_errors: bool,
    /// Coordinates held at the given values throughout.
    pub fixed: Vec<(usize, f64)>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            gradient_tolerance: 1e-6,
            ridge_gamma: 0.01,
            ridge_psi1: 0.01,
            quadrature_nodes: DEFAULT_NODES,
            quadrature: QuadratureMode::Adaptive,
            mirror_start: true,
            multistart: 0,
            seed: 0,
            reduction: Reduction::Ordered,
            standard_errors: true,
            fixed: Vec::new(),
        }
    }
}

impl FitOptions {
    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::config("max_iterations must be positive"));
        }
        if !(self.gradient_tolerance > 0.0 && self.gradient_tolerance.is_finite()) {
            return Err(Error::config("gradient_tolerance must be positive"));
        }
        if !(self.ridge_gamma >= 0.0 && self.ridge_psi1 >= 0.0)
            || !self.ridge_gamma.is_finite()
            || !self.ridge_psi1.is_finite()
        {
            return Err(Error::config("ridge weights must be finite and nonnegative"));
        }
        if self.quadrature_nodes < 2 {
            return Err(Error::config("need at least 2 quadrature nodes"));
        }
        let d = ParamLayout::new(config).dim();
        for &(r, v) in &self.fixed {
            if r >= d || !v.is_finite() {
                return Err(Error::config(format!("invalid fixed coordinate ({r}, {v})")));
            }
        }
        Ok(())
    }

    /// These options with one more coordinate held fixed.
    pub fn with_fixed(&self, index: usize, value: f64) -> Self {
        let mut out = self.clone();
        out.fixed.retain(|(r, _)| *r != index);
        out.fixed.push((index, value));
        out
    }
}

/// Optimizer bookkeeping for one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub iterations: usize,
    pub evaluations: usize,
    /// Quadrature placements used (1 without adaptation).
    pub placements: usize,
    pub objective: f64,
    pub gradient_norm: f64,
    pub status: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub theta_hat: ParamVector,
    pub loglik: f64,
    pub converged: bool,
    pub n_iterations: usize,
    /// Inverse observed information; rows and columns of fixed or
    /// unidentified coordinates are zero.
    pub covariance: DMatrix<f64>,
    /// `None` where the information matrix does not identify the
    /// coordinate, or the coordinate was held fixed.
    pub standard_errors: Vec<Option<f64>>,
    pub gradient_norm_at_solution: f64,
    pub stages: Vec<StageReport>,
    /// Index of the winning start (0 is the deterministic initializer, 1
    /// its mirror when enabled).
    pub start: usize,
    pub quadrature_nodes: usize,
    /// Per-respondent placement at the estimate, when fitted adaptively.
    pub adaptation: Option<Adaptation>,
    pub fixed: Vec<(usize, f64)>,
}

impl FitResult {
    pub fn standard_error(&self, index: usize) -> Option<f64> {
        self.standard_errors.get(index).copied().flatten()
    }

    pub fn grid(&self) -> Result<QuadratureGrid> {
        QuadratureGrid::gauss_hermite(self.quadrature_nodes)
    }

    /// Evaluator matching the one the estimate was computed with.
    pub fn likelihood<'a>(
        &'a self,
        data: &'a RtMatrix,
        grid: &'a QuadratureGrid,
        config: &'a ModelConfig,
    ) -> Result<Likelihood<'a>> {
        let lik = Likelihood::new(data, grid, config)?;
        match &self.adaptation {
            Some(a) => lik.with_adaptation(a),
            None => Ok(lik),
        }
    }

    /// Delta-method interval for the baseline no-change probability.
    pub fn no_change_probability_ci(&self, config: &ModelConfig, level: f64) -> Result<NoChangeInterval> {
        let r = ParamLayout::new(config).psi2();
        let se = self
            .standard_error(r)
            .ok_or_else(|| Error::Numerical("standard error of psi2 is undefined".into()))?;
        no_change_probability_ci(self.theta_hat.values()[r], se, level)
    }
}

/// Deterministic starting values.
pub fn initialize(data: &RtMatrix, config: &ModelConfig) -> Result<ParamVector> {
    data.check_config(config)?;
    let n = data.n_respondents();
    if n < 2 {
        return Err(Error::DegenerateData(format!("need at least 2 respondents, got {n}")));
    }
    let layout = ParamLayout::new(config);
    let mut values = vec![0.0; layout.dim()];
    for j in 0..config.n_items() {
        let mean = data.column(j).sum::<f64>() / n as f64;
        let var = data.column(j).map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        if !(var > 0.0) {
            return Err(Error::DegenerateData(format!("item {} has zero variance", j + 1)));
        }
        values[layout.beta(j)] = mean;
        values[layout.alpha(j)] = 0.5;
        values[layout.log_sigma(j)] = 0.5 * var.ln();
    }
    for r in layout.gamma_range() {
        values[r] = -0.1;
    }
    values[layout.psi2()] = 1.5;
    ParamVector::from_values(config, values)
}

/// Maximum-possible spread of the uniform jitter applied to extra starts.
const JITTER: f64 = 0.25;
/// Score sup-norm at which the penalized warm start hands over.
const STAGE1_TOLERANCE: f64 = 1e-2;
/// Rounds of re-placement per stage before giving up on consistency.
const MAX_PLACEMENTS: usize = 12;

/// Fits the model from the deterministic initializer, its mirror image in
/// the sign of `gamma` (unless disabled), and any jittered extra starts;
/// returns the best unpenalized optimum.
pub fn fit(data: &RtMatrix, config: &ModelConfig, options: &FitOptions) -> Result<FitResult> {
    let start = initialize(data, config)?;
    let mut starts = vec![start.clone()];
    if options.mirror_start {
        let mut mirrored = start.clone();
        for r in ParamLayout::new(config).gamma_range() {
            mirrored.values_mut()[r] = -mirrored.values()[r];
        }
        starts.push(mirrored);
    }
    starts.extend(jittered(&start, options));
    fit_starts(data, config, options, starts)
}

/// As [`fit`], from `start` and its jittered copies only. Fixed
/// coordinates override the corresponding entries of `start`.
pub fn fit_from(data: &RtMatrix, config: &ModelConfig, options: &FitOptions, start: ParamVector) -> Result<FitResult> {
    let mut starts = vec![start.clone()];
    starts.extend(jittered(&start, options));
    fit_starts(data, config, options, starts)
}

fn jittered(start: &ParamVector, options: &FitOptions) -> Vec<ParamVector> {
    (1..=options.multistart)
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
            rng.set_stream(s as u64);
            let mut x = start.clone();
            for v in x.values_mut() {
                *v += rng.random_range(-JITTER..JITTER);
            }
            x
        })
        .collect()
}

fn fit_starts(
    data: &RtMatrix,
    config: &ModelConfig,
    options: &FitOptions,
    starts: Vec<ParamVector>,
) -> Result<FitResult> {
    options.validate(config)?;
    data.check_config(config)?;
    let grid = QuadratureGrid::gauss_hermite(options.quadrature_nodes)?;
    let mut best: Option<(usize, Optimum)> = None;
    let mut first_error = None;
    for (s, mut x0) in starts.into_iter().enumerate() {
        for &(r, v) in &options.fixed {
            x0.values_mut()[r] = v;
        }
        match two_stage(data, config, &grid, options, x0) {
            Ok(opt) => {
                debug!("start {s}: loglik {}", opt.loglik);
                if best.as_ref().is_none_or(|(_, b)| opt.loglik > b.loglik) {
                    best = Some((s, opt));
                }
            }
            Err(e) => {
                warn!("start {s} failed: {e}");
                first_error.get_or_insert(e);
            }
        }
    }
    let Some((start_index, opt)) = best else {
        return Err(first_error.unwrap_or_else(|| Error::Numerical("no starts to fit from".into())));
    };

    let lik = match &opt.adaptation {
        Some(a) => Likelihood::new(data, &grid, config)?.with_adaptation(a)?,
        None => Likelihood::new(data, &grid, config)?,
    }
    .with_reduction(options.reduction);
    let free = free_coordinates(config, options);
    let d = opt.theta.len();
    let information = if options.standard_errors {
        observed_information(&lik, &opt.theta, options.gradient_tolerance)
    } else {
        Err(Error::config("standard errors not requested"))
    };
    let (covariance, standard_errors) = match information {
        Ok(info) => invert_information(&info, &free),
        Err(_) if !options.standard_errors => (DMatrix::zeros(d, d), vec![None; d]),
        Err(e) => {
            warn!("observed information unavailable: {e}");
            (DMatrix::zeros(d, d), vec![None; d])
        }
    };
    Ok(FitResult {
        theta_hat: opt.theta,
        loglik: opt.loglik,
        converged: opt.gradient_norm < options.gradient_tolerance,
        n_iterations: opt.stages.iter().map(|s| s.iterations).sum(),
        covariance,
        standard_errors,
        gradient_norm_at_solution: opt.gradient_norm,
        stages: opt.stages,
        start: start_index,
        quadrature_nodes: options.quadrature_nodes,
        adaptation: opt.adaptation,
        fixed: options.fixed.clone(),
    })
}

struct Optimum {
    theta: ParamVector,
    loglik: f64,
    gradient_norm: f64,
    stages: Vec<StageReport>,
    adaptation: Option<Adaptation>,
}

fn free_coordinates(config: &ModelConfig, options: &FitOptions) -> Vec<usize> {
    let d = ParamLayout::new(config).dim();
    (0..d).filter(|r| !options.fixed.iter().any(|(f, _)| f == r)).collect()
}

#[derive(Clone, Copy)]
struct Penalty {
    gamma: f64,
    psi1: f64,
}

fn two_stage(
    data: &RtMatrix,
    config: &ModelConfig,
    grid: &QuadratureGrid,
    options: &FitOptions,
    x0: ParamVector,
) -> Result<Optimum> {
    let free = free_coordinates(config, options);
    let base = Likelihood::new(data, grid, config)?.with_reduction(options.reduction);
    let adaptive = options.quadrature == QuadratureMode::Adaptive;
    let mut adaptation = if adaptive { Some(base.adapt(&x0)?) } else { None };

    let penalized = Penalty {
        gamma: options.ridge_gamma,
        psi1: options.ridge_psi1,
    };
    let mut stages = Vec::with_capacity(2);
    let (stage1, report1) = run_stage(
        &base,
        &mut adaptation,
        &free,
        x0,
        penalized,
        STAGE1_TOLERANCE.max(options.gradient_tolerance),
        options,
    )?;
    stages.push(report1);
    let unpenalized = Penalty { gamma: 0.0, psi1: 0.0 };
    let (theta, report2) = run_stage(
        &base,
        &mut adaptation,
        &free,
        stage1,
        unpenalized,
        options.gradient_tolerance,
        options,
    )?;
    stages.push(report2);

    let lik = match &adaptation {
        Some(a) => Likelihood::new(data, grid, config)?.with_adaptation(a)?,
        None => Likelihood::new(data, grid, config)?,
    }
    .with_reduction(options.reduction);
    let (loglik, grad) = lik.loglik_and_score(&theta)?;
    let gradient_norm = free.iter().fold(0.0_f64, |m, &r| m.max(grad[r].abs()));
    Ok(Optimum {
        theta,
        loglik,
        gradient_norm,
        stages,
        adaptation,
    })
}

/// Minimizes the negative penalized log-likelihood over the free
/// coordinates; under adaptation, re-places the grid at each optimum until
/// the score under the refreshed placement is also below tolerance.
fn run_stage(
    base: &Likelihood<'_>,
    adaptation: &mut Option<Adaptation>,
    free: &[usize],
    start: ParamVector,
    penalty: Penalty,
    tolerance: f64,
    options: &FitOptions,
) -> Result<(ParamVector, StageReport)> {
    let config = base.config();
    let layout = ParamLayout::new(config);
    let lbfgs_options = LbfgsOptions {
        max_iterations: options.max_iterations,
        gradient_tolerance: tolerance,
        ..LbfgsOptions::default()
    };
    let mut theta = start;
    let mut iterations = 0;
    let mut evaluations = 0;
    let mut placements = 0;
    let outcome: Outcome = loop {
        placements += 1;
        let lik = match adaptation.as_ref() {
            Some(a) => Likelihood::new(base.data(), base.grid(), config)?.with_adaptation(a)?,
            None => Likelihood::new(base.data(), base.grid(), config)?,
        }
        .with_reduction(options.reduction);
        let template = theta.clone();
        let objective = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            let mut full = template.clone();
            for (&r, v) in free.iter().zip(x) {
                full.values_mut()[r] = *v;
            }
            let (ll, grad) = lik.loglik_and_score(&full)?;
            let (pen, pen_grad) = penalty_terms(&full, &layout, penalty);
            let value = -(ll - pen);
            let g = free.iter().map(|&r| -(grad[r] - pen_grad[r])).collect();
            Ok((value, g))
        };
        let x0: Vec<f64> = free.iter().map(|&r| theta.values()[r]).collect();
        let budget = LbfgsOptions {
            max_iterations: lbfgs_options.max_iterations.saturating_sub(iterations).max(1),
            ..lbfgs_options
        };
        let outcome = lbfgs::minimize(x0, &budget, objective)?;
        iterations += outcome.iterations;
        evaluations += outcome.evaluations;
        for (&r, v) in free.iter().zip(&outcome.x) {
            theta.values_mut()[r] = *v;
        }
        debug!(
            "stage placement {placements}: {:?} after {} iterations, objective {}",
            outcome.status, outcome.iterations, outcome.value
        );
        let done = match adaptation.as_mut() {
            None => true,
            Some(current) => {
                let refreshed = Likelihood::new(base.data(), base.grid(), config)?
                    .with_adaptation(current)?
                    .adapt(&theta)?;
                *current = refreshed;
                let lik = Likelihood::new(base.data(), base.grid(), config)?
                    .with_adaptation(current)?
                    .with_reduction(options.reduction);
                let (_, grad) = lik.loglik_and_score(&theta)?;
                let (_, pen_grad) = penalty_terms(&theta, &layout, penalty);
                let norm = free.iter().fold(0.0_f64, |m, &r| m.max((grad[r] - pen_grad[r]).abs()));
                norm < tolerance || placements >= MAX_PLACEMENTS || iterations >= options.max_iterations
            }
        };
        if done {
            break outcome;
        }
    };
    Ok((
        theta,
        StageReport {
            iterations,
            evaluations,
            placements,
            objective: -outcome.value,
            gradient_norm: outcome.gradient_norm(),
            status: format!("{:?}", outcome.status),
        },
    ))
}

fn penalty_terms(theta: &ParamVector, layout: &ParamLayout, penalty: Penalty) -> (f64, Vec<f64>) {
    let v = theta.values();
    let mut grad = vec![0.0; v.len()];
    let mut value = 0.0;
    if penalty.gamma > 0.0 {
        for r in layout.gamma_range() {
            value += penalty.gamma * v[r] * v[r];
            grad[r] = 2.0 * penalty.gamma * v[r];
        }
    }
    if penalty.psi1 > 0.0 {
        let r = layout.psi1();
        value += penalty.psi1 * v[r] * v[r];
        grad[r] = 2.0 * penalty.psi1 * v[r];
    }
    (value, grad)
}

/// Negative Hessian of the log-likelihood at `theta`, by central
/// differences of the analytic score, symmetrized.
pub fn observed_information(lik: &Likelihood<'_>, theta: &ParamVector, tolerance: f64) -> Result<DMatrix<f64>> {
    let d = theta.len();
    let (_, g0) = lik.loglik_and_score(theta)?;
    let norm = lbfgs::sup_norm(&g0);
    if norm >= 10.0 * tolerance {
        warn!("observed information at a non-stationary point (score sup-norm {norm:.3e})");
    }
    let mut hessian = DMatrix::zeros(d, d);
    for r in 0..d {
        let h = 1e-5_f64.max(1e-5 * theta.values()[r].abs());
        let mut plus = theta.clone();
        plus.values_mut()[r] += h;
        let mut minus = theta.clone();
        minus.values_mut()[r] -= h;
        let (_, gp) = lik.loglik_and_score(&plus)?;
        let (_, gm) = lik.loglik_and_score(&minus)?;
        for c in 0..d {
            hessian[(c, r)] = (gp[c] - gm[c]) / (2.0 * h);
        }
    }
    let info = -(&hessian + hessian.transpose()) * 0.5;
    if info.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("observed information has non-finite entries".into()));
    }
    Ok(info)
}

/// Relative eigenvalue below which a direction counts as unidentified.
const NULL_EIGENVALUE: f64 = 1e-10;
/// Squared loading on unidentified directions that voids a coordinate's SE.
const NULL_LOADING: f64 = 1e-6;

/// Covariance and standard errors from the information restricted to
/// `free`. Directions with (near-)zero or negative curvature are left out
/// of the inverse, and any coordinate loading on them gets no SE.
pub fn invert_information(info: &DMatrix<f64>, free: &[usize]) -> (DMatrix<f64>, Vec<Option<f64>>) {
    let d = info.nrows();
    let m = free.len();
    let mut covariance = DMatrix::zeros(d, d);
    let mut errors = vec![None; d];
    if m == 0 {
        return (covariance, errors);
    }
    let sub = DMatrix::from_fn(m, m, |a, b| info[(free[a], free[b])]);
    let eigen = SymmetricEigen::new(sub);
    let top = eigen.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(*v));
    let cutoff = NULL_EIGENVALUE * top.max(f64::MIN_POSITIVE);
    let mut sub_cov = DMatrix::zeros(m, m);
    let mut null_loading = vec![0.0; m];
    for (k, &lambda) in eigen.eigenvalues.iter().enumerate() {
        let v = eigen.eigenvectors.column(k);
        if lambda > cutoff {
            sub_cov += (v * v.transpose()) / lambda;
        } else {
            for a in 0..m {
                null_loading[a] += v[a] * v[a];
            }
        }
    }
    for a in 0..m {
        for b in 0..m {
            covariance[(free[a], free[b])] = 0.5 * (sub_cov[(a, b)] + sub_cov[(b, a)]);
        }
        let var = sub_cov[(a, a)];
        if null_loading[a] <= NULL_LOADING && var > 0.0 {
            errors[free[a]] = Some(var.sqrt());
        }
    }
    (covariance, errors)
}

/// One-sided Wald test of `gamma_j < 0` for one item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaldTest {
    /// 1-based item number.
    pub item: usize,
    pub estimate: f64,
    pub se: Option<f64>,
    pub z: Option<f64>,
    pub p_raw: Option<f64>,
    pub p_holm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaldTestResult {
    pub tests: Vec<WaldTest>,
}

/// Wald tests for every free post-change effect, Holm-adjusted over the
/// tests whose SE is defined.
pub fn wald_gamma_tests(fit: &FitResult, config: &ModelConfig) -> WaldTestResult {
    let layout = ParamLayout::new(config);
    let normal = standard_normal();
    let first = config.first_gamma_item();
    let mut tests: Vec<WaldTest> = layout
        .gamma_range()
        .enumerate()
        .map(|(g, r)| {
            let estimate = fit.theta_hat.values()[r];
            let se = fit.standard_error(r).filter(|s| *s > 0.0);
            let z = se.map(|s| estimate / s);
            WaldTest {
                item: first + g,
                estimate,
                se,
                z,
                p_raw: z.map(|z| normal.cdf(z)),
                p_holm: None,
            }
        })
        .collect();
    let defined: Vec<usize> = (0..tests.len()).filter(|&t| tests[t].p_raw.is_some()).collect();
    let raw: Vec<f64> = defined.iter().map(|&t| tests[t].p_raw.unwrap_or(1.0)).collect();
    for (&t, p) in defined.iter().zip(holm(&raw)) {
        tests[t].p_holm = Some(p);
    }
    WaldTestResult { tests }
}

/// Holm step-down adjusted p-values, returned in input order.
pub fn holm(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
    let mut adjusted = vec![0.0; m];
    let mut running = 0.0_f64;
    for (rank, &i) in order.iter().enumerate() {
        let v = ((m - rank) as f64 * p[i]).min(1.0);
        running = running.max(v);
        adjusted[i] = running;
    }
    adjusted
}

/// Which change-point coefficient a likelihood-ratio test removes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PsiCoefficient {
    /// Location slope.
    Psi1,
    /// Speed dependence of the no-change probability.
    Psi3,
}

impl PsiCoefficient {
    pub fn index(self, layout: &ParamLayout) -> usize {
        match self {
            Self::Psi1 => layout.psi1(),
            Self::Psi3 => layout.psi3(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrtResult {
    pub constrained_loglik: f64,
    pub unconstrained_loglik: f64,
    pub statistic: f64,
    pub p_value: f64,
}

/// Slack below zero tolerated before a negative statistic is reported.
const LRT_SLACK: f64 = 1e-6;

impl LrtResult {
    pub fn from_logliks(unconstrained: f64, constrained: f64) -> Self {
        let raw = 2.0 * (unconstrained - constrained);
        if raw < -LRT_SLACK {
            warn!(
                "constrained fit beats the full fit by {:.3e}; clamping the statistic",
                -raw / 2.0
            );
        }
        let statistic = raw.max(0.0);
        let p_value = ChiSquared::new(1.0).map(|chi| chi.sf(statistic)).unwrap_or(f64::NAN);
        Self {
            constrained_loglik: constrained,
            unconstrained_loglik: unconstrained,
            statistic,
            p_value: if statistic == 0.0 { 1.0 } else { p_value },
        }
    }
}

/// Refits with the chosen coefficient frozen at zero, warm-started from
/// the full estimate, and compares log-likelihoods.
pub fn lrt_psi(
    data: &RtMatrix,
    config: &ModelConfig,
    options: &FitOptions,
    which: PsiCoefficient,
    full: &FitResult,
) -> Result<LrtResult> {
    if !full.converged {
        warn!("likelihood-ratio test against a full fit that did not converge");
    }
    let index = which.index(&ParamLayout::new(config));
    let constrained_options = FitOptions {
        standard_errors: false,
        ..options.with_fixed(index, 0.0)
    };
    let constrained = fit_from(data, config, &constrained_options, full.theta_hat.clone())
        .map_err(|e| Error::ConstrainedRefit(format!("{which:?} = 0: {e}")))?;
    if !constrained.converged {
        let detail: Vec<String> = constrained
            .stages
            .iter()
            .enumerate()
            .map(|(i, s)| {
                format!(
                    "stage {}: {} after {} iterations, score sup-norm {:.3e}",
                    i + 1,
                    s.status,
                    s.iterations,
                    s.gradient_norm
                )
            })
            .collect();
        return Err(Error::ConstrainedRefit(format!(
            "{which:?} = 0 did not converge; {}",
            detail.join("; ")
        )));
    }
    Ok(LrtResult::from_logliks(full.loglik, constrained.loglik))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoChangeInterval {
    pub estimate: f64,
    pub se: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
}

/// Delta-method interval for `logistic(psi2)`, clamped to `[0, 1]`.
pub fn no_change_probability_ci(psi2: f64, se_psi2: f64, level: f64) -> Result<NoChangeInterval> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::domain(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    if !(se_psi2 >= 0.0 && se_psi2.is_finite() && psi2.is_finite()) {
        return Err(Error::domain("psi2 and its SE must be finite, SE nonnegative"));
    }
    let p = logistic(psi2);
    let se = p * (1.0 - p) * se_psi2;
    let z = standard_normal().inverse_cdf(0.5 + level / 2.0);
    Ok(NoChangeInterval {
        estimate: p,
        se,
        lower: (p - z * se).clamp(0.0, 1.0),
        upper: (p + z * se).clamp(0.0, 1.0),
        level,
    })
}

fn standard_normal() -> Normal {
    Normal::standard()
}

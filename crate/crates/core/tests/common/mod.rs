#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use rtcp::{
    changepoint_pmf, conditional_logdensity, marginal_loglik, ItemParams, LatentState, ModelConfig, ParamVector,
    QuadratureGrid, RtMatrix, StructuralParams,
};

pub struct Instance {
    pub config: ModelConfig,
    pub truth: ParamVector,
    pub data: RtMatrix,
    pub taus: Vec<usize>,
}

/// Draws parameters and data directly from the model, independently of the
/// crate's simulation module.
#[derive(Debug, Clone, Copy)]
pub struct Scale {
    pub alpha: (f64, f64),
    pub gamma: (f64, f64),
    pub sigma: (f64, f64),
}

/// Ranges of the simulation design: sharply peaked posteriors in xi.
pub const SIM_SCALE: Scale = Scale {
    alpha: (0.5, 1.5),
    gamma: (-0.8, 0.8),
    sigma: (0.2, 0.4),
};

/// Noisier items, so the posterior of xi stays broad relative to the
/// spacing of a moderate quadrature grid.
pub const BROAD_SCALE: Scale = Scale {
    alpha: (0.2, 0.5),
    gamma: (-0.8, 0.8),
    sigma: (0.8, 1.2),
};

pub fn instance(seed: u64, n: usize, j: usize, c: usize) -> Instance {
    instance_with(seed, n, j, c, SIM_SCALE)
}

pub fn instance_with(seed: u64, n: usize, j: usize, c: usize, scale: Scale) -> Instance {
    let config = ModelConfig::new(j, c).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta: Vec<f64> = (0..j).map(|_| rng.random_range(3.0..4.0)).collect();
    let alpha: Vec<f64> = (0..j)
        .map(|_| {
            Uniform::new_inclusive(scale.alpha.0, scale.alpha.1)
                .unwrap()
                .sample(&mut rng)
        })
        .collect();
    let gamma: Vec<f64> = (0..config.n_free_gamma())
        .map(|_| rng.random_range(scale.gamma.0..scale.gamma.1))
        .collect();
    let sigma: Vec<f64> = (0..j)
        .map(|_| {
            Uniform::new_inclusive(scale.sigma.0, scale.sigma.1)
                .unwrap()
                .sample(&mut rng)
        })
        .collect();
    let psi = StructuralParams::new(0.2, 0.5, -0.5).unwrap();
    let items = ItemParams::new(&config, beta, alpha, &gamma, sigma).unwrap();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut rows = Vec::with_capacity(n);
    let mut taus = Vec::with_capacity(n);
    for _ in 0..n {
        let xi: f64 = normal.sample(&mut rng);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut tau = j;
        for t in config.support() {
            acc += changepoint_pmf(t, xi, &psi, &config).unwrap();
            if u < acc {
                tau = t;
                break;
            }
        }
        let row = (0..j)
            .map(|m| {
                let shift = if m + 1 > tau { items.gamma()[m] } else { 0.0 };
                items.beta()[m] - items.alpha()[m] * xi + shift + items.sigma()[m] * normal.sample(&mut rng)
            })
            .collect();
        rows.push(row);
        taus.push(tau);
    }
    Instance {
        config,
        truth: ParamVector::pack(&items, &psi, &config),
        data: RtMatrix::from_log_rows(rows).unwrap(),
        taus,
    }
}

/// Truth perturbed by uniform noise of half-width `scale`.
pub fn perturbed(inst: &Instance, seed: u64, scale: f64) -> ParamVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let values = inst
        .truth
        .values()
        .iter()
        .map(|v| v + rng.random_range(-scale..scale))
        .collect();
    ParamVector::from_values(&inst.config, values).unwrap()
}

/// Sum of independent normal log-densities, written out longhand.
pub fn normal_logpdf(x: f64, mean: f64, sd: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI).ln() - sd.ln() - (x - mean).powi(2) / (2.0 * sd * sd)
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn central_difference(
    data: &RtMatrix,
    theta: &ParamVector,
    grid: &QuadratureGrid,
    cfg: &ModelConfig,
    r: usize,
    h: f64,
) -> f64 {
    let mut plus = theta.clone();
    plus.values_mut()[r] += h;
    let mut minus = theta.clone();
    minus.values_mut()[r] -= h;
    (marginal_loglik(data, &plus, grid, cfg).unwrap() - marginal_loglik(data, &minus, grid, cfg).unwrap()) / (2.0 * h)
}

/// Trapezoid integration of the marginal likelihood on a dense grid,
/// evaluated with the model-level density and pmf only.
pub fn dense_trapezoid_loglik(inst: &Instance, theta: &ParamVector, points: usize, half_width: f64) -> f64 {
    let (items, psi) = theta.unpack(&inst.config).unwrap();
    let h = 2.0 * half_width / (points - 1) as f64;
    let mut total = 0.0;
    for y in inst.data.rows() {
        let mut terms = Vec::with_capacity(points * inst.config.n_support());
        for m in 0..points {
            let xi = -half_width + m as f64 * h;
            let end_weight = if m == 0 || m == points - 1 { 0.5 } else { 1.0 };
            let log_phi = -0.5 * xi * xi - 0.5 * (2.0 * std::f64::consts::PI).ln();
            for tau in inst.config.support() {
                let state = LatentState::new(xi, tau, &inst.config).unwrap();
                terms.push(
                    (end_weight * h).ln()
                        + log_phi
                        + conditional_logdensity(y, &state, &items, &inst.config).unwrap()
                        + changepoint_pmf(tau, xi, &psi, &inst.config).unwrap().ln(),
                );
            }
        }
        total += log_sum_exp(&terms);
    }
    total
}

/// Plain log-normal RT model without change-points, on the same grid.
pub fn plain_lognormal_loglik(data: &RtMatrix, theta: &ParamVector, grid: &QuadratureGrid, cfg: &ModelConfig) -> f64 {
    let (items, _) = theta.unpack(cfg).unwrap();
    data.rows()
        .map(|y| {
            let terms: Vec<f64> = grid
                .iter()
                .map(|(xi, w)| {
                    w.ln()
                        + y.iter()
                            .enumerate()
                            .map(|(j, v)| normal_logpdf(*v, items.beta()[j] - items.alpha()[j] * xi, items.sigma()[j]))
                            .sum::<f64>()
                })
                .collect();
            log_sum_exp(&terms)
        })
        .sum()
}

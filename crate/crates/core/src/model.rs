//! Domain types of the change-point response-time model and the two
//! building blocks of its likelihood: the change-point probability mass
//! function and the conditional density of a log-RT vector.
//!
//! Items and change-point locations are 1-based throughout the public API,
//! so a change-point `tau` lives in `{c+1, ..., J}` and `tau == J` means the
//! respondent never left the baseline process.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{log_logistic, logistic, normal_logpdf};

/// Test length `J` and boundary `c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    n_items: usize,
    boundary: usize,
}

impl ModelConfig {
    pub fn new(n_items: usize, boundary: usize) -> Result<Self> {
        if n_items < 3 {
            return Err(Error::config(format!(
                "at least 3 items are required, got J = {n_items}"
            )));
        }
        if boundary < 1 || boundary + 1 >= n_items {
            return Err(Error::config(format!(
                "boundary must satisfy 1 <= c < J - 1, got c = {boundary}, J = {n_items}"
            )));
        }
        Ok(Self { n_items, boundary })
    }

    #[inline]
    pub fn n_items(&self) -> usize {
        self.n_items
    }

    #[inline]
    pub fn boundary(&self) -> usize {
        self.boundary
    }

    /// Size of the change-point support `{c+1, ..., J}`, i.e. `J - c`.
    #[inline]
    pub fn n_support(&self) -> usize {
        self.n_items - self.boundary
    }

    /// Number of pre-terminal locations `{c+1, ..., J-1}`.
    #[inline]
    pub fn n_locations(&self) -> usize {
        self.n_items - self.boundary - 1
    }

    /// Number of estimable post-change effects (items `c+2 ..= J`).
    #[inline]
    pub fn n_free_gamma(&self) -> usize {
        self.n_items - self.boundary - 1
    }

    /// First item (1-based) that carries a free `gamma`.
    #[inline]
    pub fn first_gamma_item(&self) -> usize {
        self.boundary + 2
    }

    pub fn support(&self) -> std::ops::RangeInclusive<usize> {
        (self.boundary + 1)..=self.n_items
    }

    pub fn contains(&self, tau: usize) -> bool {
        tau > self.boundary && tau <= self.n_items
    }

    /// Position of `tau` within the support (0 for `c+1`).
    #[inline]
    pub fn support_index(&self, tau: usize) -> usize {
        tau - self.boundary - 1
    }

    pub fn check_tau(&self, tau: usize) -> Result<()> {
        if self.contains(tau) {
            Ok(())
        } else {
            Err(Error::domain(format!(
                "change-point {tau} outside support {{{}, ..., {}}}",
                self.boundary + 1,
                self.n_items
            )))
        }
    }
}

/// Per-item parameters. Post-change effects for items `j <= c+1` are
/// stored as fixed zeros and cannot be set through this type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemParams {
    beta: Vec<f64>,
    alpha: Vec<f64>,
    gamma: Vec<f64>,
    sigma: Vec<f64>,
}

impl ItemParams {
    /// `gamma_free` holds the effects for items `c+2 ..= J`.
    pub fn new(
        config: &ModelConfig,
        beta: Vec<f64>,
        alpha: Vec<f64>,
        gamma_free: &[f64],
        sigma: Vec<f64>,
    ) -> Result<Self> {
        let j = config.n_items();
        if beta.len() != j || alpha.len() != j || sigma.len() != j {
            return Err(Error::config(format!("item parameter vectors must have length {j}")));
        }
        if gamma_free.len() != config.n_free_gamma() {
            return Err(Error::config(format!(
                "expected {} free gamma values, got {}",
                config.n_free_gamma(),
                gamma_free.len()
            )));
        }
        if let Some(s) = sigma.iter().find(|s| !(**s > 0.0)) {
            return Err(Error::domain(format!("residual sd must be positive, got {s}")));
        }
        let mut gamma = vec![0.0; j];
        gamma[config.first_gamma_item() - 1..].copy_from_slice(gamma_free);
        Ok(Self {
            beta,
            alpha,
            gamma,
            sigma,
        })
    }

    pub fn n_items(&self) -> usize {
        self.beta.len()
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// Full-length post-change effects, zeros on the constrained segment.
    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }
}

/// Parameters of the change-point distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructuralParams {
    /// Location weighting among pre-terminal change-points.
    pub psi1: f64,
    /// Log-odds of no change at average speed.
    pub psi2: f64,
    /// Slope of the no-change log-odds on latent speed.
    pub psi3: f64,
}

impl StructuralParams {
    pub fn new(psi1: f64, psi2: f64, psi3: f64) -> Result<Self> {
        if !(psi1.is_finite() && psi2.is_finite() && psi3.is_finite()) {
            return Err(Error::domain("structural parameters must be finite"));
        }
        Ok(Self { psi1, psi2, psi3 })
    }

    /// `P(tau = J | xi)`.
    #[inline]
    pub fn no_change_probability(&self, xi: f64) -> f64 {
        logistic(self.psi2 + self.psi3 * xi)
    }
}

/// `N x J` matrix of log response times, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtMatrix {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
    /// True when the natural log was applied at ingestion.
    logged_at_ingest: bool,
}

impl RtMatrix {
    /// Builds a matrix from rows that are already on the log scale.
    pub fn from_log_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::build(rows, false)
    }

    /// Builds a matrix from raw (positive) times, taking natural logs.
    pub fn from_raw_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            if let Some((j, v)) = row.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
                return Err(Error::data(format!(
                    "raw response time must be positive, got {v} at row {}, column {}",
                    i + 1,
                    j + 1
                )));
            }
        }
        let logged = rows.into_iter().map(|r| r.into_iter().map(f64::ln).collect()).collect();
        Self::build(logged, true)
    }

    fn build(rows: Vec<Vec<f64>>, logged_at_ingest: bool) -> Result<Self> {
        let n_rows = rows.len();
        if n_rows == 0 {
            return Err(Error::data("response-time matrix has no rows"));
        }
        let n_cols = rows[0].len();
        if n_cols == 0 {
            return Err(Error::data("response-time matrix has no columns"));
        }
        let mut values = Vec::with_capacity(n_rows * n_cols);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n_cols {
                return Err(Error::data(format!(
                    "row {} has {} columns, expected {n_cols}",
                    i + 1,
                    row.len()
                )));
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::data(format!(
                    "non-finite value at row {}, column {}",
                    i + 1,
                    j + 1
                )));
            }
            values.extend(row);
        }
        Ok(Self {
            n_rows,
            n_cols,
            values,
            logged_at_ingest,
        })
    }

    pub fn n_respondents(&self) -> usize {
        self.n_rows
    }

    pub fn n_items(&self) -> usize {
        self.n_cols
    }

    pub fn logged_at_ingest(&self) -> bool {
        self.logged_at_ingest
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n_cols)
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows().map(move |r| r[j])
    }

    /// Checks that the column count agrees with the model configuration.
    pub fn check_config(&self, config: &ModelConfig) -> Result<()> {
        if self.n_cols != config.n_items() {
            return Err(Error::config(format!(
                "data have {} items but the model expects J = {}",
                self.n_cols,
                config.n_items()
            )));
        }
        Ok(())
    }

    /// Subset of respondents in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(indices.len() * self.n_cols);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Self {
            n_rows: indices.len(),
            n_cols: self.n_cols,
            values,
            logged_at_ingest: self.logged_at_ingest,
        }
    }
}

/// Latent speed and change-point location of one respondent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentState {
    pub xi: f64,
    pub tau: usize,
}

impl LatentState {
    pub fn new(xi: f64, tau: usize, config: &ModelConfig) -> Result<Self> {
        config.check_tau(tau)?;
        Ok(Self { xi, tau })
    }
}

/// `log Z(psi1) = log sum_{l=0}^{L-1} exp(l psi1)` for `L` locations.
pub fn log_location_normalizer(psi1: f64, n_locations: usize) -> f64 {
    if n_locations == 0 {
        return f64::NEG_INFINITY;
    }
    let top = (n_locations - 1) as f64;
    let max = if psi1 > 0.0 { top * psi1 } else { 0.0 };
    let sum: f64 = (0..n_locations).map(|l| (l as f64 * psi1 - max).exp()).sum();
    max + sum.ln()
}

/// Mean location offset `sum l exp(l psi1) / sum exp(l psi1)`.
pub fn location_mean(psi1: f64, n_locations: usize) -> f64 {
    let log_z = log_location_normalizer(psi1, n_locations);
    (0..n_locations)
        .map(|l| {
            let l = l as f64;
            l * (l * psi1 - log_z).exp()
        })
        .sum()
}

/// Writes `log P(tau | xi, psi)` for every support point into `out`
/// (index 0 is `tau = c+1`, the last index is `tau = J`).
pub fn log_pmf_into(xi: f64, psi: &StructuralParams, config: &ModelConfig, out: &mut [f64]) {
    debug_assert_eq!(out.len(), config.n_support());
    let eta = psi.psi2 + psi.psi3 * xi;
    let log_change = log_logistic(-eta);
    let log_z = log_location_normalizer(psi.psi1, config.n_locations());
    let (last, locations) = out.split_last_mut().expect("non-empty support");
    for (a, slot) in locations.iter_mut().enumerate() {
        *slot = a as f64 * psi.psi1 - log_z + log_change;
    }
    *last = log_logistic(eta);
}

/// `P(tau | xi, psi)` for a single support point.
pub fn changepoint_pmf(tau: usize, xi: f64, psi: &StructuralParams, config: &ModelConfig) -> Result<f64> {
    config.check_tau(tau)?;
    if tau == config.n_items() {
        return Ok(psi.no_change_probability(xi));
    }
    let a = config.support_index(tau) as f64;
    let log_z = log_location_normalizer(psi.psi1, config.n_locations());
    let change = 1.0 - psi.no_change_probability(xi);
    Ok((a * psi.psi1 - log_z).exp() * change)
}

/// `y_ij - beta_j + alpha_j xi - gamma_j 1(j > tau)` for 1-based item `item`.
#[inline]
pub fn residual(y: f64, item: usize, state: &LatentState, items: &ItemParams) -> f64 {
    let j = item - 1;
    let shift = if item > state.tau { items.gamma[j] } else { 0.0 };
    y - items.beta[j] + items.alpha[j] * state.xi - shift
}

/// `log f(y | xi, tau, theta)`: sum of independent normal log-densities.
pub fn conditional_logdensity(y: &[f64], state: &LatentState, items: &ItemParams, config: &ModelConfig) -> Result<f64> {
    if y.len() != config.n_items() || items.n_items() != config.n_items() {
        return Err(Error::data("response vector length does not match J"));
    }
    config.check_tau(state.tau)?;
    if let Some(s) = items.sigma.iter().find(|s| !(**s > 0.0)) {
        return Err(Error::domain(format!("residual sd must be positive, got {s}")));
    }
    Ok(y.iter()
        .enumerate()
        .map(|(j, &yj)| normal_logpdf(residual(yj, j + 1, state, items), items.sigma[j]))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(j: usize, c: usize) -> ModelConfig {
        ModelConfig::new(j, c).unwrap()
    }

    #[test]
    fn config_bounds() {
        assert!(ModelConfig::new(3, 1).is_ok());
        assert!(ModelConfig::new(3, 2).is_err());
        assert!(ModelConfig::new(2, 0).is_err());
        assert!(ModelConfig::new(20, 0).is_err());
        let c = cfg(20, 5);
        assert_eq!(c.support().collect::<Vec<_>>(), (6..=20).collect::<Vec<_>>());
        assert_eq!(c.n_free_gamma(), 14);
    }

    #[test]
    fn pmf_matches_reported_no_change_probability() {
        let psi = StructuralParams::new(0.009, 1.597, -0.061).unwrap();
        let p = changepoint_pmf(20, 0.0, &psi, &cfg(20, 5)).unwrap();
        assert!((p - 0.832).abs() < 1e-3, "{p}");
    }

    #[test]
    fn pmf_uniform_when_psi_zero() {
        let psi = StructuralParams::new(0.0, 0.0, 0.0).unwrap();
        let c = cfg(20, 5);
        for tau in 6..20 {
            let p = changepoint_pmf(tau, 0.0, &psi, &c).unwrap();
            assert!((p - 0.5 / 14.0).abs() < 1e-15);
        }
    }

    #[test]
    fn pmf_low_prevalence_first_location() {
        let psi2 = (0.85f64 / 0.15).ln();
        assert!((psi2 - 1.734_601).abs() < 1e-5);
        let psi = StructuralParams::new(0.0, psi2, -0.5).unwrap();
        let p = changepoint_pmf(6, 0.0, &psi, &cfg(20, 5)).unwrap();
        assert!((p - 0.15 / 14.0).abs() < 1e-12, "{p}");
    }

    #[test]
    fn pmf_sums_to_one() {
        let psi = StructuralParams::new(0.7, -1.2, 0.4).unwrap();
        let c = cfg(10, 3);
        let total: f64 = c.support().map(|t| changepoint_pmf(t, 1.3, &psi, &c).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pmf_rejects_out_of_support() {
        let psi = StructuralParams::new(0.0, 0.0, 0.0).unwrap();
        let c = cfg(20, 5);
        assert!(matches!(changepoint_pmf(5, 0.0, &psi, &c), Err(Error::Domain(_))));
        assert!(changepoint_pmf(21, 0.0, &psi, &c).is_err());
    }

    #[test]
    fn log_pmf_agrees_with_pmf() {
        let psi = StructuralParams::new(-0.4, 0.3, 0.9).unwrap();
        let c = cfg(12, 4);
        let mut out = vec![0.0; c.n_support()];
        log_pmf_into(-0.7, &psi, &c, &mut out);
        for (s, tau) in c.support().enumerate() {
            let p = changepoint_pmf(tau, -0.7, &psi, &c).unwrap();
            assert!((out[s].exp() - p).abs() < 1e-15);
        }
    }

    #[test]
    fn extreme_psi1_does_not_overflow() {
        let c = cfg(40, 2);
        for psi1 in [-50.0, 50.0, 700.0] {
            let psi = StructuralParams::new(psi1, 0.0, 0.0).unwrap();
            let total: f64 = c.support().map(|t| changepoint_pmf(t, 0.0, &psi, &c).unwrap()).sum();
            assert!((total - 1.0).abs() < 1e-12, "psi1 = {psi1}: {total}");
        }
    }

    fn items_3() -> (ModelConfig, ItemParams) {
        let c = cfg(3, 1);
        let items = ItemParams::new(
            &c,
            vec![1.0, 2.0, 3.0],
            vec![0.5, 0.7, 0.9],
            &[0.5],
            vec![0.3, 0.4, 0.5],
        )
        .unwrap();
        (c, items)
    }

    #[test]
    fn zero_residual_density() {
        let (c, items) = items_3();
        let state = LatentState::new(0.0, 3, &c).unwrap();
        let got = conditional_logdensity(&[1.0, 2.0, 3.0], &state, &items, &c).unwrap();
        let want: f64 = items
            .sigma()
            .iter()
            .map(|s| -0.5 * (2.0 * std::f64::consts::PI * s * s).ln())
            .sum();
        assert!((got - want).abs() < 1e-14);
    }

    #[test]
    fn shifted_density_matches_unshifted() {
        let (c, items) = items_3();
        let changed = LatentState::new(0.0, 2, &c).unwrap();
        let unchanged = LatentState::new(0.0, 3, &c).unwrap();
        let a = conditional_logdensity(&[1.0, 2.0, 3.5], &changed, &items, &c).unwrap();
        let b = conditional_logdensity(&[1.0, 2.0, 3.0], &unchanged, &items, &c).unwrap();
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn residual_cases() {
        let (c, items) = items_3();
        let s0 = LatentState::new(0.0, 3, &c).unwrap();
        let s1 = LatentState::new(1.0, 3, &c).unwrap();
        let s2 = LatentState::new(0.0, 2, &c).unwrap();
        assert_eq!(residual(2.0, 2, &s0, &items), 0.0);
        assert!(residual(2.0 - 0.7, 2, &s1, &items).abs() < 1e-15);
        assert!(residual(3.5, 3, &s2, &items).abs() < 1e-15);
    }

    #[test]
    fn gamma_constraint_is_structural() {
        let c = cfg(8, 3);
        let items = ItemParams::new(&c, vec![0.0; 8], vec![1.0; 8], &[1.0, 2.0, 3.0, 4.0], vec![1.0; 8]).unwrap();
        assert_eq!(items.gamma(), &[0.0, 0.0, 0.0, 0.0, 1.0, 2.0, 3.0, 4.0]);
        assert!(ItemParams::new(&c, vec![0.0; 8], vec![1.0; 8], &[0.0; 5], vec![1.0; 8]).is_err());
        assert!(ItemParams::new(&c, vec![0.0; 8], vec![1.0; 8], &[0.0; 4], vec![0.0; 8]).is_err());
    }

    #[test]
    fn raw_rows_are_logged() {
        let m = RtMatrix::from_raw_rows(vec![vec![1.0, std::f64::consts::E]]).unwrap();
        assert!(m.logged_at_ingest());
        assert_eq!(m.row(0)[0], 0.0);
        assert!((m.row(0)[1] - 1.0).abs() < 1e-15);
        assert!(RtMatrix::from_raw_rows(vec![vec![0.0]]).is_err());
        assert!(RtMatrix::from_log_rows(vec![vec![f64::NAN]]).is_err());
        assert!(RtMatrix::from_log_rows(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(RtMatrix::from_log_rows(vec![]).is_err());
    }
}

//! Gauss–Hermite quadrature against the standard normal density.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of quadrature nodes.
pub const DEFAULT_NODES: usize = 21;

/// Nodes and weights such that `sum_k w_k g(x_k)` approximates `E[g(Z)]`
/// for `Z ~ N(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureGrid {
    /// Builds a grid from arbitrary nodes and positive weights. Weights are
    /// rescaled to sum to one.
    pub fn new(nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if nodes.is_empty() || nodes.len() != weights.len() {
            return Err(Error::domain(
                "grid needs equally many nodes and weights (at least one)",
            ));
        }
        if nodes.iter().any(|x| !x.is_finite()) || weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::domain("grid nodes must be finite and weights positive"));
        }
        let total: f64 = weights.iter().sum();
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { nodes, weights })
    }

    /// Gauss–Hermite rule with `k` nodes under the change of variable
    /// `xi = sqrt(2) x`, `w = omega / sqrt(pi)`.
    pub fn gauss_hermite(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::domain(format!("need at least 2 quadrature nodes, got {k}")));
        }
        let (x, omega) = hermite_rule(k)?;
        let scale = std::f64::consts::PI.sqrt();
        let nodes: Vec<f64> = x.iter().map(|v| v * std::f64::consts::SQRT_2).collect();
        let weights: Vec<f64> = omega.iter().map(|w| w / scale).collect();
        Self::new(nodes, weights)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Physicists' Gauss–Hermite nodes (ascending) and weights for
/// `int exp(-x^2) g(x) dx`. Eigenvalues of the Jacobi matrix seed a Newton
/// polish on the Hermite functions, which stay bounded for large `n`.
fn hermite_rule(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    const MAX_ITER: usize = 50;

    let jacobi = DMatrix::from_fn(n, n, |r, c| {
        if r + 1 == c || c + 1 == r {
            (r.max(c) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let mut guesses: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
    guesses.sort_by(f64::total_cmp);

    let nf = n as f64;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    // polish the non-negative half and mirror it
    for i in n / 2..n {
        let mut z = guesses[i];
        for _ in 0..MAX_ITER {
            let (f_n, f_prev) = hermite_functions(n, z);
            // d/dz of h_n is sqrt(2n) h_{n-1}; the exp factor cancels in the ratio
            let step = f_n / ((2.0 * nf).sqrt() * f_prev);
            z -= step;
            if step.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        let (_, f_prev) = hermite_functions(n, z);
        let weight = (-z * z).exp() / (nf * f_prev * f_prev);
        if !(weight > 0.0 && weight.is_finite() && z.is_finite()) {
            return Err(Error::Numerical(format!(
                "Gauss-Hermite rule with {n} nodes underflows"
            )));
        }
        x[i] = z;
        w[i] = weight;
        x[n - 1 - i] = -z;
        w[n - 1 - i] = weight;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    Ok((x, w))
}

/// Normalized Hermite functions `(psi_n(z), psi_{n-1}(z))`, i.e. orthonormal
/// Hermite polynomials times `exp(-z^2 / 2)`.
fn hermite_functions(n: usize, z: f64) -> (f64, f64) {
    const PI_M4: f64 = 0.751_125_544_464_942_5; // pi^(-1/4)
    let mut p1 = PI_M4 * (-0.5 * z * z).exp();
    let mut p2 = 0.0;
    for j in 1..=n {
        let jf = j as f64;
        let p3 = p2;
        p2 = p1;
        p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
    }
    (p1, p2)
}

//! Flat free-parameter vector used by the optimizer.
//!
//! Layout: `beta_1..beta_J, alpha_1..alpha_J, gamma_{c+2}..gamma_J,
//! log sigma_1..log sigma_J, psi1, psi2, psi3`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ItemParams, ModelConfig, StructuralParams};

/// Index arithmetic for the free-parameter layout of one configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    n_items: usize,
    n_gamma: usize,
}

impl ParamLayout {
    pub fn new(config: &ModelConfig) -> Self {
        Self {
            n_items: config.n_items(),
            n_gamma: config.n_free_gamma(),
        }
    }

    /// `d = 3J + (J - c - 1) + 3`.
    #[inline]
    pub fn dim(&self) -> usize {
        3 * self.n_items + self.n_gamma + 3
    }

    #[inline]
    pub fn beta(&self, j: usize) -> usize {
        j
    }

    #[inline]
    pub fn alpha(&self, j: usize) -> usize {
        self.n_items + j
    }

    /// Index of the `g`-th free gamma (0 is item `c+2`).
    #[inline]
    pub fn gamma(&self, g: usize) -> usize {
        2 * self.n_items + g
    }

    #[inline]
    pub fn log_sigma(&self, j: usize) -> usize {
        2 * self.n_items + self.n_gamma + j
    }

    #[inline]
    pub fn psi1(&self) -> usize {
        3 * self.n_items + self.n_gamma
    }

    #[inline]
    pub fn psi2(&self) -> usize {
        self.psi1() + 1
    }

    #[inline]
    pub fn psi3(&self) -> usize {
        self.psi1() + 2
    }

    pub fn gamma_range(&self) -> std::ops::Range<usize> {
        2 * self.n_items..2 * self.n_items + self.n_gamma
    }

    /// Human-readable coordinate names, 1-based item numbers.
    pub fn names(&self) -> Vec<String> {
        let first_gamma = self.n_items - self.n_gamma + 1;
        let mut names = Vec::with_capacity(self.dim());
        names.extend((1..=self.n_items).map(|j| format!("beta[{j}]")));
        names.extend((1..=self.n_items).map(|j| format!("alpha[{j}]")));
        names.extend((first_gamma..=self.n_items).map(|j| format!("gamma[{j}]")));
        names.extend((1..=self.n_items).map(|j| format!("log_sigma[{j}]")));
        names.extend(["psi1", "psi2", "psi3"].map(String::from));
        names
    }
}

/// Free parameters in optimizer order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    values: Vec<f64>,
}

impl ParamVector {
    pub fn from_values(config: &ModelConfig, values: Vec<f64>) -> Result<Self> {
        let d = ParamLayout::new(config).dim();
        if values.len() != d {
            return Err(Error::config(format!(
                "parameter vector has length {}, expected {d}",
                values.len()
            )));
        }
        Ok(Self { values })
    }

    pub fn pack(items: &ItemParams, psi: &StructuralParams, config: &ModelConfig) -> Self {
        let first = config.first_gamma_item() - 1;
        let mut values = Vec::with_capacity(ParamLayout::new(config).dim());
        values.extend_from_slice(items.beta());
        values.extend_from_slice(items.alpha());
        values.extend_from_slice(&items.gamma()[first..]);
        values.extend(items.sigma().iter().map(|s| s.ln()));
        values.extend([psi.psi1, psi.psi2, psi.psi3]);
        Self { values }
    }

    pub fn unpack(&self, config: &ModelConfig) -> Result<(ItemParams, StructuralParams)> {
        let layout = ParamLayout::new(config);
        if self.values.len() != layout.dim() {
            return Err(Error::config("parameter vector does not match configuration"));
        }
        let j = config.n_items();
        let v = &self.values;
        let items = ItemParams::new(
            config,
            v[..j].to_vec(),
            v[j..2 * j].to_vec(),
            &v[layout.gamma_range()],
            (0..j).map(|i| v[layout.log_sigma(i)].exp()).collect(),
        )?;
        let psi = StructuralParams::new(v[layout.psi1()], v[layout.psi2()], v[layout.psi3()])?;
        Ok((items, psi))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn psi(&self) -> StructuralParams {
        let n = self.values.len();
        StructuralParams {
            psi1: self.values[n - 3],
            psi2: self.values[n - 2],
            psi3: self.values[n - 1],
        }
    }
}

//! Rank-one master-equation generators.
//!
//! Both level conventions handled by this crate produce transition rates of
//! the form `r[m][n] = gain[m] * loss[n]`. The generator has these rates off
//! the diagonal and `-Σ_{k≠m} r[k][m]` on it, so every column sums to zero.

use ndarray::Array2;

use crate::compensated::{self, NeumaierSum};
use crate::error::{Error, Result};
use crate::probability::{Normalization, ProbabilityVector};
use crate::secular::SecularContext;

#[derive(Debug, Clone)]
pub struct Generator {
    rates: Array2<f64>,
    gain: Vec<f64>,
    loss: Vec<f64>,
    escape: Vec<f64>,
    outflow: Vec<f64>,
    gibbs: ProbabilityVector,
}

/// Sums column `m` of `rates` from the last row upwards, optionally skipping the diagonal.
fn column_sum(rates: &Array2<f64>, m: usize, skip_diagonal: bool) -> NeumaierSum {
    let n = rates.nrows();
    (0..n).rev().filter(|&k| !(skip_diagonal && k == m)).map(|k| rates[[k, m]]).collect()
}

impl Generator {
    /// `rates[m][n]` must equal `gain[m] * loss[n]` up to rounding; `boltzmann`
    /// holds unnormalised stationary weights.
    pub fn new(rates: Array2<f64>, gain: Vec<f64>, loss: Vec<f64>, boltzmann: &[f64]) -> Result<Self> {
        let n = rates.nrows();
        if n == 0 || rates.ncols() != n || gain.len() != n || loss.len() != n || boltzmann.len() != n {
            return Err(Error::InvalidParameter("generator parts have inconsistent dimensions".into()));
        }
        if rates.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::InvalidParameter("transition rates must be positive and finite".into()));
        }
        let escape = (0..n).map(|m| column_sum(&rates, m, false).value()).collect();
        let outflow = (0..n).map(|m| column_sum(&rates, m, true).value()).collect();
        let gibbs = ProbabilityVector::new(boltzmann.to_vec(), Normalization::Normalize)?;
        Ok(Self { rates, gain, loss, escape, outflow, gibbs })
    }

    pub fn dim(&self) -> usize {
        self.escape.len()
    }

    pub fn rates(&self) -> &Array2<f64> {
        &self.rates
    }

    /// Row profile `u` with `r[m][n] = u[m] v[n]`.
    pub fn gain(&self) -> &[f64] {
        &self.gain
    }

    /// Column profile `v` with `r[m][n] = u[m] v[n]`.
    pub fn loss(&self) -> &[f64] {
        &self.loss
    }

    /// `b[m] = Σ_k r[k][m]`, all rows included.
    pub fn escape_rates(&self) -> &[f64] {
        &self.escape
    }

    /// `Σ_{k≠m} r[k][m]`; the generator diagonal is its negation.
    pub fn outflow(&self) -> &[f64] {
        &self.outflow
    }

    /// Stationary (Gibbs) vector at unit inverse temperature.
    pub fn gibbs(&self) -> &ProbabilityVector {
        &self.gibbs
    }

    pub fn diagonal(&self, m: usize) -> f64 {
        -self.outflow[m]
    }

    /// Dense generator matrix.
    pub fn matrix(&self) -> Array2<f64> {
        let mut a = self.rates.clone();
        for m in 0..self.dim() {
            a[[m, m]] = self.diagonal(m);
        }
        a
    }

    /// Column sums of the generator, accumulated the same way the diagonal was built.
    ///
    /// The off-diagonal part is summed exactly as in construction and the
    /// diagonal is added with a single rounding, which yields 0 bit for bit.
    pub fn column_sums(&self) -> Vec<f64> {
        (0..self.dim()).map(|m| column_sum(&self.rates, m, true).value() + self.diagonal(m)).collect()
    }

    /// Trace of the generator.
    pub fn trace(&self) -> f64 {
        -compensated::sum_rev(&self.outflow)
    }

    /// `A x`, row by row with compensated dot products.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|m| {
                let mut acc = NeumaierSum::new();
                for j in (0..n).rev() {
                    let a = if j == m { self.diagonal(m) } else { self.rates[[m, j]] };
                    let (p, e) = compensated::two_prod(a, x[j]);
                    acc.add(p);
                    acc.add(e);
                }
                acc.value()
            })
            .collect()
    }

    /// `Aᵀ x`.
    pub fn apply_transpose(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|m| {
                let mut acc = NeumaierSum::new();
                for j in (0..n).rev() {
                    let a = if j == m { self.diagonal(m) } else { self.rates[[j, m]] };
                    let (p, e) = compensated::two_prod(a, x[j]);
                    acc.add(p);
                    acc.add(e);
                }
                acc.value()
            })
            .collect()
    }

    /// Secular data: weights `w[m] = r[m][m] = u[m] v[m]` and poles `b[m]`.
    pub fn secular_context(&self) -> Result<SecularContext> {
        let weights = (0..self.dim()).map(|m| self.rates[[m, m]]).collect();
        SecularContext::new(weights, self.escape.clone())
    }
}

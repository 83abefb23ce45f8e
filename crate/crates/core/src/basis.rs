//! Closed-form eigenvectors and the biorthogonal system they form.
//!
//! For a rank-one generator `A = u vᵀ - diag(b)` and a nonzero eigenvalue
//! `ν`, the right eigenvector is `u_m / (ν + b_m)` and the left one is
//! `v_m / (ν + b_m)`. Right vectors keep their raw closed form; left vectors
//! are divided by `d_k = -f'(ν_k)` so that the pairing is the identity.

use rayon::prelude::*;

use crate::compensated::{self, two_prod, NeumaierSum};
use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::secular::Spectrum;

/// Eigen-residual above which construction fails.
pub const CONSISTENCY_LIMIT: f64 = 1e-6;
/// `‖Q_j p̂_j‖ / ‖p̂_j‖` below this is reported as a near-degenerate basis.
pub const DEGENERACY_LIMIT: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct RightEigenvector {
    pub k: usize,
    pub components: Vec<f64>,
    /// `‖A p - ν p‖₂ / ‖p‖₂`.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeftEigenvector {
    pub k: usize,
    pub components: Vec<f64>,
    /// `d_k = -f'(ν_k)`; 1 for `k = 1`.
    pub scale: f64,
    /// `‖Aᵀ q - ν q‖₂ / ‖q‖₂`.
    pub residual: f64,
}

fn check_k(spectrum: &Spectrum, k: usize) -> Result<()> {
    if k == 0 || k > spectrum.len() {
        return Err(Error::Index { index: k, len: spectrum.len() });
    }
    Ok(())
}

/// `‖M x - ν x‖₂ / ‖x‖₂` for an already computed `M x`.
fn relative_residual(mx: &[f64], nu: f64, x: &[f64]) -> f64 {
    let diff: Vec<f64> = mx
        .iter()
        .zip(x)
        .map(|(&y, &xi)| {
            let (p, e) = two_prod(nu, xi);
            (y - p) - e
        })
        .collect();
    compensated::norm2(&diff) / compensated::norm2(x)
}

fn raw_right(gen: &Generator, spectrum: &Spectrum, k: usize) -> Result<Vec<f64>> {
    if k == 1 {
        return Ok(gen.gibbs().components().to_vec());
    }
    let d = spectrum.denominators(k)?;
    Ok(gen.gain().iter().zip(&d).map(|(u, d)| u / d).collect())
}

/// Unscaled left vector `v_m / (ν_k + b_m)`; all ones for `k = 1`.
pub fn unscaled_left(gen: &Generator, spectrum: &Spectrum, k: usize) -> Result<Vec<f64>> {
    check_k(spectrum, k)?;
    if k == 1 {
        return Ok(vec![1.0; gen.dim()]);
    }
    let d = spectrum.denominators(k)?;
    Ok(gen.loss().iter().zip(&d).map(|(v, d)| v / d).collect())
}

pub fn right_eigenvector(gen: &Generator, spectrum: &Spectrum, k: usize) -> Result<RightEigenvector> {
    check_k(spectrum, k)?;
    let components = raw_right(gen, spectrum, k)?;
    let nu = spectrum.record(k)?.nu;
    let residual = relative_residual(&gen.apply(&components), nu, &components);
    if residual.is_nan() || residual > CONSISTENCY_LIMIT {
        return Err(Error::Consistency { k, residual });
    }
    Ok(RightEigenvector { k, components, residual })
}

pub fn left_eigenvector(gen: &Generator, spectrum: &Spectrum, k: usize) -> Result<LeftEigenvector> {
    let raw = unscaled_left(gen, spectrum, k)?;
    let rec = spectrum.record(k)?;
    let scale = if k == 1 { 1.0 } else { -rec.fprime };
    let components: Vec<f64> = raw.iter().map(|q| q / scale).collect();
    let residual = relative_residual(&gen.apply_transpose(&components), rec.nu, &components);
    if residual.is_nan() || residual > CONSISTENCY_LIMIT {
        return Err(Error::Consistency { k, residual });
    }
    Ok(LeftEigenvector { k, components, scale, residual })
}

#[derive(Debug, Clone)]
pub struct BiorthogonalSystem {
    rights: Vec<RightEigenvector>,
    lefts: Vec<LeftEigenvector>,
    eigenvalues: Vec<f64>,
}

impl BiorthogonalSystem {
    pub fn build(gen: &Generator, spectrum: &Spectrum) -> Result<Self> {
        if gen.dim() != spectrum.len() {
            return Err(Error::InvalidParameter("generator and spectrum dimensions differ".into()));
        }
        let pairs: Vec<(RightEigenvector, LeftEigenvector)> = (1..=spectrum.len())
            .into_par_iter()
            .map(|k| Ok((right_eigenvector(gen, spectrum, k)?, left_eigenvector(gen, spectrum, k)?)))
            .collect::<Result<_>>()?;
        let (rights, lefts) = pairs.into_iter().unzip();
        Ok(Self { rights, lefts, eigenvalues: spectrum.eigenvalues() })
    }

    pub fn dim(&self) -> usize {
        self.rights.len()
    }

    pub fn rights(&self) -> &[RightEigenvector] {
        &self.rights
    }

    pub fn lefts(&self) -> &[LeftEigenvector] {
        &self.lefts
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `p̂_k`, 1-based.
    pub fn right(&self, k: usize) -> &[f64] {
        &self.rights[k - 1].components
    }

    /// `q̃_k`, 1-based.
    pub fn left(&self, k: usize) -> &[f64] {
        &self.lefts[k - 1].components
    }

    /// `max_{j,k≤K} |(p̂_j, q̃_k) - δ_jk|`.
    pub fn biorthogonality_defect(&self, k_max: usize) -> f64 {
        let k_max = k_max.min(self.dim());
        (1..=k_max)
            .into_par_iter()
            .map(|j| {
                (1..=k_max)
                    .map(|k| {
                        let target = if j == k { 1.0 } else { 0.0 };
                        (compensated::dot(self.right(j), self.left(k)) - target).abs()
                    })
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Expansion coefficients `(p, q̃_k)`.
    pub fn coefficients(&self, p: &[f64]) -> Vec<f64> {
        self.lefts.iter().map(|q| compensated::dot(p, &q.components)).collect()
    }

    /// `Σ_k c_k p̂_k`.
    pub fn synthesize(&self, coefficients: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|m| {
                let mut acc = NeumaierSum::new();
                for (c, r) in coefficients.iter().zip(&self.rights).rev() {
                    let (p, e) = two_prod(*c, r.components[m]);
                    acc.add(p);
                    acc.add(e);
                }
                acc.value()
            })
            .collect()
    }

    /// `‖p - Σ_k (p, q̃_k) p̂_k‖₂ / ‖p‖₂`.
    pub fn reconstruction_error(&self, p: &[f64]) -> f64 {
        let back = self.synthesize(&self.coefficients(p));
        let diff: Vec<f64> = p.iter().zip(&back).map(|(a, b)| a - b).collect();
        compensated::norm2(&diff) / compensated::norm2(p)
    }

    /// Rebuilds `q̃_j` as `Q_j p̂_j / ‖Q_j p̂_j‖²`, with `Q_j` the orthogonal
    /// projector onto the complement of the other right vectors, and returns
    /// its relative distance to the closed-form `q̃_j`.
    pub fn projection_crosscheck(&self, j: usize) -> Result<f64> {
        let n = self.dim();
        if j == 0 || j > n {
            return Err(Error::Index { index: j, len: n });
        }
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n - 1);
        for k in (1..=n).filter(|&k| k != j) {
            let mut v = self.right(k).to_vec();
            let norm0 = compensated::norm2(&v);
            for _ in 0..2 {
                for e in &basis {
                    let c = compensated::dot(e, &v);
                    v.iter_mut().zip(e).for_each(|(x, y)| *x -= c * y);
                }
            }
            let norm = compensated::norm2(&v);
            if norm <= DEGENERACY_LIMIT * norm0 {
                return Err(Error::NearDegenerate { j: k, ratio: norm / norm0 });
            }
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
        let p = self.right(j);
        let mut t = p.to_vec();
        for _ in 0..2 {
            for e in &basis {
                let c = compensated::dot(e, &t);
                t.iter_mut().zip(e).for_each(|(x, y)| *x -= c * y);
            }
        }
        let tn = compensated::norm2(&t);
        let ratio = tn / compensated::norm2(p);
        if ratio < DEGENERACY_LIMIT {
            return Err(Error::NearDegenerate { j, ratio });
        }
        let q = self.left(j);
        let diff: Vec<f64> = t.iter().zip(q).map(|(x, y)| x / (tn * tn) - y).collect();
        Ok(compensated::norm2(&diff) / compensated::norm2(q))
    }
}

/// `max |A - H(I + S)|` with `H = -diag(b)` and `S_{mn} = -r_{mn} / b_m`.
pub fn factorization_residual(gen: &Generator) -> f64 {
    let a = gen.matrix();
    let b = gen.escape_rates();
    let r = gen.rates();
    let n = gen.dim();
    let mut worst = 0.0_f64;
    for m in 0..n {
        for k in 0..n {
            let s = -r[[m, k]] / b[m];
            let identity = if m == k { 1.0 } else { 0.0 };
            let product = -b[m] * (identity + s);
            worst = worst.max((a[[m, k]] - product).abs());
        }
    }
    worst
}

/// What is subtracted from each `p̂_k` before the Gram sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GramShift {
    /// `u / b`, the limit of `p̂_k` as `ν_k → 0`; gives `r̂_k = -ν_k u / (b (ν_k + b))`.
    Limit,
    /// The Gibbs vector scaled to unit Euclidean norm.
    UnitGibbs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramReport {
    pub shift: GramShift,
    /// `sums[i]` is `G(i + 2)`, for `n_star = 2..=N`.
    pub sums: Vec<f64>,
    /// Smallest `n_star` with `G(n_star) < 1`.
    pub smallest_n_star: Option<usize>,
}

impl GramReport {
    /// `G(n_star)`, `None` outside `2..=N`.
    pub fn at(&self, n_star: usize) -> Option<f64> {
        n_star.checked_sub(2).and_then(|i| self.sums.get(i)).copied()
    }

    pub fn is_nonincreasing(&self) -> bool {
        self.sums.windows(2).all(|w| w[1] <= w[0])
    }
}

/// `G(n) = Σ_{j≠k, j,k≥n} |(r̂_j, r̂_k)|²` over unit-normalized `r̂_k`.
pub fn gram_diagnostic(gen: &Generator, spectrum: &Spectrum, shift: GramShift) -> Result<GramReport> {
    let n = gen.dim();
    if n < 2 {
        return Err(Error::Domain("the Gram diagnostic needs at least two levels".into()));
    }
    let u = gen.gain();
    let b = gen.escape_rates();
    let unit_gibbs = {
        let g = gen.gibbs().components();
        let norm = compensated::norm2(g);
        g.iter().map(|x| x / norm).collect::<Vec<_>>()
    };
    let vectors: Vec<Vec<f64>> = (2..=n)
        .map(|k| {
            let d = spectrum.denominators(k)?;
            let nu = spectrum.record(k)?.nu;
            let mut r: Vec<f64> = match shift {
                GramShift::Limit => (0..n).map(|m| -nu * (u[m] / b[m]) / d[m]).collect(),
                GramShift::UnitGibbs => (0..n).map(|m| u[m] / d[m] - unit_gibbs[m]).collect(),
            };
            let norm = compensated::norm2(&r);
            r.iter_mut().for_each(|x| *x /= norm);
            Ok(r)
        })
        .collect::<Result<_>>()?;
    let count = vectors.len();
    // off-diagonal squared Gram entries, accumulated by the smaller index
    let row_weight: Vec<f64> = (0..count)
        .into_par_iter()
        .map(|i| {
            compensated::sum((i + 1..count).map(|j| {
                let g = compensated::dot(&vectors[i], &vectors[j]);
                2.0 * g * g
            }))
        })
        .collect();
    let mut sums = vec![0.0; count];
    let mut acc = NeumaierSum::new();
    for i in (0..count).rev() {
        acc.add(row_weight[i]);
        sums[i] = acc.value();
    }
    let smallest_n_star = sums.iter().position(|&g| g < 1.0).map(|i| i + 2);
    Ok(GramReport { shift, sums, smallest_n_star })
}

//! Finite master system with decreasing levels and rates `e^{-(λ_m - λ_n)/2}`.

use ndarray::Array2;

use crate::basis::BiorthogonalSystem;
use crate::compensated;
use crate::error::{Error, Result};
use crate::evolution::{self, DecayOutcome, Trajectory};
use crate::generator::Generator;
use crate::model::boltzmann_factors;
use crate::probability::ProbabilityVector;
use crate::secular::{self, SecularContext, SolverOptions, Spectrum};

/// Default shift as a multiple of the largest outflow rate.
pub const DEFAULT_RHO_FACTOR: f64 = 1.125;
pub const MAX_POWER_ITERATIONS: usize = 100_000;

#[derive(Debug, Clone)]
pub struct FiniteModel {
    lambdas: Vec<f64>,
    generator: Generator,
    rho: f64,
}

impl FiniteModel {
    /// `lambdas` must be strictly decreasing; `rho` defaults to
    /// [`DEFAULT_RHO_FACTOR`] times the largest outflow and must exceed it.
    pub fn new(lambdas: Vec<f64>, rho: Option<f64>) -> Result<Self> {
        if lambdas.len() < 2 {
            return Err(Error::InvalidLevels("the finite system needs at least two levels".into()));
        }
        if lambdas.iter().any(|l| !l.is_finite()) {
            return Err(Error::InvalidLevels("levels must be finite".into()));
        }
        if let Some(m) = lambdas.windows(2).position(|w| w[1] >= w[0]) {
            return Err(Error::InvalidLevels(format!(
                "levels must be strictly decreasing (λ_{} = {} ≤ λ_{} = {})",
                m + 1,
                lambdas[m],
                m + 2,
                lambdas[m + 1]
            )));
        }
        let n = lambdas.len();
        let rates = Array2::from_shape_fn((n, n), |(i, j)| {
            compensated::exp_of_products(&[(1.0, lambdas[i]), (-1.0, lambdas[j])], -0.5)
        });
        let gain = lambdas.iter().map(|&l| compensated::exp_of_products(&[(1.0, l)], -0.5)).collect();
        let loss = lambdas.iter().map(|&l| compensated::exp_of_products(&[(1.0, l)], 0.5)).collect();
        let generator = Generator::new(rates, gain, loss, &boltzmann_factors(&lambdas, 1.0))?;
        let max_outflow = generator.outflow().iter().copied().fold(0.0, f64::max);
        let rho = match rho {
            None => DEFAULT_RHO_FACTOR * max_outflow,
            Some(r) if r.is_finite() && r > max_outflow => r,
            Some(r) => {
                return Err(Error::InvalidParameter(format!(
                    "rho must exceed the largest outflow rate {max_outflow} (got {r})"
                )))
            }
        };
        Ok(Self { lambdas, generator, rho })
    }

    pub fn n(&self) -> usize {
        self.lambdas.len()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn b(&self) -> &[f64] {
        self.generator.escape_rates()
    }

    pub fn gibbs(&self) -> &ProbabilityVector {
        self.generator.gibbs()
    }

    /// `B = A + ρ I`.
    pub fn shifted_matrix(&self) -> Array2<f64> {
        let mut b = self.generator.matrix();
        for m in 0..self.n() {
            b[[m, m]] += self.rho;
        }
        b
    }

    /// Column sums of `B`, each equal to `ρ` up to rounding.
    pub fn shifted_column_sums(&self) -> Vec<f64> {
        let b = self.shifted_matrix();
        (0..self.n()).map(|m| compensated::sum((0..self.n()).rev().map(|k| b[[k, m]]))).collect()
    }

    pub fn secular_context(&self) -> Result<SecularContext> {
        self.generator.secular_context()?.with_alt_numerators(self.generator.gain().to_vec())
    }
}

/// Solves `Σ_m 1/(ν + b_m) = 1` bracket by bracket; `ν_1 = 0`.
pub fn finite_spectrum(model: &FiniteModel, opts: &SolverOptions) -> Result<Spectrum> {
    secular::solve_spectrum(&model.secular_context()?, opts)
}

/// `ρ - max_{k≥2} |ν_k + ρ|`; positive when `ρ` is the dominant eigenvalue of `B`.
pub fn dominance_margin(spectrum: &Spectrum, rho: f64) -> f64 {
    let worst = spectrum.records()[1..].iter().map(|r| (r.nu + rho).abs()).fold(0.0, f64::max);
    rho - worst
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerronResult {
    pub radius: f64,
    /// Positive eigenvector scaled to unit sum.
    pub vector: Vec<f64>,
    pub iterations: usize,
}

/// Power iteration on `B = A + ρ I` from the uniform vector, stopped when
/// successive Rayleigh quotients differ by less than `tol`.
pub fn perron_radius(model: &FiniteModel, tol: f64) -> Result<PerronResult> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::InvalidParameter(format!("power-iteration tolerance must be positive (got {tol})")));
    }
    let n = model.n();
    let rho = model.rho;
    let apply = |x: &[f64]| -> Vec<f64> {
        let ax = model.generator.apply(x);
        ax.iter().zip(x).map(|(a, xi)| a + rho * xi).collect()
    };
    let mut x = vec![1.0 / n as f64; n];
    let mut previous = f64::NAN;
    for iteration in 1..=MAX_POWER_ITERATIONS {
        let y = apply(&x);
        let quotient = compensated::dot(&x, &y) / compensated::dot(&x, &x);
        let total = compensated::sum(y.iter().copied());
        x = y.into_iter().map(|v| v / total).collect();
        if (quotient - previous).abs() < tol {
            return Ok(PerronResult { radius: quotient, vector: x, iterations: iteration });
        }
        previous = quotient;
    }
    Err(Error::NoConvergence { iterations: MAX_POWER_ITERATIONS })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDecayReport {
    /// Total mass of the limiting state, `lim p(τ) = γ p_Gibbs`.
    pub gamma: f64,
    /// `Σ_{k≥2} |c_k| max_m |p̂_{k,m}|`.
    pub envelope_constant: f64,
    /// `|ν_N|`, the slowest rate.
    pub rate: f64,
    /// `max_{τ,m} |p_m(τ) - c_1 p_{m,Gibbs}| / (constant · e^{-rate τ})`.
    pub max_envelope_ratio: f64,
    /// Decay fit against the slowest mode, when the run is long enough.
    pub decay: Option<DecayOutcome>,
    pub trajectory: Trajectory,
}

impl FiniteDecayReport {
    pub fn passed(&self, gamma_tol: f64) -> bool {
        (self.gamma - 1.0).abs() <= gamma_tol && self.max_envelope_ratio <= 1.0 + evolution::ENVELOPE_SLACK
    }
}

/// Propagates `p0` and checks componentwise convergence to `γ p_Gibbs`
/// inside the explicit exponential envelope.
pub fn finite_decay_check(
    model: &FiniteModel,
    system: &BiorthogonalSystem,
    p0: &ProbabilityVector,
    taus: &[f64],
) -> Result<FiniteDecayReport> {
    let trajectory = evolution::spectral_propagate(system, p0, taus)?;
    let c = trajectory.coefficients.clone().unwrap_or_default();
    let n = model.n();
    let envelope_constant = compensated::sum((2..=n).map(|k| c[k - 1].abs() * compensated::norm_inf(system.right(k))));
    let rate = system.eigenvalues()[n - 1].abs();
    let final_state = trajectory.final_state().map(|s| s.sum()).unwrap_or(f64::NAN);
    let gamma = final_state / model.gibbs().sum();
    let mut max_envelope_ratio: f64 = 0.0;
    for &tau in &trajectory.taus {
        let bound = envelope_constant * (-rate * tau).exp();
        for gap in evolution::transient(system, &c, tau).iter().map(|x| x.abs()) {
            let ratio = if bound > 0.0 {
                gap / bound
            } else if gap == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            max_envelope_ratio = max_envelope_ratio.max(ratio);
        }
    }
    let decay = evolution::decay_fit(&trajectory, system).ok();
    Ok(FiniteDecayReport { gamma, envelope_constant, rate, max_envelope_ratio, decay, trajectory })
}

//! Time evolution of occupation probabilities.
//!
//! The spectral propagator evaluates `p(τ) = Σ_k c_k e^{τ ν_k} p̂_k` with
//! `c_k = (p0, q̃_k)`; the stationary term and the decaying remainder are kept
//! apart so that distances to equilibrium stay accurate far below the size
//! of the state itself. The Runge–Kutta propagator integrates `dp/dτ = A p`
//! with the dense generator and serves as an independent oracle.

use crate::basis::BiorthogonalSystem;
use crate::compensated::{self, two_prod, NeumaierSum};
use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::probability::{ProbabilityVector, NEGATIVITY_TOLERANCE, SUM_TOLERANCE};

/// Distances below this are treated as already at equilibrium by the decay fit.
pub const CONVERGED_FLOOR: f64 = 1e-14;
/// Largest `|(p0, q̃_k)|` still counted as zero for `k` outside an envelope span.
pub const MEMBERSHIP_TOLERANCE: f64 = 1e-8;
/// Minimum number of samples accepted by the decay fit.
pub const MIN_FIT_SAMPLES: usize = 8;
/// Relative rounding allowance on the envelope bound, which is attained
/// exactly by single-mode data.
pub const ENVELOPE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Spectral,
    Ode,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeStats {
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub min_step: f64,
    pub max_step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub method: Method,
    pub taus: Vec<f64>,
    pub states: Vec<ProbabilityVector>,
    /// `c_k = (p0, q̃_k)` for spectral runs.
    pub coefficients: Option<Vec<f64>>,
    /// `‖p(τ) - c_1 p_Gibbs‖₂` per sample, computed without forming the difference.
    pub transients: Option<Vec<f64>>,
    pub ode_stats: Option<OdeStats>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }

    pub fn final_state(&self) -> Option<&ProbabilityVector> {
        self.states.last()
    }

    /// `‖p(τ) - c_1 p_Gibbs‖₂` at every sample, with `c_1` the initial total.
    pub fn distances_to(&self, gibbs: &[f64]) -> Vec<f64> {
        if let Some(t) = &self.transients {
            return t.clone();
        }
        let c1 = self.states.first().map_or(1.0, |s| s.sum());
        self.states
            .iter()
            .map(|s| {
                let diff: Vec<f64> = s.components().iter().zip(gibbs).map(|(p, g)| p - c1 * g).collect();
                compensated::norm2(&diff)
            })
            .collect()
    }
}

/// `samples` equally spaced times from 0 to `tau_max` inclusive.
pub fn uniform_taus(tau_max: f64, samples: usize) -> Result<Vec<f64>> {
    if samples < 2 || !(tau_max > 0.0 && tau_max.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 samples and a positive final time (got {samples}, {tau_max})"
        )));
    }
    let last = (samples - 1) as f64;
    Ok((0..samples).map(|i| if i == samples - 1 { tau_max } else { tau_max * i as f64 / last }).collect())
}

fn check_taus(taus: &[f64]) -> Result<()> {
    if taus.is_empty() {
        return Err(Error::InvalidParameter("no sample times".into()));
    }
    if taus.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::InvalidParameter("sample times must be finite and nonnegative".into()));
    }
    if taus.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("sample times must be strictly increasing".into()));
    }
    Ok(())
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::InvalidParameter(format!("state has {got} components, model has {expected}")));
    }
    Ok(())
}

/// `Σ_{k≥2} c_k e^{τ ν_k} p̂_k`, the part of the state that decays.
pub fn transient(system: &BiorthogonalSystem, coefficients: &[f64], tau: f64) -> Vec<f64> {
    let weights: Vec<f64> =
        coefficients.iter().zip(system.eigenvalues()).skip(1).map(|(c, nu)| c * (tau * nu).exp()).collect();
    (0..system.dim())
        .map(|m| {
            let mut acc = NeumaierSum::new();
            for (k, w) in weights.iter().enumerate().rev() {
                let (p, e) = two_prod(*w, system.right(k + 2)[m]);
                acc.add(p);
                acc.add(e);
            }
            acc.value()
        })
        .collect()
}

/// `exp[τA] p` for an arbitrary vector.
pub fn evolve_vector(system: &BiorthogonalSystem, p: &[f64], tau: f64) -> Vec<f64> {
    let c = system.coefficients(p);
    let t = transient(system, &c, tau);
    system.right(1).iter().zip(&t).map(|(g, x)| c[0] * g + x).collect()
}

pub fn spectral_propagate(system: &BiorthogonalSystem, p0: &ProbabilityVector, taus: &[f64]) -> Result<Trajectory> {
    check_taus(taus)?;
    check_dim(system.dim(), p0.len())?;
    let coefficients = system.coefficients(p0.components());
    let gibbs = system.right(1);
    let mut states = Vec::with_capacity(taus.len());
    let mut transients = Vec::with_capacity(taus.len());
    for &tau in taus {
        let t = transient(system, &coefficients, tau);
        transients.push(compensated::norm2(&t));
        let state = gibbs.iter().zip(&t).map(|(g, x)| coefficients[0] * g + x).collect();
        states.push(ProbabilityVector::unchecked(state));
    }
    Ok(Trajectory {
        method: Method::Spectral,
        taus: taus.to_vec(),
        states,
        coefficients: Some(coefficients),
        transients: Some(transients),
        ode_stats: None,
    })
}

fn rk4_step(gen: &Generator, y: &[f64], h: f64) -> Vec<f64> {
    let axpy = |k: &[f64], s: f64| -> Vec<f64> { y.iter().zip(k).map(|(a, b)| a + s * b).collect() };
    let k1 = gen.apply(y);
    let k2 = gen.apply(&axpy(&k1, h / 2.0));
    let k3 = gen.apply(&axpy(&k2, h / 2.0));
    let k4 = gen.apply(&axpy(&k3, h));
    (0..y.len()).map(|m| y[m] + h / 6.0 * (k1[m] + 2.0 * k2[m] + 2.0 * k3[m] + k4[m])).collect()
}

/// Classical Runge–Kutta with step halving: a step of size `h` is accepted
/// when it agrees with two steps of size `h/2` to `tol · h` in max norm, or
/// to rounding level of the state. Steps stretch to land on a sample time
/// rather than leave a sliver before it.
pub fn ode_propagate(gen: &Generator, p0: &ProbabilityVector, taus: &[f64], tol: f64) -> Result<Trajectory> {
    check_taus(taus)?;
    check_dim(gen.dim(), p0.len())?;
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::InvalidParameter(format!("integrator tolerance must be positive (got {tol})")));
    }
    let tau_max = *taus.last().unwrap_or(&0.0);
    let h_min = 1e-14 * tau_max;
    let mut stats = OdeStats { accepted_steps: 0, rejected_steps: 0, min_step: f64::INFINITY, max_step: 0.0 };
    let mut y = p0.components().to_vec();
    let mut t = 0.0;
    let mut h = if tau_max > 0.0 { tau_max / 16.0 } else { 1.0 };
    let mut states = Vec::with_capacity(taus.len());
    for &target in taus {
        while t < target {
            let remaining = target - t;
            let step = if remaining <= 1.01 * h { remaining } else { h };
            let full = rk4_step(gen, &y, step);
            let half = rk4_step(gen, &y, step / 2.0);
            let double = rk4_step(gen, &half, step / 2.0);
            let err = full.iter().zip(&double).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let rounding = 16.0 * f64::EPSILON * compensated::norm_inf(&y);
            if err <= (tol * step).max(rounding) {
                y = double;
                let landed = step == target - t;
                t = if landed { target } else { t + step };
                stats.accepted_steps += 1;
                stats.min_step = stats.min_step.min(step);
                stats.max_step = stats.max_step.max(step);
                if err <= tol * step / 64.0 && step >= h {
                    h *= 2.0;
                }
            } else {
                stats.rejected_steps += 1;
                h = step / 2.0;
                if h < h_min {
                    return Err(Error::Stiffness { tau_reached: t, step: h });
                }
            }
        }
        states.push(ProbabilityVector::unchecked(y.clone()));
    }
    Ok(Trajectory {
        method: Method::Ode,
        taus: taus.to_vec(),
        states,
        coefficients: None,
        transients: None,
        ode_stats: Some(stats),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Divergence {
    pub taus: Vec<f64>,
    pub l2_diff: Vec<f64>,
    pub sup: f64,
}

pub fn divergence(a: &Trajectory, b: &Trajectory) -> Result<Divergence> {
    if a.taus != b.taus {
        return Err(Error::InvalidParameter("trajectories are sampled at different times".into()));
    }
    let l2_diff: Vec<f64> = a
        .states
        .iter()
        .zip(&b.states)
        .map(|(x, y)| {
            let d: Vec<f64> = x.components().iter().zip(y.components()).map(|(p, q)| p - q).collect();
            compensated::norm2(&d)
        })
        .collect();
    let sup = l2_diff.iter().copied().fold(0.0, f64::max);
    Ok(Divergence { taus: a.taus.clone(), l2_diff, sup })
}

/// Runs both propagators and compares them sample by sample.
pub fn cross_validate(
    gen: &Generator,
    system: &BiorthogonalSystem,
    p0: &ProbabilityVector,
    taus: &[f64],
    tol: f64,
) -> Result<Divergence> {
    let spectral = spectral_propagate(system, p0, taus)?;
    let ode = ode_propagate(gen, p0, taus, tol)?;
    divergence(&spectral, &ode)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayReport {
    /// Least-squares slope of `ln ‖p(τ) - c_1 p_Gibbs‖₂` over the fit window.
    pub fitted_rate: f64,
    pub expected_rate: f64,
    pub relative_gap: f64,
    /// Index of the reference eigenvalue with `ν_1 = 0 > ν_2 > ... ` counted
    /// in increasing order (`ν_2 < ν_3 < ... < ν_N < 0`).
    pub mode_index: usize,
    /// Position of the reference among nonzero eigenvalues sorted by
    /// magnitude, 1 being the one closest to zero.
    pub magnitude_rank: usize,
    pub window: (f64, f64),
    pub samples_used: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DecayOutcome {
    Fitted(DecayReport),
    /// Every distance in the fit window was below [`CONVERGED_FLOOR`].
    Converged,
}

/// Fits against the slowest nonzero mode (`ν_N` in increasing order).
pub fn decay_fit(trajectory: &Trajectory, system: &BiorthogonalSystem) -> Result<DecayOutcome> {
    let n = system.dim();
    if n < 2 {
        return Err(Error::Domain("a one-level model has no decaying modes".into()));
    }
    decay_fit_mode(trajectory, system, n)
}

/// Fits against `ν_k` for a caller-chosen `k ≥ 2`.
pub fn decay_fit_mode(trajectory: &Trajectory, system: &BiorthogonalSystem, k: usize) -> Result<DecayOutcome> {
    let n = system.dim();
    if k < 2 || k > n {
        return Err(Error::Index { index: k, len: n });
    }
    let expected = system.eigenvalues()[k - 1];
    let samples = trajectory.len();
    if samples < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientData {
            needed: format!("at least {MIN_FIT_SAMPLES} samples"),
            detail: format!("trajectory has {samples}"),
        });
    }
    let tau_max = trajectory.taus[samples - 1];
    let horizon = 5.0 / expected.abs();
    if tau_max < horizon {
        return Err(Error::InsufficientData {
            needed: format!("tau_max ≥ {horizon:e}"),
            detail: format!("trajectory ends at {tau_max:e}"),
        });
    }
    let distances = trajectory.distances_to(system.right(1));
    let start = samples / 2;
    let points: Vec<(f64, f64)> = (start..samples)
        .filter(|&i| distances[i] >= CONVERGED_FLOOR)
        .map(|i| (trajectory.taus[i], distances[i].ln()))
        .collect();
    if points.len() < 4 {
        return Ok(DecayOutcome::Converged);
    }
    let fitted_rate = least_squares_slope(&points);
    Ok(DecayOutcome::Fitted(DecayReport {
        fitted_rate,
        expected_rate: expected,
        relative_gap: ((fitted_rate - expected) / expected).abs(),
        mode_index: k,
        magnitude_rank: n - k + 1,
        window: (points[0].0, points[points.len() - 1].0),
        samples_used: points.len(),
    }))
}

fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let count = points.len() as f64;
    let mean_x = compensated::sum(points.iter().map(|p| p.0)) / count;
    let mean_y = compensated::sum(points.iter().map(|p| p.1)) / count;
    let sxy = compensated::sum(points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)));
    let sxx = compensated::sum(points.iter().map(|p| (p.0 - mean_x) * (p.0 - mean_x)));
    sxy / sxx
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ViolationKind {
    Negative,
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub tau: f64,
    pub kind: ViolationKind,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConservationReport {
    pub max_sum_error: f64,
    pub min_component: f64,
    pub violations: Vec<Violation>,
}

impl ConservationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `min p_m ≥ -1e-12` and `|Σ p_m - 1| ≤ 1e-9` at every sample.
pub fn positivity_conservation_check(trajectory: &Trajectory) -> ConservationReport {
    let mut report = ConservationReport { max_sum_error: 0.0, min_component: f64::INFINITY, violations: Vec::new() };
    for (tau, state) in trajectory.taus.iter().zip(&trajectory.states) {
        let sum_error = (state.sum() - 1.0).abs();
        let min = state.min_component();
        report.max_sum_error = report.max_sum_error.max(sum_error);
        report.min_component = report.min_component.min(min);
        if min < -NEGATIVITY_TOLERANCE {
            report.violations.push(Violation { tau: *tau, kind: ViolationKind::Negative, value: min });
        }
        if sum_error > SUM_TOLERANCE {
            report.violations.push(Violation { tau: *tau, kind: ViolationKind::Sum, value: state.sum() });
        }
    }
    report
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovReport {
    /// `max_k ν_k`.
    pub exponent: f64,
    /// `(τ, ln ‖exp[τA] g‖₂ / τ)` for the unit-norm Gibbs vector `g`.
    pub trend: Vec<(f64, f64)>,
}

impl LyapunovReport {
    pub fn max_abs_trend(&self) -> f64 {
        self.trend.iter().map(|t| t.1.abs()).fold(0.0, f64::max)
    }
}

pub fn lyapunov_estimate(system: &BiorthogonalSystem, taus: &[f64]) -> Result<LyapunovReport> {
    let exponent = system.eigenvalues().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let gibbs = system.right(1);
    let norm = compensated::norm2(gibbs);
    let unit: Vec<f64> = gibbs.iter().map(|x| x / norm).collect();
    let mut trend = Vec::new();
    for &tau in taus {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidParameter("trend times must be positive".into()));
        }
        let evolved = evolve_vector(system, &unit, tau);
        trend.push((tau, compensated::norm2(&evolved).ln() / tau));
    }
    Ok(LyapunovReport { exponent, trend })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeReport {
    /// `Σ_{k=2}^{K} |c_k| ‖p̂_k‖₂`.
    pub constant: f64,
    /// `|ν_K|`.
    pub rate: f64,
    /// Largest ratio of the distance to the envelope over all samples.
    pub max_ratio: f64,
    /// `max_{k>K} |c_k|`.
    pub membership_defect: f64,
}

impl EnvelopeReport {
    pub fn admissible(&self) -> bool {
        self.membership_defect <= MEMBERSHIP_TOLERANCE
    }

    pub fn passed(&self) -> bool {
        self.admissible() && self.max_ratio <= 1.0 + ENVELOPE_SLACK
    }
}

/// Checks `‖p(τ) - c_1 p_Gibbs‖₂ ≤ C e^{-|ν_K| τ}` for initial data spanned
/// by the first `K` right eigenvectors.
pub fn envelope_check(trajectory: &Trajectory, system: &BiorthogonalSystem, k_span: usize) -> Result<EnvelopeReport> {
    let n = system.dim();
    if k_span < 2 || k_span > n {
        return Err(Error::Index { index: k_span, len: n });
    }
    let p0 = trajectory.states.first().ok_or_else(|| Error::InvalidParameter("empty trajectory".into()))?;
    let c = system.coefficients(p0.components());
    let constant = compensated::sum((2..=k_span).map(|k| c[k - 1].abs() * compensated::norm2(system.right(k))));
    let membership_defect = c[k_span..].iter().map(|x| x.abs()).fold(0.0, f64::max);
    let rate = system.eigenvalues()[k_span - 1].abs();
    let distances = trajectory.distances_to(system.right(1));
    let max_ratio = trajectory
        .taus
        .iter()
        .zip(&distances)
        .map(|(tau, d)| {
            let bound = constant * (-rate * tau).exp();
            if bound > 0.0 {
                d / bound
            } else if *d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max);
    Ok(EnvelopeReport { constant, rate, max_ratio, membership_defect })
}

/// Interval of amplitudes `ε` for which `p_Gibbs + ε p̂_k ≥ floors`
/// componentwise, or `None` if no amplitude works.
pub fn mode_amplitude_interval(system: &BiorthogonalSystem, k: usize, floors: &[f64]) -> Result<Option<(f64, f64)>> {
    let n = system.dim();
    if k < 2 || k > n {
        return Err(Error::Index { index: k, len: n });
    }
    check_dim(n, floors.len())?;
    let (gibbs, mode) = (system.right(1), system.right(k));
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for m in 0..n {
        let slack = gibbs[m] - floors[m];
        if mode[m] > 0.0 {
            lo = lo.max(-slack / mode[m]);
        } else if mode[m] < 0.0 {
            hi = hi.min(slack / -mode[m]);
        } else if slack < 0.0 {
            return Ok(None);
        }
    }
    Ok((lo <= hi).then_some((lo, hi)))
}

/// `p_Gibbs + ε p̂_k`.
pub fn gibbs_plus_mode(system: &BiorthogonalSystem, k: usize, eps: f64) -> Result<Vec<f64>> {
    let n = system.dim();
    if k < 2 || k > n {
        return Err(Error::Index { index: k, len: n });
    }
    Ok(system.right(1).iter().zip(system.right(k)).map(|(g, p)| g + eps * p).collect())
}

//! Level sequences, partition sums and the truncated detailed-balance generator.
//!
//! Levels are indexed from 1 in every public method. The truncation is
//! self-consistent: escape rates and partition sums only see levels `1..=n`,
//! so every finite identity holds exactly in dimension `n` and the distance
//! to the infinite model is tracked separately by [`tail_bound`].

use ndarray::Array2;

use crate::compensated::{self, two_prod};
use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::probability::{Normalization, ProbabilityVector};
use crate::secular::SecularContext;

#[derive(Debug, Clone, PartialEq)]
pub enum Levels {
    /// `λ_m = offset + omega * m`.
    Affine { omega: f64, offset: f64 },
    /// A finite, explicitly listed sequence.
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelSpec {
    levels: Levels,
    alpha: f64,
    theta: f64,
    gap_constant: f64,
    degenerate: bool,
}

/// Whether `(alpha, theta)` lie in the range where the eigenvectors are known
/// to form a basis of the infinite-dimensional space. Computation proceeds
/// either way; this is a flag, not a precondition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisHypotheses {
    pub alpha_in_range: bool,
    pub theta_in_range: bool,
}

impl BasisHypotheses {
    pub fn hold(&self) -> bool {
        self.alpha_in_range && self.theta_in_range
    }

    pub fn warning(&self) -> Option<String> {
        if self.hold() {
            return None;
        }
        let mut parts = Vec::new();
        if !self.alpha_in_range {
            parts.push("alpha not in (1, 3)");
        }
        if !self.theta_in_range {
            parts.push("theta not in (0, (3 - alpha)/2)");
        }
        Some(format!("outside completeness hypotheses: {}", parts.join(", ")))
    }
}

fn check_common(alpha: f64, theta: f64, gap_constant: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha > 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must exceed 1 (got {alpha})")));
    }
    if !(theta.is_finite() && theta >= 0.0) {
        return Err(Error::InvalidParameter(format!("theta must be nonnegative (got {theta})")));
    }
    if !(gap_constant.is_finite() && gap_constant > 0.0) {
        return Err(Error::InvalidParameter(format!("gap constant must be positive (got {gap_constant})")));
    }
    Ok(())
}

impl LevelSpec {
    pub fn affine(omega: f64, offset: f64, alpha: f64, theta: f64, gap_constant: f64) -> Result<Self> {
        check_common(alpha, theta, gap_constant)?;
        if !(omega.is_finite() && omega > 0.0) {
            return Err(Error::InvalidLevels(format!("level spacing omega must be positive (got {omega})")));
        }
        if !offset.is_finite() {
            return Err(Error::InvalidLevels("offset must be finite".into()));
        }
        Ok(Self { levels: Levels::Affine { omega, offset }, alpha, theta, gap_constant, degenerate: false })
    }

    /// Explicit levels; they must be strictly increasing.
    pub fn explicit(values: Vec<f64>, alpha: f64, theta: f64, gap_constant: f64) -> Result<Self> {
        check_common(alpha, theta, gap_constant)?;
        check_values(&values)?;
        if let Some(m) = values.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidLevels(format!(
                "levels must be strictly increasing (λ_{} = {} ≥ λ_{} = {})",
                m + 1,
                values[m],
                m + 2,
                values[m + 1]
            )));
        }
        Ok(Self { levels: Levels::Explicit(values), alpha, theta, gap_constant, degenerate: false })
    }

    /// Explicit levels that may repeat (e.g. the constant test sequence).
    ///
    /// Models built from these support the rate-level operations only; the
    /// eigenvalue solver rejects them.
    pub fn explicit_nondecreasing(values: Vec<f64>, alpha: f64, theta: f64, gap_constant: f64) -> Result<Self> {
        check_common(alpha, theta, gap_constant)?;
        check_values(&values)?;
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidLevels("levels must be nondecreasing".into()));
        }
        let degenerate = values.windows(2).any(|w| w[1] == w[0]);
        Ok(Self { levels: Levels::Explicit(values), alpha, theta, gap_constant, degenerate })
    }

    pub fn levels(&self) -> &Levels {
        &self.levels
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn gap_constant(&self) -> f64 {
        self.gap_constant
    }

    /// Number of levels, `None` for the unbounded affine sequence.
    pub fn level_count(&self) -> Option<usize> {
        match &self.levels {
            Levels::Affine { .. } => None,
            Levels::Explicit(v) => Some(v.len()),
        }
    }

    /// `λ_m`, 1-based.
    pub fn level(&self, m: usize) -> Result<f64> {
        match &self.levels {
            Levels::Affine { omega, offset } if m >= 1 => Ok(offset + omega * m as f64),
            Levels::Explicit(v) if m >= 1 && m <= v.len() => Ok(v[m - 1]),
            _ => Err(Error::Index { index: m, len: self.level_count().unwrap_or(usize::MAX) }),
        }
    }

    pub fn hypotheses(&self) -> BasisHypotheses {
        let alpha_in_range = self.alpha > 1.0 && self.alpha < 3.0;
        let theta_in_range = self.theta > 0.0 && self.theta < (3.0 - self.alpha) / 2.0;
        BasisHypotheses { alpha_in_range, theta_in_range }
    }

    /// Checks `λ_{m+1} - λ_m ≥ c e^{-θ λ_m}` for `m < upto`.
    pub fn gap_condition_check(&self, upto: usize) -> Result<GapReport> {
        if upto < 2 {
            return Err(Error::Domain(format!("gap check needs upto ≥ 2 (got {upto})")));
        }
        if let Some(len) = self.level_count() {
            if upto > len {
                return Err(Error::Index { index: upto, len });
            }
        }
        let mut violations = Vec::new();
        let mut min_ratio = f64::INFINITY;
        for m in 1..upto {
            let lm = self.level(m)?;
            let gap = self.level(m + 1)? - lm;
            let bound = self.gap_constant * compensated::exp_of_products(&[(self.theta, lm)], -1.0);
            let ratio = gap / bound;
            min_ratio = min_ratio.min(ratio);
            if gap < bound {
                violations.push(m);
            }
        }
        Ok(GapReport { upto, violations, min_ratio, hypotheses: self.hypotheses() })
    }

    pub fn truncate(&self, n: usize) -> Result<TruncatedModel> {
        TruncatedModel::new(self.clone(), n)
    }
}

fn check_values(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::InvalidLevels("explicit level list is empty".into()));
    }
    if values.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidLevels("levels must be finite".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    pub upto: usize,
    /// Every `m` (1-based) where the gap falls below the bound.
    pub violations: Vec<usize>,
    /// `min_m (λ_{m+1} - λ_m) / (c e^{-θ λ_m})`.
    pub min_ratio: f64,
    pub hypotheses: BasisHypotheses,
}

impl GapReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn first_violation(&self) -> Option<usize> {
        self.violations.first().copied()
    }
}

/// Bound on the partition-sum mass beyond the truncation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailBound {
    /// `e^{-β λ_{N+1}} / (1 - e^{-β ω})` for affine levels.
    Geometric(f64),
    /// Explicit levels are a finite model: nothing is truncated.
    FiniteModel,
}

impl TailBound {
    pub fn value(&self) -> f64 {
        match self {
            TailBound::Geometric(v) => *v,
            TailBound::FiniteModel => 0.0,
        }
    }
}

/// Upper bound for `Σ_{m>n} e^{-β λ_m}`.
pub fn tail_bound(spec: &LevelSpec, n: usize, beta: f64) -> Result<TailBound> {
    check_beta(beta)?;
    match spec.levels() {
        Levels::Explicit(_) => Ok(TailBound::FiniteModel),
        Levels::Affine { omega, .. } => {
            let next = spec.level(n + 1)?;
            let head = compensated::exp_of_products(&[(beta, next)], -1.0);
            Ok(TailBound::Geometric(head / -(-beta * omega).exp_m1()))
        }
    }
}

/// Smallest inverse temperature whose partition sum enters the rates.
fn tail_beta(alpha: f64) -> f64 {
    ((alpha - 1.0) / 2.0).min(1.0)
}

fn check_beta(beta: f64) -> Result<()> {
    if beta.is_finite() && beta > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("inverse temperature must be positive (got {beta})")))
    }
}

/// The model restricted to its first `n` levels.
#[derive(Debug, Clone)]
pub struct TruncatedModel {
    spec: LevelSpec,
    lambdas: Vec<f64>,
    generator: Generator,
    tail: TailBound,
}

impl TruncatedModel {
    pub fn new(spec: LevelSpec, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("truncation dimension must be positive".into()));
        }
        if let Some(len) = spec.level_count() {
            if n != len {
                return Err(Error::InvalidParameter(format!(
                    "explicit levels define a {len}-level model, but n = {n}"
                )));
            }
        }
        let lambdas: Vec<f64> = (1..=n).map(|m| spec.level(m)).collect::<Result<_>>()?;
        let alpha = spec.alpha();
        let rates = Array2::from_shape_fn((n, n), |(i, j)| rate_value(alpha, lambdas[i], lambdas[j]));
        let gain = lambdas.iter().map(|&l| compensated::exp_of_products(&[(alpha, l), (1.0, l)], -0.5)).collect();
        let loss = lambdas.iter().map(|&l| compensated::exp_of_products(&[(alpha, l), (-1.0, l)], -0.5)).collect();
        let boltzmann = boltzmann_factors(&lambdas, 1.0);
        let generator = Generator::new(rates, gain, loss, &boltzmann)?;
        let tail = tail_bound(&spec, n, tail_beta(alpha))?;
        Ok(Self { spec, lambdas, generator, tail })
    }

    pub fn n(&self) -> usize {
        self.lambdas.len()
    }

    pub fn spec(&self) -> &LevelSpec {
        &self.spec
    }

    pub fn alpha(&self) -> f64 {
        self.spec.alpha()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    /// Escape rates `b_m`, strictly decreasing for strictly increasing levels.
    pub fn b(&self) -> &[f64] {
        self.generator.escape_rates()
    }

    /// Tail bound at the smallest inverse temperature entering the identities.
    /// Inverse temperature used for the cached tail bound.
    pub fn tail_beta(&self) -> f64 {
        tail_beta(self.alpha())
    }

    pub fn tail_bound(&self) -> TailBound {
        self.tail
    }

    pub fn is_degenerate(&self) -> bool {
        self.spec.degenerate
    }

    /// `Z_β = Σ_{m≤N} e^{-β λ_m}`.
    pub fn partition_sum(&self, beta: f64) -> Result<f64> {
        check_beta(beta)?;
        Ok(partition_sum_of(&self.lambdas, beta))
    }

    pub fn gibbs_vector(&self, beta: f64) -> Result<ProbabilityVector> {
        check_beta(beta)?;
        ProbabilityVector::new(boltzmann_factors(&self.lambdas, beta), Normalization::Normalize)
    }

    /// `r_{m,n}`, 1-based.
    pub fn rate(&self, m: usize, n: usize) -> Result<f64> {
        let len = self.n();
        for i in [m, n] {
            if i == 0 || i > len {
                return Err(Error::Index { index: i, len });
            }
        }
        Ok(self.generator.rates()[[m - 1, n - 1]])
    }

    pub fn assemble_generator(&self) -> Array2<f64> {
        self.generator.matrix()
    }

    /// `Z_α - Z_{(α-1)/2} Z_{(α+1)/2}`, the closed form of the generator trace.
    pub fn trace_closed_form(&self) -> f64 {
        let a = self.alpha();
        let z = |beta| partition_sum_of(&self.lambdas, beta);
        z(a) - z((a - 1.0) / 2.0) * z((a + 1.0) / 2.0)
    }

    /// Trace of the assembled generator minus its closed form.
    pub fn trace_identity_residual(&self) -> f64 {
        self.generator.trace() - self.trace_closed_form()
    }

    /// `max_{m<n} |r_{mn} p_n - r_{nm} p_m| / (r_{mn} p_n)` at the Gibbs state.
    ///
    /// The partition function cancels in the ratio, so the unnormalised
    /// Boltzmann factors are used and each product is formed exactly.
    pub fn detailed_balance_residual(&self) -> f64 {
        let weights = boltzmann_factors(&self.lambdas, 1.0);
        let r = self.generator.rates();
        let n = self.n();
        let mut worst = 0.0_f64;
        for m in 0..n {
            for k in m + 1..n {
                let (p1, e1) = two_prod(r[[m, k]], weights[k]);
                let (p2, e2) = two_prod(r[[k, m]], weights[m]);
                let diff = (p1 - p2) + (e1 - e2);
                worst = worst.max((diff / p1).abs());
            }
        }
        worst
    }

    pub fn gap_condition_check(&self, upto: usize) -> Result<GapReport> {
        self.spec.gap_condition_check(upto)
    }

    /// Secular data for the eigenvalue solver; refuses repeated levels.
    pub fn secular_context(&self) -> Result<SecularContext> {
        if self.is_degenerate() {
            return Err(Error::InvalidLevels("repeated levels collapse the eigenvalue brackets".into()));
        }
        self.generator.secular_context()
    }
}

fn rate_value(alpha: f64, lm: f64, ln: f64) -> f64 {
    // exp(-((α+1) λ_m + (α-1) λ_n) / 2)
    compensated::exp_of_products(&[(alpha, lm), (1.0, lm), (alpha, ln), (-1.0, ln)], -0.5)
}

pub(crate) fn partition_sum_of(lambdas: &[f64], beta: f64) -> f64 {
    compensated::sum(lambdas.iter().rev().map(|&l| compensated::exp_of_products(&[(beta, l)], -1.0)))
}

/// `e^{-β (λ_m - λ_min)}`.
pub(crate) fn boltzmann_factors(lambdas: &[f64], beta: f64) -> Vec<f64> {
    let lowest = lambdas.iter().copied().fold(f64::INFINITY, f64::min);
    lambdas.iter().map(|&l| compensated::exp_of_products(&[(beta, l), (-beta, lowest)], -1.0)).collect()
}

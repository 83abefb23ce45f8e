use crate::compensated;
use crate::error::{Error, Result};

/// Tolerance on `|sum - 1|` accepted in strict mode.
pub const SUM_TOLERANCE: f64 = 1e-9;
/// Most negative component accepted in strict mode.
pub const NEGATIVITY_TOLERANCE: f64 = 1e-12;

/// How [`ProbabilityVector::new`] treats its input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// Reject input whose sum is off by more than [`SUM_TOLERANCE`] or that has a
    /// component below `-NEGATIVITY_TOLERANCE`.
    Strict,
    /// Rescale by the sum. Negative entries are kept, which lets callers
    /// build adversarial initial data on purpose.
    Normalize,
}

/// Occupation probabilities over the truncated levels, with the total cached.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector {
    components: Vec<f64>,
    sum: f64,
}

impl ProbabilityVector {
    pub fn new(components: Vec<f64>, mode: Normalization) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::NotProbability("empty vector".into()));
        }
        if let Some(i) = components.iter().position(|x| !x.is_finite()) {
            return Err(Error::NotProbability(format!("component {} is not finite", i + 1)));
        }
        let total = compensated::sum(components.iter().copied());
        match mode {
            Normalization::Strict => {
                if (total - 1.0).abs() > SUM_TOLERANCE {
                    return Err(Error::NotProbability(format!("sum is {total}, expected 1")));
                }
                if let Some((i, x)) = components.iter().enumerate().find(|(_, &x)| x < -NEGATIVITY_TOLERANCE) {
                    return Err(Error::NotProbability(format!("component {} is negative ({x})", i + 1)));
                }
                Ok(Self { components, sum: total })
            }
            Normalization::Normalize => {
                if total <= 0.0 {
                    return Err(Error::NotProbability(format!("cannot normalize: sum is {total}")));
                }
                let components: Vec<f64> = components.into_iter().map(|x| x / total).collect();
                let sum = compensated::sum(components.iter().copied());
                Ok(Self { components, sum })
            }
        }
    }

    /// Wraps a propagated state as-is; used for trajectories, where drift is
    /// measured rather than corrected.
    pub fn unchecked(components: Vec<f64>) -> Self {
        let sum = compensated::sum(components.iter().copied());
        Self { components, sum }
    }

    /// The unit vector on level `m` (1-based).
    pub fn basis_state(n: usize, m: usize) -> Result<Self> {
        if m == 0 || m > n {
            return Err(Error::Index { index: m, len: n });
        }
        let mut v = vec![0.0; n];
        v[m - 1] = 1.0;
        Ok(Self { components: v, sum: 1.0 })
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn into_components(self) -> Vec<f64> {
        self.components
    }

    pub fn sum(&self) -> f64 {
        self.sum
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn min_component(&self) -> f64 {
        self.components.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

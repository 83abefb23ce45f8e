//! Compensated floating-point kernels.
//!
//! Every partition sum, column sum and inner product in the crate goes through
//! these helpers so that rounding stays at the level of a few ulps regardless
//! of the truncation size.

/// Error-free transformation `a + b = s + e`.
#[inline]
pub fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    (s, e)
}

/// Error-free transformation `a * b = p + e` (requires a fused multiply-add).
#[inline]
pub fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let e = a.mul_add(b, -p);
    (p, e)
}

/// Neumaier's variant of Kahan summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    /// Sum and compensation as an unevaluated pair.
    pub fn parts(&self) -> (f64, f64) {
        (self.sum, self.compensation)
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl Extend<f64> for NeumaierSum {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for x in iter {
            self.add(x);
        }
    }
}

impl FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = Self::new();
        acc.extend(iter);
        acc
    }
}

/// Compensated sum of an iterator, in iteration order.
pub fn sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<NeumaierSum>().value()
}

/// Compensated sum of a slice taken from the last element to the first.
///
/// For the level sequences used here the terms shrink with the index, so this
/// accumulates in increasing magnitude.
pub fn sum_rev(values: &[f64]) -> f64 {
    sum(values.iter().rev().copied())
}

/// Dot product with the products split exactly and the pieces accumulated
/// in compensated form (accuracy comparable to twice the working precision).
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut hi = NeumaierSum::new();
    let mut lo = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let (p, e) = two_prod(x, y);
        hi.add(p);
        lo += e;
    }
    let (s, c) = hi.parts();
    s + (c + lo)
}

/// Euclidean norm, scaled to avoid overflow and underflow.
pub fn norm2(a: &[f64]) -> f64 {
    let scale = a.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    let s = sum(a.iter().map(|x| {
        let y = x / scale;
        y * y
    }));
    scale * s.sqrt()
}

pub fn norm1(a: &[f64]) -> f64 {
    sum(a.iter().map(|x| x.abs()))
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// `exp(scale * Σ a_i b_i)` with the exponent carried in double-double.
///
/// `scale` must be a power of two so the final scaling is exact. Large
/// exponents otherwise lose `|x| * eps` relative accuracy in the result.
pub fn exp_of_products(terms: &[(f64, f64)], scale: f64) -> f64 {
    let mut hi = 0.0;
    let mut lo = 0.0;
    for &(a, b) in terms {
        let (p, pe) = two_prod(a, b);
        let (s, se) = two_sum(hi, p);
        hi = s;
        lo += se + pe;
    }
    let (hi, lo) = two_sum(hi, lo);
    let (hi, lo) = (hi * scale, lo * scale);
    let base = hi.exp();
    if lo == 0.0 {
        base
    } else {
        base * lo.exp_m1() + base
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neumaier_recovers_cancelled_terms() {
        let v = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(sum(v.iter().copied()), 2.0);
        let naive: f64 = v.iter().sum();
        assert_eq!(naive, 0.0);
    }

    #[test]
    fn sum_rev_of_geometric_series() {
        let terms: Vec<f64> = (1..=200).map(|m| (-(m as f64)).exp()).collect();
        let exact = 1.0 / (1.0_f64.exp() - 1.0);
        assert!((sum_rev(&terms) - exact).abs() <= 2.0 * f64::EPSILON * exact);
    }

    #[test]
    fn dot_is_exact_for_cancelling_products() {
        let a = [1e8 + 1.0, -1e8];
        let b = [1e8 - 1.0, 1e8];
        // (1e16 - 1) - 1e16 = -1
        assert_eq!(dot(&a, &b), -1.0);
    }

    #[test]
    fn norms() {
        let v = [3.0, -4.0];
        assert_eq!(norm2(&v), 5.0);
        assert_eq!(norm1(&v), 7.0);
        assert_eq!(norm_inf(&v), 4.0);
        assert_eq!(norm2(&[1e-200, 1e-200]), 1e-200 * 2.0_f64.sqrt());
    }

    #[test]
    fn exp_of_products_matches_plain_exp_on_exact_exponents() {
        let x = exp_of_products(&[(2.0, 3.0), (1.0, 3.0)], -0.5);
        assert_eq!(x, (-4.5_f64).exp());
    }

    #[test]
    fn exp_of_products_keeps_low_order_exponent_bits() {
        // exp(-(0.1 * 300)) where 0.1*300 is inexact in binary.
        let x = exp_of_products(&[(0.1, 300.0)], -1.0);
        // 0.1_f64 * 300 = 30 + 1.6653345369377348e-15 exactly (to double precision)
        let reference = (-30.0_f64).exp() * (1.0 - 1.6653345369377348e-15);
        assert!(((x - reference) / reference).abs() < 4.0 * f64::EPSILON);
    }
}

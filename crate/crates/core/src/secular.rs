//! Secular-equation eigenvalue solver.
//!
//! Every nonzero eigenvalue of a rank-one generator solves
//! `f(ν) = Σ w_m / (ν + b_m) = 1` and sits strictly between two consecutive
//! poles `-b_{k-1} < ν_k < -b_k`. For large `k` the root lies so close to
//! `-b_k` that `ν_k` itself cannot resolve the distance, so each root is
//! stored as a pole plus an offset and all denominators are formed from that
//! pair.
//!
//! Root finding works on the deflated function `h(ν) = Σ c_m / (ν + b_m)`
//! with `c_m = w_m / b_m`, which satisfies `f(ν) - 1 = -ν h(ν)` whenever
//! `f(0) = 1`.

use rayon::prelude::*;

use crate::compensated::{self, two_sum, NeumaierSum};
use crate::error::{Error, Result};
use crate::model::TruncatedModel;

/// Tolerance on `|f(0) - 1|` accepted by [`SecularContext::new`].
pub const F_AT_ZERO_TOLERANCE: f64 = 1e-12;
/// Brackets narrower than this many ulps of the left pole are rejected.
pub const MIN_BRACKET_ULPS: f64 = 64.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SecularContext {
    weights: Vec<f64>,
    poles: Vec<f64>,
    deflated: Vec<f64>,
    alt_numerators: Vec<f64>,
    f_at_zero: f64,
}

/// An eigenvalue written as `ν = -b_pole + offset` (`pole` is 0-based).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shift {
    pub pole: usize,
    pub offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Bisection stops once the bracket shrinks below this fraction of its width.
    pub bisect_tol: f64,
    /// Required bound on `|f(ν) - 1|` at the returned root.
    pub residual_tol: f64,
    pub newton_max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { bisect_tol: 1e-3, residual_tol: 1e-11, newton_max_iter: 100 }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.bisect_tol > 0.0 && self.bisect_tol < 1.0) {
            return Err(Error::InvalidParameter(format!("bisect_tol must lie in (0, 1) (got {})", self.bisect_tol)));
        }
        if !(self.residual_tol > 0.0 && self.residual_tol.is_finite()) {
            return Err(Error::InvalidParameter(format!("residual_tol must be positive (got {})", self.residual_tol)));
        }
        if self.newton_max_iter == 0 {
            return Err(Error::InvalidParameter("newton_max_iter must be positive".into()));
        }
        Ok(())
    }
}

impl SecularContext {
    /// `poles` must be strictly decreasing and `weights` positive, with
    /// `Σ w_m / b_m = 1` to [`F_AT_ZERO_TOLERANCE`].
    pub fn new(weights: Vec<f64>, poles: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.len() != poles.len() {
            return Err(Error::InvalidParameter("weights and poles must be nonempty and of equal length".into()));
        }
        if weights.iter().chain(&poles).any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::InvalidParameter("weights and poles must be positive".into()));
        }
        if let Some(m) = poles.windows(2).position(|p| p[1] >= p[0]) {
            return Err(Error::InvalidLevels(format!(
                "poles must be strictly decreasing (b_{} = {} ≤ b_{} = {})",
                m + 1,
                poles[m],
                m + 2,
                poles[m + 1]
            )));
        }
        let deflated: Vec<f64> = weights.iter().zip(&poles).map(|(w, b)| w / b).collect();
        let f_at_zero = compensated::sum_rev(&deflated);
        if (f_at_zero - 1.0).abs() > F_AT_ZERO_TOLERANCE {
            return Err(Error::Domain(format!("secular function at 0 is {f_at_zero}, expected 1")));
        }
        let alt_numerators = deflated.clone();
        Ok(Self { weights, poles, deflated, alt_numerators, f_at_zero })
    }

    /// Replaces the numerators used by [`alt_characterization_residual`]; they
    /// must be proportional to `w_m / b_m`.
    pub fn with_alt_numerators(mut self, numerators: Vec<f64>) -> Result<Self> {
        if numerators.len() != self.dim() {
            return Err(Error::InvalidParameter("alternative numerators have the wrong length".into()));
        }
        self.alt_numerators = numerators;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.poles.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn poles(&self) -> &[f64] {
        &self.poles
    }

    /// `c_m = w_m / b_m`.
    pub fn deflated_weights(&self) -> &[f64] {
        &self.deflated
    }

    pub fn f_at_zero(&self) -> f64 {
        self.f_at_zero
    }

    /// `Σ_m (w_m - b_m)`, the trace of the generator behind this context.
    pub fn trace(&self) -> f64 {
        let mut acc = NeumaierSum::new();
        for m in (0..self.dim()).rev() {
            acc.add(self.weights[m]);
            acc.add(-self.poles[m]);
        }
        acc.value()
    }

    fn check_pole(&self, nu: f64) -> Result<()> {
        for (m, &b) in self.poles.iter().enumerate() {
            if (nu + b).abs() <= b.next_up() - b {
                return Err(Error::Pole { m: m + 1 });
            }
        }
        Ok(())
    }

    /// `f(ν)`.
    pub fn eval(&self, nu: f64) -> Result<f64> {
        self.check_pole(nu)?;
        Ok(self.sum_over(|m| self.weights[m] / (nu + self.poles[m])))
    }

    /// `f'(ν) = -Σ w_m / (ν + b_m)²`.
    pub fn derivative(&self, nu: f64) -> Result<f64> {
        self.check_pole(nu)?;
        Ok(-self.sum_over(|m| {
            let d = nu + self.poles[m];
            self.weights[m] / (d * d)
        }))
    }

    /// `ν + b_m` for every `m`, formed relative to the shift's pole.
    pub fn shifted_denominators(&self, shift: Shift) -> Vec<f64> {
        let ba = self.poles[shift.pole];
        self.poles
            .iter()
            .map(|&b| {
                let (hi, lo) = two_sum(b, -ba);
                hi + (lo + shift.offset)
            })
            .collect()
    }

    /// `f` at a shifted point.
    pub fn eval_shifted(&self, shift: Shift) -> f64 {
        let d = self.shifted_denominators(shift);
        self.sum_over(|m| self.weights[m] / d[m])
    }

    /// `f'` at a shifted point.
    pub fn derivative_shifted(&self, shift: Shift) -> f64 {
        let d = self.shifted_denominators(shift);
        -self.sum_over(|m| self.weights[m] / (d[m] * d[m]))
    }

    fn sum_over(&self, term: impl Fn(usize) -> f64) -> f64 {
        compensated::sum((0..self.dim()).rev().map(term))
    }

    /// `ψ(δ) = δ h` and `ψ'(δ)` around pole `a`.
    fn psi(&self, a: usize, delta: f64) -> (f64, f64) {
        let ba = self.poles[a];
        let mut s = NeumaierSum::new();
        let mut ds = NeumaierSum::new();
        for m in (0..self.dim()).rev() {
            if m == a {
                continue;
            }
            let (hi, lo) = two_sum(self.poles[m], -ba);
            let d = hi + (lo + delta);
            let t = self.deflated[m] / d;
            s.add(t);
            ds.add(-t / d);
        }
        let s = s.value();
        (self.deflated[a] + delta * s, s + delta * ds.value())
    }

    /// Sign of `h` at `-b_a + δ` (`δ ≠ 0`): +1, -1 or 0.
    fn h_sign(&self, a: usize, delta: f64) -> f64 {
        let (psi, _) = self.psi(a, delta);
        if psi == 0.0 {
            0.0
        } else {
            psi.signum() * delta.signum()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenvalueRecord {
    /// 1-based eigenvalue index, increasing with `ν`.
    pub k: usize,
    pub nu: f64,
    /// Exact position relative to the nearest pole; `None` only for `k = 1`.
    pub shift: Option<Shift>,
    /// `(-b_{k-1}, -b_k)`, or `(0, 0)` for `k = 1`.
    pub bracket: (f64, f64),
    pub secular_residual: f64,
    pub fprime: f64,
    pub alt_residual: Option<f64>,
    pub newton_iterations: usize,
    /// Newton failed to converge and the root came from plain bisection.
    pub bisection_fallback: bool,
}

impl EigenvalueRecord {
    /// `(ν + b_{k-1}, ν + b_k)`; interlacing holds iff the first is positive
    /// and the second negative.
    pub fn bracket_margins(&self, ctx: &SecularContext) -> Option<(f64, f64)> {
        let shift = self.shift?;
        let d = ctx.shifted_denominators(shift);
        Some((d[self.k - 2], d[self.k - 1]))
    }

    pub fn interlaces(&self, ctx: &SecularContext) -> bool {
        match self.bracket_margins(ctx) {
            Some((left, right)) => left > 0.0 && right < 0.0,
            None => self.k == 1 && self.nu == 0.0,
        }
    }

    /// `ν + b_m` for every `m`.
    pub fn denominators(&self, ctx: &SecularContext) -> Vec<f64> {
        match self.shift {
            Some(shift) => ctx.shifted_denominators(shift),
            None => ctx.poles().iter().map(|b| self.nu + b).collect(),
        }
    }
}

fn pinned_record(ctx: &SecularContext) -> EigenvalueRecord {
    EigenvalueRecord {
        k: 1,
        nu: 0.0,
        shift: None,
        bracket: (0.0, 0.0),
        secular_residual: (ctx.f_at_zero - 1.0).abs(),
        fprime: ctx.derivative(0.0).unwrap_or(f64::NAN),
        alt_residual: None,
        newton_iterations: 0,
        bisection_fallback: false,
    }
}

/// Solves for the `k`-th eigenvalue (`2 ≤ k ≤ N`) inside `(-b_{k-1}, -b_k)`.
pub fn solve_eigenvalue(ctx: &SecularContext, k: usize, opts: &SolverOptions) -> Result<EigenvalueRecord> {
    opts.validate()?;
    let n = ctx.dim();
    if k < 2 || k > n {
        return Err(Error::Index { index: k, len: n });
    }
    let (left, right) = (k - 2, k - 1);
    let (bl, br) = (ctx.poles[left], ctx.poles[right]);
    let (g_hi, g_lo) = two_sum(bl, -br);
    let gap = g_hi + g_lo;
    if gap < MIN_BRACKET_ULPS * (bl.next_up() - bl) {
        return Err(Error::Conditioning { k, width: gap });
    }

    monotonicity_precheck(ctx, k, gap)?;

    // Anchor on the pole the root is closer to; the offset interval then
    // has constant sign and never contains 0 in its interior.
    let (anchor, mut lo, mut hi) =
        if ctx.h_sign(right, -gap / 2.0) > 0.0 { (right, -gap / 2.0, 0.0) } else { (left, 0.0, gap / 2.0) };
    // invariant: h > 0 at lo side, h ≤ 0 at hi side
    let midpoint = |lo: f64, hi: f64| {
        let m = lo + (hi - lo) / 2.0;
        if m == 0.0 {
            if lo == 0.0 {
                hi / 2.0
            } else {
                lo / 2.0
            }
        } else {
            m
        }
    };

    while hi - lo > opts.bisect_tol * gap {
        let mid = midpoint(lo, hi);
        if ctx.h_sign(anchor, mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    let mut delta = midpoint(lo, hi);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.newton_max_iter {
        iterations += 1;
        let (psi, dpsi) = ctx.psi(anchor, delta);
        if psi == 0.0 {
            converged = true;
            break;
        }
        if psi.signum() * delta.signum() > 0.0 {
            lo = delta;
        } else {
            hi = delta;
        }
        let step = psi / dpsi;
        let mut next = delta - step;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = midpoint(lo, hi);
        }
        let moved = (next - delta).abs();
        delta = next;
        if moved <= 4.0 * ulp(delta) || hi - lo <= 2.0 * ulp(lo.abs().max(hi.abs())) {
            converged = true;
            break;
        }
    }
    let mut fallback = false;
    if !converged {
        fallback = true;
        while hi - lo > 2.0 * ulp(lo.abs().max(hi.abs())) {
            let mid = midpoint(lo, hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if ctx.h_sign(anchor, mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        delta = midpoint(lo, hi);
    }

    let shift = Shift { pole: anchor, offset: delta };
    let nu = -ctx.poles[anchor] + delta;
    let record = EigenvalueRecord {
        k,
        nu,
        shift: Some(shift),
        bracket: (-bl, -br),
        secular_residual: (ctx.eval_shifted(shift) - 1.0).abs(),
        fprime: ctx.derivative_shifted(shift),
        alt_residual: None,
        newton_iterations: iterations,
        bisection_fallback: fallback,
    };
    if !record.interlaces(ctx) {
        return Err(Error::Monotonicity { k, detail: "root escaped its bracket".into() });
    }
    let alt = alt_characterization_residual(ctx, &record)?;
    Ok(EigenvalueRecord { alt_residual: Some(alt), ..record })
}

fn ulp(x: f64) -> f64 {
    let x = x.abs();
    x.next_up() - x
}

/// Confirms `f > 1` just right of `-b_{k-1}` and `f < 1` just left of `-b_k`.
///
/// The probe distance starts at `1e-6` of the bracket width and shrinks by
/// the same factor until the sign settles, since high roots can sit closer
/// to the pole than any fixed fraction of the bracket.
fn monotonicity_precheck(ctx: &SecularContext, k: usize, gap: f64) -> Result<()> {
    let (left, right) = (k - 2, k - 1);
    for (pole, sign, end) in [(left, 1.0, "left"), (right, -1.0, "right")] {
        let mut t = 1e-6 * gap;
        loop {
            if ctx.h_sign(pole, sign * t) == sign {
                break;
            }
            t *= 1e-6;
            if t < f64::MIN_POSITIVE {
                return Err(Error::Monotonicity { k, detail: format!("no sign change near the {end} pole") });
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    context: SecularContext,
    records: Vec<EigenvalueRecord>,
    trace: f64,
    trace_check: f64,
}

impl Spectrum {
    pub fn context(&self) -> &SecularContext {
        &self.context
    }

    pub fn records(&self) -> &[EigenvalueRecord] {
        &self.records
    }

    /// Record for eigenvalue `k` (1-based).
    pub fn record(&self, k: usize) -> Result<&EigenvalueRecord> {
        if k == 0 || k > self.records.len() {
            return Err(Error::Index { index: k, len: self.records.len() });
        }
        Ok(&self.records[k - 1])
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.nu).collect()
    }

    /// Generator trace `Σ (w_m - b_m)`.
    pub fn trace(&self) -> f64 {
        self.trace
    }

    /// `Σ ν_k - trace`.
    pub fn trace_check(&self) -> f64 {
        self.trace_check
    }

    /// `ν_k + b_m` for every `m`.
    pub fn denominators(&self, k: usize) -> Result<Vec<f64>> {
        Ok(self.record(k)?.denominators(&self.context))
    }

    /// Count of records violating strict interlacing.
    pub fn interlacing_violations(&self) -> usize {
        self.records.iter().filter(|r| !r.interlaces(&self.context)).count()
    }
}

/// All eigenvalues; `ν_1 = 0` is pinned and `k ≥ 2` are solved in parallel.
pub fn solve_spectrum(ctx: &SecularContext, opts: &SolverOptions) -> Result<Spectrum> {
    opts.validate()?;
    let n = ctx.dim();
    let solved: Vec<EigenvalueRecord> =
        (2..=n).into_par_iter().map(|k| solve_eigenvalue(ctx, k, opts)).collect::<Result<_>>()?;
    let mut records = Vec::with_capacity(n);
    records.push(pinned_record(ctx));
    records.extend(solved);
    let trace = ctx.trace();
    let sum_nu = compensated::sum(records.iter().rev().map(|r| r.nu));
    let trace_check = sum_nu - trace;
    Ok(Spectrum { context: ctx.clone(), records, trace, trace_check })
}

/// `|Σ u_m / (ν_k + b_m)| / Σ u_m / |ν_k + b_m|`, which vanishes only at
/// nonzero eigenvalues.
pub fn alt_characterization_residual(ctx: &SecularContext, rec: &EigenvalueRecord) -> Result<f64> {
    if rec.k < 2 {
        return Err(Error::Domain("the alternative characterization does not hold at ν = 0".into()));
    }
    let d = rec.denominators(ctx);
    let mut signed = NeumaierSum::new();
    let mut absolute = NeumaierSum::new();
    for m in (0..ctx.dim()).rev() {
        let t = ctx.alt_numerators[m] / d[m];
        signed.add(t);
        absolute.add(t.abs());
    }
    Ok(signed.value().abs() / absolute.value())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoleGapReport {
    /// `Z_{(α+1)/2} (1 + 2/(c (α - 1)))^{-1}`.
    pub constant: f64,
    /// `min_m (b_m - b_{m+1}) / (constant · e^{-((α-1)/2 + θ) λ_m})`.
    pub min_ratio: f64,
    pub violations: Vec<usize>,
}

impl PoleGapReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Lower bound on consecutive pole gaps with its explicit constant.
pub fn pole_gap_check(model: &TruncatedModel) -> Result<PoleGapReport> {
    let spec = model.spec();
    let (alpha, theta, c) = (spec.alpha(), spec.theta(), spec.gap_constant());
    let z = model.partition_sum((alpha + 1.0) / 2.0)?;
    let constant = z / (1.0 + 2.0 / (c * (alpha - 1.0)));
    let b = model.b();
    let lambdas = model.lambdas();
    let mut min_ratio = f64::INFINITY;
    let mut violations = Vec::new();
    for m in 0..model.n().saturating_sub(1) {
        let gap = b[m] - b[m + 1];
        let bound = constant
            * compensated::exp_of_products(&[(alpha, lambdas[m]), (-1.0, lambdas[m]), (2.0 * theta, lambdas[m])], -0.5);
        let ratio = gap / bound;
        min_ratio = min_ratio.min(ratio);
        if gap < bound {
            violations.push(m + 1);
        }
    }
    Ok(PoleGapReport { constant, min_ratio, violations })
}

/// `sup_{k≥2} |ν_k + b_k| e^{(α+1) λ_k / 2}` and the `k` attaining it.
pub fn scaled_offset_supremum(model: &TruncatedModel, spectrum: &Spectrum) -> (f64, usize) {
    let alpha = model.alpha();
    let ctx = spectrum.context();
    let mut best = (0.0, 1);
    for rec in &spectrum.records()[1..] {
        let Some((_, right)) = rec.bracket_margins(ctx) else { continue };
        let l = model.lambdas()[rec.k - 1];
        let scaled = right.abs() * compensated::exp_of_products(&[(alpha, l), (1.0, l)], 0.5);
        if scaled > best.0 {
            best = (scaled, rec.k);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LevelSpec;
    use approx::assert_relative_eq;

    fn model(n: usize) -> TruncatedModel {
        LevelSpec::affine(1.0, 0.0, 2.0, 0.4, 1.0).unwrap().truncate(n).unwrap()
    }

    fn spectrum(n: usize) -> (TruncatedModel, Spectrum) {
        let m = model(n);
        let s = solve_spectrum(&m.secular_context().unwrap(), &SolverOptions::default()).unwrap();
        (m, s)
    }

    #[test]
    fn f_at_zero_is_one() {
        for n in [1, 2, 16, 64] {
            let ctx = model(n).secular_context().unwrap();
            assert!((ctx.eval(0.0).unwrap() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn eval_far_left_tends_to_zero_from_below() {
        let ctx = model(8).secular_context().unwrap();
        let v = ctx.eval(-1e12).unwrap();
        assert!(v < 0.0 && v > -1e-11);
    }

    #[test]
    fn two_level_values() {
        let (_, s) = spectrum(2);
        let ctx = s.context();
        let nu2 = -((-2.5_f64).exp() + (-3.5_f64).exp());
        assert_relative_eq!(ctx.poles()[0], 0.165533, epsilon = 1e-6);
        assert_relative_eq!(ctx.poles()[1], 0.100401, epsilon = 1e-6);
        assert_eq!(s.record(1).unwrap().nu, 0.0);
        assert_relative_eq!(s.record(2).unwrap().nu, nu2, max_relative = 1e-14);
        assert_relative_eq!(ctx.eval(nu2).unwrap(), 1.0, max_relative = 1e-13);
        assert_relative_eq!(ctx.derivative(nu2).unwrap(), -177.46367616552635, max_relative = 1e-12);
        assert_relative_eq!(ctx.derivative(nu2).unwrap(), -177.478, max_relative = 1e-4);
        assert!(s.record(2).unwrap().alt_residual.unwrap() <= 1e-12);
    }

    #[test]
    fn derivative_is_negative_and_matches_central_difference() {
        let ctx = model(10).secular_context().unwrap();
        for nu in [-0.5, -0.2, -0.01, 0.3] {
            let d = ctx.derivative(nu).unwrap();
            assert!(d < 0.0);
            let nearest = ctx.poles().iter().map(|b| (nu + b).abs()).fold(f64::INFINITY, f64::min);
            let h = 1e-6 * nearest;
            let fd = (ctx.eval(nu + h).unwrap() - ctx.eval(nu - h).unwrap()) / (2.0 * h);
            assert_relative_eq!(d, fd, max_relative = 1e-6);
        }
    }

    #[test]
    fn pole_error_names_the_level() {
        let ctx = model(3).secular_context().unwrap();
        let b2 = ctx.poles()[1];
        assert_eq!(ctx.eval(-b2), Err(Error::Pole { m: 2 }));
        assert_eq!(ctx.derivative(-b2.next_up()), Err(Error::Pole { m: 2 }));
    }

    #[test]
    fn trace_and_interlacing_at_64() {
        let (m, s) = spectrum(64);
        assert_eq!(s.interlacing_violations(), 0);
        assert!(s.trace_check().abs() <= 1e-10 * s.trace().abs());
        assert_relative_eq!(s.trace(), m.generator().trace(), max_relative = 1e-14);
        for pair in s.records()[1..].windows(2) {
            assert!(pair[0].nu < pair[1].nu);
        }
        assert!(s.records()[63].nu < 0.0);
        for rec in &s.records()[1..] {
            assert!(rec.secular_residual <= 1e-11, "k={} residual {}", rec.k, rec.secular_residual);
            assert!(rec.fprime < 0.0);
            assert!(rec.alt_residual.unwrap() <= 1e-9);
            assert!(!rec.bisection_fallback);
        }
    }

    #[test]
    fn one_level_spectrum_is_zero() {
        let m = LevelSpec::explicit(vec![0.0], 2.0, 0.4, 1.0).unwrap().truncate(1).unwrap();
        let s = solve_spectrum(&m.secular_context().unwrap(), &SolverOptions::default()).unwrap();
        assert_eq!(s.eigenvalues(), vec![0.0]);
    }

    #[test]
    fn alt_residual_rejects_k_one() {
        let (_, s) = spectrum(4);
        assert!(matches!(alt_characterization_residual(s.context(), s.record(1).unwrap()), Err(Error::Domain(_))));
    }

    #[test]
    fn bad_k_and_options() {
        let ctx = model(4).secular_context().unwrap();
        let opts = SolverOptions::default();
        assert!(solve_eigenvalue(&ctx, 1, &opts).is_err());
        assert!(solve_eigenvalue(&ctx, 5, &opts).is_err());
        let bad = SolverOptions { bisect_tol: 0.0, ..opts };
        assert!(solve_eigenvalue(&ctx, 2, &bad).is_err());
    }

    #[test]
    fn conditioning_error_on_tiny_bracket() {
        let b0 = 1.0;
        let b1 = 1.0 - 8.0 * f64::EPSILON;
        let w = vec![0.5 * b0, 0.5 * b1];
        let ctx = SecularContext::new(w, vec![b0, b1]).unwrap();
        assert!(matches!(solve_eigenvalue(&ctx, 2, &SolverOptions::default()), Err(Error::Conditioning { k: 2, .. })));
    }

    #[test]
    fn newton_budget_exhaustion_falls_back_to_bisection() {
        let ctx = model(12).secular_context().unwrap();
        let opts = SolverOptions { newton_max_iter: 1, ..SolverOptions::default() };
        let rec = solve_eigenvalue(&ctx, 7, &opts).unwrap();
        let reference = solve_eigenvalue(&ctx, 7, &SolverOptions::default()).unwrap();
        assert!(rec.bisection_fallback);
        assert_relative_eq!(rec.nu, reference.nu, max_relative = 1e-14);
    }

    #[test]
    fn pole_gap_and_offset_bounds() {
        let report = pole_gap_check(&model(64)).unwrap();
        assert!(report.passed());
        assert!(report.min_ratio > 1.0);
        let (sup, k) = scaled_offset_supremum(&model(64), &spectrum(64).1);
        assert!(sup > 0.49 && sup < 0.5, "{sup} at {k}");
    }
}

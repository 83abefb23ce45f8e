//! The invariant suite behind `verify`.
//!
//! Checks run in a fixed order and each records the measured quantity next
//! to its threshold. A hard library error inside a check aborts the run and
//! names the check.

use mastereq_core::basis::{factorization_residual, gram_diagnostic, unscaled_left, GramShift};
use mastereq_core::compensated;
use mastereq_core::evolution::{
    decay_fit_mode, divergence, evolve_vector, gibbs_plus_mode, lyapunov_estimate, mode_amplitude_interval,
    ode_propagate, positivity_conservation_check, spectral_propagate, uniform_taus, DecayOutcome,
};
use mastereq_core::finite::{dominance_margin, finite_decay_check, finite_spectrum, perron_radius, FiniteModel};
use mastereq_core::secular::{alt_characterization_residual, pole_gap_check, scaled_offset_supremum, solve_spectrum};
use mastereq_core::{BiorthogonalSystem, Generator, Normalization, ProbabilityVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{initial_state, Analysis};
use crate::config::{FiniteSection, InitialCondition, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::{CheckResult, VerifyReport, REPORT_FORMAT};

pub const TRACE_TOL: f64 = 1e-10;
pub const TRACE_IDENTITY_TOL: f64 = 1e-12;
pub const DETAILED_BALANCE_TOL: f64 = 1e-15;
pub const PIN_TOL: f64 = 1e-12;
pub const ALT_TOL: f64 = 1e-9;
pub const EIGEN_RESIDUAL_TOL: f64 = 1e-9;
pub const BIORTHOGONALITY_TOL: f64 = 1e-6;
pub const BIORTHOGONALITY_SPAN: usize = 40;
pub const PAIRING_TOL: f64 = 1e-8;
pub const SUM_ZERO_TOL: f64 = 1e-10;
pub const RECONSTRUCTION_TOL: f64 = 1e-6;
pub const RECONSTRUCTION_VECTORS: usize = 100;
pub const RECONSTRUCTION_SEED: u64 = 7;
pub const PROJECTION_TOL: f64 = 1e-6;
pub const FACTORIZATION_TOL: f64 = 1e-14;
pub const ORACLE_TOL: f64 = 1e-6;
pub const ORACLE_TAU: f64 = 10.0;
pub const ORACLE_SAMPLES: usize = 101;
pub const STATIONARITY_TOL: f64 = 1e-12;
pub const STATIONARITY_TAUS: [f64; 3] = [0.1, 1.0, 10.0];
pub const LYAPUNOV_TOL: f64 = 1e-12;
pub const DECAY_TOL: f64 = 0.01;
pub const DECAY_HORIZON: f64 = 10.0;
pub const DECAY_SAMPLES: usize = 64;
pub const PERRON_RADIUS_TOL: f64 = 1e-8;
pub const PERRON_VECTOR_TOL: f64 = 1e-6;
pub const GAMMA_TOL: f64 = 1e-8;
pub const COLUMN_SUM_TOL: f64 = 1e-12;

/// Options that change how results are judged, not what is computed.
#[derive(Debug, Clone, Copy, Default)]
pub struct VerifyOptions {
    /// Treat model-hypothesis warnings as failures.
    pub strict: bool,
}

struct Suite {
    checks: Vec<CheckResult>,
    warnings: Vec<String>,
}

impl Suite {
    fn push(&mut self, name: &str, measured: f64, threshold: f64, pass: bool, note: Option<String>) {
        self.checks.push(CheckResult { name: name.into(), measured, threshold, pass, note });
    }

    /// `measured ≤ threshold`, with NaN failing.
    fn at_most(&mut self, name: &str, measured: f64, threshold: f64) {
        self.push(name, measured, threshold, measured <= threshold, None);
    }

    fn run<T>(&mut self, name: &str, body: impl FnOnce() -> mastereq_core::Result<T>) -> CliResult<T> {
        body().map_err(|source| CliError::Check { check: name.into(), source })
    }
}

fn max_of(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, |a, b| if b.is_nan() || a.is_nan() { f64::NAN } else { a.max(b) })
}

pub fn run_verify(config: &RunConfig, options: VerifyOptions) -> CliResult<VerifyReport> {
    let Analysis { model, spectrum, system } = Analysis::new(config)?;
    let gen = model.generator();
    let ctx = spectrum.context();
    let n = model.n();
    let records = spectrum.records();
    let mut s = Suite { checks: Vec::new(), warnings: Vec::new() };

    let trace = gen.trace();
    s.at_most("trace_identity", (model.trace_identity_residual() / trace).abs(), TRACE_IDENTITY_TOL);
    let sum_nu = compensated::sum(records.iter().rev().map(|r| r.nu));
    s.at_most("eigenvalue_sum", ((sum_nu - model.trace_closed_form()) / trace).abs(), TRACE_TOL);
    s.at_most("detailed_balance", model.detailed_balance_residual(), DETAILED_BALANCE_TOL);

    let gap = s.run("gap_condition", || model.gap_condition_check(n))?;
    let warning = gap.hypotheses.warning();
    if let Some(w) = &warning {
        s.warnings.push(w.clone());
    }
    let gap_note = match (gap.first_violation(), &warning) {
        (Some(m), _) => Some(format!("first violation at m = {m}")),
        (None, Some(w)) => Some(w.clone()),
        (None, None) => None,
    };
    let gap_pass = gap.passed() && !(options.strict && warning.is_some());
    s.push("gap_condition", gap.min_ratio, 1.0, gap_pass, gap_note);

    s.at_most("interlacing", spectrum.interlacing_violations() as f64, 0.0);
    s.at_most("secular_pin_zero", (ctx.f_at_zero() - 1.0).abs(), PIN_TOL);
    s.at_most("secular_residual", max_of(records[1..].iter().map(|r| r.secular_residual)), config.solver.residual_tol);
    let max_fprime = records.iter().map(|r| r.fprime).fold(f64::NEG_INFINITY, f64::max);
    s.push("fprime_negative", max_fprime, 0.0, max_fprime < 0.0, None);
    let alt = s.run("alt_characterization", || {
        records[1..].iter().map(|r| alt_characterization_residual(ctx, r)).collect::<mastereq_core::Result<Vec<_>>>()
    })?;
    s.at_most("alt_characterization", max_of(alt), ALT_TOL);

    s.at_most("eigen_residual_right", max_of(system.rights().iter().map(|r| r.residual)), EIGEN_RESIDUAL_TOL);
    s.at_most("eigen_residual_left", max_of(system.lefts().iter().map(|q| q.residual)), EIGEN_RESIDUAL_TOL);
    let span = BIORTHOGONALITY_SPAN.min(n);
    let defect = system.biorthogonality_defect(span);
    let note = Some(format!("j, k <= {span}"));
    s.push("biorthogonality", defect, BIORTHOGONALITY_TOL, defect <= BIORTHOGONALITY_TOL, note);
    let pairing = s.run("pairing_identity", || {
        (1..=n)
            .map(|k| {
                let q = unscaled_left(gen, &spectrum, k)?;
                let expected = if k == 1 { 1.0 } else { -records[k - 1].fprime };
                let pairing = compensated::dot(system.right(k), &q);
                Ok(((pairing - expected) / expected).abs())
            })
            .collect::<mastereq_core::Result<Vec<_>>>()
    })?;
    s.at_most("pairing_identity", max_of(pairing), PAIRING_TOL);
    let sum_zero = (2..=n).map(|k| {
        let p = system.right(k);
        compensated::sum(p.iter().copied()).abs() / compensated::norm1(p)
    });
    s.at_most("sum_zero", max_of(sum_zero), SUM_ZERO_TOL);

    let mut rng = ChaCha8Rng::seed_from_u64(RECONSTRUCTION_SEED);
    let reconstruction = (0..RECONSTRUCTION_VECTORS).map(|_| {
        let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        system.reconstruction_error(&p)
    });
    s.at_most("reconstruction", max_of(reconstruction.collect::<Vec<_>>()), RECONSTRUCTION_TOL);
    let projection = s.run("projection_crosscheck", || {
        (1..=span).map(|j| system.projection_crosscheck(j)).collect::<mastereq_core::Result<Vec<_>>>()
    })?;
    let worst = max_of(projection);
    let note = Some(format!("j <= {span}"));
    s.push("projection_crosscheck", worst, PROJECTION_TOL, worst <= PROJECTION_TOL, note);
    s.at_most("factorization", factorization_residual(gen), FACTORIZATION_TOL);

    let gram = s.run("gram_diagnostic", || gram_diagnostic(gen, &spectrum, GramShift::Limit))?;
    match gram.smallest_n_star {
        Some(n_star) => s.push(
            "gram_diagnostic",
            n_star as f64,
            n as f64,
            true,
            Some(format!("off-diagonal sum {:e} at n_star = {n_star}", gram.at(n_star).unwrap_or(f64::NAN))),
        ),
        None => s.push("gram_diagnostic", f64::INFINITY, n as f64, false, Some("no n_star with sum below 1".into())),
    }

    let pole_gap = s.run("pole_gap_bound", || pole_gap_check(&model))?;
    let note = pole_gap.violations.first().map(|m| format!("first violation at m = {m}"));
    s.push("pole_gap_bound", pole_gap.min_ratio, 1.0, pole_gap.passed(), note);
    scaled_offset_bound(&mut s, config, &model, &spectrum)?;

    let e1 = s.run("conservation", || ProbabilityVector::basis_state(n, 1))?;
    let taus = s.run("conservation", || uniform_taus(ORACLE_TAU, ORACLE_SAMPLES))?;
    let spectral = s.run("conservation_spectral", || spectral_propagate(&system, &e1, &taus))?;
    let ode_tol = config.evolve.as_ref().map_or(1e-10, |e| e.ode_tol);
    let ode = s.run("conservation_ode", || ode_propagate(gen, &e1, &taus, ode_tol))?;
    for (name, traj) in [("conservation_spectral", &spectral), ("conservation_ode", &ode)] {
        let r = positivity_conservation_check(traj);
        let note = format!("min component {:e}", r.min_component);
        s.push(name, r.max_sum_error, mastereq_core::probability::SUM_TOLERANCE, r.passed(), Some(note));
    }
    let div = s.run("oracle_agreement", || divergence(&spectral, &ode))?;
    s.at_most("oracle_agreement", div.sup, ORACLE_TOL);

    let gibbs = gen.gibbs().components();
    let stationarity = STATIONARITY_TAUS.iter().map(|&tau| {
        let moved = evolve_vector(&system, gibbs, tau);
        let diff: Vec<f64> = moved.iter().zip(gibbs).map(|(a, b)| a - b).collect();
        compensated::norm2(&diff)
    });
    s.at_most("gibbs_stationarity", max_of(stationarity.collect::<Vec<_>>()), STATIONARITY_TOL);

    let lyapunov = s.run("lyapunov", || lyapunov_estimate(&system, &[1.0, 10.0, 100.0]))?;
    let measured = lyapunov.max_abs_trend().max(lyapunov.exponent.abs());
    s.at_most("lyapunov", measured, LYAPUNOV_TOL);

    decay_check(&mut s, gen, &system, ode_tol)?;

    match &config.finite {
        Some(section) => finite_suite(&mut s, config, section)?,
        None => s.warnings.push("no [finite] section; finite-model checks skipped".into()),
    }

    let all_pass = s.checks.iter().all(|c| c.pass);
    Ok(VerifyReport {
        format: REPORT_FORMAT.into(),
        all_pass,
        strict: options.strict,
        warnings: s.warnings,
        check: s.checks,
    })
}

/// The supremum of `|ν_k + b_k| e^{(α+1)λ_k/2}` at `N/4`, `N/2` and `N`;
/// passes when successive increments shrink.
fn scaled_offset_bound(
    s: &mut Suite,
    config: &RunConfig,
    model: &mastereq_core::TruncatedModel,
    spectrum: &mastereq_core::Spectrum,
) -> CliResult<()> {
    let n = model.n();
    let (full, _) = scaled_offset_supremum(model, spectrum);
    if n < 8 || model.spec().level_count().is_some() {
        let pass = full.is_finite();
        s.push("scaled_offset_bound", full, f64::INFINITY, pass, Some("supremum at N only".into()));
        return Ok(());
    }
    let mut sups = Vec::new();
    for size in [n / 4, n / 2] {
        let sub = s.run("scaled_offset_bound", || model.spec().truncate(size))?;
        let sub_spectrum =
            s.run("scaled_offset_bound", || solve_spectrum(&sub.secular_context()?, &config.solver.options()))?;
        sups.push(scaled_offset_supremum(&sub, &sub_spectrum).0);
    }
    sups.push(full);
    let first = (sups[1] - sups[0]).abs();
    let second = (sups[2] - sups[1]).abs();
    let note = format!("suprema {:e}, {:e}, {:e} at N = {}, {}, {n}", sups[0], sups[1], sups[2], n / 4, n / 2);
    s.push("scaled_offset_bound", second, first, second <= first, Some(note));
    Ok(())
}

/// Fits the decay of `p_Gibbs + ε p̂_2` along the Runge–Kutta trajectory,
/// with `ε` the midpoint of the positive amplitudes keeping every component
/// nonnegative.
fn decay_check(s: &mut Suite, gen: &Generator, system: &BiorthogonalSystem, ode_tol: f64) -> CliResult<()> {
    let n = system.dim();
    let k = 2;
    let nu = system.eigenvalues()[k - 1];
    let interval = s.run("decay_fit", || mode_amplitude_interval(system, k, &vec![0.0; n]))?;
    let eps = match interval {
        Some((_, hi)) if hi > 0.0 => hi / 2.0,
        _ => {
            s.push("decay_fit", f64::NAN, DECAY_TOL, false, Some("no positive amplitude keeps p0 nonnegative".into()));
            return Ok(());
        }
    };
    let p0 = s.run("decay_fit", || ProbabilityVector::new(gibbs_plus_mode(system, k, eps)?, Normalization::Strict))?;
    let taus = s.run("decay_fit", || uniform_taus(DECAY_HORIZON / nu.abs(), DECAY_SAMPLES))?;
    let traj = s.run("decay_fit", || ode_propagate(gen, &p0, &taus, ode_tol))?;
    match s.run("decay_fit", || decay_fit_mode(&traj, system, k))? {
        DecayOutcome::Fitted(r) => {
            let note = format!("fitted {:e} against nu_2 = {:e}, eps = {eps:e}", r.fitted_rate, r.expected_rate);
            s.push("decay_fit", r.relative_gap, DECAY_TOL, r.relative_gap <= DECAY_TOL, Some(note));
        }
        DecayOutcome::Converged => {
            s.push("decay_fit", f64::NAN, DECAY_TOL, false, Some("distance fell below the fit floor".into()));
        }
    }
    Ok(())
}

fn finite_suite(s: &mut Suite, config: &RunConfig, section: &FiniteSection) -> CliResult<()> {
    let model = s.run("finite_model", || FiniteModel::new(section.levels.clone(), section.rho))?;
    let spectrum = s.run("finite_spectrum", || finite_spectrum(&model, &config.solver.options()))?;
    let rho = model.rho();
    s.at_most("finite_trace", (spectrum.trace_check() / spectrum.trace()).abs(), TRACE_TOL);
    s.at_most("finite_interlacing", spectrum.interlacing_violations() as f64, 0.0);
    let top = spectrum.records()[1..].iter().map(|r| r.nu).fold(f64::NEG_INFINITY, f64::max);
    s.push("finite_negativity", top, 0.0, top < 0.0, None);

    let perron = s.run("finite_perron_radius", || perron_radius(&model, section.power_tol))?;
    let note = format!("radius {} after {} iterations", perron.radius, perron.iterations);
    let radius_gap = (perron.radius - rho).abs();
    s.push("finite_perron_radius", radius_gap, PERRON_RADIUS_TOL, radius_gap <= PERRON_RADIUS_TOL, Some(note));
    let vector_gap = max_of(perron.vector.iter().zip(model.gibbs().components()).map(|(a, b)| (a - b).abs()));
    s.at_most("finite_perron_vector", vector_gap, PERRON_VECTOR_TOL);
    let margin = dominance_margin(&spectrum, rho);
    s.push("finite_dominance", margin, 0.0, margin > 0.0, None);
    let columns = max_of(model.shifted_column_sums().iter().map(|c| (c - rho).abs() / rho));
    s.at_most("finite_column_sums", columns, COLUMN_SUM_TOL);

    let system = s.run("finite_decay", || BiorthogonalSystem::build(model.generator(), &spectrum))?;
    let init = InitialCondition::parse(&section.init, model.n())?;
    let p0 = initial_state(&init, &system)?;
    let taus = s.run("finite_decay", || uniform_taus(section.tau_max, section.samples))?;
    let report = s.run("finite_decay", || finite_decay_check(&model, &system, &p0, &taus))?;
    let note = format!("envelope ratio {:e}", report.max_envelope_ratio);
    s.push("finite_decay", (report.gamma - 1.0).abs(), GAMMA_TOL, report.passed(GAMMA_TOL), Some(note));
    Ok(())
}

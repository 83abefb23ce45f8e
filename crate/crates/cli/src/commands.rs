use std::path::{Path, PathBuf};

use mastereq_core::evolution::{divergence, ode_propagate, spectral_propagate, uniform_taus, DecayOutcome};
use mastereq_core::finite::{dominance_margin, finite_decay_check, finite_spectrum, perron_radius, FiniteModel};
use mastereq_core::BiorthogonalSystem;

use crate::analysis::{initial_state, Analysis};
use crate::config::{InitialCondition, MethodChoice, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::{
    divergence_csv, stamp_line, trajectory_csv, write_file, write_structured, EigenvalueRow, FiniteDecayEcho,
    FiniteFile, PerronEcho, SpectrumFile, TraceCheck, FINITE_FORMAT,
};
use crate::verify::{run_verify, VerifyOptions, GAMMA_TOL};

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct CommonOptions {
    /// Overrides `output.dir`.
    pub out: Option<PathBuf>,
    /// Adds a wall-clock header comment to text outputs.
    pub stamp: bool,
}

/// What a command wrote, plus lines for the terminal.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub messages: Vec<String>,
    /// Set when the command finished its work but the result is a failure.
    pub failure: Option<CliError>,
}

fn out_dir(config: &RunConfig, common: &CommonOptions) -> PathBuf {
    common.out.clone().unwrap_or_else(|| config.output.dir.clone())
}

fn stamped(text: String, stamp: bool) -> String {
    if stamp {
        stamp_line() + &text
    } else {
        text
    }
}

pub fn cmd_spectrum(config: &RunConfig, common: &CommonOptions) -> CliResult<Outcome> {
    let (model, spectrum) = Analysis::spectrum_only(config)?;
    let file = SpectrumFile::new(config, &model, &spectrum);
    let mut outcome = Outcome::default();
    if !file.tail_bound.within_tolerance {
        outcome.messages.push(format!(
            "warning: tail bound {:e} exceeds tail_tol {:e}",
            file.tail_bound.value, file.tail_bound.tolerance
        ));
    }
    if let Some(w) = &file.model_echo.warning {
        outcome.messages.push(format!("warning: {w}"));
    }
    let dir = out_dir(config, common);
    outcome.files = write_structured(&dir, "spectrum", &config.output.formats, &file, &file.to_toml(), common.stamp)?;
    outcome.messages.push(format!("solved {} eigenvalues", spectrum.len()));
    Ok(outcome)
}

pub fn cmd_evolve(config: &RunConfig, common: &CommonOptions) -> CliResult<Outcome> {
    let section =
        config.evolve.as_ref().ok_or_else(|| CliError::Validation("evolve needs an [evolve] section".into()))?;
    let analysis = Analysis::new(config)?;
    let init = InitialCondition::parse(&section.init, analysis.model.n())?;
    let p0 = initial_state(&init, &analysis.system)?;
    let taus = uniform_taus(section.tau_max, section.samples)?;
    let dir = out_dir(config, common);
    let mut outcome = Outcome::default();
    let spectral = match section.method {
        MethodChoice::Spectral | MethodChoice::Both => Some(spectral_propagate(&analysis.system, &p0, &taus)?),
        MethodChoice::Ode => None,
    };
    let ode = match section.method {
        MethodChoice::Ode | MethodChoice::Both => {
            Some(ode_propagate(analysis.model.generator(), &p0, &taus, section.ode_tol)?)
        }
        MethodChoice::Spectral => None,
    };
    if let Some(t) = &spectral {
        outcome.files.push(write_file(&dir, "trajectory_spectral.csv", &stamped(trajectory_csv(t), common.stamp))?);
    }
    if let Some(t) = &ode {
        outcome.files.push(write_file(&dir, "trajectory_ode.csv", &stamped(trajectory_csv(t), common.stamp))?);
    }
    if let (Some(a), Some(b)) = (&spectral, &ode) {
        let div = divergence(a, b)?;
        outcome.files.push(write_file(&dir, "divergence.csv", &stamped(divergence_csv(&div), common.stamp))?);
        outcome.messages.push(format!("max l2 difference between methods: {:e}", div.sup));
    }
    outcome.messages.push(format!("propagated {} samples to tau = {}", taus.len(), section.tau_max));
    Ok(outcome)
}

pub fn cmd_verify(config: &RunConfig, common: &CommonOptions, options: VerifyOptions) -> CliResult<Outcome> {
    let report = run_verify(config, options)?;
    let dir = out_dir(config, common);
    let files =
        write_structured(&dir, "verify_report", &config.output.formats, &report, &report.to_toml(), common.stamp)?;
    let mut messages: Vec<String> = report.warnings.iter().map(|w| format!("warning: {w}")).collect();
    for c in &report.check {
        let status = if c.pass { "PASS" } else { "FAIL" };
        messages.push(format!("{status} {:<24} measured {:e} threshold {:e}", c.name, c.measured, c.threshold));
    }
    let failed = report.failures();
    let failure = (failed > 0).then(|| CliError::VerificationFailed { failed, report: files[0].clone() });
    if failure.is_none() {
        messages.push(format!("all {} checks passed", report.check.len()));
    }
    Ok(Outcome { files, messages, failure })
}

/// Builds the finite-model artifact and its trajectory CSV without writing them.
pub fn finite_file(config: &RunConfig) -> CliResult<(FiniteFile, String)> {
    let section =
        config.finite.as_ref().ok_or_else(|| CliError::Validation("finite needs a [finite] section".into()))?;
    let model = FiniteModel::new(section.levels.clone(), section.rho)?;
    let spectrum = finite_spectrum(&model, &config.solver.options())?;
    let perron = perron_radius(&model, section.power_tol)?;
    let system = BiorthogonalSystem::build(model.generator(), &spectrum)?;
    let init = InitialCondition::parse(&section.init, model.n())?;
    let p0 = initial_state(&init, &system)?;
    let taus = uniform_taus(section.tau_max, section.samples)?;
    let report = finite_decay_check(&model, &system, &p0, &taus)?;
    let fitted_rate = match &report.decay {
        Some(DecayOutcome::Fitted(r)) => Some(r.fitted_rate),
        _ => None,
    };
    let file = FiniteFile {
        format: FINITE_FORMAT.into(),
        levels: section.levels.clone(),
        rho: model.rho(),
        gibbs: model.gibbs().components().to_vec(),
        trace_check: TraceCheck::new(&spectrum),
        perron: PerronEcho {
            radius: perron.radius,
            iterations: perron.iterations,
            vector: perron.vector,
            dominance_margin: dominance_margin(&spectrum, model.rho()),
        },
        decay: FiniteDecayEcho {
            gamma: report.gamma,
            envelope_constant: report.envelope_constant,
            rate: report.rate,
            max_envelope_ratio: report.max_envelope_ratio,
            fitted_rate,
            passed: report.passed(GAMMA_TOL),
        },
        eigenvalues: spectrum.records().iter().map(EigenvalueRow::from).collect(),
    };
    Ok((file, trajectory_csv(&report.trajectory)))
}

pub fn cmd_finite(config: &RunConfig, common: &CommonOptions) -> CliResult<Outcome> {
    let (file, csv) = finite_file(config)?;
    let dir = out_dir(config, common);
    let mut files = write_structured(&dir, "finite", &config.output.formats, &file, &file.to_toml(), common.stamp)?;
    files.push(write_file(&dir, "finite_trajectory.csv", &stamped(csv, common.stamp))?);
    let messages = vec![
        format!("perron radius {} (rho = {})", file.perron.radius, file.rho),
        format!("limit mass gamma = {}", file.decay.gamma),
    ];
    Ok(Outcome { files, messages, failure: None })
}

/// Loads and validates the config at `path`.
pub fn load_config(path: &Path) -> CliResult<RunConfig> {
    RunConfig::load(path)
}

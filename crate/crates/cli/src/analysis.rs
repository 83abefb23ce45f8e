use mastereq_core::evolution::gibbs_plus_mode;
use mastereq_core::secular::solve_spectrum;
use mastereq_core::{BiorthogonalSystem, Normalization, ProbabilityVector, Spectrum, TruncatedModel};

use crate::config::{InitialCondition, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::parse_trajectory_csv;

/// Truncated model with its spectrum and eigenvector system.
pub struct Analysis {
    pub model: TruncatedModel,
    pub spectrum: Spectrum,
    pub system: BiorthogonalSystem,
}

impl Analysis {
    pub fn spectrum_only(config: &RunConfig) -> CliResult<(TruncatedModel, Spectrum)> {
        let model = config.level_spec()?.truncate(config.truncation.n)?;
        let spectrum = solve_spectrum(&model.secular_context()?, &config.solver.options())?;
        Ok((model, spectrum))
    }

    pub fn new(config: &RunConfig) -> CliResult<Self> {
        let (model, spectrum) = Self::spectrum_only(config)?;
        let system = BiorthogonalSystem::build(model.generator(), &spectrum)?;
        Ok(Self { model, spectrum, system })
    }
}

/// Builds the initial state described by `init` for an `n`-level system.
pub fn initial_state(init: &InitialCondition, system: &BiorthogonalSystem) -> CliResult<ProbabilityVector> {
    let n = system.dim();
    let p = match init {
        InitialCondition::Gibbs => ProbabilityVector::new(system.right(1).to_vec(), Normalization::Strict)?,
        InitialCondition::BasisState(m) => ProbabilityVector::basis_state(n, *m)?,
        InitialCondition::GibbsPlusMode { k, eps } => {
            ProbabilityVector::new(gibbs_plus_mode(system, *k, *eps)?, Normalization::Strict)
                .map_err(|e| CliError::Validation(format!("gibbs_plus_mode:{k},{eps}: {e}")))?
        }
        InitialCondition::File(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let values = parse_state(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
            if values.len() != n {
                return Err(CliError::Validation(format!(
                    "{}: expected {n} components, found {}",
                    path.display(),
                    values.len()
                )));
            }
            ProbabilityVector::new(values, Normalization::Strict)
                .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?
        }
    };
    Ok(p)
}

/// Accepts whitespace- or comma-separated numbers, or a trajectory CSV
/// whose first data row is used.
fn parse_state(text: &str) -> Result<Vec<f64>, String> {
    if text.trim_start().starts_with("tau") {
        let (_, rows) = parse_trajectory_csv(text).map_err(|e| e.to_string())?;
        return rows.into_iter().next().ok_or_else(|| "no data rows".to_string());
    }
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|e| format!("`{t}`: {e}")))
        .collect()
}

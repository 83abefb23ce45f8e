//! Serialized artifacts: spectrum files, trajectory CSVs and verification reports.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use mastereq_core::evolution::{Divergence, Trajectory};
use mastereq_core::{EigenvalueRecord, Spectrum, TailBound, TruncatedModel};
use serde::{Deserialize, Serialize};

use crate::config::{Format, LevelKind, RunConfig};
use crate::error::{CliError, CliResult};
use crate::numfmt::format_f64;

pub const SPECTRUM_FORMAT: &str = "mastereq-spectrum/1";
pub const FINITE_FORMAT: &str = "mastereq-finite/1";
pub const REPORT_FORMAT: &str = "mastereq-verify/1";

/// Minimal TOML emitter with fixed key order and the crate's number format.
#[derive(Debug, Default)]
pub struct TomlWriter {
    buf: String,
}

fn quoted(s: &str) -> String {
    toml::Value::String(s.to_owned()).to_string()
}

impl TomlWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn comment(&mut self, text: &str) -> &mut Self {
        for line in text.lines() {
            let _ = writeln!(self.buf, "# {line}");
        }
        self
    }

    fn header(&mut self, text: String) {
        if !self.buf.is_empty() {
            self.buf.push('\n');
        }
        self.buf.push_str(&text);
        self.buf.push('\n');
    }

    pub fn table(&mut self, name: &str) -> &mut Self {
        self.header(format!("[{name}]"));
        self
    }

    pub fn array_table(&mut self, name: &str) -> &mut Self {
        self.header(format!("[[{name}]]"));
        self
    }

    fn raw(&mut self, key: &str, value: &str) -> &mut Self {
        let _ = writeln!(self.buf, "{key} = {value}");
        self
    }

    pub fn string(&mut self, key: &str, value: &str) -> &mut Self {
        self.raw(key, &quoted(value))
    }

    pub fn float(&mut self, key: &str, value: f64) -> &mut Self {
        self.raw(key, &format_f64(value))
    }

    pub fn opt_float(&mut self, key: &str, value: Option<f64>) -> &mut Self {
        match value {
            Some(v) => self.float(key, v),
            None => self,
        }
    }

    pub fn uint(&mut self, key: &str, value: usize) -> &mut Self {
        self.raw(key, &value.to_string())
    }

    pub fn opt_uint(&mut self, key: &str, value: Option<usize>) -> &mut Self {
        match value {
            Some(v) => self.uint(key, v),
            None => self,
        }
    }

    pub fn boolean(&mut self, key: &str, value: bool) -> &mut Self {
        self.raw(key, if value { "true" } else { "false" })
    }

    pub fn floats(&mut self, key: &str, values: &[f64]) -> &mut Self {
        let items: Vec<String> = values.iter().map(|&v| format_f64(v)).collect();
        self.raw(key, &format!("[{}]", items.join(", ")))
    }

    pub fn strings(&mut self, key: &str, values: &[String]) -> &mut Self {
        let items: Vec<String> = values.iter().map(|v| quoted(v)).collect();
        self.raw(key, &format!("[{}]", items.join(", ")))
    }

    pub fn finish(&mut self) -> String {
        std::mem::take(&mut self.buf)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEcho {
    pub levels_kind: String,
    pub omega: Option<f64>,
    pub offset: Option<f64>,
    pub values: Option<Vec<f64>>,
    pub alpha: f64,
    pub theta: f64,
    pub gap_constant: f64,
    pub n: usize,
    pub hypotheses_hold: bool,
    pub warning: Option<String>,
}

impl ModelEcho {
    pub fn new(config: &RunConfig, model: &TruncatedModel) -> Self {
        let m = &config.model;
        let hypotheses = model.spec().hypotheses();
        Self {
            levels_kind: match m.levels.kind {
                LevelKind::Affine => "affine".into(),
                LevelKind::Explicit => "explicit".into(),
            },
            omega: m.levels.omega,
            offset: m.levels.offset,
            values: m.levels.values.clone(),
            alpha: m.alpha,
            theta: m.theta,
            gap_constant: m.gap_constant,
            n: model.n(),
            hypotheses_hold: hypotheses.hold(),
            warning: hypotheses.warning(),
        }
    }

    fn write(&self, w: &mut TomlWriter) {
        w.table("model_echo")
            .string("levels_kind", &self.levels_kind)
            .opt_float("omega", self.omega)
            .opt_float("offset", self.offset);
        if let Some(values) = &self.values {
            w.floats("values", values);
        }
        w.float("alpha", self.alpha)
            .float("theta", self.theta)
            .float("gap_constant", self.gap_constant)
            .uint("n", self.n)
            .boolean("hypotheses_hold", self.hypotheses_hold);
        if let Some(warning) = &self.warning {
            w.string("warning", warning);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailBoundEcho {
    pub kind: String,
    pub beta: f64,
    pub value: f64,
    pub tolerance: f64,
    pub within_tolerance: bool,
}

impl TailBoundEcho {
    pub fn new(model: &TruncatedModel, tolerance: f64) -> Self {
        let bound = model.tail_bound();
        let kind = match bound {
            TailBound::Geometric(_) => "geometric",
            TailBound::FiniteModel => "finite_model",
        };
        Self {
            kind: kind.into(),
            beta: model.tail_beta(),
            value: bound.value(),
            tolerance,
            within_tolerance: bound.value() <= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceCheck {
    pub trace: f64,
    pub sum_nu: f64,
    pub residual: f64,
    pub relative: f64,
}

impl TraceCheck {
    pub fn new(spectrum: &Spectrum) -> Self {
        let trace = spectrum.trace();
        let residual = spectrum.trace_check();
        Self { trace, sum_nu: trace + residual, residual, relative: (residual / trace).abs() }
    }

    fn write(&self, w: &mut TomlWriter) {
        w.table("trace_check")
            .float("trace", self.trace)
            .float("sum_nu", self.sum_nu)
            .float("residual", self.residual)
            .float("relative", self.relative);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigenvalueRow {
    pub k: usize,
    pub nu: f64,
    pub bracket: [f64; 2],
    /// 1-based index of the pole `-b_pole` the eigenvalue is stored against.
    pub pole: Option<usize>,
    /// `ν + b_pole`, exact to working precision even when `ν` rounds to `-b_pole`.
    pub offset: Option<f64>,
    pub secular_residual: f64,
    pub fprime: f64,
    pub alt_residual: Option<f64>,
    pub newton_iterations: usize,
    pub bisection_fallback: bool,
}

impl From<&EigenvalueRecord> for EigenvalueRow {
    fn from(r: &EigenvalueRecord) -> Self {
        Self {
            k: r.k,
            nu: r.nu,
            bracket: [r.bracket.0, r.bracket.1],
            pole: r.shift.map(|s| s.pole + 1),
            offset: r.shift.map(|s| s.offset),
            secular_residual: r.secular_residual,
            fprime: r.fprime,
            alt_residual: r.alt_residual,
            newton_iterations: r.newton_iterations,
            bisection_fallback: r.bisection_fallback,
        }
    }
}

fn write_rows(w: &mut TomlWriter, rows: &[EigenvalueRow]) {
    for row in rows {
        w.array_table("eigenvalues")
            .uint("k", row.k)
            .float("nu", row.nu)
            .floats("bracket", &row.bracket)
            .opt_uint("pole", row.pole)
            .opt_float("offset", row.offset)
            .float("secular_residual", row.secular_residual)
            .float("fprime", row.fprime)
            .opt_float("alt_residual", row.alt_residual)
            .uint("newton_iterations", row.newton_iterations)
            .boolean("bisection_fallback", row.bisection_fallback);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumFile {
    pub format: String,
    pub model_echo: ModelEcho,
    pub tail_bound: TailBoundEcho,
    pub trace_check: TraceCheck,
    pub eigenvalues: Vec<EigenvalueRow>,
}

impl SpectrumFile {
    pub fn new(config: &RunConfig, model: &TruncatedModel, spectrum: &Spectrum) -> Self {
        Self {
            format: SPECTRUM_FORMAT.into(),
            model_echo: ModelEcho::new(config, model),
            tail_bound: TailBoundEcho::new(model, config.truncation.tail_tol),
            trace_check: TraceCheck::new(spectrum),
            eigenvalues: spectrum.records().iter().map(EigenvalueRow::from).collect(),
        }
    }

    pub fn to_toml(&self) -> String {
        let mut w = TomlWriter::new();
        w.string("format", &self.format);
        self.model_echo.write(&mut w);
        let t = &self.tail_bound;
        w.table("tail_bound")
            .string("kind", &t.kind)
            .float("beta", t.beta)
            .float("value", t.value)
            .float("tolerance", t.tolerance)
            .boolean("within_tolerance", t.within_tolerance);
        self.trace_check.write(&mut w);
        write_rows(&mut w, &self.eigenvalues);
        w.finish()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerronEcho {
    pub radius: f64,
    pub iterations: usize,
    pub vector: Vec<f64>,
    pub dominance_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiniteDecayEcho {
    pub gamma: f64,
    pub envelope_constant: f64,
    pub rate: f64,
    pub max_envelope_ratio: f64,
    pub fitted_rate: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiniteFile {
    pub format: String,
    pub levels: Vec<f64>,
    pub rho: f64,
    pub gibbs: Vec<f64>,
    pub trace_check: TraceCheck,
    pub perron: PerronEcho,
    pub decay: FiniteDecayEcho,
    pub eigenvalues: Vec<EigenvalueRow>,
}

impl FiniteFile {
    pub fn to_toml(&self) -> String {
        let mut w = TomlWriter::new();
        w.string("format", &self.format)
            .floats("levels", &self.levels)
            .float("rho", self.rho)
            .floats("gibbs", &self.gibbs);
        self.trace_check.write(&mut w);
        let p = &self.perron;
        w.table("perron")
            .float("radius", p.radius)
            .uint("iterations", p.iterations)
            .floats("vector", &p.vector)
            .float("dominance_margin", p.dominance_margin);
        let d = &self.decay;
        w.table("decay")
            .float("gamma", d.gamma)
            .float("envelope_constant", d.envelope_constant)
            .float("rate", d.rate)
            .float("max_envelope_ratio", d.max_envelope_ratio)
            .opt_float("fitted_rate", d.fitted_rate)
            .boolean("passed", d.passed);
        write_rows(&mut w, &self.eigenvalues);
        w.finish()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckResult {
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
    pub pass: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyReport {
    pub format: String,
    pub all_pass: bool,
    pub strict: bool,
    pub warnings: Vec<String>,
    pub check: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn failures(&self) -> usize {
        self.check.iter().filter(|c| !c.pass).count()
    }

    pub fn to_toml(&self) -> String {
        let mut w = TomlWriter::new();
        w.string("format", &self.format)
            .boolean("all_pass", self.all_pass)
            .boolean("strict", self.strict)
            .strings("warnings", &self.warnings);
        for c in &self.check {
            w.array_table("check")
                .string("name", &c.name)
                .float("measured", c.measured)
                .float("threshold", c.threshold)
                .boolean("pass", c.pass);
            if let Some(note) = &c.note {
                w.string("note", note);
            }
        }
        w.finish()
    }
}

pub fn parse_toml<T: serde::de::DeserializeOwned>(text: &str) -> CliResult<T> {
    toml::from_str(text).map_err(|e| CliError::Validation(e.message().to_string()))
}

/// Header line stamped into files when the caller asks for it.
pub fn stamp_line() -> String {
    let secs = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    format!("# generated at unix time {secs}\n")
}

/// `tau,p_1,...,p_N` rows with LF endings.
pub fn trajectory_csv(trajectory: &Trajectory) -> String {
    let n = trajectory.states.first().map(|s| s.len()).unwrap_or(0);
    let mut out = String::from("tau");
    for m in 1..=n {
        let _ = write!(out, ",p_{m}");
    }
    out.push('\n');
    for (tau, state) in trajectory.taus.iter().zip(&trajectory.states) {
        out.push_str(&format_f64(*tau));
        for &p in state.components() {
            out.push(',');
            out.push_str(&format_f64(p));
        }
        out.push('\n');
    }
    out
}

pub fn divergence_csv(divergence: &Divergence) -> String {
    let mut out = String::from("tau,l2_diff\n");
    for (tau, d) in divergence.taus.iter().zip(&divergence.l2_diff) {
        let _ = writeln!(out, "{},{}", format_f64(*tau), format_f64(*d));
    }
    out
}

/// Reads a CSV trajectory back into `(taus, rows)`.
pub fn parse_trajectory_csv(text: &str) -> CliResult<(Vec<f64>, Vec<Vec<f64>>)> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().ok_or_else(|| CliError::Validation("empty trajectory file".into()))?;
    let width = header.split(',').count();
    let mut taus = Vec::new();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let values: Vec<f64> = line
            .split(',')
            .map(|f| f.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Validation(format!("row {}: {e}", i + 1)))?;
        if values.len() != width {
            return Err(CliError::Validation(format!("row {} has {} fields, header has {width}", i + 1, values.len())));
        }
        taus.push(values[0]);
        rows.push(values[1..].to_vec());
    }
    Ok((taus, rows))
}

/// Writes `contents` under `dir`, creating the directory if needed.
pub fn write_file(dir: &Path, name: &str, contents: &str) -> CliResult<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

/// Writes a structured artifact in every requested format; returns the paths.
pub fn write_structured<T: Serialize>(
    dir: &Path,
    stem: &str,
    formats: &[Format],
    value: &T,
    toml_text: &str,
    stamp: bool,
) -> CliResult<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for format in formats {
        let path = match format {
            Format::Toml => {
                let text = if stamp { stamp_line() + toml_text } else { toml_text.to_owned() };
                write_file(dir, &format!("{stem}.toml"), &text)?
            }
            Format::Json => {
                let mut text = serde_json::to_string_pretty(value)
                    .map_err(|e| CliError::Validation(format!("cannot encode {stem} as JSON: {e}")))?;
                text.push('\n');
                write_file(dir, &format!("{stem}.json"), &text)?
            }
        };
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(k: usize, nu: f64) -> EigenvalueRow {
        EigenvalueRow {
            k,
            nu,
            bracket: [-0.16553266665893119, -0.10040063751263298],
            pole: (k > 1).then_some(k - 1),
            offset: (k > 1).then_some(-1.0023840566425807e-42),
            secular_residual: 2.220446049250313e-16,
            fprime: -177.46367616552635,
            alt_residual: (k > 1).then_some(3.3e-17),
            newton_iterations: 7,
            bisection_fallback: false,
        }
    }

    fn sample() -> SpectrumFile {
        SpectrumFile {
            format: SPECTRUM_FORMAT.into(),
            model_echo: ModelEcho {
                levels_kind: "affine".into(),
                omega: Some(1.0),
                offset: Some(0.0),
                values: None,
                alpha: 2.0,
                theta: 0.4,
                gap_constant: 1.0,
                n: 2,
                hypotheses_hold: true,
                warning: Some("quote \" and newline \n".into()),
            },
            tail_bound: TailBoundEcho {
                kind: "geometric".into(),
                beta: 0.5,
                value: 0.5677,
                tolerance: 1e-12,
                within_tolerance: false,
            },
            trace_check: TraceCheck { trace: -0.1122824, sum_nu: -0.1122824, residual: -0.0, relative: 0.0 },
            eigenvalues: vec![row(1, 0.0), row(2, -0.11228238707756568)],
        }
    }

    fn bits(f: &SpectrumFile) -> Vec<u64> {
        let mut out = vec![f.trace_check.residual.to_bits(), f.tail_bound.value.to_bits()];
        for r in &f.eigenvalues {
            out.extend([r.nu.to_bits(), r.bracket[0].to_bits(), r.fprime.to_bits()]);
            out.extend(r.offset.map(f64::to_bits));
        }
        out
    }

    #[test]
    fn toml_round_trip_is_bit_identical() {
        let file = sample();
        let text = file.to_toml();
        assert!(text.contains("nu = 0\n"), "{text}");
        let back: SpectrumFile = parse_toml(&text).unwrap();
        assert_eq!(back, file);
        assert_eq!(bits(&back), bits(&file));
        assert_eq!(back.to_toml(), text);
    }

    #[test]
    fn json_round_trip_is_bit_identical() {
        let file = sample();
        let text = serde_json::to_string_pretty(&file).unwrap();
        let back: SpectrumFile = serde_json::from_str(&text).unwrap();
        assert_eq!(bits(&back), bits(&file));
    }

    #[test]
    fn report_round_trip() {
        let report = VerifyReport {
            format: REPORT_FORMAT.into(),
            all_pass: false,
            strict: false,
            warnings: vec!["w".into()],
            check: vec![CheckResult {
                name: "trace_identity".into(),
                measured: 1.5e-17,
                threshold: 1e-10,
                pass: true,
                note: None,
            }],
        };
        let back: VerifyReport = parse_toml(&report.to_toml()).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn csv_parses_back() {
        let text = "tau,p_1,p_2\n0,1,0\n0.5,0.9,0.1\n";
        let (taus, rows) = parse_trajectory_csv(text).unwrap();
        assert_eq!(taus, vec![0.0, 0.5]);
        assert_eq!(rows[1], vec![0.9, 0.1]);
        assert!(parse_trajectory_csv("tau,p_1\n0,1,2\n").is_err());
    }
}

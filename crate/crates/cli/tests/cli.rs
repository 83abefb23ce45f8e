//! End-to-end runs of the `mastereq` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mastereq_cli::output::{parse_toml, parse_trajectory_csv, SpectrumFile, VerifyReport};

const MODEL: &str = r#"
[model]
alpha = 2.0
theta = 0.4
gap_constant = 1.0
levels = { kind = "affine", omega = 1.0, offset = 0.0 }
"#;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mastereq"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, body).unwrap();
    path
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn spectrum_of_two_level_model() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&["spectrum"], &configs().join("demo_two_level.toml"), out.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("tail bound"), "tail warning expected: {}", stdout(&o));
    let text = std::fs::read_to_string(out.path().join("spectrum.toml")).unwrap();
    assert!(text.contains("\nnu = 0\n"), "{text}");
    let file: SpectrumFile = parse_toml(&text).unwrap();
    assert_eq!(file.eigenvalues.len(), 2);
    assert_eq!(file.eigenvalues[0].nu.to_bits(), 0f64.to_bits());
    assert!((file.eigenvalues[1].nu + 0.1122824).abs() < 5e-8);
    assert_eq!(file.to_toml(), text);
    assert!(!file.tail_bound.within_tolerance);
    assert!(file.trace_check.relative <= 1e-14);
}

#[test]
fn spectrum_json_matches_toml_bits() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{MODEL}\n[truncation]\nn = 24\n\n[output]\nformats = [\"toml\", \"json\"]\n");
    let config = write_config(dir.path(), &body);
    let out = dir.path().join("out");
    let o = run(&["spectrum"], &config, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let from_toml: SpectrumFile = parse_toml(&std::fs::read_to_string(out.join("spectrum.toml")).unwrap()).unwrap();
    let from_json: SpectrumFile =
        serde_json::from_str(&std::fs::read_to_string(out.join("spectrum.json")).unwrap()).unwrap();
    for (a, b) in from_toml.eigenvalues.iter().zip(&from_json.eigenvalues) {
        assert_eq!(a.nu.to_bits(), b.nu.to_bits());
        assert_eq!(a.offset.map(f64::to_bits), b.offset.map(f64::to_bits));
        assert_eq!(a.fprime.to_bits(), b.fprime.to_bits());
    }
    assert_eq!(from_toml, from_json);
}

#[test]
fn evolve_from_gibbs_stays_put() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{MODEL}\n[truncation]\nn = 16\n\n[evolve]\ninit = \"gibbs\"\ntau_max = 50.0\nsamples = 11\n");
    let config = write_config(dir.path(), &body);
    let out = dir.path().join("out");
    let o = run(&["evolve"], &config, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(out.join("trajectory_spectral.csv")).unwrap();
    assert!(text.starts_with("tau,p_1,p_2,"));
    assert!(!text.contains('\r'));
    let (taus, rows) = parse_trajectory_csv(&text).unwrap();
    assert_eq!(taus.len(), 11);
    for row in &rows {
        for (a, b) in row.iter().zip(&rows[0]) {
            assert!((a - b).abs() <= 1e-16, "{a} vs {b}");
        }
    }
}

#[test]
fn evolve_two_level_both_methods() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&["evolve"], &configs().join("demo_two_level.toml"), out.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for name in ["trajectory_spectral.csv", "trajectory_ode.csv"] {
        let (_, rows) = parse_trajectory_csv(&std::fs::read_to_string(out.path().join(name)).unwrap()).unwrap();
        let last = rows.last().unwrap();
        assert!((last[0] - 0.731059).abs() < 1e-6 && (last[1] - 0.268941).abs() < 1e-6, "{name}: {last:?}");
    }
    let div = std::fs::read_to_string(out.path().join("divergence.csv")).unwrap();
    assert!(div.starts_with("tau,l2_diff\n"));
    let worst = div.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap()).fold(0.0, f64::max);
    assert!(worst <= 1e-6, "{worst}");
}

#[test]
fn evolve_reads_initial_state_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("p0.txt"), "0.5 0.5\n").unwrap();
    let body = format!(
        "{MODEL}\n[truncation]\nn = 2\n\n[evolve]\ninit = \"file:p0.txt\"\ntau_max = 1.0\nsamples = 3\nmethod = \"ode\"\n"
    );
    let config = write_config(dir.path(), &body);
    let out = dir.path().join("out");
    let o = run(&["evolve"], &config, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(out.join("trajectory_ode.csv")).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("0,0.5,0.5"), "{text}");
    assert!(!out.join("trajectory_spectral.csv").exists());
}

#[test]
fn verify_demo_passes_and_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let config = configs().join("demo.toml");
    let oa = run(&["verify"], &config, a.path());
    let ob = run(&["verify"], &config, b.path());
    assert_eq!(oa.status.code(), Some(0), "{}{}", stdout(&oa), stderr(&oa));
    assert_eq!(ob.status.code(), Some(0));
    for name in ["verify_report.toml", "verify_report.json"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name} differs between runs");
    }
    let report: VerifyReport =
        parse_toml(&std::fs::read_to_string(a.path().join("verify_report.toml")).unwrap()).unwrap();
    assert!(report.all_pass);
    assert!(report.warnings.is_empty(), "{:?}", report.warnings);
    let names: Vec<&str> = report.check.iter().map(|c| c.name.as_str()).collect();
    let order = ["trace_identity", "detailed_balance", "gap_condition", "interlacing", "decay_fit", "finite_decay"];
    let positions: Vec<usize> = order.iter().map(|n| names.iter().position(|x| x == n).unwrap()).collect();
    assert!(positions.windows(2).all(|w| w[0] < w[1]), "{names:?}");
}

#[test]
fn verify_flags_hypotheses_and_strict_fails() {
    let out = tempfile::tempdir().unwrap();
    let config = configs().join("theta_06.toml");
    let o = run(&["verify"], &config, out.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("outside completeness hypotheses"), "{}", stdout(&o));
    let strict = run(&["verify", "--strict"], &config, out.path());
    assert_eq!(strict.status.code(), Some(3), "{}", stdout(&strict));
    let report: VerifyReport =
        parse_toml(&std::fs::read_to_string(out.path().join("verify_report.toml")).unwrap()).unwrap();
    assert!(!report.all_pass && report.strict);
    assert_eq!(report.failures(), 1);
    assert!(!report.check.iter().find(|c| c.name == "gap_condition").unwrap().pass);
}

#[test]
fn stamp_is_opt_in() {
    let out = tempfile::tempdir().unwrap();
    let config = configs().join("demo_two_level.toml");
    run(&["spectrum"], &config, out.path());
    let plain = std::fs::read_to_string(out.path().join("spectrum.toml")).unwrap();
    assert!(!plain.starts_with('#'));
    run(&["spectrum", "--stamp"], &config, out.path());
    let stamped = std::fs::read_to_string(out.path().join("spectrum.toml")).unwrap();
    assert!(stamped.starts_with("# generated at unix time "));
    assert_eq!(stamped.split_once('\n').unwrap().1, plain);
    let reparsed: SpectrumFile = parse_toml(&stamped).unwrap();
    assert_eq!(reparsed.to_toml(), plain);
}

#[test]
fn finite_command() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&["finite"], &configs().join("demo.toml"), out.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let file: mastereq_cli::output::FiniteFile =
        parse_toml(&std::fs::read_to_string(out.path().join("finite.toml")).unwrap()).unwrap();
    assert!((file.eigenvalues[1].nu + 2.255252).abs() <= 1e-6);
    assert!((file.perron.radius - 2.0).abs() <= 1e-8);
    assert!(file.decay.passed);
    assert!(out.path().join("finite_trajectory.csv").exists());
}

fn assert_rejected(body: &str, needle: &str) {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), body);
    let out = dir.path().join("out");
    for cmd in ["spectrum", "verify"] {
        let o = run(&[cmd], &config, &out);
        assert_eq!(o.status.code(), Some(1), "{cmd}: {}", stderr(&o));
        assert!(stderr(&o).contains(needle), "{cmd}: expected `{needle}` in {}", stderr(&o));
        assert!(!out.exists(), "{cmd} wrote output before validation");
    }
}

#[test]
fn validation_errors_exit_one() {
    let base = format!("{MODEL}\n[truncation]\nn = 8\n");
    assert_rejected(&base.replace("alpha = 2.0", "alpha = 1.0"), "alpha must exceed 1");
    assert_rejected(&base.replace("n = 8", "n = 8\nbogus_key = 1"), "bogus_key");
    assert_rejected(&base.replace("n = 8", "n = 1"), "at least 2");
    let explicit = base
        .replace(
            r#"{ kind = "affine", omega = 1.0, offset = 0.0 }"#,
            r#"{ kind = "explicit", values = [0.0, 2.0, 1.0] }"#,
        )
        .replace("n = 8", "n = 3");
    assert_rejected(&explicit, "increasing");
    assert_rejected("[model]\nalpha = 2.0\n", "missing field");
}

#[test]
fn missing_files_and_sections() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["spectrum"], &dir.path().join("absent.toml"), dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("absent.toml"));
    let config = write_config(dir.path(), &format!("{MODEL}\n[truncation]\nn = 4\n"));
    assert_eq!(run(&["evolve"], &config, dir.path()).status.code(), Some(1));
    assert_eq!(run(&["finite"], &config, dir.path()).status.code(), Some(1));
}

#[test]
fn solver_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{MODEL}\n[truncation]\nn = 4\n\n[evolve]\ninit = \"basis_state:1\"\ntau_max = 1.0\nsamples = 3\nmethod = \"ode\"\n")
        .replace("offset = 0.0", "offset = -40.0");
    let config = write_config(dir.path(), &body);
    let o = run(&["evolve"], &config, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("solver error"), "{}", stderr(&o));
}

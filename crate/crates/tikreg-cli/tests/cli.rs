//! End-to-end tests of the command-line interface: exit codes, output
//! parsing, file layout and byte-for-byte reproducibility.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tikreg"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn tikreg")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf-8 stderr")
}

/// Value of the first line starting with `<key> = `.
fn parse_value(stdout: &str, key: &str) -> f64 {
    let prefix = format!("{key} = ");
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(&prefix))
        .unwrap_or_else(|| panic!("no '{prefix}' line in:\n{stdout}"))
        .trim()
        .parse()
        .expect("numeric value")
}

/// Fresh scratch directory for one test.
fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir()
        .join("tikreg-cli-tests")
        .join(format!("{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).expect("create scratch dir");
    dir
}

#[test]
fn scalar_unit_risk_is_one_half() {
    let out = run(&["risk", "--n", "1", "--sigma", "1", "--prior", "unit"]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let lstar = parse_value(&stdout_of(&out), "L*");
    assert!((lstar - 0.5).abs() <= 1e-14, "L* = {lstar}");
}

#[test]
fn optimal_pair_file_has_zero_excess() {
    let dir = scratch("pair");
    let pair = dir.join("pair.csv");
    // h = 0 and B = 2 I is the optimal pair for the unit prior in
    // operator units at sigma = 1 on a 4-point grid.
    fs::write(
        &pair,
        "# optimal pair\n0,0,0,0\n2,0,0,0\n0,2,0,0\n0,0,2,0\n0,0,0,2\n",
    )
    .unwrap();
    let out = run(&[
        "risk",
        "--n",
        "4",
        "--sigma",
        "1",
        "--prior",
        "unit",
        "--pair-file",
        pair.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let text = stdout_of(&out);
    let excess = parse_value(&text, "excess");
    assert!(excess.abs() <= 1e-9, "excess = {excess}");
    let lstar = parse_value(&text, "L*");
    let risk = parse_value(&text, "L(pair)");
    assert!((risk - lstar).abs() <= 1e-9);
}

#[test]
fn quick_sweep_is_byte_reproducible() {
    let d1 = scratch("sweep-a");
    let d2 = scratch("sweep-b");
    for d in [&d1, &d2] {
        let out = run(&[
            "sweep",
            "--quick",
            "--seed",
            "7",
            "--out",
            d.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    }
    for name in ["sweep.csv", "summary.csv", "decay.svg"] {
        let a = fs::read(d1.join(name)).unwrap();
        let b = fs::read(d2.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    let header = fs::read_to_string(d1.join("sweep.csv")).unwrap();
    assert!(header.starts_with("# master_seed = 7\n"), "{header}");
    assert!(header.contains("# config_hash = "));
    assert!(header.contains("case,N,m,rep,excess_sup,excess_unsup"));
}

#[test]
fn haar_noise_case_rejects_non_power_of_two_grids() {
    let dir = scratch("case-c");
    let cfg = dir.join("exp.toml");
    fs::write(&cfg, "[experiment]\ncase = \"c\"\ngrid_sizes = [48]\n").unwrap();
    let out = run(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr_of(&out));
    assert!(stderr_of(&out).contains("power of two"));
}

#[test]
fn unknown_config_keys_are_named() {
    let dir = scratch("bad-key");
    let cfg = dir.join("exp.toml");
    fs::write(&cfg, "[experiment]\nrepz = 10\n").unwrap();
    let out = run(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr_of(&out));
    assert!(
        stderr_of(&out).contains("repz"),
        "stderr does not name the key: {}",
        stderr_of(&out)
    );
}

#[test]
fn sweep_without_a_configuration_choice_is_a_usage_error() {
    let out = run(&["sweep"]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr_of(&out));
    assert!(stderr_of(&out).contains("choose a configuration"));
}

#[test]
fn paper_prior_is_an_alias_for_the_bump_kernel() {
    let bump = run(&["risk", "--n", "16", "--prior", "bump"]);
    let paper = run(&["risk", "--n", "16", "--prior", "paper"]);
    assert!(bump.status.success());
    assert!(paper.status.success());
    assert_eq!(stdout_of(&bump), stdout_of(&paper));
    let lstar = parse_value(&stdout_of(&bump), "L*");
    assert!(lstar > 0.0 && lstar.is_finite());
}

#[test]
fn transform_round_trips_a_signal() {
    let dir = scratch("transform");
    let input = dir.join("signal.csv");
    let values = ["0.5", "-1.25", "3", "0", "2.5", "-0.125", "4", "1"];
    fs::write(&input, values.join("\n")).unwrap();

    let fwd = run(&["transform", "--input", input.to_str().unwrap()]);
    assert!(fwd.status.success(), "stderr: {}", stderr_of(&fwd));
    let coeffs = dir.join("coeffs.csv");
    fs::write(&coeffs, stdout_of(&fwd)).unwrap();

    let back = run(&[
        "transform",
        "--input",
        coeffs.to_str().unwrap(),
        "--inverse",
    ]);
    assert!(back.status.success(), "stderr: {}", stderr_of(&back));
    let restored: Vec<f64> = stdout_of(&back)
        .lines()
        .map(|l| l.trim().parse().unwrap())
        .collect();
    assert_eq!(restored.len(), values.len());
    for (r, v) in restored.iter().zip(&values) {
        let orig: f64 = v.parse().unwrap();
        assert!((r - orig).abs() <= 1e-12, "{r} vs {orig}");
    }
}

#[test]
fn reconstruct_is_deterministic_and_reduces_the_error() {
    let d1 = scratch("rec-a");
    let d2 = scratch("rec-b");
    let mut texts = Vec::new();
    for d in [&d1, &d2] {
        let out = run(&[
            "reconstruct",
            "--n",
            "32",
            "--seed",
            "5",
            "--learner",
            "unsupervised:2000",
            "--out",
            d.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "stderr: {}", stderr_of(&out));
        texts.push(stdout_of(&out));
    }
    assert_eq!(
        fs::read(d1.join("signals.csv")).unwrap(),
        fs::read(d2.join("signals.csv")).unwrap(),
        "signals.csv differs between identical runs"
    );
    let err_y = parse_value(&texts[0], "||y - x||^2");
    let err_hat = parse_value(&texts[0], "||xhat - x||^2");
    assert!(
        err_hat < err_y,
        "reconstruction should beat the raw datum: {err_hat} vs {err_y}"
    );
    let signals = fs::read_to_string(d1.join("signals.csv")).unwrap();
    assert!(signals.starts_with("# master_seed = 5\n"));
    assert!(signals.contains("t,x,y,xhat"));
}

//! Degenerate inputs, determinism and parameter errors of the drivers, on
//! grids small enough to run in a few seconds.

use evoconv_core::gconv::{run_experiment, ConvergenceReport, Settings, Verdict};
use evoconv_core::Error;

fn small(experiment: &str, pairs: &[(&str, &str)]) -> Settings {
    let mut s = Settings::defaults(experiment).unwrap();
    for (k, v) in [("dt", "0.0625"), ("T", "2"), ("N", "16"), ("n_values", "1,2,4")] {
        s.set(k, v).unwrap();
    }
    for (k, v) in pairs {
        s.set(k, v).unwrap();
    }
    s
}

fn run(experiment: &str, pairs: &[(&str, &str)]) -> ConvergenceReport {
    run_experiment(experiment, &small(experiment, pairs)).unwrap()
}

fn worst(r: &ConvergenceReport) -> f64 {
    r.max_errors().into_iter().fold(0.0, f64::max)
}

#[test]
fn constant_coefficient_leaves_nothing_to_homogenize() {
    let r = run("mixed_type", &[("coefficient", "const:0.5")]);
    assert!(worst(&r) <= 1e-9, "{:?}", r.max_errors());
    assert!(r.oracle_gaps.iter().all(|g| *g <= 1e-12));
}

#[test]
fn zero_kernel_reduces_to_plain_mixed_type() {
    let path = std::env::temp_dir().join("evoconv-zero-kernel.txt");
    std::fs::write(&path, "# t kappa\n0 0\n100 0\n").unwrap();
    let with = run("mixed_type_convolution", &[("kernel_file", path.to_str().unwrap())]);
    let without = run("mixed_type", &[]);
    for (a, b) in with.max_errors().iter().zip(without.max_errors()) {
        assert!((a - b).abs() <= 1e-12 * (1.0 + b), "{a} vs {b}");
    }
}

#[test]
fn homogeneous_wave_is_exact() {
    let r = run("wave_1d", &[("coefficient", "one")]);
    assert!(worst(&r) <= 1e-9, "{:?}", r.max_errors());
    assert!((r.measured["limit_M2"] - 1.0).abs() < 1e-9);
}

#[test]
fn homogeneous_kelvin_voigt_keeps_its_stiffness() {
    let r = run("kelvin_voigt", &[("coefficient", "const:1.5")]);
    assert!(worst(&r) <= 1e-9);
    assert!((r.measured["flux_coefficient"] - 1.5).abs() < 1e-9);
    assert!(r.checks["neumann_within_tail_bound"]);
}

#[test]
fn vanishing_eps_is_the_limit_itself() {
    let r = run("singular_perturbation", &[("eps_values", "0"), ("N", "16")]);
    assert!(worst(&r) <= 1e-10, "{:?}", r.max_errors());
}

#[test]
fn solves_respect_the_continuity_estimate() {
    let r = run("mixed_type", &[]);
    assert!(r.checks["continuity_estimate"]);
    assert!(r.checks["residual_small"]);
    assert!(r.diagnostics["positivity_c"].iter().all(|c| *c > 0.0));
}

#[test]
fn identical_settings_give_identical_csv() {
    let a = run("compactness_counterexample", &[("T", "2"), ("dt", "0.01"), ("n_values", "8,16")]);
    let b = run("compactness_counterexample", &[("T", "2"), ("dt", "0.01"), ("n_values", "8,16")]);
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.verdict, b.verdict);
}

#[test]
fn repeated_ladder_entry_refutes_decay() {
    let r = run("mixed_type", &[("n_values", "4,4")]);
    assert_eq!(r.verdict, Verdict::Refutes);
    assert!(!r.verdict_matches());
}

#[test]
fn misaligned_cells_are_rejected() {
    let s = small("mixed_type", &[("N", "20")]);
    match run_experiment("mixed_type", &s) {
        Err(Error::Alignment(msg)) => assert!(msg.contains("multiple of 16"), "{msg}"),
        other => panic!("expected an alignment error, got {other:?}"),
    }
}

#[test]
fn misaligned_delay_names_admissible_shifts() {
    let s = small("singular_perturbation", &[("eps_values", "0.1")]);
    match run_experiment("singular_perturbation", &s) {
        Err(Error::ShiftNotAligned { lower, upper, .. }) => {
            assert!((lower.abs() - 0.0625).abs() < 1e-12 || (upper.abs() - 0.0625).abs() < 1e-12, "{lower} {upper}")
        }
        other => panic!("expected a shift error, got {other:?}"),
    }
}

#[test]
fn unknown_names_and_keys_fail_cleanly() {
    assert!(matches!(
        run_experiment("nope", &small("mixed_type", &[])),
        Err(Error::InvalidParameter(_))
    ));
    let mut s = Settings::defaults("mixed_type").unwrap();
    let err = s.set("frobnicate", "1").unwrap_err().to_string();
    assert!(err.contains("frobnicate") && err.contains("n_values"));
    assert!(s.set("dt", "fast").is_err());
}

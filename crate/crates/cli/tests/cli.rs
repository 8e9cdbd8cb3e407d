use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use evoconv_cli::ExperimentConfig;
use evoconv_core::gconv::{CoefSpec, EXPERIMENTS};
use proptest::prelude::*;

fn evoconv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evoconv"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("evoconv-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &[&str] = &["--set", "dt=0.0625", "--set", "T=2", "--set", "N=16"];

fn run_small(experiment: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", experiment, "--out", out.to_str().unwrap()];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(extra);
    evoconv(&args)
}

#[test]
fn list_names_every_experiment() {
    let o = evoconv(&["list"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), EXPERIMENTS.len());
    for (name, expected, _) in EXPERIMENTS {
        let line = text.lines().find(|l| l.starts_with(name)).unwrap();
        assert!(line.contains(&format!("[{expected}]")), "{line}");
    }
}

#[test]
fn missing_config_names_the_path() {
    let o = evoconv(&["run", "mixed_type", "--config", "/no/such/dir/cfg.txt"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/no/such/dir/cfg.txt"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_one() {
    for args in [
        vec!["run", "not_an_experiment"],
        vec!["run", "mixed_type", "--set", "nu"],
        vec!["run", "mixed_type", "--set", "bogus=1"],
        vec!["run", "mixed_type", "--set", "N=20"],
        vec!["frobnicate"],
    ] {
        let o = evoconv(&args);
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", stderr(&o));
        assert!(!stderr(&o).is_empty());
    }
    let o = evoconv(&["run", "mixed_type", "--set", "bogus=1"]);
    assert!(stderr(&o).contains("bogus"));
}

#[test]
fn kernel_file_must_exist() {
    let o = evoconv(&["run", "mixed_type_convolution", "--set", "kernel_file=/no/kernel.txt"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/no/kernel.txt"));
}

#[test]
fn run_writes_reports_and_rerun_is_identical() {
    let out = scratch("mixed");
    let o = run_small("mixed_type", &out, &["--set", "n_values=1,2,4"]);
    assert!(matches!(o.status.code(), Some(0 | 2)), "{}", stderr(&o));
    for f in ["report.json", "report.csv", "summary.txt", "config.cfg"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["experiment"], "mixed_type");
    assert_eq!(json["expected"], "confirms");

    // the written config reproduces the run
    let again = scratch("mixed-again");
    let o2 = evoconv(&[
        "run",
        "mixed_type",
        "--config",
        out.join("config.cfg").to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), o2.status.code());
    assert_eq!(
        std::fs::read_to_string(out.join("report.csv")).unwrap(),
        std::fs::read_to_string(again.join("report.csv")).unwrap()
    );
}

#[test]
fn mismatched_verdict_exits_two() {
    let out = scratch("mismatch");
    let o = run_small("mixed_type", &out, &["--set", "n_values=4,4"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let summary = std::fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("verdict: refutes (expected confirms)"));
}

#[test]
fn config_file_with_comments() {
    let dir = scratch("cfgfile");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("run.cfg");
    std::fs::write(
        &cfg,
        "# small compactness run\nexperiment = compactness_counterexample\nT = 2   # short\ndt = 0.01\nn_values = 8,16\n",
    )
    .unwrap();
    let o = evoconv(&[
        "run",
        "compactness_counterexample",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.join("out").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = evoconv(&["run", "wave_1d", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("compactness_counterexample"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn config_text_round_trips(
        idx in 0usize..8,
        nu in 0.05f64..10.0,
        ns in prop::collection::vec(1u32..200, 1..6),
        eps in prop::collection::vec(0.001f64..1.0, 1..5),
        breaks in 1usize..4,
        v in prop::collection::vec(0.1f64..5.0, 4),
        seed in any::<u64>(),
        out in prop::option::of("[a-z]{1,8}/[a-z0-9_]{1,8}"),
    ) {
        let name = EXPERIMENTS[idx].0;
        let mut cfg = ExperimentConfig::new(name).unwrap();
        cfg.settings.nu = nu;
        cfg.settings.n_values = ns;
        cfg.settings.eps_values = eps;
        let b: Vec<f64> = (0..=breaks).map(|i| i as f64 / breaks as f64).collect();
        cfg.settings.coefficient = CoefSpec::Piecewise { breaks: b, values: v[..breaks].to_vec() };
        cfg.settings.rho = CoefSpec::Const(v[3]);
        cfg.settings.seed = seed;
        cfg.out = out.map(PathBuf::from);
        let back = ExperimentConfig::parse(&cfg.to_text(), None).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

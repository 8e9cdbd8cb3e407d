//! Config handling and the `run`/`list` commands of `evoconv`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use evoconv_core::gconv::{self, ConvergenceReport, Settings, EXPERIMENTS};

/// Exit code when the verdict matches the expected class.
pub const EXIT_MATCH: i32 = 0;
/// Exit code for usage or configuration errors.
pub const EXIT_USAGE: i32 = 1;
/// Exit code when the verdict differs from the expected class.
pub const EXIT_MISMATCH: i32 = 2;

/// A parsed run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub settings: Settings,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Defaults of `experiment`.
    pub fn new(experiment: &str) -> anyhow::Result<Self> {
        Ok(Self {
            experiment: experiment.to_string(),
            settings: Settings::defaults(experiment)?,
            out: None,
        })
    }

    /// Applies one `key = value` pair.
    pub fn set(&mut self, key: &str, value: &str) -> anyhow::Result<()> {
        match key {
            "experiment" => {
                if value != self.experiment {
                    bail!(
                        "config names experiment '{value}' but '{}' was requested",
                        self.experiment
                    );
                }
            }
            "out" => self.out = Some(PathBuf::from(value)),
            _ => self.settings.set(key, value)?,
        }
        Ok(())
    }

    /// Applies every pair of a config text on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> anyhow::Result<()> {
        for (line, key, value) in parse_pairs(text)? {
            self.set(&key, &value).with_context(|| format!("line {line}"))?;
        }
        Ok(())
    }

    /// Reads `experiment` from a config text (falling back to `default`)
    /// and applies the rest.
    pub fn parse(text: &str, default: Option<&str>) -> anyhow::Result<Self> {
        let pairs = parse_pairs(text)?;
        let name = pairs
            .iter()
            .find(|p| p.1 == "experiment")
            .map(|p| p.2.clone())
            .or_else(|| default.map(str::to_string))
            .context("config does not name an experiment")?;
        let mut cfg = Self::new(&name)?;
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    /// The config as `key = value` lines; [`ExperimentConfig::parse`]
    /// reads it back unchanged.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "experiment = {}", self.experiment);
        for (k, v) in self.settings.to_pairs() {
            let _ = writeln!(s, "{k} = {v}");
        }
        if let Some(out) = &self.out {
            let _ = writeln!(s, "out = {}", out.display());
        }
        s
    }

    /// Checks the preconditions of the chosen experiment.
    pub fn validate(&self) -> anyhow::Result<()> {
        self.settings.validate(&self.experiment)?;
        if let Some(p) = &self.settings.kernel_file {
            if !p.is_file() {
                bail!("kernel file {} does not exist", p.display());
            }
        }
        Ok(())
    }
}

/// `(line number, key, value)` of every non-empty line. `#` starts a
/// comment.
pub fn parse_pairs(text: &str) -> anyhow::Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("line {}: expected `key = value`, got '{line}'", i + 1);
        };
        let k = k.trim();
        if k.is_empty() {
            bail!("line {}: empty key", i + 1);
        }
        out.push((i + 1, k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Splits a `--set key=value` argument.
pub fn parse_override(s: &str) -> anyhow::Result<(String, String)> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => bail!("--set expects key=value, got '{s}'"),
    }
}

/// Builds the config of a `run` invocation: defaults, then the config
/// file, then `--set` overrides, then `--out`.
pub fn build_config(
    experiment: &str,
    config: Option<&Path>,
    out: Option<&Path>,
    overrides: &[String],
) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::new(experiment)?;
    if let Some(path) = config {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        cfg.apply_text(&text)
            .with_context(|| format!("in config file {}", path.display()))?;
    }
    for o in overrides {
        let (k, v) = parse_override(o)?;
        cfg.set(&k, &v).with_context(|| format!("--set {o}"))?;
    }
    if let Some(o) = out {
        cfg.out = Some(o.to_path_buf());
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Output directory of a run.
pub fn output_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out
        .clone()
        .unwrap_or_else(|| PathBuf::from("evoconv-out").join(&cfg.experiment))
}

/// Writes `report.json`, `report.csv`, `summary.txt` and the effective
/// `config.cfg`.
pub fn write_outputs(dir: &Path, cfg: &ExperimentConfig, report: &ConvergenceReport) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
    let files = [
        ("report.json", report.to_json()),
        ("report.csv", report.to_csv()),
        ("summary.txt", report.summary()),
        ("config.cfg", cfg.to_text()),
    ];
    for (name, body) in files {
        let p = dir.join(name);
        std::fs::write(&p, body).with_context(|| format!("cannot write {}", p.display()))?;
    }
    Ok(())
}

/// Runs a configured experiment and returns the report.
pub fn run(cfg: &ExperimentConfig) -> anyhow::Result<ConvergenceReport> {
    Ok(gconv::run_experiment(&cfg.experiment, &cfg.settings)?)
}

/// Exit code for a finished report.
pub fn exit_code(report: &ConvergenceReport) -> i32 {
    if report.verdict_matches() {
        EXIT_MATCH
    } else {
        EXIT_MISMATCH
    }
}

/// The text printed by `evoconv list`.
pub fn list_text() -> String {
    let width = EXPERIMENTS.iter().map(|e| e.0.len()).max().unwrap_or(0);
    let mut s = String::new();
    for (name, expected, anchor) in EXPERIMENTS {
        let _ = writeln!(s, "{name:<width$}  [{expected}]  {anchor}");
    }
    s
}

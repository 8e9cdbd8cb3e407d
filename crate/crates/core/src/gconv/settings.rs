use std::fmt;
use std::path::PathBuf;

use crate::matlaw::Coef;
use crate::space1d::SpaceGrid;
use crate::timeaxis::TimeGrid;
use crate::{Error, Result};

/// A spatial coefficient as written in a config file.
///
/// Accepted forms: a preset name (`mixed`, `two_phase`, `one`),
/// `const:<value>`, or `piecewise:<b0>|<b1>|…:<v0>|<v1>|…` with breaks
/// running from 0 to 1.
#[derive(Debug, Clone, PartialEq)]
pub enum CoefSpec {
    /// Indicator of `[0, ¼] ∪ [½, ¾]`.
    Mixed,
    /// 1 on `[0, ½)`, 2 on `[½, 1)`.
    TwoPhase,
    Const(f64),
    Piecewise { breaks: Vec<f64>, values: Vec<f64> },
}

impl CoefSpec {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "mixed" => return Ok(CoefSpec::Mixed),
            "two_phase" => return Ok(CoefSpec::TwoPhase),
            "one" => return Ok(CoefSpec::Const(1.0)),
            _ => {}
        }
        if let Some(v) = s.strip_prefix("const:") {
            return Ok(CoefSpec::Const(parse_f64("const", v)?));
        }
        if let Some(body) = s.strip_prefix("piecewise:") {
            let (b, v) = body
                .split_once(':')
                .ok_or_else(|| Error::Parse(format!("piecewise coefficient '{s}' needs breaks:values")))?;
            let list = |t: &str| -> Result<Vec<f64>> { t.split('|').map(|x| parse_f64("piecewise", x)).collect() };
            let spec = CoefSpec::Piecewise {
                breaks: list(b)?,
                values: list(v)?,
            };
            spec.to_coef()?;
            return Ok(spec);
        }
        Err(Error::Parse(format!(
            "unknown coefficient '{s}'; use mixed, two_phase, one, const:<v> or piecewise:<breaks>:<values>"
        )))
    }

    pub fn to_coef(&self) -> Result<Coef> {
        match self {
            CoefSpec::Mixed => Coef::indicator(&[(0.0, 0.25), (0.5, 0.75)]),
            CoefSpec::TwoPhase => Coef::piecewise_real(&[0.0, 0.5, 1.0], &[1.0, 2.0]),
            CoefSpec::Const(c) => Ok(Coef::constant(*c)),
            CoefSpec::Piecewise { breaks, values } => Coef::piecewise_real(breaks, values),
        }
    }

    /// Smallest `m` such that every jump sits on a multiple of `1/m`
    /// (`None` if some break is not a short rational).
    pub fn alignment(&self) -> Option<usize> {
        let breaks = match self {
            CoefSpec::Mixed => vec![0.25, 0.5, 0.75],
            CoefSpec::TwoPhase => vec![0.5],
            CoefSpec::Const(_) => vec![],
            CoefSpec::Piecewise { breaks, .. } => breaks.clone(),
        };
        (1..=1024).find(|m| breaks.iter().all(|b| ((b * *m as f64) - (b * *m as f64).round()).abs() < 1e-9))
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, CoefSpec::Const(_))
    }
}

impl fmt::Display for CoefSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("|");
        match self {
            CoefSpec::Mixed => f.write_str("mixed"),
            CoefSpec::TwoPhase => f.write_str("two_phase"),
            CoefSpec::Const(c) => write!(f, "const:{c}"),
            CoefSpec::Piecewise { breaks, values } => write!(f, "piecewise:{}:{}", join(breaks), join(values)),
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    let x: f64 = v
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("{key}: '{}' is not a number", v.trim())))?;
    if !x.is_finite() {
        return Err(Error::Parse(format!("{key}: '{}' is not finite", v.trim())));
    }
    Ok(x)
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("{key}: '{}' is not a non-negative integer", v.trim())))
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

/// Parameters of one experiment run.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub nu: f64,
    pub dt: f64,
    /// Horizon `T`; the grid has `K = T/dt` steps.
    pub t_end: f64,
    /// Spatial cells `N`.
    pub cells: usize,
    pub n_values: Vec<u32>,
    pub eps_values: Vec<f64>,
    /// The oscillating coefficient of the experiment.
    pub coefficient: CoefSpec,
    /// Density-type coefficient (Kelvin-Voigt `ρ`, wave `M₁`).
    pub rho: CoefSpec,
    pub kernel_file: Option<PathBuf>,
    /// Spatial batch size for scalar experiments.
    pub batch: usize,
    /// Neumann series order `L`.
    pub order: usize,
    /// Constant `A` in the Neumann-series check.
    pub neumann_a: f64,
    /// Shift `λ` in `−Δ − λ`.
    pub lambda: f64,
    pub seed: u64,
}

/// Keys accepted by [`Settings::set`], in serialization order.
pub const KEYS: &[&str] = &[
    "nu",
    "dt",
    "T",
    "N",
    "n_values",
    "eps_values",
    "coefficient",
    "rho",
    "kernel_file",
    "batch",
    "order",
    "neumann_a",
    "lambda",
    "seed",
];

impl Settings {
    /// Defaults of a named experiment.
    pub fn defaults(experiment: &str) -> Result<Self> {
        let base = Settings {
            nu: 1.0,
            dt: 1.0 / 128.0,
            t_end: 4.0,
            cells: 128,
            n_values: vec![4, 8, 16, 32],
            eps_values: vec![0.2, 0.1, 0.05, 0.025],
            coefficient: CoefSpec::Mixed,
            rho: CoefSpec::Const(1.0),
            kernel_file: None,
            batch: 1,
            order: 6,
            neumann_a: 0.5,
            lambda: 1.0,
            seed: 1,
        };
        Ok(match experiment {
            "mixed_type" | "mixed_type_convolution" | "mixed_type_timedep" => base,
            "commutator_counterexample" => Settings {
                dt: 2e-3,
                t_end: 6.0,
                n_values: vec![8, 16, 32, 64],
                ..base
            },
            "compactness_counterexample" => Settings {
                dt: 5e-3,
                t_end: 6.0,
                n_values: vec![8, 16, 32, 64],
                coefficient: CoefSpec::TwoPhase,
                ..base
            },
            "kelvin_voigt" => Settings {
                dt: 1.0 / 64.0,
                coefficient: CoefSpec::TwoPhase,
                ..base
            },
            "wave_1d" => Settings {
                coefficient: CoefSpec::TwoPhase,
                ..base
            },
            "singular_perturbation" => Settings {
                dt: 0.0125,
                cells: 64,
                ..base
            },
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown experiment '{other}'; run `evoconv list` for the available names"
                )))
            }
        })
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "nu" => self.nu = parse_f64(key, v)?,
            "dt" => self.dt = parse_f64(key, v)?,
            "T" => self.t_end = parse_f64(key, v)?,
            "N" => self.cells = parse_usize(key, v)?,
            "n_values" => {
                self.n_values = v
                    .split(',')
                    .map(|x| {
                        x.trim()
                            .parse::<u32>()
                            .map_err(|_| Error::Parse(format!("n_values: '{}' is not a positive integer", x.trim())))
                    })
                    .collect::<Result<_>>()?
            }
            "eps_values" => self.eps_values = v.split(',').map(|x| parse_f64(key, x)).collect::<Result<_>>()?,
            "coefficient" => self.coefficient = CoefSpec::parse(v)?,
            "rho" => self.rho = CoefSpec::parse(v)?,
            "kernel_file" => self.kernel_file = if v.is_empty() { None } else { Some(PathBuf::from(v)) },
            "batch" => self.batch = parse_usize(key, v)?,
            "order" => self.order = parse_usize(key, v)?,
            "neumann_a" => self.neumann_a = parse_f64(key, v)?,
            "lambda" => self.lambda = parse_f64(key, v)?,
            "seed" => {
                self.seed = v
                    .parse()
                    .map_err(|_| Error::Parse(format!("seed: '{v}' is not a non-negative integer")))?
            }
            other => {
                return Err(Error::Parse(format!(
                    "unknown key '{other}'; accepted keys: experiment, out, {}",
                    KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Textual value of a key (inverse of [`Settings::set`]).
    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "nu" => self.nu.to_string(),
            "dt" => self.dt.to_string(),
            "T" => self.t_end.to_string(),
            "N" => self.cells.to_string(),
            "n_values" => join(&self.n_values),
            "eps_values" => join(&self.eps_values),
            "coefficient" => self.coefficient.to_string(),
            "rho" => self.rho.to_string(),
            "kernel_file" => self.kernel_file.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            "batch" => self.batch.to_string(),
            "order" => self.order.to_string(),
            "neumann_a" => self.neumann_a.to_string(),
            "lambda" => self.lambda.to_string(),
            "seed" => self.seed.to_string(),
            _ => return None,
        })
    }

    /// All keys with their values, in a fixed order.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        KEYS.iter().map(|k| (k.to_string(), self.get(k).unwrap())).collect()
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        if !(self.dt > 0.0) || !(self.t_end > 0.0) {
            return Err(Error::InvalidParameter("dt and T must be positive".into()));
        }
        let k = (self.t_end / self.dt).round();
        if (k * self.dt - self.t_end).abs() > 1e-9 * self.t_end {
            return Err(Error::Alignment(format!(
                "T = {} is not a multiple of dt = {}",
                self.t_end, self.dt
            )));
        }
        TimeGrid::new(self.nu, self.dt, k as usize)
    }

    pub fn space_grid(&self) -> Result<SpaceGrid> {
        SpaceGrid::new(self.cells)
    }

    pub fn max_n(&self) -> u32 {
        self.n_values.iter().copied().max().unwrap_or(1)
    }

    /// Checks that `cells` resolves every jump of `coef` oscillated up to `max_n`.
    pub(crate) fn check_alignment(&self, cells: usize, coef: &CoefSpec, what: &str) -> Result<()> {
        let m = coef
            .alignment()
            .ok_or_else(|| Error::Alignment(format!("{what}: coefficient breaks are not grid-aligned rationals")))?;
        let need = m * self.max_n() as usize;
        if m > 1 && cells % need != 0 {
            return Err(Error::Alignment(format!(
                "{what}: {cells} points is not a multiple of {need} = {m}·max(n); choose a multiple of {need}"
            )));
        }
        Ok(())
    }

    /// Validates the parameters of `experiment` without running it.
    pub fn validate(&self, experiment: &str) -> Result<()> {
        let grid = self.time_grid()?;
        if self.n_values.is_empty() || self.n_values.contains(&0) {
            return Err(Error::InvalidParameter("n_values must be non-empty positive integers".into()));
        }
        match experiment {
            "mixed_type" | "mixed_type_convolution" | "mixed_type_timedep" | "kelvin_voigt" | "wave_1d" => {
                self.space_grid()?;
                self.check_alignment(self.cells, &self.coefficient, "N")?;
                if experiment == "kelvin_voigt" && !self.rho.is_constant() {
                    self.check_alignment(self.cells, &self.rho, "N (rho)")?;
                }
            }
            "compactness_counterexample" => {
                if self.batch == 0 {
                    return Err(Error::InvalidParameter("batch must be at least 1".into()));
                }
                if self.batch > 1 {
                    self.check_alignment(self.batch, &self.coefficient, "batch")?;
                }
            }
            "commutator_counterexample" => {
                if self.batch == 0 {
                    return Err(Error::InvalidParameter("batch must be at least 1".into()));
                }
            }
            "singular_perturbation" => {
                self.space_grid()?;
                if self.eps_values.is_empty() || self.eps_values.iter().any(|e| *e < 0.0 || !e.is_finite()) {
                    return Err(Error::InvalidParameter("eps_values must be non-negative".into()));
                }
                for e in &self.eps_values {
                    grid.steps_for(-e)?;
                }
                if self.lambda >= std::f64::consts::PI.powi(2) {
                    return Err(Error::InvalidParameter(format!(
                        "lambda = {} must stay below the first Dirichlet eigenvalue (about 9.87)",
                        self.lambda
                    )));
                }
            }
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown experiment '{other}'; run `evoconv list` for the available names"
                )))
            }
        }
        Ok(())
    }
}

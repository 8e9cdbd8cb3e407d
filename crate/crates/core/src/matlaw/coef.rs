//! Coefficient functions used by material laws.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use crate::quadrature::period_average;
use crate::timeaxis::TimeGrid;
use crate::{Error, Result, C64};

type SpaceFn = Arc<dyn Fn(f64) -> C64 + Send + Sync>;
type SpaceTimeFnBox = Arc<dyn Fn(f64, f64) -> C64 + Send + Sync>;

/// A function on `(0, 1)`, extended 1-periodically.
#[derive(Clone)]
pub enum Coef {
    Const(C64),
    /// Values `values[i]` on `[breaks[i], breaks[i+1])`, with `breaks`
    /// running from 0 to 1.
    Piecewise { breaks: Vec<f64>, values: Vec<C64> },
    /// Arbitrary function with its known discontinuities.
    Func { label: String, f: SpaceFn, breakpoints: Vec<f64> },
}

impl fmt::Debug for Coef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coef::Const(c) => write!(f, "Const({c})"),
            Coef::Piecewise { breaks, values } => write!(f, "Piecewise({breaks:?}, {values:?})"),
            Coef::Func { label, .. } => write!(f, "Func({label})"),
        }
    }
}

impl Coef {
    pub fn constant(c: f64) -> Self {
        Coef::Const(C64::new(c, 0.0))
    }

    pub fn piecewise(breaks: Vec<f64>, values: Vec<C64>) -> Result<Self> {
        if breaks.len() != values.len() + 1 || breaks.len() < 2 {
            return Err(Error::InvalidParameter("piecewise coefficient needs len(breaks) = len(values) + 1".into()));
        }
        if breaks[0] != 0.0 || *breaks.last().unwrap() != 1.0 || breaks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("breaks must increase from 0 to 1".into()));
        }
        Ok(Coef::Piecewise { breaks, values })
    }

    /// Real-valued piecewise constant coefficient.
    pub fn piecewise_real(breaks: &[f64], values: &[f64]) -> Result<Self> {
        Self::piecewise(breaks.to_vec(), values.iter().map(|v| C64::new(*v, 0.0)).collect())
    }

    /// Indicator of a union of intervals inside `[0, 1]`.
    pub fn indicator(intervals: &[(f64, f64)]) -> Result<Self> {
        let mut breaks = vec![0.0, 1.0];
        for (a, b) in intervals {
            breaks.push(*a);
            breaks.push(*b);
        }
        breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        breaks.dedup();
        let values = breaks
            .windows(2)
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                let inside = intervals.iter().any(|(a, b)| mid > *a && mid < *b);
                C64::new(if inside { 1.0 } else { 0.0 }, 0.0)
            })
            .collect();
        Self::piecewise(breaks, values)
    }

    pub fn func(label: impl Into<String>, f: impl Fn(f64) -> C64 + Send + Sync + 'static, breakpoints: Vec<f64>) -> Self {
        Coef::Func {
            label: label.into(),
            f: Arc::new(f),
            breakpoints,
        }
    }

    /// Value at `x` (taken modulo 1).
    pub fn eval(&self, x: f64) -> C64 {
        let y = x.rem_euclid(1.0);
        match self {
            Coef::Const(c) => *c,
            Coef::Piecewise { breaks, values } => {
                let i = breaks.partition_point(|b| *b <= y).saturating_sub(1);
                values[i.min(values.len() - 1)]
            }
            Coef::Func { f, .. } => f(y),
        }
    }

    /// Discontinuities inside `(0, 1)`.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Coef::Const(_) => Vec::new(),
            Coef::Piecewise { breaks, .. } => breaks[1..breaks.len() - 1].to_vec(),
            Coef::Func { breakpoints, .. } => breakpoints.clone(),
        }
    }

    /// `x ↦ h(g(x))`, keeping the breakpoints.
    pub fn map(&self, label: &str, h: impl Fn(C64) -> C64 + Send + Sync + 'static) -> Coef {
        match self {
            Coef::Const(c) => Coef::Const(h(*c)),
            Coef::Piecewise { breaks, values } => Coef::Piecewise {
                breaks: breaks.clone(),
                values: values.iter().map(|v| h(*v)).collect(),
            },
            Coef::Func { f, breakpoints, .. } => {
                let f = f.clone();
                Coef::Func {
                    label: label.to_string(),
                    f: Arc::new(move |x| h(f(x))),
                    breakpoints: breakpoints.clone(),
                }
            }
        }
    }

    /// `x ↦ g({n·x})`.
    pub fn oscillated(&self, n: u32) -> Coef {
        if n == 1 {
            return self.clone();
        }
        let base = self.clone();
        let nf = n as f64;
        let mut bps = Vec::new();
        for j in 0..n {
            bps.push(j as f64 / nf);
            bps.extend(base.breakpoints().iter().map(|b| (j as f64 + b) / nf));
        }
        bps.retain(|b| *b > 0.0 && *b < 1.0);
        Coef::func(format!("{base:?}(n={n})"), move |x| base.eval(nf * x), bps)
    }

    /// Period average `∫₀¹ g`.
    pub fn average(&self) -> C64 {
        weak_limit_coefficient(self)
    }
}

/// Weak-operator limit of `g({n·m})` as `n → ∞`: the period average `∫₀¹ g`.
pub fn weak_limit_coefficient(g: &Coef) -> C64 {
    match g {
        Coef::Const(c) => *c,
        Coef::Piecewise { breaks, values } => breaks
            .windows(2)
            .zip(values)
            .map(|(w, v)| v * (w[1] - w[0]))
            .sum(),
        Coef::Func { f, breakpoints, .. } => period_average(&|x| f(x), breakpoints),
    }
}

/// Harmonic mean `(∫₀¹ 1/g)⁻¹`, the weak limit of the inverses, inverted.
pub fn harmonic_mean(g: &Coef) -> C64 {
    weak_limit_coefficient(&g.map("1/g", |v| v.inv())).inv()
}

/// A function of time, `t ↦ κ(t)`.
#[derive(Clone)]
pub struct TimeFn {
    label: String,
    f: Arc<dyn Fn(f64) -> C64 + Send + Sync>,
}

impl fmt::Debug for TimeFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TimeFn({})", self.label)
    }
}

impl TimeFn {
    pub fn new(label: impl Into<String>, f: impl Fn(f64) -> C64 + Send + Sync + 'static) -> Self {
        Self {
            label: label.into(),
            f: Arc::new(f),
        }
    }

    pub fn real(label: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::new(label, move |t| C64::new(f(t), 0.0))
    }

    pub fn eval(&self, t: f64) -> C64 {
        (self.f)(t)
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

/// A function of `(t, x)`.
#[derive(Clone)]
pub struct SpaceTimeFn {
    label: String,
    f: SpaceTimeFnBox,
}

impl fmt::Debug for SpaceTimeFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SpaceTimeFn({})", self.label)
    }
}

impl SpaceTimeFn {
    pub fn new(label: impl Into<String>, f: impl Fn(f64, f64) -> C64 + Send + Sync + 'static) -> Self {
        Self {
            label: label.into(),
            f: Arc::new(f),
        }
    }

    pub fn eval(&self, t: f64, x: f64) -> C64 {
        (self.f)(t, x)
    }
}

/// Convolution kernel `κ` supported on `t ≥ 0`.
#[derive(Clone)]
pub enum Kernel {
    Func { label: String, f: Arc<dyn Fn(f64) -> C64 + Send + Sync> },
    /// Discrete delta: `1/dt` at `t = 0`, the identity of the convolution.
    Impulse,
    /// Samples `(t, κ(t))`, linearly interpolated and zero outside the table.
    Table(Vec<(f64, f64)>),
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Func { label, .. } => write!(f, "Kernel({label})"),
            Kernel::Impulse => write!(f, "Kernel(impulse)"),
            Kernel::Table(t) => write!(f, "Kernel(table, {} rows)", t.len()),
        }
    }
}

impl Kernel {
    pub fn func(label: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Kernel::Func {
            label: label.into(),
            f: Arc::new(move |t| C64::new(f(t), 0.0)),
        }
    }

    /// Reads a two-column text file `t value` (whitespace or comma separated,
    /// `#` starts a comment).
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::parse_table(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    pub fn parse_table(text: &str) -> std::result::Result<Self, String> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
            if cols.len() != 2 {
                return Err(format!("line {}: expected two columns", lineno + 1));
            }
            let t: f64 = cols[0].parse().map_err(|_| format!("line {}: bad number {:?}", lineno + 1, cols[0]))?;
            let v: f64 = cols[1].parse().map_err(|_| format!("line {}: bad number {:?}", lineno + 1, cols[1]))?;
            if t < 0.0 {
                return Err(format!("line {}: kernel support must be t >= 0", lineno + 1));
            }
            rows.push((t, v));
        }
        if rows.is_empty() {
            return Err("kernel table is empty".into());
        }
        if rows.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err("kernel times must increase".into());
        }
        Ok(Kernel::Table(rows))
    }

    /// `κ(t_m)` for every grid step.
    pub fn samples(&self, grid: &TimeGrid) -> Vec<C64> {
        (0..grid.steps())
            .map(|m| match self {
                Kernel::Func { f, .. } => f(grid.t(m)),
                Kernel::Impulse => C64::new(if m == 0 { 1.0 / grid.dt() } else { 0.0 }, 0.0),
                Kernel::Table(rows) => C64::new(interpolate(rows, grid.t(m)), 0.0),
            })
            .collect()
    }
}

fn interpolate(rows: &[(f64, f64)], t: f64) -> f64 {
    let t0 = rows[0].0;
    let (tn, vn) = rows[rows.len() - 1];
    if t < t0 || t > tn {
        return 0.0;
    }
    if t == tn {
        return vn;
    }
    let i = rows.partition_point(|r| r.0 <= t).saturating_sub(1);
    let (a, va) = rows[i];
    let (b, vb) = rows[i + 1];
    va + (vb - va) * (t - a) / (b - a)
}

/// Rational symbol `M(z) = P(z)/Q(z)` of a material law `M(∂₀⁻¹)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HardySymbol {
    /// Numerator coefficients, ascending powers.
    pub num: Vec<C64>,
    /// Denominator coefficients, ascending powers.
    pub den: Vec<C64>,
    /// Radius `r` of the disc `B(r, r)` where the symbol is analytic and
    /// bounded; `None` for polynomials.
    pub radius: Option<f64>,
}

impl HardySymbol {
    pub fn polynomial(coeffs: &[f64]) -> Self {
        Self {
            num: coeffs.iter().map(|c| C64::new(*c, 0.0)).collect(),
            den: vec![C64::new(1.0, 0.0)],
            radius: None,
        }
    }

    pub fn rational(num: &[f64], den: &[f64], radius: f64) -> Self {
        Self {
            num: num.iter().map(|c| C64::new(*c, 0.0)).collect(),
            den: den.iter().map(|c| C64::new(*c, 0.0)).collect(),
            radius: Some(radius),
        }
    }

    pub fn eval(&self, z: C64) -> C64 {
        horner(&self.num, z) / horner(&self.den, z)
    }

    pub(crate) fn check(&self, grid: &TimeGrid) -> Result<()> {
        if let Some(r) = self.radius {
            let min = 1.0 / (2.0 * grid.nu());
            if !(r > min) {
                return Err(Error::HardyRadius { r, min });
            }
        }
        Ok(())
    }

    /// Decay rate of the weighted kernel used to size the padding.
    pub(crate) fn decay(&self, grid: &TimeGrid) -> f64 {
        let nu = grid.nu();
        match self.radius {
            None => 0.5 * nu,
            Some(r) => (0.5 * nu).min(nu - 1.0 / (2.0 * r)),
        }
    }
}

fn horner(c: &[C64], z: C64) -> C64 {
    c.iter().rev().fold(C64::new(0.0, 0.0), |acc, a| acc * z + a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indicator_values() {
        let g = Coef::indicator(&[(0.0, 0.25), (0.5, 0.75)]).unwrap();
        assert_eq!(g.eval(0.1).re, 1.0);
        assert_eq!(g.eval(0.3).re, 0.0);
        assert_eq!(g.eval(0.6).re, 1.0);
        assert_eq!(g.eval(0.9).re, 0.0);
        assert_eq!(g.eval(1.1).re, 1.0);
    }

    #[test]
    fn oscillation_keeps_average() {
        let g = Coef::piecewise_real(&[0.0, 0.5, 1.0], &[1.0, 2.0]).unwrap();
        let o = g.oscillated(8);
        assert!((o.average().re - 1.5).abs() < 1e-12);
        assert_eq!(o.eval(1.0 / 16.0 + 1e-9).re, 2.0);
    }

    #[test]
    fn table_kernel_parse_and_interpolate() {
        let k = Kernel::parse_table("# t v\n0 1\n1, 3\n2 3\n").unwrap();
        let g = TimeGrid::new(1.0, 0.5, 6).unwrap();
        let s = k.samples(&g);
        let re: Vec<f64> = s.iter().map(|c| c.re).collect();
        assert_eq!(re, vec![1.0, 2.0, 3.0, 3.0, 3.0, 0.0]);
        assert!(Kernel::parse_table("0 1 2").is_err());
        assert!(Kernel::parse_table("-1 1").is_err());
    }

    #[test]
    fn hardy_radius_check() {
        let g = TimeGrid::new(1.0, 0.1, 10).unwrap();
        assert!(HardySymbol::rational(&[1.0], &[1.0], 0.5).check(&g).is_err());
        assert!(HardySymbol::rational(&[1.0], &[1.0], 0.6).check(&g).is_ok());
        assert!(HardySymbol::polynomial(&[0.0, 1.0]).check(&g).is_ok());
    }
}

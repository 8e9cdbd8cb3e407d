//! The material-law algebra `𝓜`.
//!
//! A [`MaterialLaw`] is an immutable description; [`MaterialLaw::apply`]
//! evaluates it on a [`Field`], [`MaterialLaw::adjoint`] evaluates the
//! weighted adjoint where one is available, and the [`stepper`] module
//! provides the causal step-by-step form the solver consumes.

mod coef;
pub mod stepper;

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

pub use coef::{harmonic_mean, weak_limit_coefficient, Coef, HardySymbol, Kernel, SpaceTimeFn, TimeFn};

use crate::linalg::{lanczos_extremes, Factorization};
use crate::space1d::{project_out_mean, Field, Layout, SpatialOp};
use crate::timeaxis::{
    apply_d0, apply_d0_adjoint, apply_d0_inverse, apply_d0_inverse_adjoint, apply_multiplier,
    discrete_d0_inverse_symbol, operator_norm, padded_len, shift_adjoint_in_place, time_shift, truncate_before,
    InnerProductSpace, NormEstimate, PowerOptions, TimeGrid, TimeSignal,
};
use crate::{Error, Result, C64};

/// Below this many steps convolutions are summed directly.
const DIRECT_CONVOLUTION_STEPS: usize = 64;

/// Leakage allowed by [`check_causality`], relative to `‖f‖_ν`.
pub const CAUSALITY_TOLERANCE: f64 = 1e-11;

#[derive(Debug, Clone)]
pub enum MaterialLaw {
    /// `c·I`.
    Scale(C64),
    /// Multiplication by `g(x)`.
    SpaceMul(Coef),
    /// Multiplication by `g({n·x})`.
    Oscillated { base: Coef, n: u32 },
    /// Multiplication by `κ(t)`.
    TimeMul(TimeFn),
    SpaceTimeMul(SpaceTimeFn),
    /// Removes the spatial mean at every time (orthogonal projection).
    ProjectMean,
    D0Inverse,
    /// `τ_h`, `(τ_h u)(t) = u(t + h)`. Only `h ≤ 0` is causal.
    Shift(f64),
    /// `u ↦ κ * u`, discretized as `dt·Σ_{j≤k} κ(t_{k−j}) u_j`.
    TimeConvolution(Kernel),
    /// `M(∂₀⁻¹)` for a rational symbol.
    Hardy(HardySymbol),
    /// Separate laws on the `u` and `v` blocks of a staggered field.
    BlockDiag(Box<MaterialLaw>, Box<MaterialLaw>),
    Sum(Vec<MaterialLaw>),
    /// Composition; the last factor acts first.
    Product(Vec<MaterialLaw>),
    /// Causal inverse, computed step by step.
    Inverse(Box<MaterialLaw>),
    /// `Σ_{ℓ=0}^{L} (−B⁻¹A∂₀⁻¹)^ℓ B⁻¹`, a truncated inverse of `B + A∂₀⁻¹`.
    NeumannInverse {
        b: Box<MaterialLaw>,
        a: Box<MaterialLaw>,
        order: usize,
    },
}

impl MaterialLaw {
    pub fn identity() -> Self {
        MaterialLaw::Scale(C64::new(1.0, 0.0))
    }

    pub fn zero() -> Self {
        MaterialLaw::Scale(C64::new(0.0, 0.0))
    }

    pub fn scale(c: f64) -> Self {
        MaterialLaw::Scale(C64::new(c, 0.0))
    }

    pub fn block_diag(u: MaterialLaw, v: MaterialLaw) -> Self {
        MaterialLaw::BlockDiag(Box::new(u), Box::new(v))
    }

    /// `∂₀⁻¹ ∘ self`.
    pub fn integrated(self) -> Self {
        MaterialLaw::Product(vec![MaterialLaw::D0Inverse, self])
    }

    /// `self ∘ other`.
    pub fn then(self, other: MaterialLaw) -> Self {
        MaterialLaw::Product(vec![self, other])
    }

    pub fn plus(self, other: MaterialLaw) -> Self {
        MaterialLaw::Sum(vec![self, other])
    }

    /// Inverse, simplified to a pointwise law where possible.
    pub fn inverse(self) -> Self {
        match self {
            MaterialLaw::Scale(c) => MaterialLaw::Scale(c.inv()),
            MaterialLaw::SpaceMul(g) => MaterialLaw::SpaceMul(g.map("1/g", |v| v.inv())),
            MaterialLaw::Oscillated { base, n } => MaterialLaw::Oscillated {
                base: base.map("1/g", |v| v.inv()),
                n,
            },
            other => MaterialLaw::Inverse(Box::new(other)),
        }
    }

    /// Whether the law acts pointwise in time.
    pub fn is_memoryless(&self) -> bool {
        match self {
            MaterialLaw::Scale(_)
            | MaterialLaw::SpaceMul(_)
            | MaterialLaw::Oscillated { .. }
            | MaterialLaw::TimeMul(_)
            | MaterialLaw::SpaceTimeMul(_)
            | MaterialLaw::ProjectMean => true,
            MaterialLaw::Shift(h) => *h == 0.0,
            MaterialLaw::D0Inverse | MaterialLaw::TimeConvolution(_) | MaterialLaw::Hardy(_) => false,
            MaterialLaw::BlockDiag(a, b) => a.is_memoryless() && b.is_memoryless(),
            MaterialLaw::Sum(p) | MaterialLaw::Product(p) => p.iter().all(|l| l.is_memoryless()),
            MaterialLaw::Inverse(l) => l.is_memoryless(),
            MaterialLaw::NeumannInverse { b, order, .. } => b.is_memoryless() && *order == 0,
        }
    }

    /// Evaluates `𝓜w`.
    pub fn apply(&self, w: &Field) -> Result<Field> {
        let grid = *w.grid();
        let layout = *w.layout();
        Ok(match self {
            MaterialLaw::Scale(c) => w.scaled(*c),
            MaterialLaw::SpaceMul(g) => {
                let s = layout.sample_coefficient(&|x| g.eval(x));
                pointwise(w, |_, x| mul(x, &s))
            }
            MaterialLaw::Oscillated { base, n } => {
                let g = base.oscillated(*n);
                let s = layout.sample_coefficient(&|x| g.eval(x));
                pointwise(w, |_, x| mul(x, &s))
            }
            MaterialLaw::TimeMul(kappa) => pointwise(w, |k, x| {
                let c = kappa.eval(grid.t(k));
                x.iter().map(|v| v * c).collect()
            }),
            MaterialLaw::SpaceTimeMul(g) => pointwise(w, |k, x| {
                let t = grid.t(k);
                mul(x, &layout.sample_coefficient(&|y| g.eval(t, y)))
            }),
            MaterialLaw::ProjectMean => pointwise(w, |_, x| project_out_mean(x)),
            MaterialLaw::D0Inverse => w.with_signal(apply_d0_inverse(w.signal())),
            MaterialLaw::Shift(h) => w.with_signal(time_shift(w.signal(), *h)?),
            MaterialLaw::TimeConvolution(kernel) => {
                let weights: Vec<C64> = kernel.samples(&grid).into_iter().map(|c| c * grid.dt()).collect();
                w.with_signal(causal_convolve(&weights, w.signal()))
            }
            MaterialLaw::Hardy(sym) => w.with_signal(apply_hardy(sym, w.signal())?),
            MaterialLaw::BlockDiag(a, b) => {
                let (u, v) = w
                    .split_blocks()
                    .ok_or_else(|| Error::GridMismatch("block-diagonal law needs a staggered layout".into()))?;
                Field::join_blocks(layout, &a.apply(&u)?, &b.apply(&v)?)?
            }
            MaterialLaw::Sum(parts) => {
                let mut acc = Field::zeros(layout, grid);
                for p in parts {
                    acc.axpy(C64::new(1.0, 0.0), &p.apply(w)?);
                }
                acc
            }
            MaterialLaw::Product(factors) => {
                let mut y = w.clone();
                for f in factors.iter().rev() {
                    y = f.apply(&y)?;
                }
                y
            }
            MaterialLaw::Inverse(_) => stepper::apply_stepwise(self, w)?,
            MaterialLaw::NeumannInverse { b, a, order } => {
                // Horner form: S_0 = B⁻¹f, S_j = B⁻¹f − B⁻¹A∂₀⁻¹S_{j−1}
                let binv = b.as_ref().clone().inverse();
                let y = binv.apply(w)?;
                let mut acc = y.clone();
                for _ in 0..*order {
                    let t = binv.apply(&a.apply(&MaterialLaw::D0Inverse.apply(&acc)?)?)?;
                    acc = y.sub(&t)?;
                }
                acc
            }
        })
    }

    /// Evaluates the weighted adjoint `𝓜*w`.
    pub fn adjoint(&self, w: &Field) -> Result<Field> {
        let grid = *w.grid();
        let layout = *w.layout();
        Ok(match self {
            MaterialLaw::Scale(c) => w.scaled(c.conj()),
            MaterialLaw::SpaceMul(g) => {
                let s: Vec<C64> = layout.sample_coefficient(&|x| g.eval(x)).iter().map(|c| c.conj()).collect();
                pointwise(w, |_, x| mul(x, &s))
            }
            MaterialLaw::Oscillated { base, n } => {
                let g = base.oscillated(*n);
                let s: Vec<C64> = layout.sample_coefficient(&|x| g.eval(x)).iter().map(|c| c.conj()).collect();
                pointwise(w, |_, x| mul(x, &s))
            }
            MaterialLaw::TimeMul(kappa) => pointwise(w, |k, x| {
                let c = kappa.eval(grid.t(k)).conj();
                x.iter().map(|v| v * c).collect()
            }),
            MaterialLaw::SpaceTimeMul(g) => pointwise(w, |k, x| {
                let t = grid.t(k);
                let s: Vec<C64> = layout.sample_coefficient(&|y| g.eval(t, y)).iter().map(|c| c.conj()).collect();
                mul(x, &s)
            }),
            MaterialLaw::ProjectMean => pointwise(w, |_, x| project_out_mean(x)),
            MaterialLaw::D0Inverse => w.with_signal(apply_d0_inverse_adjoint(w.signal())),
            MaterialLaw::Shift(h) => {
                let m = grid.steps_for(*h)?;
                let mut out = w.clone();
                shift_adjoint_in_place(&grid, layout.width(), w.values(), out.values_mut(), m);
                out
            }
            MaterialLaw::TimeConvolution(kernel) => {
                let weights: Vec<C64> = kernel.samples(&grid).into_iter().map(|c| c * grid.dt()).collect();
                w.with_signal(convolution_adjoint(&weights, w.signal()))
            }
            MaterialLaw::Hardy(sym) => {
                let weights = hardy_impulse_response(sym, grid)?;
                w.with_signal(convolution_adjoint(&weights, w.signal()))
            }
            MaterialLaw::BlockDiag(a, b) => {
                let (u, v) = w
                    .split_blocks()
                    .ok_or_else(|| Error::GridMismatch("block-diagonal law needs a staggered layout".into()))?;
                Field::join_blocks(layout, &a.adjoint(&u)?, &b.adjoint(&v)?)?
            }
            MaterialLaw::Sum(parts) => {
                let mut acc = Field::zeros(layout, grid);
                for p in parts {
                    acc.axpy(C64::new(1.0, 0.0), &p.adjoint(w)?);
                }
                acc
            }
            MaterialLaw::Product(factors) => {
                let mut y = w.clone();
                for f in factors {
                    y = f.adjoint(&y)?;
                }
                y
            }
            MaterialLaw::Inverse(inner) => {
                if !inner.is_memoryless() {
                    return Err(Error::NoAdjoint("inverse of a law with memory".into()));
                }
                // pointwise in time: per step, solve with the conjugate transpose
                let s = stepper::stepper(inner, layout, grid)?;
                let mut out = w.clone();
                let mut cached: Option<Factorization> = None;
                for k in 0..grid.steps() {
                    if cached.is_none() || !s.time_invariant() {
                        cached = Some(Factorization::new(&stepper::instant_matrix(s.as_ref(), k).adjoint()));
                    }
                    cached.as_ref().unwrap().solve_in_place(out.at_mut(k));
                }
                out
            }
            MaterialLaw::NeumannInverse { b, a, order } => {
                // adjoint of the Horner recursion, unrolled
                let binv = b.as_ref().clone().inverse();
                let tail = |x: &Field| -> Result<Field> {
                    MaterialLaw::D0Inverse.adjoint(&a.adjoint(&binv.adjoint(x)?)?)
                };
                // Σ_ℓ (−T)^ℓ B⁻¹ has adjoint B⁻¹* Σ_ℓ (−T*)^ℓ
                let mut acc = w.clone();
                let mut term = w.clone();
                for _ in 0..*order {
                    term = tail(&term)?.scaled(C64::new(-1.0, 0.0));
                    acc.axpy(C64::new(1.0, 0.0), &term);
                }
                binv.adjoint(&acc)?
            }
        })
    }
}

fn mul(x: &[C64], s: &[C64]) -> Vec<C64> {
    x.iter().zip(s).map(|(a, b)| a * b).collect()
}

fn pointwise(w: &Field, f: impl Fn(usize, &[C64]) -> Vec<C64>) -> Field {
    let mut out = w.clone();
    for k in 0..w.grid().steps() {
        let y = f(k, w.at(k));
        out.at_mut(k).copy_from_slice(&y);
    }
    out
}

fn apply_hardy(sym: &HardySymbol, u: &TimeSignal) -> Result<TimeSignal> {
    let grid = *u.grid();
    sym.check(&grid)?;
    let (nu, dt) = (grid.nu(), grid.dt());
    let len = padded_len(&grid, sym.decay(&grid));
    let out = apply_multiplier(u, len, |xi| sym.eval(discrete_d0_inverse_symbol(nu, dt, xi)));
    if out.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::HardyPole);
    }
    Ok(out)
}

/// Response of `M(∂₀⁻¹)` to the unit impulse at `t = 0`.
pub(crate) fn hardy_impulse_response(sym: &HardySymbol, grid: TimeGrid) -> Result<Vec<C64>> {
    Ok(apply_hardy(sym, &TimeSignal::impulse(grid, 0))?.into_values())
}

/// `y_k = Σ_{j≤k} w_{k−j} x_j` per component.
pub(crate) fn causal_convolve(weights: &[C64], x: &TimeSignal) -> TimeSignal {
    let grid = *x.grid();
    let (steps, width) = (grid.steps(), x.width());
    let mut out = TimeSignal::zeros(grid, width);
    if steps <= DIRECT_CONVOLUTION_STEPS {
        for k in 0..steps {
            for j in 0..=k {
                let wgt = weights[k - j];
                for i in 0..width {
                    out.values_mut()[k * width + i] += wgt * x.values()[j * width + i];
                }
            }
        }
        return out;
    }
    let len = (2 * steps).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    let mut kern = vec![C64::new(0.0, 0.0); len];
    kern[..steps].copy_from_slice(&weights[..steps]);
    fwd.process(&mut kern);
    let mut buf = vec![C64::new(0.0, 0.0); len];
    for i in 0..width {
        buf.iter_mut().for_each(|b| *b = C64::new(0.0, 0.0));
        for k in 0..steps {
            buf[k] = x.values()[k * width + i];
        }
        fwd.process(&mut buf);
        for (b, kk) in buf.iter_mut().zip(&kern) {
            *b *= kk;
        }
        inv.process(&mut buf);
        for k in 0..steps {
            out.values_mut()[k * width + i] = buf[k] / len as f64;
        }
    }
    out
}

/// Weighted adjoint of [`causal_convolve`]:
/// `y_j = Σ_{m≥0} conj(w_m)·e^{−2ν m dt}·x_{j+m}`.
pub(crate) fn convolution_adjoint(weights: &[C64], x: &TimeSignal) -> TimeSignal {
    let grid = *x.grid();
    let (steps, width) = (grid.steps(), x.width());
    let q = (-2.0 * grid.nu() * grid.dt()).exp();
    let adj: Vec<C64> = weights.iter().enumerate().map(|(m, c)| c.conj() * q.powi(m as i32)).collect();
    // reverse, convolve causally, reverse back
    let mut rev = TimeSignal::zeros(grid, width);
    for k in 0..steps {
        rev.at_mut(steps - 1 - k).copy_from_slice(x.at(k));
    }
    let conv = causal_convolve(&adj, &rev);
    let mut out = TimeSignal::zeros(grid, width);
    for k in 0..steps {
        out.at_mut(steps - 1 - k).copy_from_slice(conv.at(k));
    }
    out
}

/// `𝓜(∂₀w) − ∂₀(𝓜w)`.
pub fn commutator_with_d0(law: &MaterialLaw, w: &Field) -> Result<Field> {
    let a = law.apply(&w.with_signal(apply_d0(w.signal())))?;
    let mw = law.apply(w)?;
    a.sub(&mw.with_signal(apply_d0(mw.signal())))
}

/// Weighted adjoint of the commutator map of [`commutator_with_d0`].
pub fn commutator_with_d0_adjoint(law: &MaterialLaw, w: &Field) -> Result<Field> {
    let m_adj = law.adjoint(w)?;
    let a = m_adj.with_signal(apply_d0_adjoint(m_adj.signal()));
    let b = law.adjoint(&w.with_signal(apply_d0_adjoint(w.signal())))?;
    a.sub(&b)
}

/// Outcome of [`check_causality`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalityReport {
    pub passed: bool,
    /// Largest `‖1_{<a}𝓜f‖_ν / ‖f‖_ν` seen.
    pub worst_leakage: f64,
    pub trials: usize,
    pub cut_points: Vec<f64>,
}

/// Feeds random inputs supported in `t ≥ a` through the law and measures
/// how much output appears before `a`.
pub fn check_causality(law: &MaterialLaw, layout: Layout, grid: TimeGrid, trials: usize, seed: u64) -> Result<CausalityReport> {
    let horizon = grid.horizon();
    let cut_points = vec![0.25 * horizon, 0.5 * horizon, 0.75 * horizon];
    let mut worst: f64 = 0.0;
    for trial in 0..trials {
        let a = cut_points[trial % cut_points.len()];
        let r = Field::random(layout, grid, seed.wrapping_add(trial as u64));
        let f = r.with_signal(r.signal().sub(&truncate_before(r.signal(), a))?);
        let norm = f.norm();
        if norm == 0.0 {
            continue;
        }
        let y = law.apply(&f)?;
        let leak = truncate_before(y.signal(), a).weighted_norm() * layout.weight().sqrt() / norm;
        worst = worst.max(leak);
    }
    Ok(CausalityReport {
        passed: worst <= CAUSALITY_TOLERANCE,
        worst_leakage: worst,
        trials,
        cut_points,
    })
}

/// Outcome of [`estimate_positivity`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport {
    /// Largest `c` that the probes support: the smallest Ritz value minus
    /// its residual.
    pub c_estimate: f64,
    /// Truncation points `a` probed.
    pub a_samples: Vec<f64>,
    /// Smallest Rayleigh quotient found.
    pub min_quotient: f64,
    pub lanczos_iterations: usize,
}

impl PositivityReport {
    pub fn is_positive(&self) -> bool {
        self.c_estimate > 0.0
    }
}

/// Probe settings for [`estimate_positivity_with`].
#[derive(Debug, Clone)]
pub struct PositivityOptions {
    /// Numbers of time steps kept, i.e. the truncation points `a = t_{K_a}`.
    pub probe_steps: Vec<usize>,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for PositivityOptions {
    fn default() -> Self {
        Self {
            probe_steps: vec![24, 48],
            max_iterations: 160,
            seed: 7,
        }
    }
}

/// Smallest `c` with `Re⟨∂₀𝓜u, 1_{≤a}u⟩ ≥ c⟨u, 1_{≤a}u⟩` over the probed
/// truncation points.
pub fn estimate_positivity(law: &MaterialLaw, layout: Layout, grid: TimeGrid) -> Result<PositivityReport> {
    estimate_positivity_with(law, &SpatialOp::Zero, layout, grid, &PositivityOptions::default())
}

/// As [`estimate_positivity`] for the full operator `∂₀𝓜 + 𝓐`. A skew
/// `𝓐` does not change the result; an accretive one raises it.
///
/// By causality the truncated form only sees `u` on `[0, a]`, so each
/// probe runs Lanczos on the Hermitian part of `∂₀𝓜 + 𝓐` over the grid
/// cut after `K_a` steps.
pub fn estimate_positivity_with(
    law: &MaterialLaw,
    op: &SpatialOp,
    layout: Layout,
    grid: TimeGrid,
    opts: &PositivityOptions,
) -> Result<PositivityReport> {
    op.check_layout(&layout)?;
    let op_adj = op.adjoint();
    let mut steps: Vec<usize> = opts.probe_steps.iter().map(|s| (*s).clamp(2, grid.steps())).collect();
    steps.sort_unstable();
    steps.dedup();
    let mut c = f64::INFINITY;
    let mut min_q = f64::INFINITY;
    let mut iterations = 0;
    let mut a_samples = Vec::new();
    for ka in steps {
        let g = grid.with_steps(ka)?;
        a_samples.push(g.last_time());
        let forward = |u: &Field| -> Result<Field> {
            let m = law.apply(u)?;
            let mut y = m.with_signal(apply_d0(m.signal()));
            y.axpy(C64::new(1.0, 0.0), &op.apply_field(u));
            Ok(y)
        };
        let backward = |u: &Field| -> Result<Field> {
            let mut y = law.adjoint(&u.with_signal(apply_d0_adjoint(u.signal())))?;
            y.axpy(C64::new(1.0, 0.0), &op_adj.apply_field(u));
            Ok(y)
        };
        let failure = std::cell::RefCell::new(None);
        let herm = |u: &Field| -> Field {
            match (forward(u), backward(u)) {
                (Ok(mut a), Ok(b)) => {
                    a.axpy(C64::new(1.0, 0.0), &b);
                    a.scaled(C64::new(0.5, 0.0))
                }
                (Err(e), _) | (_, Err(e)) => {
                    failure.borrow_mut().get_or_insert(e);
                    u.scaled(C64::new(0.0, 0.0))
                }
            }
        };
        let start = Field::random(layout, g, opts.seed);
        let res = lanczos_extremes(herm, start, opts.max_iterations)?;
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        iterations += res.iterations;
        min_q = min_q.min(res.min);
        c = c.min(res.min - res.min_residual);
    }
    Ok(PositivityReport {
        c_estimate: c.min(min_q),
        a_samples,
        min_quotient: min_q,
        lanczos_iterations: iterations,
    })
}

/// Operator norm of the law on `layout × grid` by power iteration.
/// Returns the last estimate if the iteration cap is hit.
pub fn law_norm(law: &MaterialLaw, layout: Layout, grid: TimeGrid, opts: PowerOptions) -> Result<NormEstimate> {
    map_norm(|u| law.apply(u), |u| law.adjoint(u), layout, grid, opts)
}

/// Norm of a linear map on fields given with its adjoint.
pub fn map_norm(
    op: impl Fn(&Field) -> Result<Field>,
    adjoint: impl Fn(&Field) -> Result<Field>,
    layout: Layout,
    grid: TimeGrid,
    opts: PowerOptions,
) -> Result<NormEstimate> {
    let failure = std::cell::RefCell::new(None);
    let wrap = |f: &dyn Fn(&Field) -> Result<Field>, u: &Field| match f(u) {
        Ok(y) => y,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            u.scaled(C64::new(0.0, 0.0))
        }
    };
    let start = Field::random(layout, grid, 0x5eed);
    let res = operator_norm(|u| wrap(&op, u), |u| wrap(&adjoint, u), start, opts);
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    match res {
        Ok(n) => Ok(n),
        Err(Error::NotConverged { iterations, estimate, .. }) => {
            log::debug!("norm estimate stopped at the iteration cap ({iterations}), using {estimate}");
            Ok(NormEstimate {
                norm: estimate,
                iterations,
            })
        }
        Err(e) => Err(e),
    }
}

/// A truncated Neumann series together with its measured contraction.
#[derive(Debug, Clone)]
pub struct NeumannSeries {
    pub law: MaterialLaw,
    /// Measured `‖B⁻¹A∂₀⁻¹‖`.
    pub q: f64,
    /// Measured `‖B⁻¹‖`.
    pub b_inverse_norm: f64,
    /// `‖B⁻¹‖·q^{L+1}/(1 − q)`, a bound on the dropped terms.
    pub tail_bound: f64,
    pub order: usize,
}

/// Inverts `B + A∂₀⁻¹` by the series `Σ_{ℓ≤L} (−B⁻¹A∂₀⁻¹)^ℓ B⁻¹`. `q` is
/// measured on `layout × grid`; the series is rejected when `q ≥ 1`.
pub fn neumann_inverse(b: &MaterialLaw, a: &MaterialLaw, order: usize, layout: Layout, grid: TimeGrid) -> Result<NeumannSeries> {
    let binv = b.clone().inverse();
    let t = MaterialLaw::Product(vec![binv.clone(), a.clone(), MaterialLaw::D0Inverse]);
    let opts = PowerOptions {
        max_iterations: 2000,
        tolerance: 1e-10,
    };
    let q = law_norm(&t, layout, grid, opts)?.norm;
    if q >= 1.0 {
        return Err(Error::NoContraction { q });
    }
    let b_inverse_norm = law_norm(&binv, layout, grid, opts)?.norm;
    let tail_bound = b_inverse_norm * q.powi(order as i32 + 1) / (1.0 - q);
    Ok(NeumannSeries {
        law: MaterialLaw::NeumannInverse {
            b: Box::new(b.clone()),
            a: Box::new(a.clone()),
            order,
        },
        q,
        b_inverse_norm,
        tail_bound,
        order,
    })
}

/// Expands a Neumann inverse into elementary kinds (for the stepper).
pub(crate) fn neumann_expansion(b: &MaterialLaw, a: &MaterialLaw, order: usize) -> MaterialLaw {
    let binv = b.clone().inverse();
    let mut s = binv.clone();
    for _ in 0..order {
        s = MaterialLaw::Sum(vec![
            binv.clone(),
            MaterialLaw::Product(vec![
                MaterialLaw::Scale(C64::new(-1.0, 0.0)),
                binv.clone(),
                a.clone(),
                MaterialLaw::D0Inverse,
                s,
            ]),
        ]);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space1d::SpaceGrid;

    fn grid() -> TimeGrid {
        TimeGrid::new(1.0, 0.05, 80).unwrap()
    }

    fn rel(a: &Field, b: &Field) -> f64 {
        a.sub(b).unwrap().norm() / b.norm().max(1e-300)
    }

    #[test]
    fn impulse_kernel_is_identity() {
        let w = Field::random(Layout::Batch { points: 3 }, grid(), 1);
        let y = MaterialLaw::TimeConvolution(Kernel::Impulse).apply(&w).unwrap();
        assert!(rel(&y, &w) < 1e-13);
    }

    #[test]
    fn fft_and_direct_convolution_agree() {
        let g = TimeGrid::new(1.0, 0.05, 200).unwrap();
        let x = TimeSignal::random(g, 2, 3);
        let w: Vec<C64> = (0..200).map(|m| C64::new((-0.05 * m as f64).exp(), 0.1)).collect();
        let fast = causal_convolve(&w, &x);
        for k in [0, 17, 199] {
            for i in 0..2 {
                let direct: C64 = (0..=k).map(|j| w[k - j] * x.values()[j * 2 + i]).sum();
                assert!((fast.values()[k * 2 + i] - direct).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn adjoints_match_inner_products() {
        let sg = SpaceGrid::new(8).unwrap();
        let layout = Layout::Staggered(sg);
        let g = TimeGrid::new(1.5, 0.04, 90).unwrap();
        let laws = vec![
            MaterialLaw::Oscillated {
                base: Coef::piecewise_real(&[0.0, 0.5, 1.0], &[1.0, 2.0]).unwrap(),
                n: 2,
            },
            MaterialLaw::TimeMul(TimeFn::real("t", |t| t)),
            MaterialLaw::D0Inverse,
            MaterialLaw::Shift(-0.08),
            MaterialLaw::TimeConvolution(Kernel::func("exp", |t| (-t).exp())),
            MaterialLaw::Hardy(HardySymbol::rational(&[1.0], &[1.0, 1.0], 2.0)),
            MaterialLaw::block_diag(MaterialLaw::ProjectMean, MaterialLaw::scale(2.0).plus(MaterialLaw::ProjectMean).inverse()),
            MaterialLaw::NeumannInverse {
                b: Box::new(MaterialLaw::scale(2.0)),
                a: Box::new(MaterialLaw::scale(1.0)),
                order: 3,
            },
        ];
        let u = Field::random(layout, g, 11);
        let v = Field::random(layout, g, 12);
        for law in laws {
            let lhs = law.apply(&u).unwrap().inner(&v);
            let rhs = u.inner(&law.adjoint(&v).unwrap());
            assert!((lhs - rhs).norm() < 1e-10 * lhs.norm().max(1.0), "{law:?}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn stepwise_matches_apply() {
        let g = grid();
        let layout = Layout::Batch { points: 2 };
        let law = MaterialLaw::Sum(vec![
            MaterialLaw::TimeMul(TimeFn::real("1+t", |t| 1.0 + t)),
            MaterialLaw::Product(vec![
                MaterialLaw::TimeConvolution(Kernel::func("exp", |t| (-t).exp())),
                MaterialLaw::D0Inverse,
                MaterialLaw::Shift(-0.1),
            ]),
            MaterialLaw::Hardy(HardySymbol::polynomial(&[0.0, 1.0])),
        ]);
        let w = Field::random(layout, g, 5);
        let a = law.apply(&w).unwrap();
        let b = stepper::apply_stepwise(&law, &w).unwrap();
        assert!(rel(&b, &a) < 1e-11);
        let inv = law.clone().inverse();
        let back = law.apply(&inv.apply(&w).unwrap()).unwrap();
        assert!(rel(&back, &w) < 1e-10);
    }

    #[test]
    fn hardy_identity_symbol_is_d0_inverse() {
        let g = grid();
        let w = Field::random(Layout::scalar(), g, 2);
        let a = MaterialLaw::Hardy(HardySymbol::polynomial(&[0.0, 1.0])).apply(&w).unwrap();
        let b = MaterialLaw::D0Inverse.apply(&w).unwrap();
        assert!(rel(&a, &b) < 1e-12);
    }

    #[test]
    fn hardy_rejects_small_radius() {
        let w = Field::random(Layout::scalar(), grid(), 2);
        let law = MaterialLaw::Hardy(HardySymbol::rational(&[1.0], &[1.0], 0.4));
        assert!(matches!(law.apply(&w), Err(Error::HardyRadius { .. })));
    }

    #[test]
    fn anticausal_shift_is_flagged() {
        let rep = check_causality(&MaterialLaw::Shift(0.05), Layout::scalar(), grid(), 6, 1).unwrap();
        assert!(!rep.passed);
        assert!(rep.worst_leakage > 1e-3);
        assert!(matches!(
            stepper::apply_stepwise(&MaterialLaw::Shift(0.05), &Field::zeros(Layout::scalar(), grid())),
            Err(Error::NotCausal(_))
        ));
    }

    #[test]
    fn identity_positivity_is_about_nu() {
        let g = TimeGrid::new(2.0, 0.01, 200).unwrap();
        let rep = estimate_positivity(&MaterialLaw::identity(), Layout::scalar(), g).unwrap();
        let floor = (1.0 - (-2.0 * 2.0 * 0.01f64).exp()) / (2.0 * 0.01);
        assert!(rep.c_estimate <= rep.min_quotient);
        assert!(rep.min_quotient >= floor - 1e-9, "{rep:?}");
        assert!(rep.c_estimate > 0.9 * floor, "{rep:?}");
    }

    #[test]
    fn negative_block_is_not_positive() {
        let law = MaterialLaw::SpaceMul(Coef::piecewise_real(&[0.0, 0.5, 1.0], &[1.0, -1.0]).unwrap());
        let rep = estimate_positivity(&law, Layout::Batch { points: 4 }, grid()).unwrap();
        assert!(rep.c_estimate < 0.0);
    }

    #[test]
    fn neumann_without_a_is_b_inverse() {
        let w = Field::random(Layout::Batch { points: 2 }, grid(), 9);
        let s = neumann_inverse(&MaterialLaw::scale(4.0), &MaterialLaw::zero(), 0, Layout::Batch { points: 2 }, grid()).unwrap();
        let y = s.law.apply(&w).unwrap();
        assert!(rel(&y, &w.scaled(C64::new(0.25, 0.0))) < 1e-15);
        assert_eq!(s.q, 0.0);
    }

    #[test]
    fn neumann_rejects_large_q() {
        let g = TimeGrid::new(0.5, 0.05, 80).unwrap();
        let r = neumann_inverse(&MaterialLaw::identity(), &MaterialLaw::scale(1.0), 4, Layout::scalar(), g);
        assert!(matches!(r, Err(Error::NoContraction { .. })));
    }
}

//! Step-by-step evaluation of causal material laws.
//!
//! At step `k` a causal law splits as `(𝓜u)_k = D_k u_k + H_k`, where the
//! instantaneous part `D_k` acts on the current value only and the history
//! `H_k` depends on `u_0, …, u_{k−1}`. The forward-elimination solver needs
//! exactly this split; [`Stepper`] exposes it for every law kind.

use std::cell::RefCell;

use nalgebra::DMatrix;

use super::MaterialLaw;
use crate::linalg::Factorization;
use crate::space1d::Layout;
use crate::timeaxis::TimeGrid;
use crate::{Error, Result, C64};

pub(crate) type Vector = Vec<C64>;

fn zeros(n: usize) -> Vector {
    vec![C64::new(0.0, 0.0); n]
}

/// Incremental evaluation of a causal law.
///
/// Protocol per step: call [`Stepper::history`] once, then
/// [`Stepper::commit`] once with the input at that step.
pub trait Stepper {
    fn width(&self) -> usize;
    /// `H_k`, the contribution of earlier inputs to the output at step `k`.
    fn history(&mut self, k: usize) -> Vector;
    /// `D_k x`.
    fn instant(&self, k: usize, x: &[C64]) -> Vector;
    /// Whether `D_k` is the same for every step.
    fn time_invariant(&self) -> bool;
    /// Records the input `u_k` and returns the output `D_k u_k + H_k`.
    fn commit(&mut self, k: usize, u: &[C64]) -> Vector;
}

/// Builds the stepper of `law` on `layout` × `grid`.
pub fn stepper(law: &MaterialLaw, layout: Layout, grid: TimeGrid) -> Result<Box<dyn Stepper>> {
    let width = layout.width();
    Ok(match law {
        MaterialLaw::Scale(c) => {
            let c = *c;
            pointwise(width, true, move |_, x| x.iter().map(|v| v * c).collect())
        }
        MaterialLaw::SpaceMul(g) => {
            let s = layout.sample_coefficient(&|x| g.eval(x));
            pointwise(width, true, move |_, x| x.iter().zip(&s).map(|(v, c)| v * c).collect())
        }
        MaterialLaw::Oscillated { base, n } => {
            let g = base.oscillated(*n);
            let s = layout.sample_coefficient(&|x| g.eval(x));
            pointwise(width, true, move |_, x| x.iter().zip(&s).map(|(v, c)| v * c).collect())
        }
        MaterialLaw::TimeMul(kappa) => {
            let vals: Vec<C64> = (0..grid.steps()).map(|k| kappa.eval(grid.t(k))).collect();
            pointwise(width, false, move |k, x| x.iter().map(|v| v * vals[k]).collect())
        }
        MaterialLaw::SpaceTimeMul(g) => {
            let g = g.clone();
            pointwise(width, false, move |k, x| {
                let t = grid.t(k);
                let s = layout.sample_coefficient(&|y| g.eval(t, y));
                x.iter().zip(&s).map(|(v, c)| v * c).collect()
            })
        }
        MaterialLaw::ProjectMean => pointwise(width, true, |_, x| crate::space1d::project_out_mean(x)),
        MaterialLaw::D0Inverse => Box::new(D0InverseStepper {
            dt: grid.dt(),
            acc: zeros(width),
        }),
        MaterialLaw::Shift(h) => {
            let m = grid.steps_for(*h)?;
            if m > 0 {
                return Err(Error::NotCausal(format!("shift by +{h} looks into the future")));
            }
            if m == 0 {
                pointwise(width, true, |_, x| x.to_vec())
            } else {
                Box::new(DelayStepper {
                    delay: (-m) as usize,
                    past: Vec::new(),
                    width,
                    pending: zeros(width),
                })
            }
        }
        MaterialLaw::TimeConvolution(kernel) => {
            let weights: Vec<C64> = kernel.samples(&grid).into_iter().map(|c| c * grid.dt()).collect();
            Box::new(ConvolutionStepper::new(weights, width))
        }
        MaterialLaw::Hardy(sym) => Box::new(ConvolutionStepper::new(super::hardy_impulse_response(sym, grid)?, width)),
        MaterialLaw::BlockDiag(a, b) => {
            let (lu, lv, off) = layout
                .split()
                .ok_or_else(|| Error::GridMismatch("block-diagonal law needs a staggered layout".into()))?;
            Box::new(BlockStepper {
                u: stepper(a, lu, grid)?,
                v: stepper(b, lv, grid)?,
                off,
            })
        }
        MaterialLaw::Sum(parts) => Box::new(SumStepper {
            parts: parts.iter().map(|p| stepper(p, layout, grid)).collect::<Result<_>>()?,
            width,
        }),
        MaterialLaw::Product(factors) => {
            if factors.is_empty() {
                pointwise(width, true, |_, x| x.to_vec())
            } else {
                Box::new(ProductStepper {
                    factors: factors.iter().map(|p| stepper(p, layout, grid)).collect::<Result<_>>()?,
                })
            }
        }
        MaterialLaw::Inverse(inner) => Box::new(InverseStepper::new(stepper(inner, layout, grid)?)),
        MaterialLaw::NeumannInverse { b, a, order } => {
            stepper(&super::neumann_expansion(b, a, *order), layout, grid)?
        }
    })
}

fn pointwise(width: usize, invariant: bool, f: impl Fn(usize, &[C64]) -> Vector + 'static) -> Box<dyn Stepper> {
    Box::new(Pointwise {
        width,
        invariant,
        f: Box::new(f),
    })
}

struct Pointwise {
    width: usize,
    invariant: bool,
    f: Box<dyn Fn(usize, &[C64]) -> Vector>,
}

impl Stepper for Pointwise {
    fn width(&self) -> usize {
        self.width
    }
    fn history(&mut self, _k: usize) -> Vector {
        zeros(self.width)
    }
    fn instant(&self, k: usize, x: &[C64]) -> Vector {
        (self.f)(k, x)
    }
    fn time_invariant(&self) -> bool {
        self.invariant
    }
    fn commit(&mut self, k: usize, u: &[C64]) -> Vector {
        (self.f)(k, u)
    }
}

struct D0InverseStepper {
    dt: f64,
    acc: Vector,
}

impl Stepper for D0InverseStepper {
    fn width(&self) -> usize {
        self.acc.len()
    }
    fn history(&mut self, _k: usize) -> Vector {
        self.acc.clone()
    }
    fn instant(&self, _k: usize, x: &[C64]) -> Vector {
        x.iter().map(|v| v * self.dt).collect()
    }
    fn time_invariant(&self) -> bool {
        true
    }
    fn commit(&mut self, _k: usize, u: &[C64]) -> Vector {
        for (a, v) in self.acc.iter_mut().zip(u) {
            *a += v * self.dt;
        }
        self.acc.clone()
    }
}

struct DelayStepper {
    delay: usize,
    past: Vec<Vector>,
    width: usize,
    pending: Vector,
}

impl Stepper for DelayStepper {
    fn width(&self) -> usize {
        self.width
    }
    fn history(&mut self, k: usize) -> Vector {
        self.pending = if k >= self.delay { self.past[k - self.delay].clone() } else { zeros(self.width) };
        self.pending.clone()
    }
    fn instant(&self, _k: usize, _x: &[C64]) -> Vector {
        zeros(self.width)
    }
    fn time_invariant(&self) -> bool {
        true
    }
    fn commit(&mut self, _k: usize, u: &[C64]) -> Vector {
        self.past.push(u.to_vec());
        self.pending.clone()
    }
}

/// `y_k = Σ_{j≤k} w_{k−j} u_j` with precomputed weights.
struct ConvolutionStepper {
    weights: Vector,
    past: Vec<Vector>,
    width: usize,
    pending: Vector,
}

impl ConvolutionStepper {
    fn new(weights: Vector, width: usize) -> Self {
        Self {
            weights,
            past: Vec::new(),
            width,
            pending: zeros(width),
        }
    }
}

impl Stepper for ConvolutionStepper {
    fn width(&self) -> usize {
        self.width
    }
    fn history(&mut self, k: usize) -> Vector {
        let mut h = zeros(self.width);
        for (j, u) in self.past.iter().enumerate().take(k) {
            let w = self.weights[k - j];
            if w == C64::new(0.0, 0.0) {
                continue;
            }
            for (a, v) in h.iter_mut().zip(u) {
                *a += w * v;
            }
        }
        self.pending = h.clone();
        h
    }
    fn instant(&self, _k: usize, x: &[C64]) -> Vector {
        x.iter().map(|v| v * self.weights[0]).collect()
    }
    fn time_invariant(&self) -> bool {
        true
    }
    fn commit(&mut self, k: usize, u: &[C64]) -> Vector {
        self.past.push(u.to_vec());
        let mut y = self.instant(k, u);
        for (a, h) in y.iter_mut().zip(&self.pending) {
            *a += h;
        }
        y
    }
}

struct BlockStepper {
    u: Box<dyn Stepper>,
    v: Box<dyn Stepper>,
    off: usize,
}

impl Stepper for BlockStepper {
    fn width(&self) -> usize {
        self.u.width() + self.v.width()
    }
    fn history(&mut self, k: usize) -> Vector {
        let mut h = self.u.history(k);
        h.extend(self.v.history(k));
        h
    }
    fn instant(&self, k: usize, x: &[C64]) -> Vector {
        let mut y = self.u.instant(k, &x[..self.off]);
        y.extend(self.v.instant(k, &x[self.off..]));
        y
    }
    fn time_invariant(&self) -> bool {
        self.u.time_invariant() && self.v.time_invariant()
    }
    fn commit(&mut self, k: usize, x: &[C64]) -> Vector {
        let mut y = self.u.commit(k, &x[..self.off]);
        y.extend(self.v.commit(k, &x[self.off..]));
        y
    }
}

struct SumStepper {
    parts: Vec<Box<dyn Stepper>>,
    width: usize,
}

fn accumulate(acc: &mut Vector, x: &[C64]) {
    for (a, v) in acc.iter_mut().zip(x) {
        *a += v;
    }
}

impl Stepper for SumStepper {
    fn width(&self) -> usize {
        self.width
    }
    fn history(&mut self, k: usize) -> Vector {
        let mut h = zeros(self.width);
        for p in &mut self.parts {
            accumulate(&mut h, &p.history(k));
        }
        h
    }
    fn instant(&self, k: usize, x: &[C64]) -> Vector {
        let mut y = zeros(self.width);
        for p in &self.parts {
            accumulate(&mut y, &p.instant(k, x));
        }
        y
    }
    fn time_invariant(&self) -> bool {
        self.parts.iter().all(|p| p.time_invariant())
    }
    fn commit(&mut self, k: usize, u: &[C64]) -> Vector {
        let mut y = zeros(self.width);
        for p in &mut self.parts {
            accumulate(&mut y, &p.commit(k, u));
        }
        y
    }
}

/// `L_1 ∘ L_2 ∘ … ∘ L_m`; the last factor acts first.
struct ProductStepper {
    factors: Vec<Box<dyn Stepper>>,
}

impl Stepper for ProductStepper {
    fn width(&self) -> usize {
        self.factors[0].width()
    }
    fn history(&mut self, k: usize) -> Vector {
        // y_j = D_j y_{j+1} + H_j with y_{m+1} = u; the u-independent part is
        // b_j = D_j b_{j+1} + H_j, b_{m+1} = 0.
        let hs: Vec<Vector> = self.factors.iter_mut().map(|f| f.history(k)).collect();
        let m = self.factors.len();
        let mut b = hs[m - 1].clone();
        for j in (0..m - 1).rev() {
            let mut next = self.factors[j].instant(k, &b);
            accumulate(&mut next, &hs[j]);
            b = next;
        }
        b
    }
    fn instant(&self, k: usize, x: &[C64]) -> Vector {
        let mut y = x.to_vec();
        for f in self.factors.iter().rev() {
            y = f.instant(k, &y);
        }
        y
    }
    fn time_invariant(&self) -> bool {
        self.factors.iter().all(|f| f.time_invariant())
    }
    fn commit(&mut self, k: usize, u: &[C64]) -> Vector {
        let mut y = u.to_vec();
        for f in self.factors.iter_mut().rev() {
            y = f.commit(k, &y);
        }
        y
    }
}

/// Dense matrix of `D_k` for a stepper.
pub(crate) fn instant_matrix(s: &dyn Stepper, k: usize) -> DMatrix<C64> {
    let n = s.width();
    let mut m = DMatrix::zeros(n, n);
    let mut e = zeros(n);
    for j in 0..n {
        e[j] = C64::new(1.0, 0.0);
        let col = s.instant(k, &e);
        for (i, v) in col.into_iter().enumerate() {
            m[(i, j)] = v;
        }
        e[j] = C64::new(0.0, 0.0);
    }
    m
}

/// Causal inverse `y = L⁻¹x`: `y_k = D_k⁻¹(x_k − H_k)`.
struct InverseStepper {
    inner: Box<dyn Stepper>,
    lu: RefCell<Option<(usize, std::rc::Rc<Factorization>)>>,
    pending: Vector,
}

impl InverseStepper {
    fn new(inner: Box<dyn Stepper>) -> Self {
        let width = inner.width();
        Self {
            inner,
            lu: RefCell::new(None),
            pending: zeros(width),
        }
    }

    fn factor(&self, k: usize) -> std::rc::Rc<Factorization> {
        let mut slot = self.lu.borrow_mut();
        if let Some((kk, lu)) = slot.as_ref() {
            if *kk == k || self.inner.time_invariant() {
                return lu.clone();
            }
        }
        let lu = std::rc::Rc::new(Factorization::new(&instant_matrix(self.inner.as_ref(), k)));
        *slot = Some((k, lu.clone()));
        lu
    }

    fn solve(&self, k: usize, x: &[C64]) -> Vector {
        let mut b = x.to_vec();
        self.factor(k).solve_in_place(&mut b);
        b
    }
}

impl Stepper for InverseStepper {
    fn width(&self) -> usize {
        self.inner.width()
    }
    fn history(&mut self, k: usize) -> Vector {
        self.pending = self.inner.history(k);
        if self.pending.iter().all(|v| *v == C64::new(0.0, 0.0)) {
            return zeros(self.pending.len());
        }
        let mut h = self.solve(k, &self.pending);
        h.iter_mut().for_each(|v| *v = -*v);
        h
    }
    fn instant(&self, k: usize, x: &[C64]) -> Vector {
        self.solve(k, x)
    }
    fn time_invariant(&self) -> bool {
        self.inner.time_invariant()
    }
    fn commit(&mut self, k: usize, x: &[C64]) -> Vector {
        let rhs: Vector = x.iter().zip(&self.pending).map(|(a, b)| a - b).collect();
        let y = self.solve(k, &rhs);
        self.inner.commit(k, &y);
        y
    }
}

/// Evaluates `law` on `w` step by step (the path the solver uses).
pub fn apply_stepwise(law: &MaterialLaw, w: &crate::space1d::Field) -> Result<crate::space1d::Field> {
    let grid = *w.grid();
    let mut s = stepper(law, *w.layout(), grid)?;
    let mut out = w.clone();
    for k in 0..grid.steps() {
        s.history(k);
        let y = s.commit(k, w.at(k));
        out.at_mut(k).copy_from_slice(&y);
    }
    Ok(out)
}

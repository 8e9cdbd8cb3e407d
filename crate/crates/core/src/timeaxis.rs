//! The exponentially weighted time axis.
//!
//! Signals live on a uniform grid `t_k = k·dt`, `k = 0..K`, and are zero
//! for negative times. The inner product carries the weight `e^{−2νt}`:
//!
//! ```text
//! ⟨u, v⟩_ν = Σ_k u_k·conj(v_k)·e^{−2ν t_k}·dt
//! ```
//!
//! `∂₀` is the causal backward difference and `∂₀⁻¹` the left-rectangle
//! cumulative sum, so the two are exact inverses of each other.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

/// Uniform causal time grid with exponential weight `nu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    nu: f64,
    dt: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(nu: f64, dt: f64, steps: usize) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::InvalidTimeGrid(format!("nu must be positive, got {nu}")));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidTimeGrid(format!("dt must be positive, got {dt}")));
        }
        if steps < 2 {
            return Err(Error::InvalidTimeGrid(format!("need at least 2 steps, got {steps}")));
        }
        Ok(Self { nu, dt, steps })
    }

    /// Grid covering `[0, horizon)` with step `dt` (rounded to the nearest step count).
    pub fn with_horizon(nu: f64, dt: f64, horizon: f64) -> Result<Self> {
        let steps = (horizon / dt).round() as usize;
        Self::new(nu, dt, steps)
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn t(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// `t_{K−1}`.
    pub fn last_time(&self) -> f64 {
        self.t(self.steps - 1)
    }

    /// `K·dt`.
    pub fn horizon(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    /// `e^{−2ν t_k}`.
    pub fn weight(&self, k: usize) -> f64 {
        (-2.0 * self.nu * self.t(k)).exp()
    }

    /// Same grid with a different weight.
    pub fn with_nu(&self, nu: f64) -> Result<Self> {
        Self::new(nu, self.dt, self.steps)
    }

    /// Same step and weight, different length.
    pub fn with_steps(&self, steps: usize) -> Result<Self> {
        Self::new(self.nu, self.dt, steps)
    }

    pub(crate) fn check_same(&self, other: &TimeGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }

    /// Number of steps corresponding to `h`, if `h` is grid aligned.
    pub fn steps_for(&self, h: f64) -> Result<isize> {
        let m = (h / self.dt).round();
        let tol = 1e-9 * m.abs().max(1.0);
        if (h / self.dt - m).abs() > tol {
            let lower = (h / self.dt).floor() * self.dt;
            let upper = (h / self.dt).ceil() * self.dt;
            return Err(Error::ShiftNotAligned {
                h,
                dt: self.dt,
                lower,
                upper,
            });
        }
        Ok(m as isize)
    }
}

/// Vector space with the weighted inner product, used by the iterative
/// norm and eigenvalue estimators.
pub trait InnerProductSpace: Clone {
    fn inner(&self, other: &Self) -> C64;
    fn scale_mut(&mut self, a: C64);
    /// `self += a·x`
    fn axpy(&mut self, a: C64, x: &Self);
    fn raw(&self) -> &[C64];

    fn norm(&self) -> f64 {
        self.inner(self).re.max(0.0).sqrt()
    }
}

/// A signal on a [`TimeGrid`], `width` complex values per step (row major).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSignal {
    grid: TimeGrid,
    width: usize,
    values: Vec<C64>,
}

impl TimeSignal {
    pub fn zeros(grid: TimeGrid, width: usize) -> Self {
        Self {
            grid,
            width,
            values: vec![C64::new(0.0, 0.0); grid.steps() * width],
        }
    }

    pub fn from_values(grid: TimeGrid, width: usize, values: Vec<C64>) -> Result<Self> {
        if width == 0 || values.len() != grid.steps() * width {
            return Err(Error::GridMismatch(format!(
                "expected {} values of width {width}, got {}",
                grid.steps() * width,
                values.len()
            )));
        }
        Ok(Self { grid, width, values })
    }

    /// Scalar signal sampled from `f(t_k)`.
    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> C64) -> Self {
        let values = (0..grid.steps()).map(|k| f(grid.t(k))).collect();
        Self { grid, width: 1, values }
    }

    /// Scalar signal from real samples `f(t_k)`.
    pub fn from_real_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(grid, |t| C64::new(f(t), 0.0))
    }

    /// Unit impulse at step `k0` (scalar).
    pub fn impulse(grid: TimeGrid, k0: usize) -> Self {
        let mut s = Self::zeros(grid, 1);
        s.values[k0] = C64::new(1.0, 0.0);
        s
    }

    /// Deterministic pseudo-random signal with entries uniform in the unit square.
    pub fn random(grid: TimeGrid, width: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..grid.steps() * width)
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        Self { grid, width, values }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    /// Values at step `k`.
    pub fn at(&self, k: usize) -> &[C64] {
        &self.values[k * self.width..(k + 1) * self.width]
    }

    pub fn at_mut(&mut self, k: usize) -> &mut [C64] {
        &mut self.values[k * self.width..(k + 1) * self.width]
    }

    pub fn weighted_norm(&self) -> f64 {
        InnerProductSpace::norm(self)
    }

    pub(crate) fn check_compatible(&self, other: &TimeSignal) -> Result<()> {
        self.grid.check_same(&other.grid)?;
        if self.width != other.width {
            return Err(Error::GridMismatch(format!(
                "signal widths differ: {} vs {}",
                self.width, other.width
            )));
        }
        Ok(())
    }

    /// Componentwise `self − other`.
    pub fn sub(&self, other: &TimeSignal) -> Result<TimeSignal> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        for (a, b) in out.values.iter_mut().zip(&other.values) {
            *a -= b;
        }
        Ok(out)
    }

    /// Componentwise `self + other`.
    pub fn add(&self, other: &TimeSignal) -> Result<TimeSignal> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        for (a, b) in out.values.iter_mut().zip(&other.values) {
            *a += b;
        }
        Ok(out)
    }

    pub fn scaled(&self, a: C64) -> TimeSignal {
        let mut out = self.clone();
        out.scale_mut(a);
        out
    }

    /// Largest index `k` with `t_k < a`, plus one (the length of the kept prefix).
    pub fn prefix_len_before(&self, a: f64) -> usize {
        prefix_len_before(&self.grid, a)
    }
}

pub(crate) fn prefix_len_before(grid: &TimeGrid, a: f64) -> usize {
    if a <= 0.0 {
        return 0;
    }
    let k = (a / grid.dt()).ceil() as usize;
    // guard against rounding right at a grid point
    let mut k = k.min(grid.steps());
    while k > 0 && grid.t(k - 1) >= a {
        k -= 1;
    }
    while k < grid.steps() && grid.t(k) < a {
        k += 1;
    }
    k
}

impl InnerProductSpace for TimeSignal {
    fn inner(&self, other: &Self) -> C64 {
        weighted_sum(&self.grid, self.width, &self.values, &other.values)
    }

    fn scale_mut(&mut self, a: C64) {
        for v in &mut self.values {
            *v *= a;
        }
    }

    fn axpy(&mut self, a: C64, x: &Self) {
        for (v, w) in self.values.iter_mut().zip(&x.values) {
            *v += a * w;
        }
    }

    fn raw(&self) -> &[C64] {
        &self.values
    }
}

/// `Σ_k Σ_i u_{k,i}·conj(v_{k,i})·e^{−2νt_k}·dt`
pub(crate) fn weighted_sum(grid: &TimeGrid, width: usize, u: &[C64], v: &[C64]) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for k in 0..grid.steps() {
        let mut row = C64::new(0.0, 0.0);
        for i in k * width..(k + 1) * width {
            row += u[i] * v[i].conj();
        }
        acc += row * grid.weight(k);
    }
    acc * grid.dt()
}

/// Weighted inner product `⟨u, v⟩_ν`.
pub fn weighted_inner_product(u: &TimeSignal, v: &TimeSignal) -> Result<C64> {
    u.check_compatible(v)?;
    Ok(u.inner(v))
}

/// `(∂₀u)_k = (u_k − u_{k−1})/dt` with `u_{−1} = 0`.
pub fn apply_d0(u: &TimeSignal) -> TimeSignal {
    let mut out = u.clone();
    d0_in_place(u.grid.dt(), u.width, &u.values, &mut out.values);
    out
}

pub(crate) fn d0_in_place(dt: f64, width: usize, u: &[C64], out: &mut [C64]) {
    let steps = u.len() / width;
    for k in (0..steps).rev() {
        for i in 0..width {
            let prev = if k == 0 { C64::new(0.0, 0.0) } else { u[(k - 1) * width + i] };
            out[k * width + i] = (u[k * width + i] - prev) / dt;
        }
    }
}

/// `(∂₀⁻¹f)_k = dt·Σ_{j≤k} f_j`.
pub fn apply_d0_inverse(f: &TimeSignal) -> TimeSignal {
    let mut out = f.clone();
    d0_inverse_in_place(f.grid.dt(), f.width, &mut out.values);
    out
}

pub(crate) fn d0_inverse_in_place(dt: f64, width: usize, values: &mut [C64]) {
    let steps = values.len() / width;
    let mut acc = vec![C64::new(0.0, 0.0); width];
    for k in 0..steps {
        for i in 0..width {
            acc[i] += values[k * width + i] * dt;
            values[k * width + i] = acc[i];
        }
    }
}

/// Weighted adjoint of [`apply_d0`]: `(∂₀*v)_j = (v_j − e^{−2ν dt} v_{j+1})/dt`.
pub fn apply_d0_adjoint(v: &TimeSignal) -> TimeSignal {
    let mut out = v.clone();
    d0_adjoint_in_place(&v.grid, v.width, &mut out.values);
    out
}

pub(crate) fn d0_adjoint_in_place(grid: &TimeGrid, width: usize, values: &mut [C64]) {
    let steps = grid.steps();
    let q = (-2.0 * grid.nu() * grid.dt()).exp();
    for k in 0..steps {
        for i in 0..width {
            let next = if k + 1 < steps { values[(k + 1) * width + i] } else { C64::new(0.0, 0.0) };
            values[k * width + i] = (values[k * width + i] - next * q) / grid.dt();
        }
    }
}

/// Weighted adjoint of [`apply_d0_inverse`]: `(∂₀⁻¹)*g_j = dt·Σ_{k≥j} e^{−2ν(t_k−t_j)} g_k`.
pub fn apply_d0_inverse_adjoint(g: &TimeSignal) -> TimeSignal {
    let mut out = g.clone();
    d0_inverse_adjoint_in_place(&g.grid, g.width, &mut out.values);
    out
}

pub(crate) fn d0_inverse_adjoint_in_place(grid: &TimeGrid, width: usize, values: &mut [C64]) {
    let steps = grid.steps();
    let q = (-2.0 * grid.nu() * grid.dt()).exp();
    let mut acc = vec![C64::new(0.0, 0.0); width];
    for k in (0..steps).rev() {
        for i in 0..width {
            acc[i] = acc[i] * q + values[k * width + i] * grid.dt();
            values[k * width + i] = acc[i];
        }
    }
}

/// Zeroes every entry with `t_k ≥ a`.
pub fn truncate_before(u: &TimeSignal, a: f64) -> TimeSignal {
    let mut out = u.clone();
    let keep = u.prefix_len_before(a);
    for v in &mut out.values[keep * u.width..] {
        *v = C64::new(0.0, 0.0);
    }
    out
}

/// `(τ_h u)(t) = u(t + h)`; `h` must be a multiple of `dt`. Positive `h`
/// advances the signal (zero-filled at the end of the grid), negative `h`
/// delays it (zero-filled at the start).
pub fn time_shift(u: &TimeSignal, h: f64) -> Result<TimeSignal> {
    let m = u.grid.steps_for(h)?;
    let mut out = u.clone();
    shift_steps_in_place(u.width, &u.values, &mut out.values, m);
    Ok(out)
}

pub(crate) fn shift_steps_in_place(width: usize, src: &[C64], out: &mut [C64], m: isize) {
    let steps = (src.len() / width) as isize;
    for k in 0..steps {
        let j = k + m;
        for i in 0..width {
            out[(k * width as isize) as usize + i] = if j >= 0 && j < steps {
                src[(j * width as isize) as usize + i]
            } else {
                C64::new(0.0, 0.0)
            };
        }
    }
}

/// Weighted adjoint of the shift by `m` steps: `(τ_m* v)_j = e^{2ν m dt} v_{j−m}`.
pub(crate) fn shift_adjoint_in_place(grid: &TimeGrid, width: usize, src: &[C64], out: &mut [C64], m: isize) {
    shift_steps_in_place(width, src, out, -m);
    let factor = (2.0 * grid.nu() * m as f64 * grid.dt()).exp();
    for v in out.iter_mut() {
        *v *= factor;
    }
}

/// Discrete Fourier-Laplace image of a signal.
///
/// `coefficients[l·width + i]` is the `l`-th frequency of component `i`;
/// the transform is unitary from `L²_ν` (restricted to the first `K`
/// steps of a zero-padded grid of length `len`) into `ℓ²`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSignal {
    grid: TimeGrid,
    width: usize,
    len: usize,
    coefficients: Vec<C64>,
}

impl SpectralSignal {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn coefficients(&self) -> &[C64] {
        &self.coefficients
    }

    /// Angular frequency `ξ_l` of bin `l` (signed, in 1/time).
    pub fn frequency(&self, l: usize) -> f64 {
        frequency(self.len, self.grid.dt(), l)
    }

    /// Multiplies bin `l` by `m(l, ξ_l)`.
    pub fn multiply(&mut self, m: impl Fn(usize, f64) -> C64) {
        for l in 0..self.len {
            let factor = m(l, self.frequency(l));
            for i in 0..self.width {
                self.coefficients[l * self.width + i] *= factor;
            }
        }
    }
}

pub(crate) fn frequency(len: usize, dt: f64, l: usize) -> f64 {
    let signed = if l <= len / 2 { l as f64 } else { l as f64 - len as f64 };
    2.0 * std::f64::consts::PI * signed / (len as f64 * dt)
}

/// Fourier-Laplace transform without padding (`len = K`).
pub fn fourier_laplace(u: &TimeSignal) -> SpectralSignal {
    fourier_laplace_padded(u, u.grid.steps())
}

/// Fourier-Laplace transform of `u` zero-padded to `len ≥ K` samples.
pub fn fourier_laplace_padded(u: &TimeSignal, len: usize) -> SpectralSignal {
    let grid = u.grid;
    let len = len.max(grid.steps());
    let width = u.width;
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(len);
    let scale = (grid.dt() / len as f64).sqrt();
    let mut coefficients = vec![C64::new(0.0, 0.0); len * width];
    let mut buf = vec![C64::new(0.0, 0.0); len];
    for i in 0..width {
        buf.iter_mut().for_each(|b| *b = C64::new(0.0, 0.0));
        for k in 0..grid.steps() {
            buf[k] = u.values[k * width + i] * (-grid.nu() * grid.t(k)).exp();
        }
        fft.process(&mut buf);
        for l in 0..len {
            coefficients[l * width + i] = buf[l] * scale;
        }
    }
    SpectralSignal {
        grid,
        width,
        len,
        coefficients,
    }
}

/// Inverse of [`fourier_laplace_padded`], truncated back to the `K` grid steps.
pub fn inverse_fourier_laplace(s: &SpectralSignal) -> TimeSignal {
    let grid = s.grid;
    let width = s.width;
    let len = s.len;
    let mut planner = FftPlanner::<f64>::new();
    let ifft = planner.plan_fft_inverse(len);
    let scale = 1.0 / (grid.dt() * len as f64).sqrt();
    let mut out = TimeSignal::zeros(grid, width);
    let mut buf = vec![C64::new(0.0, 0.0); len];
    for i in 0..width {
        for l in 0..len {
            buf[l] = s.coefficients[l * width + i];
        }
        ifft.process(&mut buf);
        for k in 0..grid.steps() {
            out.values[k * width + i] = buf[k] * scale * (grid.nu() * grid.t(k)).exp();
        }
    }
    out
}

/// Padded length used for spectral multipliers: at least `4K`, and long
/// enough that a kernel decaying like `e^{−decay·t}` in the weighted
/// variable wraps around with relative size below `1e−15`.
pub fn padded_len(grid: &TimeGrid, decay: f64) -> usize {
    let k = grid.steps();
    let extra = (36.0 / (decay * grid.dt())).ceil() as usize;
    let target = (4 * k).max(k + extra).min(1 << 23);
    target.next_power_of_two()
}

/// Applies the spectral multiplier `m(ξ)` through the padded transform pair.
pub fn apply_multiplier(u: &TimeSignal, len: usize, m: impl Fn(f64) -> C64) -> TimeSignal {
    let mut s = fourier_laplace_padded(u, len);
    s.multiply(|_, xi| m(xi));
    inverse_fourier_laplace(&s)
}

/// Continuous symbol of `∂₀⁻¹`, `1/(iξ + ν)`.
pub fn d0_inverse_symbol(nu: f64, xi: f64) -> C64 {
    C64::new(nu, xi).inv()
}

/// Exact symbol of the discrete `∂₀⁻¹` on the periodic padded grid,
/// `dt/(1 − e^{−(ν + iξ)dt})`.
pub fn discrete_d0_inverse_symbol(nu: f64, dt: f64, xi: f64) -> C64 {
    let e = (C64::new(-nu * dt, -xi * dt)).exp();
    C64::new(dt, 0.0) / (C64::new(1.0, 0.0) - e)
}

/// Outcome of [`operator_norm`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub norm: f64,
    pub iterations: usize,
}

/// Stopping rule of [`operator_norm`].
#[derive(Debug, Clone, Copy)]
pub struct PowerOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for PowerOptions {
    fn default() -> Self {
        Self {
            max_iterations: 10_000,
            tolerance: 1e-8,
        }
    }
}

/// Largest singular value of `op` in the weighted metric by power
/// iteration on `op*∘op`.
///
/// `adjoint` must be the adjoint of `op` with respect to the inner product
/// of `V`. The iteration stops once the Rayleigh quotient changes by less
/// than `opts.tolerance` (relative).
pub fn operator_norm<V, F, G>(op: F, adjoint: G, start: V, opts: PowerOptions) -> Result<NormEstimate>
where
    V: InnerProductSpace,
    F: Fn(&V) -> V,
    G: Fn(&V) -> V,
{
    let mut x = start;
    let n0 = x.norm();
    if n0 == 0.0 {
        return Err(Error::InvalidParameter("power iteration needs a nonzero start".into()));
    }
    x.scale_mut(C64::new(1.0 / n0, 0.0));
    let mut prev = f64::NAN;
    let mut rq = 0.0;
    for it in 1..=opts.max_iterations {
        let y = op(&x);
        rq = y.inner(&y).re;
        if rq == 0.0 {
            return Ok(NormEstimate { norm: 0.0, iterations: it });
        }
        if (rq - prev).abs() <= opts.tolerance * rq {
            return Ok(NormEstimate {
                norm: rq.sqrt(),
                iterations: it,
            });
        }
        prev = rq;
        let mut z = adjoint(&y);
        let nz = z.norm();
        if nz == 0.0 {
            return Ok(NormEstimate {
                norm: rq.sqrt(),
                iterations: it,
            });
        }
        z.scale_mut(C64::new(1.0 / nz, 0.0));
        x = z;
    }
    Err(Error::NotConverged {
        iterations: opts.max_iterations,
        estimate: rq.sqrt(),
        last_iterate: x.raw().to_vec(),
    })
}

/// [`operator_norm`] for maps on scalar signals of `grid`, started from a
/// fixed pseudo-random signal.
pub fn operator_norm_on_grid<F, G>(op: F, adjoint: G, grid: TimeGrid, width: usize) -> Result<NormEstimate>
where
    F: Fn(&TimeSignal) -> TimeSignal,
    G: Fn(&TimeSignal) -> TimeSignal,
{
    operator_norm(op, adjoint, TimeSignal::random(grid, width, 0x5eed), PowerOptions::default())
}

/// `dt/(1 − e^{−ν dt})`, the norm of the discrete `∂₀⁻¹` on an unbounded grid.
pub fn d0_inverse_norm_bound(grid: &TimeGrid) -> f64 {
    grid.dt() / (1.0 - (-grid.nu() * grid.dt()).exp())
}

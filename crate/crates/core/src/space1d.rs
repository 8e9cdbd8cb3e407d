//! Staggered finite differences on `(0, 1)` and space-time fields.
//!
//! `u`-type unknowns live on the `N − 1` interior nodes `x_i = i·h`
//! (the Dirichlet boundary values are zero and not stored), `v`-type
//! unknowns on the `N` cell midpoints `x_{i+½}`. Both carry the discrete
//! inner product `h·Σ a_i·conj(b_i)`, which makes
//!
//! ```text
//! (∂̊₁u)_{i+½} = (u_{i+1} − u_i)/h        node → cell, u_0 = u_N = 0
//! (∂₁v)_i     = (v_{i+½} − v_{i−½})/h    cell → interior node
//! ```
//!
//! an exact adjoint pair, `∂̊₁ = −∂₁ᵀ`.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use crate::linalg::BandedLu;
use crate::timeaxis::{InnerProductSpace, TimeGrid, TimeSignal};
use crate::{Error, Result, C64};

/// Uniform partition of `(0, 1)` into `N` cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpaceGrid {
    cells: usize,
}

impl SpaceGrid {
    pub fn new(cells: usize) -> Result<Self> {
        if cells < 4 {
            return Err(Error::InvalidSpaceGrid(format!("need at least 4 cells, got {cells}")));
        }
        Ok(Self { cells })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn h(&self) -> f64 {
        1.0 / self.cells as f64
    }

    /// Nodes including both boundary points.
    pub fn node_count(&self) -> usize {
        self.cells + 1
    }

    pub fn interior_nodes(&self) -> usize {
        self.cells - 1
    }

    pub fn edge_count(&self) -> usize {
        self.cells
    }

    /// Position of node `i` (`0 ≤ i ≤ N`).
    pub fn node(&self, i: usize) -> f64 {
        i as f64 / self.cells as f64
    }

    /// Midpoint of cell `i` (`0 ≤ i < N`).
    pub fn midpoint(&self, i: usize) -> f64 {
        (i as f64 + 0.5) / self.cells as f64
    }
}

/// Which block of a staggered field a component belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Block {
    U,
    V,
}

/// Spatial layout of the values stored at one time step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Layout {
    /// Independent points `x_p = (p + ½)/P`, weight `1/P`.
    Batch { points: usize },
    /// Interior nodes of the grid (Dirichlet boundary).
    Nodes(SpaceGrid),
    /// Cell midpoints of the grid.
    Cells(SpaceGrid),
    /// Interior nodes followed by cell midpoints, the `(u, v)` pair.
    Staggered(SpaceGrid),
}

impl Layout {
    pub fn scalar() -> Self {
        Layout::Batch { points: 1 }
    }

    pub fn width(&self) -> usize {
        match self {
            Layout::Batch { points } => *points,
            Layout::Nodes(g) => g.interior_nodes(),
            Layout::Cells(g) => g.edge_count(),
            Layout::Staggered(g) => g.interior_nodes() + g.edge_count(),
        }
    }

    /// Quadrature weight of each component in the spatial inner product.
    pub fn weight(&self) -> f64 {
        match self {
            Layout::Batch { points } => 1.0 / *points as f64,
            Layout::Nodes(g) | Layout::Cells(g) | Layout::Staggered(g) => g.h(),
        }
    }

    pub fn space_grid(&self) -> Option<SpaceGrid> {
        match self {
            Layout::Batch { .. } => None,
            Layout::Nodes(g) | Layout::Cells(g) | Layout::Staggered(g) => Some(*g),
        }
    }

    /// Position and block of every component.
    pub fn positions(&self) -> Vec<(f64, Block)> {
        match self {
            Layout::Batch { points } => (0..*points).map(|p| ((p as f64 + 0.5) / *points as f64, Block::U)).collect(),
            Layout::Nodes(g) => (1..g.cells()).map(|i| (g.node(i), Block::U)).collect(),
            Layout::Cells(g) => (0..g.cells()).map(|i| (g.midpoint(i), Block::V)).collect(),
            Layout::Staggered(g) => {
                let mut p: Vec<_> = (1..g.cells()).map(|i| (g.node(i), Block::U)).collect();
                p.extend((0..g.cells()).map(|i| (g.midpoint(i), Block::V)));
                p
            }
        }
    }

    /// Samples a spatial coefficient on this layout. Cell components use
    /// the midpoint value; node components average the two adjacent
    /// midpoints, so coefficients that jump at a node get the mean of the
    /// one-sided values.
    pub fn sample_coefficient(&self, g: &dyn Fn(f64) -> C64) -> Vec<C64> {
        match self {
            Layout::Batch { points } => (0..*points).map(|p| g((p as f64 + 0.5) / *points as f64)).collect(),
            Layout::Cells(grid) => (0..grid.cells()).map(|i| g(grid.midpoint(i))).collect(),
            Layout::Nodes(grid) => node_samples(grid, g),
            Layout::Staggered(grid) => {
                let mut s = node_samples(grid, g);
                s.extend((0..grid.cells()).map(|i| g(grid.midpoint(i))));
                s
            }
        }
    }

    /// For staggered layouts, the `(u, v)` sub-layouts and the offset of the
    /// `v` block.
    pub fn split(&self) -> Option<(Layout, Layout, usize)> {
        match self {
            Layout::Staggered(g) => Some((Layout::Nodes(*g), Layout::Cells(*g), g.interior_nodes())),
            _ => None,
        }
    }

    /// Solver ordering: `order[s]` is the storage index of the `s`-th
    /// unknown. Staggered layouts interleave `v_0, u_1, v_1, …, u_{N−1}, v_{N−1}`
    /// so that `𝓐` becomes tridiagonal.
    pub fn solver_order(&self) -> Vec<usize> {
        match self {
            Layout::Staggered(g) => {
                let n_u = g.interior_nodes();
                (0..self.width())
                    .map(|s| if s % 2 == 0 { n_u + s / 2 } else { s / 2 })
                    .collect()
            }
            _ => (0..self.width()).collect(),
        }
    }
}

fn node_samples(grid: &SpaceGrid, g: &dyn Fn(f64) -> C64) -> Vec<C64> {
    (1..grid.cells())
        .map(|i| (g(grid.midpoint(i - 1)) + g(grid.midpoint(i))) * 0.5)
        .collect()
}

/// A space-time field: a [`TimeSignal`] whose per-step vectors follow a [`Layout`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    layout: Layout,
    signal: TimeSignal,
}

impl Field {
    pub fn zeros(layout: Layout, grid: TimeGrid) -> Self {
        Self {
            layout,
            signal: TimeSignal::zeros(grid, layout.width()),
        }
    }

    pub fn new(layout: Layout, signal: TimeSignal) -> Result<Self> {
        if signal.width() != layout.width() {
            return Err(Error::GridMismatch(format!(
                "layout width {} vs signal width {}",
                layout.width(),
                signal.width()
            )));
        }
        Ok(Self { layout, signal })
    }

    /// Samples `f(t, x, block)` at every component position.
    pub fn from_fn(layout: Layout, grid: TimeGrid, f: impl Fn(f64, f64, Block) -> C64) -> Self {
        let pos = layout.positions();
        let w = layout.width();
        let mut values = Vec::with_capacity(grid.steps() * w);
        for k in 0..grid.steps() {
            let t = grid.t(k);
            values.extend(pos.iter().map(|(x, b)| f(t, *x, *b)));
        }
        Self {
            layout,
            signal: TimeSignal::from_values(grid, w, values).expect("shape"),
        }
    }

    /// Deterministic pseudo-random field.
    pub fn random(layout: Layout, grid: TimeGrid, seed: u64) -> Self {
        Self {
            layout,
            signal: TimeSignal::random(grid, layout.width(), seed),
        }
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn grid(&self) -> &TimeGrid {
        self.signal.grid()
    }

    pub fn signal(&self) -> &TimeSignal {
        &self.signal
    }

    pub fn signal_mut(&mut self) -> &mut TimeSignal {
        &mut self.signal
    }

    pub fn into_signal(self) -> TimeSignal {
        self.signal
    }

    pub fn values(&self) -> &[C64] {
        self.signal.values()
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        self.signal.values_mut()
    }

    pub fn at(&self, k: usize) -> &[C64] {
        self.signal.at(k)
    }

    pub fn at_mut(&mut self, k: usize) -> &mut [C64] {
        self.signal.at_mut(k)
    }

    /// Same layout and grid, new time signal.
    pub fn with_signal(&self, signal: TimeSignal) -> Field {
        Field {
            layout: self.layout,
            signal,
        }
    }

    pub fn check_compatible(&self, other: &Field) -> Result<()> {
        if self.layout != other.layout {
            return Err(Error::GridMismatch(format!("{:?} vs {:?}", self.layout, other.layout)));
        }
        self.signal.check_compatible(&other.signal)
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.check_compatible(other)?;
        Ok(self.with_signal(self.signal.add(&other.signal)?))
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.check_compatible(other)?;
        Ok(self.with_signal(self.signal.sub(&other.signal)?))
    }

    pub fn scaled(&self, a: C64) -> Field {
        self.with_signal(self.signal.scaled(a))
    }

    /// Weighted space-time inner product.
    pub fn pairing(&self, other: &Field) -> Result<C64> {
        self.check_compatible(other)?;
        Ok(self.inner(other))
    }

    /// Splits a staggered field into its node and cell parts.
    pub fn split_blocks(&self) -> Option<(Field, Field)> {
        let (lu, lv, off) = self.layout.split()?;
        let grid = *self.grid();
        let w = self.layout.width();
        let mut u = Field::zeros(lu, grid);
        let mut v = Field::zeros(lv, grid);
        for k in 0..grid.steps() {
            let row = &self.values()[k * w..(k + 1) * w];
            u.at_mut(k).copy_from_slice(&row[..off]);
            v.at_mut(k).copy_from_slice(&row[off..]);
        }
        Some((u, v))
    }

    /// Inverse of [`Field::split_blocks`].
    pub fn join_blocks(layout: Layout, u: &Field, v: &Field) -> Result<Field> {
        let (lu, lv, off) = layout
            .split()
            .ok_or_else(|| Error::GridMismatch("join_blocks needs a staggered layout".into()))?;
        if *u.layout() != lu || *v.layout() != lv {
            return Err(Error::GridMismatch("block layouts do not match".into()));
        }
        u.grid().check_same(v.grid())?;
        let grid = *u.grid();
        let mut out = Field::zeros(layout, grid);
        for k in 0..grid.steps() {
            let row = out.at_mut(k);
            row[..off].copy_from_slice(u.at(k));
            row[off..].copy_from_slice(v.at(k));
        }
        Ok(out)
    }
}

impl InnerProductSpace for Field {
    fn inner(&self, other: &Self) -> C64 {
        self.signal.inner(&other.signal) * self.layout.weight()
    }

    fn scale_mut(&mut self, a: C64) {
        self.signal.scale_mut(a)
    }

    fn axpy(&mut self, a: C64, x: &Self) {
        self.signal.axpy(a, &x.signal)
    }

    fn raw(&self) -> &[C64] {
        self.signal.values()
    }
}

/// The staggered pair `∂₁` (maximal) and `∂̊₁` (Dirichlet) and the block
/// operator `𝓐 = [[0, ∂₁], [∂̊₁, 0]]` acting on `(u, v)`.
#[derive(Debug)]
pub struct BlockOperatorA {
    grid: SpaceGrid,
    d1_max: DMatrix<f64>,
    d1_dirichlet: DMatrix<f64>,
    cache: RwLock<HashMap<(u64, u64), Arc<BandedLu>>>,
}

/// Assembles `𝓐` on `grid`.
pub fn assemble_block_a(grid: SpaceGrid) -> Result<BlockOperatorA> {
    let n = grid.cells();
    if n < 4 {
        return Err(Error::InvalidSpaceGrid(format!("need at least 4 cells, got {n}")));
    }
    let h = grid.h();
    let d1_dirichlet = DMatrix::from_fn(n, n - 1, |c, i| {
        // cell c spans nodes c and c+1; interior node index i is node i+1
        let node = i + 1;
        if node == c + 1 {
            1.0 / h
        } else if node == c {
            -1.0 / h
        } else {
            0.0
        }
    });
    let d1_max = DMatrix::from_fn(n - 1, n, |i, c| {
        let node = i + 1;
        if c == node {
            1.0 / h
        } else if c + 1 == node {
            -1.0 / h
        } else {
            0.0
        }
    });
    Ok(BlockOperatorA {
        grid,
        d1_max,
        d1_dirichlet,
        cache: RwLock::new(HashMap::new()),
    })
}

impl BlockOperatorA {
    pub fn grid(&self) -> SpaceGrid {
        self.grid
    }

    pub fn layout(&self) -> Layout {
        Layout::Staggered(self.grid)
    }

    /// `∂₁` as a matrix from cells to interior nodes.
    pub fn d1_max(&self) -> &DMatrix<f64> {
        &self.d1_max
    }

    /// `∂̊₁` as a matrix from interior nodes to cells.
    pub fn d1_dirichlet(&self) -> &DMatrix<f64> {
        &self.d1_dirichlet
    }

    /// `∂̊₁u` for interior node values `u`.
    pub fn apply_d1_dirichlet(&self, u: &[C64]) -> Vec<C64> {
        let n = self.grid.cells();
        let h = self.grid.h();
        let zero = C64::new(0.0, 0.0);
        (0..n)
            .map(|c| {
                let right = if c + 1 < n { u[c] } else { zero };
                let left = if c >= 1 { u[c - 1] } else { zero };
                (right - left) / h
            })
            .collect()
    }

    /// `∂₁v` for cell values `v`, evaluated at interior nodes.
    pub fn apply_d1_max(&self, v: &[C64]) -> Vec<C64> {
        let h = self.grid.h();
        (1..self.grid.cells()).map(|node| (v[node] - v[node - 1]) / h).collect()
    }

    /// `𝓐(u, v) = (∂₁v, ∂̊₁u)` on a staggered vector.
    pub fn apply(&self, w: &[C64]) -> Vec<C64> {
        let off = self.grid.interior_nodes();
        let mut out = self.apply_d1_max(&w[off..]);
        out.extend(self.apply_d1_dirichlet(&w[..off]));
        out
    }

    /// Solves `(𝓐 + λ)w = rhs` for `Re λ > 0`.
    pub fn resolvent(&self, lambda: C64, rhs: &[C64]) -> Result<Vec<C64>> {
        if !(lambda.re > 0.0) {
            return Err(Error::InvalidParameter(format!("resolvent needs Re λ > 0, got {lambda}")));
        }
        let lu = self.factor(lambda)?;
        let order = self.layout().solver_order();
        let mut b: Vec<C64> = order.iter().map(|&s| rhs[s]).collect();
        lu.solve_in_place(&mut b);
        let mut out = vec![C64::new(0.0, 0.0); rhs.len()];
        for (pos, &s) in order.iter().enumerate() {
            out[s] = b[pos];
        }
        Ok(out)
    }

    fn factor(&self, lambda: C64) -> Result<Arc<BandedLu>> {
        let key = (lambda.re.to_bits(), lambda.im.to_bits());
        if let Some(lu) = self.cache.read().get(&key) {
            return Ok(lu.clone());
        }
        let order = self.layout().solver_order();
        let width = order.len();
        // dense image of each unit vector, read back in solver order
        let mut inv = vec![0usize; width];
        for (pos, &s) in order.iter().enumerate() {
            inv[s] = pos;
        }
        let mut cols: Vec<Vec<C64>> = Vec::with_capacity(width);
        for pos in 0..width {
            let mut e = vec![C64::new(0.0, 0.0); width];
            e[order[pos]] = C64::new(1.0, 0.0);
            let img = self.apply(&e);
            let mut col = vec![C64::new(0.0, 0.0); width];
            for (s, v) in img.iter().enumerate() {
                col[inv[s]] = *v;
            }
            col[pos] += lambda;
            cols.push(col);
        }
        let lu = BandedLu::factor(width, 1, 1, |i, j| cols[j][i]);
        if !(lu.min_pivot() > 0.0) {
            return Err(Error::SingularStep {
                step: 0,
                min_pivot: lu.min_pivot(),
            });
        }
        let lu = Arc::new(lu);
        self.cache.write().insert(key, lu.clone());
        Ok(lu)
    }
}

/// Subtracts the (uniformly weighted) mean.
pub fn project_out_mean(g: &[C64]) -> Vec<C64> {
    if g.is_empty() {
        return Vec::new();
    }
    let mean: C64 = g.iter().sum::<C64>() / g.len() as f64;
    g.iter().map(|v| v - mean).collect()
}

/// Time-independent spatial operator in `(∂₀𝓜 + 𝓐)u = f`.
#[derive(Debug, Clone)]
pub enum SpatialOp {
    Zero,
    /// `c·I`, e.g. the scalar `𝓐 = 1` or `𝓐 = i` of the counterexamples.
    Scalar(C64),
    /// `sign·𝓐` on a staggered layout.
    Skew { a: Arc<BlockOperatorA>, sign: f64 },
    /// `−∂₁∂̊₁ − shift` on interior nodes (Dirichlet Laplacian).
    NegLaplacian { grid: SpaceGrid, shift: f64 },
}

impl SpatialOp {
    pub fn skew(grid: SpaceGrid) -> Result<Self> {
        Ok(SpatialOp::Skew {
            a: Arc::new(assemble_block_a(grid)?),
            sign: 1.0,
        })
    }

    /// Adjoint with respect to the (uniformly weighted) spatial inner product.
    pub fn adjoint(&self) -> SpatialOp {
        match self {
            SpatialOp::Zero => SpatialOp::Zero,
            SpatialOp::Scalar(c) => SpatialOp::Scalar(c.conj()),
            SpatialOp::Skew { a, sign } => SpatialOp::Skew {
                a: a.clone(),
                sign: -*sign,
            },
            SpatialOp::NegLaplacian { grid, shift } => SpatialOp::NegLaplacian {
                grid: *grid,
                shift: *shift,
            },
        }
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        match self {
            SpatialOp::Zero => vec![C64::new(0.0, 0.0); x.len()],
            SpatialOp::Scalar(c) => x.iter().map(|v| v * c).collect(),
            SpatialOp::Skew { a, sign } => a.apply(x).into_iter().map(|v| v * *sign).collect(),
            SpatialOp::NegLaplacian { grid, shift } => {
                let h2 = grid.h() * grid.h();
                let n = x.len();
                let zero = C64::new(0.0, 0.0);
                (0..n)
                    .map(|i| {
                        let l = if i > 0 { x[i - 1] } else { zero };
                        let r = if i + 1 < n { x[i + 1] } else { zero };
                        (x[i] * 2.0 - l - r) / h2 - x[i] * *shift
                    })
                    .collect()
            }
        }
    }

    /// Checks that the operator acts on vectors of `layout`.
    pub fn check_layout(&self, layout: &Layout) -> Result<()> {
        let ok = match self {
            SpatialOp::Zero | SpatialOp::Scalar(_) => true,
            SpatialOp::Skew { a, .. } => *layout == a.layout(),
            SpatialOp::NegLaplacian { grid, .. } => *layout == Layout::Nodes(*grid),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("spatial operator does not act on {layout:?}")))
        }
    }

    /// Applies the operator at every time step of a field.
    pub fn apply_field(&self, w: &Field) -> Field {
        let mut out = w.clone();
        for k in 0..w.grid().steps() {
            let y = self.apply(w.at(k));
            out.at_mut(k).copy_from_slice(&y);
        }
        out
    }

    /// Dense matrix of the operator in storage order.
    pub fn dense(&self, width: usize) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(width, width);
        for j in 0..width {
            let mut e = vec![C64::new(0.0, 0.0); width];
            e[j] = C64::new(1.0, 0.0);
            for (i, v) in self.apply(&e).into_iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }
}

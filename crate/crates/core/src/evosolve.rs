//! Solving `(∂₀𝓜 + 𝓐)u = f` by causal forward elimination.
//!
//! With the backward difference `(∂₀y)_k = (y_k − y_{k−1})/dt` and the
//! split `(𝓜u)_k = D_k u_k + H_k` of a causal law, step `k` reads
//!
//! ```text
//! (D_k/dt + 𝓐) u_k = f_k + ((𝓜u)_{k−1} − H_k)/dt
//! ```
//!
//! so the space-time system is block lower triangular and is solved one
//! spatial system per step.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::linalg::Factorization;
use crate::matlaw::stepper::{instant_matrix, stepper};
use crate::matlaw::{estimate_positivity_with, law_norm, MaterialLaw, PositivityOptions, PositivityReport};
use crate::space1d::{Field, Layout, SpatialOp};
use crate::timeaxis::{apply_d0, apply_d0_inverse, InnerProductSpace, PowerOptions, TimeGrid};
use crate::{Error, Result, C64};

/// Slack allowed by [`verify_continuity_estimate`] for discretization error.
pub const CONTINUITY_SLACK: f64 = 0.05;

/// Steps kept when measuring `‖𝓜‖` for the continuity bound.
const NORM_PROBE_STEPS: usize = 96;

#[derive(Debug, Clone)]
pub struct Problem {
    pub law: MaterialLaw,
    pub op: SpatialOp,
    pub rhs: Field,
    /// `c` of the positivity condition; measured by [`solve`] when absent.
    pub positivity: Option<f64>,
    /// `‖𝓜‖`; measured by [`solve`] when absent.
    pub law_norm: Option<f64>,
}

impl Problem {
    pub fn new(law: MaterialLaw, op: SpatialOp, rhs: Field) -> Self {
        Self {
            law,
            op,
            rhs,
            positivity: None,
            law_norm: None,
        }
    }

    /// Supplies `c` and `‖𝓜‖`, e.g. when many right-hand sides share a law.
    pub fn with_constants(mut self, c: f64, law_norm: f64) -> Self {
        self.positivity = Some(c);
        self.law_norm = Some(law_norm);
        self
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub u: Field,
    pub residual_norm: f64,
    pub rhs_norm: f64,
    /// `|u|_{H_{−1,1}} = ‖∂₀⁻¹(𝓐 + 1)u‖_ν`.
    pub lattice_norm: f64,
    /// `(1/ν + ‖𝓜‖/c + 1/(cν))·‖f‖_ν`, infinite when `c ≤ 0`.
    pub bound_rhs: f64,
    pub positivity: f64,
    pub law_norm: f64,
    pub elapsed: Duration,
}

/// The constants `c` and `‖𝓜‖` of a problem, summarized for reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemConstants {
    pub positivity: PositivityReport,
    pub law_norm: f64,
}

/// Measures `c` (for `∂₀𝓜 + 𝓐`) and `‖𝓜‖` on short probe grids.
pub fn problem_constants(law: &MaterialLaw, op: &SpatialOp, layout: Layout, grid: TimeGrid) -> Result<ProblemConstants> {
    let positivity = estimate_positivity_with(law, op, layout, grid, &PositivityOptions::default())?;
    let probe = grid.with_steps(grid.steps().min(NORM_PROBE_STEPS))?;
    let opts = PowerOptions {
        max_iterations: 3000,
        tolerance: 1e-9,
    };
    let law_norm = law_norm(law, layout, probe, opts)?.norm;
    Ok(ProblemConstants { positivity, law_norm })
}

/// Solves the problem and evaluates residual, lattice norm and the
/// continuity bound.
pub fn solve(p: &Problem) -> Result<SolveReport> {
    let start = Instant::now();
    let layout = *p.rhs.layout();
    let grid = *p.rhs.grid();
    let (c, m_norm) = match (p.positivity, p.law_norm) {
        (Some(c), Some(m)) => (c, m),
        _ => {
            let k = problem_constants(&p.law, &p.op, layout, grid)?;
            (p.positivity.unwrap_or(k.positivity.c_estimate), p.law_norm.unwrap_or(k.law_norm))
        }
    };
    if c <= 0.01 * grid.nu() {
        log::warn!("positivity constant c = {c:.3e} is not safely positive at nu = {}", grid.nu());
    }
    let u = forward_eliminate(&p.law, &p.op, &p.rhs)?;
    let residual_norm = residual(&p.law, &p.op, &u, &p.rhs)?.norm();
    let rhs_norm = p.rhs.norm();
    Ok(SolveReport {
        lattice_norm: lattice_norm(&u, &p.op),
        bound_rhs: continuity_bound(grid.nu(), m_norm, c, rhs_norm),
        residual_norm,
        rhs_norm,
        positivity: c,
        law_norm: m_norm,
        u,
        elapsed: start.elapsed(),
    })
}

/// The forward elimination alone.
pub fn forward_eliminate(law: &MaterialLaw, op: &SpatialOp, rhs: &Field) -> Result<Field> {
    let layout = *rhs.layout();
    let grid = *rhs.grid();
    op.check_layout(&layout)?;
    let width = layout.width();
    let dt = grid.dt();
    let order = layout.solver_order();
    let a = op.dense(width);
    let mut s = stepper(law, layout, grid)?;
    let mut u = Field::zeros(layout, grid);
    let mut prev = vec![C64::new(0.0, 0.0); width];
    let mut lu: Option<Factorization> = None;
    let mut buf = vec![C64::new(0.0, 0.0); width];
    for k in 0..grid.steps() {
        let h = s.history(k);
        if lu.is_none() || !s.time_invariant() {
            let m = instant_matrix(s.as_ref(), k) / C64::new(dt, 0.0) + &a;
            let permuted = nalgebra::DMatrix::from_fn(width, width, |i, j| m[(order[i], order[j])]);
            let scale = permuted.iter().map(|v| v.norm()).fold(0.0, f64::max);
            let f = Factorization::new(&permuted);
            if !(f.min_pivot() > 1e-13 * scale) {
                return Err(Error::SingularStep {
                    step: k,
                    min_pivot: f.min_pivot(),
                });
            }
            lu = Some(f);
        }
        let fk = rhs.at(k);
        for (sidx, &i) in order.iter().enumerate() {
            buf[sidx] = fk[i] + (prev[i] - h[i]) / dt;
        }
        lu.as_ref().unwrap().solve_in_place(&mut buf);
        let row = u.at_mut(k);
        for (sidx, &i) in order.iter().enumerate() {
            row[i] = buf[sidx];
        }
        prev = s.commit(k, u.at(k));
    }
    Ok(u)
}

/// `∂₀𝓜u + 𝓐u − f`, evaluated through [`MaterialLaw::apply`] rather than
/// the stepper.
pub fn residual(law: &MaterialLaw, op: &SpatialOp, u: &Field, f: &Field) -> Result<Field> {
    let m = law.apply(u)?;
    let mut r = m.with_signal(apply_d0(m.signal()));
    r.axpy(C64::new(1.0, 0.0), &op.apply_field(u));
    r.sub(f)
}

/// `‖∂₀⁻¹(𝓐 + 1)u‖_ν`.
pub fn lattice_norm(u: &Field, op: &SpatialOp) -> f64 {
    let mut y = op.apply_field(u);
    y.axpy(C64::new(1.0, 0.0), u);
    y.with_signal(apply_d0_inverse(y.signal())).norm()
}

/// Right side of the continuity estimate.
pub fn continuity_bound(nu: f64, law_norm: f64, c: f64, rhs_norm: f64) -> f64 {
    if c <= 0.0 {
        return f64::INFINITY;
    }
    (1.0 / nu + law_norm / c + 1.0 / (c * nu)) * rhs_norm
}

/// Whether `|u|_{H_{−1,1}} ≤ bound·(1 + 5%)`.
pub fn verify_continuity_estimate(report: &SolveReport) -> bool {
    report.lattice_norm <= report.bound_rhs * (1.0 + CONTINUITY_SLACK)
}

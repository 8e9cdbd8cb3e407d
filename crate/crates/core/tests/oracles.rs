//! Checks against values computed independently of the library code:
//! closed forms, a Sturm-sequence eigenvalue solver, and direct sums.

use evoconv_core::evosolve::{forward_eliminate, solve, Problem};
use evoconv_core::matlaw::{
    harmonic_mean, law_norm, weak_limit_coefficient, Coef, Kernel, MaterialLaw, TimeFn,
};
use evoconv_core::quadrature::period_average;
use evoconv_core::space1d::{assemble_block_a, Field, Layout, SpaceGrid, SpatialOp};
use evoconv_core::timeaxis::{
    apply_d0, apply_d0_inverse, apply_d0_inverse_adjoint, d0_inverse_norm_bound, fourier_laplace,
    inverse_fourier_laplace, operator_norm_on_grid, weighted_inner_product, PowerOptions, TimeGrid, TimeSignal,
};
use evoconv_core::C64;
use std::f64::consts::PI;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Eigenvalues of a symmetric tridiagonal matrix below `x` (Sturm count).
fn sturm_count(diag: &[f64], off: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut d = 1.0;
    for i in 0..diag.len() {
        let o = if i == 0 { 0.0 } else { off[i - 1] * off[i - 1] };
        d = diag[i] - x - o / d;
        if d == 0.0 {
            d = -1e-300;
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

fn smallest_eigenvalue(diag: &[f64], off: &[f64]) -> f64 {
    let bound = diag
        .iter()
        .enumerate()
        .map(|(i, d)| d.abs() + off.get(i).map_or(0.0, |v| v.abs()) + if i > 0 { off[i - 1].abs() } else { 0.0 })
        .fold(0.0, f64::max);
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sturm_count(diag, off, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Norm of the weighted `∂₀⁻¹` on `K` steps. In the basis scaled by
/// `e^{−νt_k}√dt` the operator is the Toeplitz matrix `dt·q^{i−j}` with
/// `q = e^{−ν dt}`, whose inverse `(I − qS)/dt` is bidiagonal; its smallest
/// singular value comes from the tridiagonal `BBᵀ`.
fn d0_inverse_norm_oracle(nu: f64, dt: f64, k: usize) -> f64 {
    let q = (-nu * dt).exp();
    // B = (I − qS)/dt, S the down shift. BBᵀ has diagonal (1 + q²)/dt²
    // except the first entry 1/dt², and off-diagonal −q/dt².
    let mut diag = vec![(1.0 + q * q) / (dt * dt); k];
    diag[0] = 1.0 / (dt * dt);
    let off = vec![-q / (dt * dt); k - 1];
    1.0 / smallest_eigenvalue(&diag, &off).sqrt()
}

#[test]
fn inner_product_geometric_sum() {
    let g = TimeGrid::new(1.0, 0.01, 1000).unwrap();
    let ones = TimeSignal::from_real_fn(g, |_| 1.0);
    let got = weighted_inner_product(&ones, &ones).unwrap().re;
    let q: f64 = (-0.02f64).exp();
    let closed = 0.01 * (1.0 - q.powi(1000)) / (1.0 - q);
    assert!((got - closed).abs() < 1e-12 * closed);
    // the rectangle rule sits about ν·dt above the continuum value
    let continuum = (1.0 - (-20.0f64).exp()) / 2.0;
    assert!((got - continuum).abs() < 0.015 * continuum);
}

#[test]
fn inner_product_weights_cancel() {
    let g = TimeGrid::new(0.7, 0.05, 300).unwrap();
    let u = TimeSignal::from_real_fn(g, |t| (0.7 * t).exp());
    let got = weighted_inner_product(&u, &u).unwrap().re;
    assert!((got - 300.0 * 0.05).abs() < 1e-10);
}

#[test]
fn d0_inverse_norm_matches_sturm_oracle() {
    let (nu, dt, k) = (1.0, 0.05, 1024);
    let g = TimeGrid::new(nu, dt, k).unwrap();
    let oracle = d0_inverse_norm_oracle(nu, dt, k);
    let est = operator_norm_on_grid(apply_d0_inverse, apply_d0_inverse_adjoint, g, 1)
        .unwrap()
        .norm;
    assert!((est - oracle).abs() < 2e-3 * oracle, "{est} vs {oracle}");
    let closed = d0_inverse_norm_bound(&g);
    assert!(oracle <= closed * (1.0 + 1e-12));
    assert!((oracle - closed).abs() < 0.02 * closed);
    assert!(oracle >= 1.0 / nu);
}

#[test]
fn d0_inverse_finite_sections_approach_closed_form() {
    let closed = 0.01 / (1.0 - (-0.01f64).exp());
    let a = d0_inverse_norm_oracle(1.0, 0.01, 256);
    let b = d0_inverse_norm_oracle(1.0, 0.01, 4096);
    assert!(a < b && b <= closed);
    assert!((b - closed) / closed < 3e-3);
}

#[test]
fn transform_round_trip() {
    let g = TimeGrid::new(1.0, 0.03, 200).unwrap();
    let u = TimeSignal::random(g, 3, 11);
    let back = inverse_fourier_laplace(&fourier_laplace(&u));
    let err = back.sub(&u).unwrap().weighted_norm();
    assert!(err <= 1e-12 * u.weighted_norm());
}

#[test]
fn d0_and_inverse_compose_to_identity() {
    let g = TimeGrid::new(2.0, 0.02, 150).unwrap();
    let u = TimeSignal::random(g, 2, 5);
    let back = apply_d0(&apply_d0_inverse(&u));
    assert!(back.sub(&u).unwrap().weighted_norm() < 1e-12 * u.weighted_norm());
}

#[test]
fn exact_period_means() {
    // ∫₀¹ (a + i)⁻¹ for the two-phase a, and its inverse.
    let a = Coef::piecewise_real(&[0.0, 0.5, 1.0], &[1.0, 2.0]).unwrap();
    let ii = c(0.0, 1.0);
    let m = weak_limit_coefficient(&a.map("1/(a+i)", move |v| (v + ii).inv()));
    assert!((m - c(9.0 / 20.0, -7.0 / 20.0)).norm() < 1e-10);
    assert!((m.inv() - c(18.0 / 13.0, 14.0 / 13.0)).norm() < 1e-10);
    // the same through Gauss-Legendre on a function coefficient
    let f = |x: f64| (if x < 0.5 { c(1.0, 0.0) } else { c(2.0, 0.0) } + ii).inv();
    assert!((period_average(&f, &[0.5]) - c(0.45, -0.35)).norm() < 1e-10);

    let g = Coef::indicator(&[(0.0, 0.25), (0.5, 0.75)]).unwrap();
    assert!((weak_limit_coefficient(&g) - c(0.5, 0.0)).norm() < 1e-10);
    let n = Coef::func("sin+2", |x| c((2.0 * PI * x).sin() + 2.0, 0.0), vec![]);
    assert!((weak_limit_coefficient(&n) - c(2.0, 0.0)).norm() < 1e-10);
    assert!((weak_limit_coefficient(&a) - c(1.5, 0.0)).norm() < 1e-10);
    assert!((harmonic_mean(&a) - c(4.0 / 3.0, 0.0)).norm() < 1e-10);
}

#[test]
fn commutator_counterexample_means() {
    let inv = Coef::func("1/(sin+3)", |x| c(1.0 / ((2.0 * PI * x).sin() + 3.0), 0.0), vec![]);
    let m = weak_limit_coefficient(&inv).re;
    assert!((m - 1.0 / (2.0 * 2f64.sqrt())).abs() < 1e-12);
    let nu = Coef::func("(sin+2)/(sin+3)", |x| {
        let s = (2.0 * PI * x).sin();
        c((s + 2.0) / (s + 3.0), 0.0)
    }, vec![]);
    assert!((weak_limit_coefficient(&nu).re - (1.0 - m)).abs() < 1e-12);
}

#[test]
fn block_operator_is_skew() {
    let sg = SpaceGrid::new(37).unwrap();
    let a = assemble_block_a(sg).unwrap();
    let w = sg.interior_nodes() + sg.edge_count();
    let x: Vec<C64> = (0..w).map(|i| c((i as f64 * 0.37).sin(), (i as f64 * 1.3).cos())).collect();
    let y: Vec<C64> = (0..w).map(|i| c((i as f64 * 0.11).cos(), -(i as f64 * 0.5).sin())).collect();
    let ip = |u: &[C64], v: &[C64]| -> C64 { u.iter().zip(v).map(|(p, q)| p * q.conj()).sum::<C64>() * sg.h() };
    let lhs = ip(&a.apply(&x), &y) + ip(&x, &a.apply(&y));
    let scale = ip(&x, &x).re.sqrt() * ip(&y, &y).re.sqrt() / (sg.h() * sg.h());
    assert!(lhs.norm() <= 1e-13 * scale, "{}", lhs.norm());
}

#[test]
fn dirichlet_eigenvalue_matches_discrete_formula() {
    let sg = SpaceGrid::new(64).unwrap();
    let a = assemble_block_a(sg).unwrap();
    let lap = -(a.d1_max() * a.d1_dirichlet());
    let eig = nalgebra::SymmetricEigen::new(lap);
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let h = sg.h();
    let exact = 4.0 / (h * h) * (PI * h / 2.0).sin().powi(2);
    assert!((min - exact).abs() < 1e-9 * exact);
    assert!((min - PI * PI).abs() < 0.01);
}

fn ode_error(dt: f64) -> f64 {
    let steps = (5.0 / dt).round() as usize;
    let g = TimeGrid::new(1.0, dt, steps).unwrap();
    let f = Field::from_fn(Layout::scalar(), g, |_, _, _| c(1.0, 0.0));
    let u = forward_eliminate(&MaterialLaw::identity(), &SpatialOp::Scalar(c(1.0, 0.0)), &f).unwrap();
    (0..steps)
        .map(|k| (u.at(k)[0].re - (1.0 - (-g.t(k)).exp())).abs())
        .fold(0.0, f64::max)
}

#[test]
fn scalar_ode_is_first_order() {
    let e1 = ode_error(0.02);
    let e2 = ode_error(0.01);
    assert!(e1 <= 2.0 * 0.02 && e2 <= 2.0 * 0.01);
    let ratio = e1 / e2;
    assert!((ratio - 2.0).abs() < 0.1, "{ratio}");
}

#[test]
fn convolution_norm_obeys_young() {
    let g = TimeGrid::new(1.0, 0.02, 300).unwrap();
    let k = Kernel::func("exp(-t)", |t| (-t).exp());
    let young: f64 = (0..300).map(|m| (-2.0 * g.t(m)).exp() * g.dt()).sum();
    let est = law_norm(&MaterialLaw::TimeConvolution(k), Layout::scalar(), g, PowerOptions::default())
        .unwrap()
        .norm;
    assert!(est <= young * (1.0 + 1e-9));
    // the symbol 1/(1 + ν + iξ) peaks at ξ = 0
    assert!(est > 0.95 * 0.5);
}

#[test]
fn time_multiplier_commutator_tracks_derivative() {
    use evoconv_core::matlaw::{commutator_with_d0, commutator_with_d0_adjoint, map_norm};
    let g = TimeGrid::new(1.0, 1e-3, 400).unwrap();
    for n in [10.0, 40.0] {
        let law = MaterialLaw::TimeMul(TimeFn::real("sin(nt)+2", move |t| (n * t).sin() + 2.0));
        let est = map_norm(
            |u| commutator_with_d0(&law, u),
            |u| commutator_with_d0_adjoint(&law, u),
            Layout::scalar(),
            g,
            PowerOptions {
                max_iterations: 2000,
                tolerance: 1e-10,
            },
        )
        .unwrap()
        .norm;
        // sup |Δκ|/dt·e^{−ν dt}, and |Δ sin(n t)| ≤ 2 sin(n dt/2)
        let oracle = 2.0 * (n * 0.5e-3).sin() / 1e-3 * (-1e-3f64).exp();
        assert!(est <= oracle * (1.0 + 1e-6), "{est} {oracle}");
        assert!(est >= 0.97 * oracle, "{est} {oracle}");
    }
}

#[test]
fn continuity_estimate_on_mixed_system() {
    let sg = SpaceGrid::new(16).unwrap();
    let layout = Layout::Staggered(sg);
    let g = TimeGrid::new(1.0, 0.05, 80).unwrap();
    let f = Field::random(layout, g, 9);
    let law = MaterialLaw::scale(0.5).plus(MaterialLaw::scale(0.5).integrated());
    let rep = solve(&Problem::new(law, SpatialOp::skew(sg).unwrap(), f)).unwrap();
    assert!(rep.lattice_norm <= rep.bound_rhs * 1.05);
    assert!(rep.positivity > 0.0);
}

//! Convergence experiments.
//!
//! Weak convergence `u_n ⇀ u_∞` is measured through pairings
//! `|⟨u_n − u_∞, φ_j⟩_ν|` against a fixed [`TestFunctionSet`]; the limit
//! `u_∞` always comes from solving the analytically derived limit system.

mod experiments;
mod principle;
mod report;
mod settings;

pub use experiments::{
    counterexample_commutator, counterexample_compactness, experiment_kelvin_voigt, experiment_mixed_type,
    experiment_mixed_type_convolution, experiment_mixed_type_timedep, experiment_singular_perturbation,
    experiment_wave_1d,
};
pub use principle::{check_weak_strong_principle, weak_strong_suite, PrincipleCheck, WeakStrongReport};
pub use report::{fit_rate, ConvergenceReport, Verdict};
pub use settings::{CoefSpec, Settings};

use crate::space1d::{Block, Field, Layout};
use crate::timeaxis::{InnerProductSpace, TimeGrid};
use crate::{Error, Result, C64};

/// Name, expected verdict and a one-line description of every driver.
pub const EXPERIMENTS: &[(&str, Verdict, &str)] = &[
    ("mixed_type", Verdict::Confirms, "hyperbolic/parabolic/elliptic system with oscillating indicator coefficients; limit has mean 1/2 per block"),
    ("mixed_type_convolution", Verdict::Confirms, "mixed-type system with a memory term (1 + k_n*) where k_n -> k in norm"),
    ("mixed_type_timedep", Verdict::Confirms, "mixed-type system multiplied by a Lipschitz time factor N_n(t) -> N(t)"),
    ("commutator_counterexample", Verdict::Refutes, "N_n = sin(n t) + 2 with unbounded commutators; weak limit of N_n u_n is not the product of limits"),
    ("compactness_counterexample", Verdict::Refutes, "(a(n m) + i) u_n = f without compactness; weak limit is the harmonic-type mean, not (3/2 + i)^-1"),
    ("kelvin_voigt", Verdict::Confirms, "Kelvin-Voigt type system; classical limit is the harmonic mean of the stiffness"),
    ("wave_1d", Verdict::Confirms, "first-order wave system with a two-phase flux coefficient"),
    ("singular_perturbation", Verdict::Confirms, "eps d0 phi on one half, delayed elliptic part on the other; limit eps -> 0"),
];

/// Expected verdict of a named experiment.
pub fn expected_verdict(name: &str) -> Option<Verdict> {
    EXPERIMENTS.iter().find(|e| e.0 == name).map(|e| e.1)
}

/// Runs a named experiment inside a thread pool capped by `EVOCONV_THREADS`.
pub fn run_experiment(name: &str, settings: &Settings) -> Result<ConvergenceReport> {
    with_thread_pool(|| match name {
        "mixed_type" => experiment_mixed_type(settings),
        "mixed_type_convolution" => experiment_mixed_type_convolution(settings),
        "mixed_type_timedep" => experiment_mixed_type_timedep(settings),
        "commutator_counterexample" => counterexample_commutator(settings),
        "compactness_counterexample" => counterexample_compactness(settings),
        "kelvin_voigt" => experiment_kelvin_voigt(settings),
        "wave_1d" => experiment_wave_1d(settings),
        "singular_perturbation" => experiment_singular_perturbation(settings),
        other => Err(Error::InvalidParameter(format!(
            "unknown experiment '{other}'; run `evoconv list` for the available names"
        ))),
    })
}

/// Runs `f` on a rayon pool whose size honours `EVOCONV_THREADS`.
pub fn with_thread_pool<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    let threads = std::env::var("EVOCONV_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|n| *n > 0);
    match threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(f),
            Err(e) => {
                log::warn!("could not build a {n}-thread pool ({e}); using the global pool");
                f()
            }
        },
        None => f(),
    }
}

/// `exp(1 − 1/(1 − s²))` on `|s| < 1`, zero elsewhere; peak value 1.
pub fn smooth_bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    }
}

/// Fixed smooth test functions for weak pairings, each of unit weighted norm.
#[derive(Debug, Clone)]
pub struct TestFunctionSet {
    pub functions: Vec<Field>,
}

impl TestFunctionSet {
    /// Four space-time bumps and four low tensor modes
    /// `sin(pπx)·sin(qπt/T)`, the same on both blocks of a staggered layout.
    pub fn standard(layout: Layout, grid: TimeGrid) -> Self {
        let t_end = grid.horizon();
        let bumps = [(0.3, 0.3), (0.5, 0.5), (0.7, 0.7), (0.4, 0.6)];
        let modes = [(1.0, 1.0), (2.0, 1.0), (1.0, 2.0), (2.0, 2.0)];
        let mut functions = Vec::new();
        for (tc, xc) in bumps {
            functions.push(Field::from_fn(layout, grid, move |t, x, _| {
                C64::new(smooth_bump((t - tc * t_end) / (0.25 * t_end)) * smooth_bump((x - xc) / 0.25), 0.0)
            }));
        }
        for (p, q) in modes {
            functions.push(Field::from_fn(layout, grid, move |t, x, _| {
                use std::f64::consts::PI;
                C64::new((p * PI * x).sin() * (q * PI * t / t_end).sin(), 0.0)
            }));
        }
        for f in &mut functions {
            let n = f.norm();
            if n > 0.0 {
                f.scale_mut(C64::new(1.0 / n, 0.0));
            }
        }
        Self { functions }
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    /// `⟨w, φ_j⟩_ν` for every `j`.
    pub fn pairings(&self, w: &Field) -> Result<Vec<C64>> {
        self.functions.iter().map(|phi| w.pairing(phi)).collect()
    }

    /// `|⟨a − b, φ_j⟩_ν|` for every `j`.
    pub fn pairing_errors(&self, a: &Field, b: &Field) -> Result<Vec<f64>> {
        Ok(self.pairings(&a.sub(b)?)?.into_iter().map(|c| c.norm()).collect())
    }

    /// Least-squares multiplier `m` with `⟨w, φ_j⟩ ≈ m·⟨f, φ_j⟩` over all `j`.
    pub fn multiplier(&self, w: &Field, f: &Field) -> Result<C64> {
        let pw = self.pairings(w)?;
        let pf = self.pairings(f)?;
        let num: C64 = pw.iter().zip(&pf).map(|(a, b)| a * b.conj()).sum();
        let den: f64 = pf.iter().map(|b| b.norm_sqr()).sum();
        if den == 0.0 {
            return Err(Error::InvalidParameter("forcing is orthogonal to every test function".into()));
        }
        Ok(num / den)
    }
}

/// Smooth forcing in the `u` block: a bump in time on `(0, T/2)` times a
/// bump in space around `x = ½`.
pub fn default_forcing(layout: Layout, grid: TimeGrid) -> Field {
    let t_end = grid.horizon();
    Field::from_fn(layout, grid, move |t, x, b| {
        if b == Block::V {
            return C64::new(0.0, 0.0);
        }
        let spatial = match layout {
            Layout::Batch { .. } => 1.0,
            _ => smooth_bump((x - 0.5) / 0.35),
        };
        C64::new(smooth_bump((t - 0.25 * t_end) / (0.25 * t_end)) * spatial, 0.0)
    })
}

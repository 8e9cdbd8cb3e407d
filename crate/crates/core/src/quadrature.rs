//! Composite Gauss-Legendre quadrature with breakpoint handling.

use crate::C64;

const GL8_NODES: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_WEIGHTS: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// `∫_a^b f` with `pieces` 8-point Gauss-Legendre panels.
pub fn integrate(f: &dyn Fn(f64) -> C64, a: f64, b: f64, pieces: usize) -> C64 {
    let pieces = pieces.max(1);
    let h = (b - a) / pieces as f64;
    let mut acc = C64::new(0.0, 0.0);
    for p in 0..pieces {
        let mid = a + (p as f64 + 0.5) * h;
        let half = 0.5 * h;
        for (x, w) in GL8_NODES.iter().zip(GL8_WEIGHTS) {
            acc += (f(mid - half * x) + f(mid + half * x)) * (w * half);
        }
    }
    acc
}

/// Mean of `f` over one period `[0, 1]`. Interior `breakpoints` mark
/// discontinuities; every smooth piece is integrated separately so
/// piecewise-smooth integrands reach round-off accuracy.
pub fn period_average(f: &dyn Fn(f64) -> C64, breakpoints: &[f64]) -> C64 {
    let mut cuts: Vec<f64> = breakpoints.iter().copied().filter(|x| *x > 0.0 && *x < 1.0).collect();
    cuts.push(0.0);
    cuts.push(1.0);
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup();
    cuts.windows(2).map(|w| integrate(f, w[0], w[1], 64)).sum()
}

//! Small complex linear-algebra kernels: banded LU with partial pivoting,
//! a dense fallback, and a symmetric Lanczos iteration.

use nalgebra::{DMatrix, DVector};

use crate::timeaxis::InnerProductSpace;
use crate::{Error, Result, C64};

/// Banded LU factorization with partial pivoting (LAPACK `gbtrf` layout).
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<C64>,
    piv: Vec<usize>,
    min_pivot: f64,
}

impl BandedLu {
    /// Factors the `n×n` matrix whose entries inside the band
    /// `−kl ≤ j − i ≤ ku` are given by `entry(i, j)`.
    pub fn factor(n: usize, kl: usize, ku: usize, entry: impl Fn(usize, usize) -> C64) -> Self {
        let ldab = 2 * kl + ku + 1;
        let mut lu = Self {
            n,
            kl,
            ku,
            ldab,
            ab: vec![C64::new(0.0, 0.0); ldab * n],
            piv: vec![0; n],
            min_pivot: f64::INFINITY,
        };
        for j in 0..n {
            let lo = j.saturating_sub(ku);
            let hi = (j + kl).min(n - 1);
            for i in lo..=hi {
                *lu.at_mut(i, j) = entry(i, j);
            }
        }
        lu.eliminate();
        lu
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        j * self.ldab + (self.kl + self.ku + i) - j
    }

    fn at(&self, i: usize, j: usize) -> C64 {
        self.ab[self.idx(i, j)]
    }

    fn at_mut(&mut self, i: usize, j: usize) -> &mut C64 {
        let k = self.idx(i, j);
        &mut self.ab[k]
    }

    fn eliminate(&mut self) {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        for j in 0..n {
            let last_row = (j + kl).min(n - 1);
            let mut p = j;
            let mut best = self.at(j, j).norm();
            for i in j + 1..=last_row {
                let v = self.at(i, j).norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            self.piv[j] = p;
            self.min_pivot = self.min_pivot.min(best);
            if best == 0.0 {
                continue;
            }
            let last_col = (j + ku + kl).min(n - 1);
            if p != j {
                for c in j..=last_col {
                    let a = self.idx(j, c);
                    let b = self.idx(p, c);
                    self.ab.swap(a, b);
                }
            }
            let pivot = self.at(j, j);
            for i in j + 1..=last_row {
                let l = self.at(i, j) / pivot;
                *self.at_mut(i, j) = l;
                if l == C64::new(0.0, 0.0) {
                    continue;
                }
                for c in j + 1..=last_col {
                    let u = self.at(j, c);
                    *self.at_mut(i, c) -= l * u;
                }
            }
        }
    }

    pub fn min_pivot(&self) -> f64 {
        self.min_pivot
    }

    pub fn solve_in_place(&self, b: &mut [C64]) {
        let n = self.n;
        for j in 0..n {
            let p = self.piv[j];
            if p != j {
                b.swap(j, p);
            }
            let bj = b[j];
            for i in j + 1..=(j + self.kl).min(n - 1) {
                b[i] -= self.at(i, j) * bj;
            }
        }
        for j in (0..n).rev() {
            b[j] /= self.at(j, j);
            let bj = b[j];
            for i in j.saturating_sub(self.ku + self.kl)..j {
                b[i] -= self.at(i, j) * bj;
            }
        }
    }
}

/// A factorized square matrix, banded when the band is narrow.
#[derive(Debug, Clone)]
pub enum Factorization {
    Banded(BandedLu),
    Dense {
        lu: Box<nalgebra::LU<C64, nalgebra::Dyn, nalgebra::Dyn>>,
        min_pivot: f64,
    },
}

/// Widest band (`kl + ku`) still handled by [`BandedLu`].
const MAX_BAND: usize = 16;

impl Factorization {
    /// Factors a dense matrix, choosing the banded path when possible.
    pub fn new(m: &DMatrix<C64>) -> Self {
        let n = m.nrows();
        let (mut kl, mut ku) = (0usize, 0usize);
        for j in 0..n {
            for i in 0..n {
                if m[(i, j)] != C64::new(0.0, 0.0) {
                    if i > j {
                        kl = kl.max(i - j);
                    } else {
                        ku = ku.max(j - i);
                    }
                }
            }
        }
        if kl + ku <= MAX_BAND {
            Factorization::Banded(BandedLu::factor(n, kl, ku, |i, j| m[(i, j)]))
        } else {
            let lu = m.clone().lu();
            let u = lu.u();
            let min_pivot = (0..n).map(|i| u[(i, i)].norm()).fold(f64::INFINITY, f64::min);
            Factorization::Dense {
                lu: Box::new(lu),
                min_pivot,
            }
        }
    }

    pub fn min_pivot(&self) -> f64 {
        match self {
            Factorization::Banded(b) => b.min_pivot(),
            Factorization::Dense { min_pivot, .. } => *min_pivot,
        }
    }

    pub fn solve_in_place(&self, b: &mut [C64]) {
        match self {
            Factorization::Banded(lu) => lu.solve_in_place(b),
            Factorization::Dense { lu, .. } => {
                let rhs = DVector::from_column_slice(b);
                if let Some(x) = lu.solve(&rhs) {
                    b.copy_from_slice(x.as_slice());
                } else {
                    b.iter_mut().for_each(|v| *v = C64::new(f64::NAN, f64::NAN));
                }
            }
        }
    }
}

/// Extreme eigenvalues found by [`lanczos_extremes`].
#[derive(Debug, Clone, Copy)]
pub struct LanczosResult {
    pub min: f64,
    /// Residual norm of the Ritz pair belonging to `min`.
    pub min_residual: f64,
    pub max: f64,
    pub iterations: usize,
}

/// Lanczos iteration for a self-adjoint operator `op` on the inner-product
/// space of `start`.
///
/// Only the two previous vectors are kept and each new vector is
/// reorthogonalized against them. Orthogonality may still drift, which
/// produces repeated Ritz values but keeps them inside the spectrum's hull,
/// so the extremes stay reliable at a cost linear in the iteration count.
pub fn lanczos_extremes<V, F>(op: F, start: V, max_iter: usize) -> Result<LanczosResult>
where
    V: InnerProductSpace,
    F: Fn(&V) -> V,
{
    let n0 = start.norm();
    if n0 == 0.0 {
        return Err(Error::InvalidParameter("Lanczos needs a nonzero start".into()));
    }
    let mut q = start;
    q.scale_mut(C64::new(1.0 / n0, 0.0));
    let mut prev: Option<V> = None;
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut last_beta = 0.0;
    for it in 0..max_iter {
        let mut w = op(&q);
        let a = w.inner(&q).re;
        alpha.push(a);
        for _ in 0..2 {
            let c = w.inner(&q);
            w.axpy(-c, &q);
            if let Some(p) = &prev {
                let c = w.inner(p);
                w.axpy(-c, p);
            }
        }
        let bnorm = w.norm();
        let scale = alpha.iter().map(|x| x.abs()).fold(0.0, f64::max).max(1e-300);
        if bnorm <= 1e-12 * scale || it + 1 == max_iter {
            last_beta = bnorm;
            break;
        }
        w.scale_mut(C64::new(1.0 / bnorm, 0.0));
        beta.push(bnorm);
        prev = Some(std::mem::replace(&mut q, w));
    }
    let m = alpha.len();
    let mut t = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = nalgebra::SymmetricEigen::new(t);
    let (imin, min) = eig
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
    let max = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_residual = last_beta * eig.eigenvectors[(m - 1, imin)].abs();
    Ok(LanczosResult {
        min,
        min_residual,
        max,
        iterations: m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn banded_matches_dense_with_pivoting() {
        let n = 9;
        // small diagonal forces row exchanges
        let m = DMatrix::from_fn(n, n, |i, j| {
            let d = i as isize - j as isize;
            match d {
                0 => c(1e-3 * (i as f64 + 1.0), 0.2),
                1 => c(2.0 + i as f64, -1.0),
                -1 => c(-3.0, 0.5 * j as f64),
                -2 => c(0.7, 0.0),
                _ => c(0.0, 0.0),
            }
        });
        let x: Vec<C64> = (0..n).map(|i| c(i as f64, 1.0 - i as f64)).collect();
        let b = &m * DVector::from_column_slice(&x);
        let f = Factorization::new(&m);
        assert!(matches!(f, Factorization::Banded(_)));
        let mut sol = b.as_slice().to_vec();
        f.solve_in_place(&mut sol);
        for (s, e) in sol.iter().zip(&x) {
            assert!((s - e).norm() < 1e-10, "{s} vs {e}");
        }
    }

    #[test]
    fn dense_fallback() {
        let n = 40;
        let m = DMatrix::from_fn(n, n, |i, j| if i == j { c(n as f64, 0.0) } else { c(1.0 / (1.0 + (i + 2 * j) as f64), 0.1) });
        let f = Factorization::new(&m);
        assert!(matches!(f, Factorization::Dense { .. }));
        let x: Vec<C64> = (0..n).map(|i| c((i as f64).sin(), 0.0)).collect();
        let b = &m * DVector::from_column_slice(&x);
        let mut sol = b.as_slice().to_vec();
        f.solve_in_place(&mut sol);
        for (s, e) in sol.iter().zip(&x) {
            assert!((s - e).norm() < 1e-11);
        }
    }
}

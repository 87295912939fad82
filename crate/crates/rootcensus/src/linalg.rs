//! Small dense complex matrices and LU solves.
//!
//! The systems in scope have a handful of unknowns, so a plain row-major
//! matrix with partially pivoted LU is all the linear algebra the tracker
//! and the seed fabrication need.

use num_complex::Complex64;

/// Row-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    nrows: usize,
    ncols: usize,
    data: Vec<Complex64>,
}

impl CMat {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            data: vec![Complex64::new(0.0, 0.0); nrows * ncols],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.ncols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: Complex64) {
        self.data[r * self.ncols + c] = v;
    }

    #[inline]
    pub fn add_to(&mut self, r: usize, c: usize, v: Complex64) {
        self.data[r * self.ncols + c] += v;
    }

    pub fn conj_transpose(&self) -> CMat {
        let mut out = CMat::zeros(self.ncols, self.nrows);
        for r in 0..self.nrows {
            for c in 0..self.ncols {
                out.set(c, r, self.get(r, c).conj());
            }
        }
        out
    }

    pub fn mul_mat(&self, rhs: &CMat) -> CMat {
        assert_eq!(self.ncols, rhs.nrows, "matrix shape mismatch");
        let mut out = CMat::zeros(self.nrows, rhs.ncols);
        for r in 0..self.nrows {
            for k in 0..self.ncols {
                let a = self.get(r, k);
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for c in 0..rhs.ncols {
                    out.add_to(r, c, a * rhs.get(k, c));
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.ncols, v.len(), "matrix/vector shape mismatch");
        (0..self.nrows)
            .map(|r| {
                (0..self.ncols)
                    .map(|c| self.get(r, c) * v[c])
                    .sum::<Complex64>()
            })
            .collect()
    }
}

/// Solves `a · x = b` by LU with partial pivoting.
///
/// Returns `None` when a pivot falls below the numerical rank threshold,
/// which callers treat as a singular Jacobian.
pub fn solve(a: &CMat, b: &[Complex64]) -> Option<Vec<Complex64>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "solve expects a square matrix");
    assert_eq!(n, b.len(), "solve expects a matching right-hand side");
    if n == 0 {
        return Some(Vec::new());
    }

    let mut lu = a.clone();
    let mut rhs = b.to_vec();

    let max_abs = lu.data.iter().map(|z| z.norm()).fold(0.0_f64, f64::max);
    if max_abs == 0.0 {
        return None;
    }
    let pivot_tol = 1e-14 * max_abs;

    for col in 0..n {
        let mut best = col;
        let mut best_abs = lu.get(col, col).norm();
        for r in col + 1..n {
            let v = lu.get(r, col).norm();
            if v > best_abs {
                best_abs = v;
                best = r;
            }
        }
        if best_abs <= pivot_tol {
            return None;
        }
        if best != col {
            for c in 0..n {
                let tmp = lu.get(col, c);
                lu.set(col, c, lu.get(best, c));
                lu.set(best, c, tmp);
            }
            rhs.swap(col, best);
        }
        let pivot = lu.get(col, col);
        for r in col + 1..n {
            let factor = lu.get(r, col) / pivot;
            if factor == Complex64::new(0.0, 0.0) {
                continue;
            }
            lu.set(r, col, factor);
            for c in col + 1..n {
                let v = lu.get(r, c) - factor * lu.get(col, c);
                lu.set(r, c, v);
            }
            let pivot_rhs = rhs[col];
            rhs[r] -= factor * pivot_rhs;
        }
    }

    for col in (0..n).rev() {
        let mut v = rhs[col];
        for (c, rc) in rhs.iter().enumerate().take(n).skip(col + 1) {
            v -= lu.get(col, c) * rc;
        }
        rhs[col] = v / lu.get(col, col);
    }
    Some(rhs)
}

/// Infinity norm of a complex vector.
pub fn inf_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Euclidean norm of a complex vector.
pub fn norm2(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Euclidean distance between complex vectors of equal length.
pub fn dist2(a: &[Complex64], b: &[Complex64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn solve_identity() {
        let mut a = CMat::zeros(2, 2);
        a.set(0, 0, c(1.0, 0.0));
        a.set(1, 1, c(1.0, 0.0));
        let b = vec![c(3.0, 1.0), c(-2.0, 0.5)];
        assert_eq!(solve(&a, &b).unwrap(), b);
    }

    #[test]
    fn solve_complex_2x2() {
        let mut a = CMat::zeros(2, 2);
        a.set(0, 0, c(1.0, 1.0));
        a.set(0, 1, c(2.0, 0.0));
        a.set(1, 0, c(0.0, -1.0));
        a.set(1, 1, c(1.0, 3.0));
        let x_true = vec![c(0.5, -0.25), c(1.0, 2.0)];
        let b = a.mul_vec(&x_true);
        let x = solve(&a, &b).unwrap();
        assert!(dist2(&x, &x_true) < 1e-12);
    }

    #[test]
    fn solve_singular_returns_none() {
        let mut a = CMat::zeros(2, 2);
        a.set(0, 0, c(1.0, 0.0));
        a.set(0, 1, c(2.0, 0.0));
        a.set(1, 0, c(2.0, 0.0));
        a.set(1, 1, c(4.0, 0.0));
        assert!(solve(&a, &[c(1.0, 0.0), c(1.0, 0.0)]).is_none());
        let zero = CMat::zeros(1, 1);
        assert!(solve(&zero, &[c(1.0, 0.0)]).is_none());
    }

    #[test]
    fn solve_needs_pivoting() {
        let mut a = CMat::zeros(2, 2);
        a.set(0, 0, c(0.0, 0.0));
        a.set(0, 1, c(1.0, 0.0));
        a.set(1, 0, c(1.0, 0.0));
        a.set(1, 1, c(1.0, 0.0));
        let x = solve(&a, &[c(2.0, 0.0), c(5.0, 0.0)]).unwrap();
        assert!(dist2(&x, &[c(3.0, 0.0), c(2.0, 0.0)]) < 1e-12);
    }

    #[test]
    fn conj_transpose_and_products() {
        let mut a = CMat::zeros(1, 2);
        a.set(0, 0, c(1.0, 2.0));
        a.set(0, 1, c(0.0, -1.0));
        let ah = a.conj_transpose();
        assert_eq!(ah.get(0, 0), c(1.0, -2.0));
        assert_eq!(ah.get(1, 0), c(0.0, 1.0));
        let aah = a.mul_mat(&ah);
        assert_eq!(aah.nrows(), 1);
        assert!((aah.get(0, 0) - c(6.0, 0.0)).norm() < 1e-15);
    }
}

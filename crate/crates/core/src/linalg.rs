//! Small dense linear algebra: LU with partial pivoting and a Cholesky test.

use crate::{Error, Result};
use alloc::vec::Vec;

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// `n × n` zero matrix.
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: alloc::vec![0.0; n * n],
        }
    }

    /// Identity matrix.
    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Wraps row-major data; panics if the length is not a square.
    pub fn from_row_major(n: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * n);
        Self { n, data }
    }

    /// Dimension.
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Entry `(i, j)`.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Sets entry `(i, j)`.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    /// Row `i` as a slice.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// Mutable row `i`.
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.n;
        &mut self.data[i * n..(i + 1) * n]
    }

    /// `A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Largest `|A_ij − A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..i {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }
}

/// LU factorization `P A = L U` with partial pivoting.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
}

impl Lu {
    /// Factorizes `a`. Fails when a pivot vanishes relative to the matrix scale.
    pub fn new(mut a: Matrix) -> Result<Self> {
        let n = a.n;
        let scale = a.data.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(f64::MIN_POSITIVE);
        let mut perm: Vec<usize> = (0..n).collect();
        let mut min_piv = f64::INFINITY;
        let mut max_piv: f64 = 0.0;
        for k in 0..n {
            let mut p = k;
            let mut best = a.get(k, k).abs();
            for i in (k + 1)..n {
                let v = a.get(i, k).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            min_piv = min_piv.min(best);
            max_piv = max_piv.max(best);
            if best <= 1e-14 * scale || !best.is_finite() {
                return Err(Error::Singular {
                    condition: max_piv / best.max(f64::MIN_POSITIVE),
                });
            }
            if p != k {
                for j in 0..n {
                    a.data.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let pivot = a.get(k, k);
            let (top, rest) = a.data.split_at_mut((k + 1) * n);
            let krow = &top[k * n..(k + 1) * n];
            for row in rest.chunks_exact_mut(n) {
                let f = row[k] / pivot;
                row[k] = f;
                if f != 0.0 {
                    for j in (k + 1)..n {
                        row[j] -= f * krow[j];
                    }
                }
            }
        }
        Ok(Self { lu: a, perm })
    }

    /// Ratio of largest to smallest pivot magnitude; a cheap conditioning indicator.
    pub fn pivot_ratio(&self) -> f64 {
        let n = self.lu.n;
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..n {
            let v = self.lu.get(i, i).abs();
            lo = lo.min(v);
            hi = hi.max(v);
        }
        hi / lo
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.n;
        assert_eq!(b.len(), n);
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = self.lu.row(i);
            let mut s = x[i];
            for j in 0..i {
                s -= row[j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let mut s = x[i];
            for j in (i + 1)..n {
                s -= row[j] * x[j];
            }
            x[i] = s / row[i];
        }
        x
    }
}

/// True when `a + shift·I` admits a Cholesky factorization (numerically PSD test).
pub fn is_psd(a: &Matrix, shift: f64) -> bool {
    let n = a.n;
    let mut l = alloc::vec![0.0; n * n];
    for j in 0..n {
        let mut d = a.get(j, j) + shift;
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if d <= 0.0 || !d.is_finite() {
            return false;
        }
        let djj = libm::sqrt(d);
        l[j * n + j] = djj;
        for i in (j + 1)..n {
            let mut s = 0.5 * (a.get(i, j) + a.get(j, i));
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / djj;
        }
    }
    true
}

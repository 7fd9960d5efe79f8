//! Square complex matrices of arbitrary (small) dimension.
//!
//! Only what the pseudomode solver and the multi-bath bound need: products,
//! Kronecker products, partial trace over a second factor, expectation values.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;

use crate::operators::Operator2;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Row-major `n × n` complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<Complex64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![ZERO; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<Complex64>]) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "matrix must be square");
        Self {
            n,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn dagger(&self) -> Self {
        let mut out = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    /// `self += s·other`.
    pub fn axpy(&mut self, s: Complex64, other: &Self) {
        debug_assert_eq!(self.n, other.n);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc: f64, z| acc.max(z.norm()))
    }

    pub fn hermiticity_defect(&self) -> f64 {
        (self - &self.dagger()).max_abs()
    }

    /// `A ⊗ B`.
    pub fn kron(a: &Self, b: &Self) -> Self {
        let n = a.n * b.n;
        let mut out = Self::zeros(n);
        for i in 0..a.n {
            for j in 0..a.n {
                let aij = a[(i, j)];
                if aij == ZERO {
                    continue;
                }
                for k in 0..b.n {
                    for l in 0..b.n {
                        out[(i * b.n + k, j * b.n + l)] = aij * b[(k, l)];
                    }
                }
            }
        }
        out
    }

    pub fn from_operator2(op: &Operator2) -> Self {
        Self {
            n: 2,
            data: vec![op.m[0][0], op.m[0][1], op.m[1][0], op.m[1][1]],
        }
    }

    /// Traces out the second factor of a `2 ⊗ m` bipartite operator.
    pub fn partial_trace_second(&self, m: usize) -> Operator2 {
        assert_eq!(self.n, 2 * m, "dimension mismatch in partial trace");
        let mut out = Operator2::zero();
        for i in 0..2 {
            for j in 0..2 {
                out.m[i][j] = (0..m).map(|k| self[(i * m + k, j * m + k)]).sum();
            }
        }
        out
    }

    /// Reduced diagonal of the second factor of a `d ⊗ m` operator.
    pub fn second_factor_populations(&self, d: usize) -> Vec<f64> {
        let m = self.n / d;
        (0..m)
            .map(|k| (0..d).map(|i| self[(i * m + k, i * m + k)].re).sum())
            .collect()
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|i| {
                self.data[i * self.n..(i + 1) * self.n]
                    .iter()
                    .zip(v)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// `⟨v|A|v⟩`.
    pub fn expectation(&self, v: &[Complex64]) -> Complex64 {
        let av = self.apply(v);
        v.iter().zip(&av).map(|(a, b)| a.conj() * b).sum()
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.n + j]
    }
}

impl Add for &Matrix {
    type Output = Matrix;
    fn add(self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.n, rhs.n);
        Matrix {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Sub for &Matrix {
    type Output = Matrix;
    fn sub(self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.n, rhs.n);
        Matrix {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl Mul for &Matrix {
    type Output = Matrix;
    fn mul(self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.n, rhs.n);
        let n = self.n;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == ZERO {
                    continue;
                }
                let row = &rhs.data[k * n..(k + 1) * n];
                let dst = &mut out.data[i * n..(i + 1) * n];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kron_and_partial_trace() {
        let a = Matrix::from_operator2(&Operator2::from_pauli(0.5, 0.1, 0.2, 0.3));
        let mut b = Matrix::zeros(3);
        b[(0, 0)] = Complex64::new(0.2, 0.0);
        b[(1, 1)] = Complex64::new(0.3, 0.0);
        b[(2, 2)] = Complex64::new(0.5, 0.0);
        b[(0, 2)] = Complex64::new(0.1, 0.1);
        let ab = Matrix::kron(&a, &b);
        let reduced = ab.partial_trace_second(3);
        let expected = Operator2::from_pauli(0.5, 0.1, 0.2, 0.3);
        assert!((reduced - expected).max_abs() < 1e-15);
        let pops = ab.second_factor_populations(2);
        assert!((pops[2] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn product_matches_operator2() {
        let x = Operator2::from_pauli(0.1, 0.4, -0.3, 0.2);
        let y = Operator2::from_pauli(-0.2, 0.7, 0.1, 0.5);
        let p = &Matrix::from_operator2(&x) * &Matrix::from_operator2(&y);
        assert_eq!(p, Matrix::from_operator2(&(x * y)));
    }
}

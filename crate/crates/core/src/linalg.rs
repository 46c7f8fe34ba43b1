//! Fixed-capacity small dense matrices and vectors.
//!
//! Every object in the crate lives in dimension `N <= MAX_DIM`, so matrices are
//! stored inline (row-major, `n*n` leading entries of a fixed array) and are
//! `Copy`. Heavier factorizations are delegated to `nalgebra`.

use nalgebra::DMatrix;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

/// Largest supported dimension.
pub const MAX_DIM: usize = 6;
const CAP: usize = MAX_DIM * MAX_DIM;

/// Square `n x n` matrix stored inline.
#[derive(Clone, Copy, PartialEq)]
pub struct Mat {
    n: usize,
    a: [f64; CAP],
}

/// Column vector of length `n` stored inline.
#[derive(Clone, Copy, PartialEq)]
pub struct Vector {
    n: usize,
    a: [f64; MAX_DIM],
}

impl std::fmt::Debug for Mat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let rows: Vec<&[f64]> = (0..self.n).map(|i| self.row(i)).collect();
        write!(f, "Mat{:?}", rows)
    }
}

impl std::fmt::Debug for Vector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Vector{:?}", self.as_slice())
    }
}

impl Mat {
    pub fn zeros(n: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&n), "dimension {n} outside 1..={MAX_DIM}");
        Mat { n, a: [0.0; CAP] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n);
        for i in 0..n {
            m.a[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Mat::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.a[i * n + j] = f(i, j);
            }
        }
        m
    }

    /// Builds from `n*n` row-major entries.
    pub fn from_row_slice(n: usize, data: &[f64]) -> Self {
        assert_eq!(data.len(), n * n);
        let mut m = Mat::zeros(n);
        m.a[..n * n].copy_from_slice(data);
        m
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let n = d.len();
        let mut m = Mat::zeros(n);
        for (i, x) in d.iter().enumerate() {
            m.a[i * n + i] = *x;
        }
        m
    }

    /// `u vᵀ`.
    pub fn outer(u: &Vector, v: &Vector) -> Self {
        Mat::from_fn(u.n, |i, j| u.a[i] * v.a[j])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.a[..self.n * self.n]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.a[i * self.n..(i + 1) * self.n]
    }

    pub fn column(&self, j: usize) -> Vector {
        Vector::from_fn(self.n, |i| self[(i, j)])
    }

    pub fn set_column(&mut self, j: usize, v: &Vector) {
        for i in 0..self.n {
            self[(i, j)] = v[i];
        }
    }

    pub fn diagonal(&self) -> Vector {
        Vector::from_fn(self.n, |i| self[(i, i)])
    }

    pub fn transpose(&self) -> Self {
        Mat::from_fn(self.n, |i, j| self[(j, i)])
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.as_slice().iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut m = *self;
        for x in m.a[..self.n * self.n].iter_mut() {
            *x *= s;
        }
        m
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &Mat) -> Self {
        let mut m = *self;
        for (x, y) in m.a[..self.n * self.n].iter_mut().zip(other.as_slice()) {
            *x += s * y;
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|x| x.is_finite())
    }

    /// `(self + selfᵀ) / 2`.
    pub fn symmetric_part(&self) -> Self {
        Mat::from_fn(self.n, |i, j| 0.5 * (self[(i, j)] + self[(j, i)]))
    }

    /// `(self − selfᵀ) / 2`.
    pub fn antisymmetric_part(&self) -> Self {
        Mat::from_fn(self.n, |i, j| 0.5 * (self[(i, j)] - self[(j, i)]))
    }

    /// `self · a · selfᵀ`.
    pub fn congruence(&self, a: &Mat) -> Self {
        (*self * *a).mul_transpose(self)
    }

    /// `selfᵀ · a · self`.
    pub fn congruence_t(&self, a: &Mat) -> Self {
        self.transpose_mul(&(*a * *self))
    }

    /// `self · otherᵀ`.
    pub fn mul_transpose(&self, other: &Mat) -> Self {
        let n = self.n;
        let mut m = Mat::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += self.a[i * n + k] * other.a[j * n + k];
                }
                m.a[i * n + j] = s;
            }
        }
        m
    }

    /// `selfᵀ · other`.
    pub fn transpose_mul(&self, other: &Mat) -> Self {
        let n = self.n;
        let mut m = Mat::zeros(n);
        for k in 0..n {
            for i in 0..n {
                let s = self.a[k * n + i];
                if s == 0.0 {
                    continue;
                }
                for j in 0..n {
                    m.a[i * n + j] += s * other.a[k * n + j];
                }
            }
        }
        m
    }

    /// `selfᵀ v`.
    pub fn transpose_mul_vec(&self, v: &Vector) -> Vector {
        let n = self.n;
        let mut out = Vector::zeros(n);
        for k in 0..n {
            let vk = v.a[k];
            for i in 0..n {
                out.a[i] += self.a[k * n + i] * vk;
            }
        }
        out
    }

    /// Determinant by Gaussian elimination with partial pivoting.
    pub fn det(&self) -> f64 {
        let n = self.n;
        let mut m = *self;
        let mut det = 1.0;
        for c in 0..n {
            let mut p = c;
            for r in c + 1..n {
                if m.a[r * n + c].abs() > m.a[p * n + c].abs() {
                    p = r;
                }
            }
            let piv = m.a[p * n + c];
            if piv == 0.0 {
                return 0.0;
            }
            if p != c {
                for j in 0..n {
                    m.a.swap(c * n + j, p * n + j);
                }
                det = -det;
            }
            det *= piv;
            for r in c + 1..n {
                let f = m.a[r * n + c] / piv;
                if f != 0.0 {
                    for j in c..n {
                        m.a[r * n + j] -= f * m.a[c * n + j];
                    }
                }
            }
        }
        det
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &Mat) -> f64 {
        self.as_slice().iter().zip(other.as_slice()).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, self.as_slice())
    }

    pub fn from_dmatrix(m: &DMatrix<f64>) -> Self {
        assert_eq!(m.nrows(), m.ncols());
        Mat::from_fn(m.nrows(), |i, j| m[(i, j)])
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.n && j < self.n);
        &self.a[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.n && j < self.n);
        &mut self.a[i * self.n + j]
    }
}

impl Add for Mat {
    type Output = Mat;
    fn add(self, rhs: Mat) -> Mat {
        self.axpy(1.0, &rhs)
    }
}

impl Sub for Mat {
    type Output = Mat;
    fn sub(self, rhs: Mat) -> Mat {
        self.axpy(-1.0, &rhs)
    }
}

impl AddAssign for Mat {
    fn add_assign(&mut self, rhs: Mat) {
        *self = self.axpy(1.0, &rhs);
    }
}

impl SubAssign for Mat {
    fn sub_assign(&mut self, rhs: Mat) {
        *self = self.axpy(-1.0, &rhs);
    }
}

impl Neg for Mat {
    type Output = Mat;
    fn neg(self) -> Mat {
        self.scale(-1.0)
    }
}

impl Mul<f64> for Mat {
    type Output = Mat;
    fn mul(self, s: f64) -> Mat {
        self.scale(s)
    }
}

impl Mul for Mat {
    type Output = Mat;
    fn mul(self, rhs: Mat) -> Mat {
        let n = self.n;
        debug_assert_eq!(n, rhs.n);
        let mut m = Mat::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let s = self.a[i * n + k];
                if s == 0.0 {
                    continue;
                }
                for j in 0..n {
                    m.a[i * n + j] += s * rhs.a[k * n + j];
                }
            }
        }
        m
    }
}

impl Mul<Vector> for Mat {
    type Output = Vector;
    fn mul(self, v: Vector) -> Vector {
        let n = self.n;
        let mut out = Vector::zeros(n);
        for i in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                s += self.a[i * n + k] * v.a[k];
            }
            out.a[i] = s;
        }
        out
    }
}

impl Vector {
    pub fn zeros(n: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&n), "dimension {n} outside 1..={MAX_DIM}");
        Vector { n, a: [0.0; MAX_DIM] }
    }

    pub fn from_slice(s: &[f64]) -> Self {
        let mut v = Vector::zeros(s.len());
        v.a[..s.len()].copy_from_slice(s);
        v
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize) -> f64) -> Self {
        let mut v = Vector::zeros(n);
        for i in 0..n {
            v.a[i] = f(i);
        }
        v
    }

    /// Canonical basis vector `e_{k+1}` (zero-based `k`).
    pub fn basis(n: usize, k: usize) -> Self {
        let mut v = Vector::zeros(n);
        v.a[k] = 1.0;
        v
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.a[..self.n]
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.as_slice().to_vec()
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        self.as_slice().iter().zip(other.as_slice()).map(|(x, y)| x * y).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut v = *self;
        for x in v.a[..self.n].iter_mut() {
            *x *= s;
        }
        v
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &Vector) -> Self {
        let mut v = *self;
        for (x, y) in v.a[..self.n].iter_mut().zip(other.as_slice()) {
            *x += s * y;
        }
        v
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|x| x.is_finite())
    }
}

impl Index<usize> for Vector {
    type Output = f64;
    #[inline]
    fn index(&self, i: usize) -> &f64 {
        debug_assert!(i < self.n);
        &self.a[i]
    }
}

impl IndexMut<usize> for Vector {
    #[inline]
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        debug_assert!(i < self.n);
        &mut self.a[i]
    }
}

impl Add for Vector {
    type Output = Vector;
    fn add(self, rhs: Vector) -> Vector {
        self.axpy(1.0, &rhs)
    }
}

impl Sub for Vector {
    type Output = Vector;
    fn sub(self, rhs: Vector) -> Vector {
        self.axpy(-1.0, &rhs)
    }
}

impl AddAssign for Vector {
    fn add_assign(&mut self, rhs: Vector) {
        *self = self.axpy(1.0, &rhs);
    }
}

impl SubAssign for Vector {
    fn sub_assign(&mut self, rhs: Vector) {
        *self = self.axpy(-1.0, &rhs);
    }
}

impl Neg for Vector {
    type Output = Vector;
    fn neg(self) -> Vector {
        self.scale(-1.0)
    }
}

impl Mul<f64> for Vector {
    type Output = Vector;
    fn mul(self, s: f64) -> Vector {
        self.scale(s)
    }
}

/// Symmetric eigen-decomposition: ascending eigenvalues and matching
/// orthonormal eigenvectors as columns.
pub fn sym_eigen(m: &Mat) -> (Vec<f64>, Mat) {
    let n = m.dim();
    let eig = nalgebra::SymmetricEigen::new(m.symmetric_part().to_dmatrix());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = Mat::from_fn(n, |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

/// Cholesky factor `L` (lower triangular, `m = L Lᵀ`), or `None` if `m` is
/// not numerically positive definite.
pub fn cholesky(m: &Mat) -> Option<Mat> {
    let n = m.dim();
    let mut l = Mat::zeros(n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Some(l)
}

/// Solves `L y = b` for lower-triangular `L`.
pub fn forward_substitute(l: &Mat, b: &Vector) -> Vector {
    let n = l.dim();
    let mut y = Vector::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_and_transpose_helpers_agree() {
        let a = Mat::from_fn(3, |i, j| (i * 3 + j) as f64 + 0.5);
        let b = Mat::from_fn(3, |i, j| (i as f64 - j as f64) * 0.3 + 1.0);
        assert!((a.mul_transpose(&b) - a * b.transpose()).max_abs() < 1e-14);
        assert!((a.transpose_mul(&b) - a.transpose() * b).max_abs() < 1e-14);
        let v = Vector::from_slice(&[1.0, -2.0, 0.5]);
        let w = a.transpose_mul_vec(&v);
        let w2 = a.transpose() * v;
        assert!((w - w2).norm() < 1e-14);
    }

    #[test]
    fn determinant_matches_nalgebra() {
        let a = Mat::from_fn(4, |i, j| ((i + 1) * (j + 2)) as f64 % 7.0 - 3.0 + if i == j { 5.0 } else { 0.0 });
        let d = a.to_dmatrix().determinant();
        assert!((a.det() - d).abs() < 1e-10 * d.abs().max(1.0));
    }

    #[test]
    fn cholesky_reconstructs() {
        let b = Mat::from_fn(3, |i, j| if i == j { 2.0 } else { 0.3 * (i + j) as f64 });
        let m = b * b.transpose();
        let l = cholesky(&m).unwrap();
        assert!((l.mul_transpose(&l) - m).max_abs() < 1e-13);
        let rhs = Vector::from_slice(&[1.0, 2.0, 3.0]);
        let y = forward_substitute(&l, &rhs);
        assert!((l * y - rhs).norm() < 1e-13);
        assert!(cholesky(&Mat::from_diag(&[1.0, -1.0])).is_none());
    }

    #[test]
    fn eigen_sorted_ascending() {
        let m = Mat::from_diag(&[3.0, 1.0, 2.0]);
        let (vals, vecs) = sym_eigen(&m);
        assert_eq!(vals, vec![1.0, 2.0, 3.0]);
        assert!((vecs.congruence(&Mat::from_diag(&vals)) - m).max_abs() < 1e-14);
    }
}

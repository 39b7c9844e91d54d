//! Small fixed-size vectors and matrices plus the dense solvers used by the
//! Foldy system, the interpolation fit and the Rayleigh–Ritz step.

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

use num_traits::{Num, Zero};

use crate::error::{Error, Result};
use crate::scalar::{creal, Real, C};

/// Three-component vector over a real or complex scalar.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct V3<S>(pub [S; 3]);

/// 3×3 matrix stored row-major.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct M3<S>(pub [[S; 3]; 3]);

pub type Vec3<T> = V3<T>;
pub type CVec3<T> = V3<C<T>>;
pub type CMat3<T> = M3<C<T>>;

impl<S: Copy> V3<S> {
    pub const fn new(x: S, y: S, z: S) -> Self {
        V3([x, y, z])
    }
    pub fn map<R>(self, f: impl Fn(S) -> R) -> V3<R> {
        V3([f(self.0[0]), f(self.0[1]), f(self.0[2])])
    }
}

impl<S: Copy + Num> V3<S> {
    pub fn zero() -> Self {
        V3([S::zero(); 3])
    }
    /// Bilinear dot product (no conjugation).
    pub fn dot(&self, o: &Self) -> S {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }
    pub fn cross(&self, o: &Self) -> Self {
        let [a, b, c] = self.0;
        let [x, y, z] = o.0;
        V3([b * z - c * y, c * x - a * z, a * y - b * x])
    }
    pub fn scale(&self, s: S) -> Self {
        self.map(|v| v * s)
    }
    /// Outer product `self ⊗ o`.
    pub fn outer(&self, o: &Self) -> M3<S> {
        let mut m = [[S::zero(); 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, e) in row.iter_mut().enumerate() {
                *e = self.0[i] * o.0[j];
            }
        }
        M3(m)
    }
}

impl<T: Real> V3<T> {
    pub fn norm(&self) -> T {
        self.dot(self).sqrt()
    }
    pub fn to_complex(self) -> CVec3<T> {
        self.map(creal)
    }
    pub fn distance(&self, o: &Self) -> T {
        (*self - *o).norm()
    }
}

impl<T: Real> V3<C<T>> {
    /// Largest component modulus.
    pub fn max_abs(&self) -> T {
        self.0.iter().fold(T::zero(), |m, c| m.max(c.norm()))
    }
    pub fn real_scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }
}

impl<S> Index<usize> for V3<S> {
    type Output = S;
    fn index(&self, i: usize) -> &S {
        &self.0[i]
    }
}

impl<S> IndexMut<usize> for V3<S> {
    fn index_mut(&mut self, i: usize) -> &mut S {
        &mut self.0[i]
    }
}

impl<S: Copy + Num> Add for V3<S> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        V3([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl<S: Copy + Num> AddAssign for V3<S> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<S: Copy + Num> Sub for V3<S> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        V3([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl<S: Copy + Num + Neg<Output = S>> Neg for V3<S> {
    type Output = Self;
    fn neg(self) -> Self {
        self.map(|v| -v)
    }
}

impl<S: Copy + Num> M3<S> {
    pub fn zero() -> Self {
        M3([[S::zero(); 3]; 3])
    }
    pub fn identity() -> Self {
        Self::diagonal(S::one())
    }
    pub fn diagonal(s: S) -> Self {
        let mut m = Self::zero();
        for i in 0..3 {
            m.0[i][i] = s;
        }
        m
    }
    pub fn transpose(&self) -> Self {
        let mut t = Self::zero();
        for i in 0..3 {
            for j in 0..3 {
                t.0[i][j] = self.0[j][i];
            }
        }
        t
    }
    pub fn mul_vec(&self, v: &V3<S>) -> V3<S> {
        let r = |i: usize| self.0[i][0] * v.0[0] + self.0[i][1] * v.0[1] + self.0[i][2] * v.0[2];
        V3([r(0), r(1), r(2)])
    }
    pub fn scale(&self, s: S) -> Self {
        let mut m = *self;
        for row in m.0.iter_mut() {
            for e in row.iter_mut() {
                *e = *e * s;
            }
        }
        m
    }
    pub fn column(&self, j: usize) -> V3<S> {
        V3([self.0[0][j], self.0[1][j], self.0[2][j]])
    }
}

impl<T: Real> M3<T> {
    pub fn to_complex(self) -> CMat3<T> {
        let mut m = CMat3::zero();
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] = creal(self.0[i][j]);
            }
        }
        m
    }
    pub fn max_abs(&self) -> T {
        self.0
            .iter()
            .flatten()
            .fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

impl<T: Real> M3<C<T>> {
    /// Largest entry modulus.
    pub fn max_abs(&self) -> T {
        self.0.iter().flatten().fold(T::zero(), |m, v| m.max(v.norm()))
    }

    pub fn real_scale(&self, s: T) -> Self {
        self.scale(creal(s))
    }

    /// Spectral norm, computed from the dominant eigenvalue of `AᴴA`.
    pub fn op_norm(&self) -> T {
        let mut h = [[C::<T>::zero(); 3]; 3];
        for (i, row) in h.iter_mut().enumerate() {
            for (j, e) in row.iter_mut().enumerate() {
                *e = (0..3).fold(C::zero(), |acc, k| acc + self.0[k][i].conj() * self.0[k][j]);
            }
        }
        let mut v = [C::new(T::one(), T::zero()); 3];
        v[1] = C::new(T::lit(0.7), T::lit(0.1));
        v[2] = C::new(T::lit(0.3), T::lit(-0.2));
        let mut lambda = T::zero();
        for _ in 0..200 {
            let w: Vec<C<T>> = (0..3)
                .map(|i| (0..3).fold(C::zero(), |acc, j| acc + h[i][j] * v[j]))
                .collect();
            let n = w.iter().fold(T::zero(), |s, c| s + c.norm_sqr()).sqrt();
            if n == T::zero() {
                return T::zero();
            }
            let next = n;
            for i in 0..3 {
                v[i] = w[i] / creal(n);
            }
            if (next - lambda).abs() <= T::epsilon() * next {
                lambda = next;
                break;
            }
            lambda = next;
        }
        lambda.sqrt()
    }
}

impl<S: Copy + Num> Add for M3<S> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let mut m = self;
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] = self.0[i][j] + o.0[i][j];
            }
        }
        m
    }
}

impl<S: Copy + Num> AddAssign for M3<S> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<S: Copy + Num> Sub for M3<S> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        let mut m = self;
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] = self.0[i][j] - o.0[i][j];
            }
        }
        m
    }
}

impl<S: Copy + Num> Mul for M3<S> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut m = Self::zero();
        for i in 0..3 {
            for j in 0..3 {
                m.0[i][j] = (0..3).fold(S::zero(), |acc, k| acc + self.0[i][k] * o.0[k][j]);
            }
        }
        m
    }
}

/// Dense row-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T: Real> {
    rows: usize,
    cols: usize,
    data: Vec<C<T>>,
}

impl<T: Real> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C::new(T::one(), T::zero());
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> C<T>) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Writes a 3×3 block with its top-left corner at `(3·bi, 3·bj)`.
    pub fn set_block(&mut self, bi: usize, bj: usize, block: &CMat3<T>) {
        for i in 0..3 {
            for j in 0..3 {
                self[(3 * bi + i, 3 * bj + j)] = block.0[i][j];
            }
        }
    }

    pub fn block(&self, bi: usize, bj: usize) -> CMat3<T> {
        let mut b = CMat3::zero();
        for i in 0..3 {
            for j in 0..3 {
                b.0[i][j] = self[(3 * bi + i, 3 * bj + j)];
            }
        }
        b
    }

    pub fn mul_vec(&self, x: &[C<T>]) -> Vec<C<T>> {
        (0..self.rows)
            .map(|i| {
                self.data[i * self.cols..(i + 1) * self.cols]
                    .iter()
                    .zip(x)
                    .fold(C::zero(), |acc, (a, b)| acc + *a * *b)
            })
            .collect()
    }

    /// Maximum absolute column sum.
    pub fn norm_1(&self) -> T {
        (0..self.cols)
            .map(|j| (0..self.rows).fold(T::zero(), |s, i| s + self[(i, j)].norm()))
            .fold(T::zero(), T::max)
    }

    /// LU factorization with partial pivoting.
    pub fn lu(&self) -> Result<Lu<T>> {
        if self.rows != self.cols {
            return Err(Error::InvalidParameter(format!(
                "LU needs a square matrix, got {}x{}",
                self.rows, self.cols
            )));
        }
        let n = self.rows;
        let mut a = self.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = self.data.iter().fold(T::zero(), |m, v| m.max(v.norm()));
        let tiny = scale * T::epsilon() * T::from_count(n.max(1));
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, a[i * n + k].norm()))
                .fold((k, -T::one()), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pmax <= tiny || pmax == T::zero() {
                return Err(Error::SingularMatrix(k));
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let pivot = a[k * n + k];
            for i in (k + 1)..n {
                let f = a[i * n + k] / pivot;
                a[i * n + k] = f;
                if f.is_zero() {
                    continue;
                }
                for j in (k + 1)..n {
                    let akj = a[k * n + j];
                    a[i * n + j] -= f * akj;
                }
            }
        }
        Ok(Lu { n, lu: a, perm })
    }

    pub fn solve(&self, b: &[C<T>]) -> Result<Vec<C<T>>> {
        Ok(self.lu()?.solve(b))
    }

    /// 1-norm condition number `‖A‖₁·‖A⁻¹‖₁`.
    pub fn condition_1(&self) -> Result<T> {
        let lu = self.lu()?;
        let inv = lu.inverse();
        Ok(self.norm_1() * inv.norm_1())
    }
}

impl<T: Real> Index<(usize, usize)> for DenseMatrix<T> {
    type Output = C<T>;
    fn index(&self, (i, j): (usize, usize)) -> &C<T> {
        &self.data[i * self.cols + j]
    }
}

impl<T: Real> IndexMut<(usize, usize)> for DenseMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C<T> {
        &mut self.data[i * self.cols + j]
    }
}

/// Packed LU factors (`L` unit lower, `U` upper) and row permutation.
#[derive(Debug, Clone)]
pub struct Lu<T: Real> {
    n: usize,
    lu: Vec<C<T>>,
    perm: Vec<usize>,
}

impl<T: Real> Lu<T> {
    pub fn solve(&self, b: &[C<T>]) -> Vec<C<T>> {
        let n = self.n;
        let mut x: Vec<C<T>> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in (i + 1)..n {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
        x
    }

    pub fn inverse(&self) -> DenseMatrix<T> {
        let n = self.n;
        let mut inv = DenseMatrix::zeros(n, n);
        let mut e = vec![C::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = C::zero());
            e[j] = C::new(T::one(), T::zero());
            let col = self.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv
    }
}

/// Cyclic Jacobi eigen-decomposition of a real symmetric `n×n` matrix given
/// row-major. Returns eigenvalues and column eigenvectors (row-major `n×n`),
/// unsorted.
pub fn symmetric_eigen<T: Real>(a: &[T], n: usize) -> (Vec<T>, Vec<T>) {
    match symmetric_eigen_checked(a, n, 100) {
        Ok(r) | Err((r, _)) => r,
    }
}

/// As [`symmetric_eigen`], failing when `max_sweeps` sweeps do not reduce
/// the off-diagonal mass to rounding level. The error carries the last
/// iterate and the remaining relative off-diagonal norm.
#[allow(clippy::type_complexity)]
pub fn symmetric_eigen_checked<T: Real>(
    a: &[T],
    n: usize,
    max_sweeps: usize,
) -> std::result::Result<(Vec<T>, Vec<T>), ((Vec<T>, Vec<T>), T)> {
    assert_eq!(a.len(), n * n);
    let mut m = a.to_vec();
    let mut v = vec![T::zero(); n * n];
    for i in 0..n {
        v[i * n + i] = T::one();
    }
    let two = T::lit(2.0);
    let off_ratio = |m: &[T]| {
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .fold(T::zero(), |s, (i, j)| s + m[i * n + j] * m[i * n + j]);
        let diag: T = (0..n).fold(T::zero(), |s, i| s + m[i * n + i] * m[i * n + i]);
        off / diag.max(T::min_positive_value())
    };
    let tol = T::epsilon() * T::epsilon();
    let mut converged = false;
    for _sweep in 0..max_sweeps {
        if off_ratio(&m) <= tol {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == T::zero() {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (two * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let converged = converged || off_ratio(&m) <= tol;
    let vals = (0..n).map(|i| m[i * n + i]).collect();
    if converged {
        Ok((vals, v))
    } else {
        let r = off_ratio(&m).sqrt();
        Err(((vals, v), r))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::cplx;

    #[test]
    fn cross_product_is_right_handed() {
        let x = Vec3::new(1.0, 0.0, 0.0);
        let y = Vec3::new(0.0, 1.0, 0.0);
        assert_eq!(x.cross(&y), Vec3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn lu_solves_complex_system() {
        let a = DenseMatrix::<f64>::from_fn(3, 3, |i, j| {
            cplx((i + 2 * j) as f64 + if i == j { 4.0 } else { 0.0 }, (i as f64) - (j as f64))
        });
        let x_true = vec![cplx(1.0, -1.0), cplx(0.5, 2.0), cplx(-3.0, 0.25)];
        let b = a.mul_vec(&x_true);
        let x = a.solve(&b).unwrap();
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).norm() < 1e-13);
        }
    }

    #[test]
    fn lu_reports_singular() {
        let a = DenseMatrix::<f64>::from_fn(2, 2, |_, _| cplx(1.0, 0.0));
        assert!(matches!(a.lu(), Err(Error::SingularMatrix(1))));
    }

    #[test]
    fn op_norm_of_diagonal() {
        let m = CMat3::<f64>::diagonal(cplx(0.0, 2.0)) + {
            let mut d = CMat3::zero();
            d.0[2][2] = cplx(3.0, 0.0);
            d
        };
        // diag(2i, 2i, 2i + 3) has largest singular value |3 + 2i|
        assert!((m.op_norm() - 13f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn jacobi_recovers_known_spectrum() {
        let a = [2.0f64, 1.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 5.0];
        let (mut vals, _) = symmetric_eigen(&a, 3);
        vals.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert!((vals[0] - 1.0).abs() < 1e-14);
        assert!((vals[1] - 3.0).abs() < 1e-14);
        assert!((vals[2] - 5.0).abs() < 1e-14);
    }
}

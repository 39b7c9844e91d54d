//! Helmholtz and dyadic Green's kernels, their far fields, and a
//! voxelized Born-series model of the kernel of a heterogeneous background.

use std::ops::{Add, AddAssign};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{CMat3, CVec3, Vec3, M3, V3};
use crate::media::BackgroundField;
use crate::scalar::{cis, cplx, creal, four_pi, Real, C};

fn coincident<T: Real>(x: &Vec3<T>, y: &Vec3<T>) -> bool {
    let scale = T::one() + x.norm().max(y.norm());
    x.distance(y) <= T::lit(1e-12) * scale
}

/// `Φ_k(x, y) = e^{ik|x−y|}/(4π|x−y|)`.
pub fn scalar_green<T: Real>(k: T, x: &Vec3<T>, y: &Vec3<T>) -> Result<C<T>> {
    if coincident(x, y) {
        return Err(Error::CoincidentPoints);
    }
    let r = x.distance(y);
    Ok(cis(k * r) / (four_pi::<T>() * r))
}

fn dyadic_unchecked<T: Real>(k: T, d: &Vec3<T>) -> CMat3<T> {
    let r = d.norm();
    let rh = d.scale(T::one() / r);
    let phi = cis(k * r) / (four_pi::<T>() * r);
    let inv = T::one() / (k * r);
    let a = cplx(T::one() - inv * inv, inv) * phi;
    let b = cplx(T::lit(3.0) * inv * inv - T::one(), -T::lit(3.0) * inv) * phi;
    let mut m = M3::zero();
    for i in 0..3 {
        for j in 0..3 {
            let id = if i == j { a } else { C::new(T::zero(), T::zero()) };
            m.0[i][j] = id + b * (rh[i] * rh[j]);
        }
    }
    m
}

/// `Π_k(x, y) = (1/k²)∇∇Φ_k + Φ_k I` in closed form.
pub fn dyadic_green<T: Real>(k: T, x: &Vec3<T>, y: &Vec3<T>) -> Result<CMat3<T>> {
    if !(k > T::zero()) {
        return Err(Error::ZeroWavenumber);
    }
    if coincident(x, y) {
        return Err(Error::CoincidentPoints);
    }
    Ok(dyadic_unchecked(k, &(*x - *y)))
}

/// `Π^∞_k(x̂, y) = e^{−ik x̂·y}/(4π)·(I − x̂⊗x̂)`.
pub fn dyadic_farfield<T: Real>(k: T, xhat: &Vec3<T>, y: &Vec3<T>) -> CMat3<T> {
    let proj = M3::identity() - xhat.outer(xhat);
    let phase = cis(-k * xhat.dot(y)) / four_pi::<T>();
    proj.to_complex().scale(phase)
}

/// Incident plane wave `V^Inc(x, θ, q) = (θ×q)e^{ik x·θ}`.
pub fn plane_wave<T: Real>(k: T, x: &Vec3<T>, theta: &Vec3<T>, q: &Vec3<T>) -> CVec3<T> {
    theta.cross(q).to_complex().scale(cis(k * x.dot(theta)))
}

/// Quantities the Born iteration can carry per voxel: 3×3 kernel columns
/// or 3-vector fields.
trait Carried<T: Real>: Copy + Add<Output = Self> + AddAssign + Send + Sync {
    fn lmul(m: &CMat3<T>, x: &Self) -> Self;
    fn cscale(&self, c: C<T>) -> Self;
    fn size(&self) -> T;
}

impl<T: Real> Carried<T> for CMat3<T> {
    fn lmul(m: &CMat3<T>, x: &Self) -> Self {
        *m * *x
    }
    fn cscale(&self, c: C<T>) -> Self {
        self.scale(c)
    }
    fn size(&self) -> T {
        self.max_abs()
    }
}

impl<T: Real> Carried<T> for CVec3<T> {
    fn lmul(m: &CMat3<T>, x: &Self) -> Self {
        m.mul_vec(x)
    }
    fn cscale(&self, c: C<T>) -> Self {
        self.scale(c)
    }
    fn size(&self) -> T {
        self.max_abs()
    }
}

/// Voxelized kernel `G_k` of a background whose wavenumber squared differs
/// from `k²` by `contrast` on a finite set of voxels.
#[derive(Debug, Clone, PartialEq)]
pub struct HeterogeneousKernel<T> {
    pub k: T,
    pub centers: Vec<Vec3<T>>,
    /// `k²(y_v) − k²` per voxel.
    pub contrast: Vec<C<T>>,
    pub voxel_volume: T,
    pub born_order: usize,
    self_term: C<T>,
}

impl<T: Real> HeterogeneousKernel<T> {
    pub fn new(
        k: T,
        centers: Vec<Vec3<T>>,
        contrast: Vec<C<T>>,
        voxel_volume: T,
        born_order: usize,
    ) -> Result<Self> {
        if !(k > T::zero()) {
            return Err(Error::ZeroWavenumber);
        }
        if centers.len() != contrast.len() {
            return Err(Error::InvalidParameter(
                "one contrast value per voxel is required".into(),
            ));
        }
        if !(voxel_volume > T::zero()) {
            return Err(Error::InvalidParameter("voxel volume must be positive".into()));
        }
        // ∫ Π_k over the equal-volume ball centered at its own center
        let r = (T::lit(3.0) * voxel_volume / four_pi::<T>()).cbrt();
        let kr = k * r;
        let self_term = (cplx(T::one(), -kr) * cis(kr) * T::lit(2.0 / 3.0) - T::one()) / (k * k);
        Ok(Self {
            k,
            centers,
            contrast,
            voxel_volume,
            born_order,
            self_term,
        })
    }

    /// Kernel without contrast: every query reduces to `Π_k`.
    pub fn homogeneous(k: T) -> Result<Self> {
        Self::new(k, Vec::new(), Vec::new(), T::one(), 0)
    }

    /// Samples `ω²μ(ε₀(y) − ε∞)` at the centers of an `n³` grid over Ω.
    pub fn from_background(
        field: &BackgroundField<T>,
        omega: T,
        resolution: usize,
        born_order: usize,
    ) -> Result<Self> {
        field.validate()?;
        if resolution == 0 {
            return Err(Error::InvalidParameter("grid resolution must be positive".into()));
        }
        let dom = field.omega_domain;
        let e = dom.extent();
        let n = T::from_count(resolution);
        let mut centers = Vec::with_capacity(resolution.pow(3));
        for i in 0..resolution {
            for j in 0..resolution {
                for k in 0..resolution {
                    let c = [i, j, k];
                    centers.push(V3(std::array::from_fn(|ax| {
                        dom.min[ax] + e[ax] * (T::from_count(c[ax]) + T::lit(0.5)) / n
                    })));
                }
            }
        }
        let scale = omega * omega * field.mu;
        let contrast = centers
            .iter()
            .map(|y| field.eval(y).map(|e0| (e0 - field.eps_inf_bg) * scale))
            .collect::<Result<Vec<_>>>()?;
        let vol = e[0] * e[1] * e[2] / (n * n * n);
        Self::new(field.wavenumber(omega), centers, contrast, vol, born_order)
    }

    /// Self-cell integral of `Π_k` (a multiple of the identity).
    pub fn self_term(&self) -> C<T> {
        self.self_term
    }

    fn check_point(&self, x: &Vec3<T>) -> Result<()> {
        if self.centers.iter().any(|y| coincident(x, y)) {
            Err(Error::CoincidentPoints)
        } else {
            Ok(())
        }
    }

    fn weights(&self) -> Vec<C<T>> {
        self.contrast.iter().map(|c| *c * self.voxel_volume).collect()
    }

    /// Born iterate of index `born_order − 1` for the source term `rhs`.
    fn iterate<X: Carried<T>>(&self, rhs: Vec<X>) -> Vec<X> {
        if self.born_order <= 1 {
            return rhs;
        }
        let w = self.weights();
        let mut cur = rhs.clone();
        let mut last_step = T::infinity();
        for order in 1..self.born_order {
            let next: Vec<X> = (0..self.centers.len())
                .into_par_iter()
                .map(|v| {
                    let yv = self.centers[v];
                    let mut acc = rhs[v] + cur[v].cscale(self.self_term * self.contrast[v]);
                    for (u, yu) in self.centers.iter().enumerate() {
                        if u != v && w[u] != C::new(T::zero(), T::zero()) {
                            let pi = dyadic_unchecked(self.k, &(yv - *yu));
                            acc += X::lmul(&pi, &cur[u].cscale(w[u]));
                        }
                    }
                    acc
                })
                .collect();
            let step = next
                .iter()
                .zip(&cur)
                .fold(T::zero(), |m, (a, b)| {
                    let mut d = *a;
                    d += b.cscale(creal(-T::one()));
                    m.max(d.size())
                });
            if step > last_step {
                log::warn!(
                    "Born series growing at order {}: step {} after {}",
                    order + 1,
                    step,
                    last_step
                );
            }
            last_step = step;
            cur = next;
        }
        cur
    }

    /// Born-series column `G^N(·, z)` ready for evaluation at many targets.
    pub fn column(&self, z: &Vec3<T>) -> Result<GreenColumn<'_, T>> {
        self.check_point(z)?;
        let rhs = if self.born_order == 0 {
            Vec::new()
        } else {
            self.centers
                .iter()
                .map(|y| dyadic_unchecked(self.k, &(*y - *z)))
                .collect()
        };
        Ok(GreenColumn {
            kernel: self,
            source: *z,
            iterate: self.iterate(rhs),
        })
    }

    /// Total background field `V^N(·, θ, q)` for one incidence.
    pub fn total_field(&self, theta: &Vec3<T>, q: &Vec3<T>) -> TotalField<'_, T> {
        let rhs = if self.born_order == 0 {
            Vec::new()
        } else {
            self.centers
                .iter()
                .map(|y| plane_wave(self.k, y, theta, q))
                .collect()
        };
        TotalField {
            kernel: self,
            theta: *theta,
            q: *q,
            iterate: self.iterate(rhs),
        }
    }
}

/// `G^N(·, z)` for a fixed source `z`.
pub struct GreenColumn<'a, T> {
    kernel: &'a HeterogeneousKernel<T>,
    source: Vec3<T>,
    iterate: Vec<CMat3<T>>,
}

impl<T: Real> GreenColumn<'_, T> {
    pub fn eval(&self, x: &Vec3<T>) -> Result<CMat3<T>> {
        let kern = self.kernel;
        kern.check_point(x)?;
        let mut g = dyadic_green(kern.k, x, &self.source)?;
        for ((y, c), it) in kern.centers.iter().zip(&kern.contrast).zip(&self.iterate) {
            g += dyadic_unchecked(kern.k, &(*x - *y)) * it.scale(*c * kern.voxel_volume);
        }
        Ok(g)
    }

    /// Far field `G^{∞,N}(x̂, z)`.
    pub fn farfield(&self, xhat: &Vec3<T>) -> CMat3<T> {
        let kern = self.kernel;
        let mut g = dyadic_farfield(kern.k, xhat, &self.source);
        for ((y, c), it) in kern.centers.iter().zip(&kern.contrast).zip(&self.iterate) {
            g += dyadic_farfield(kern.k, xhat, y) * it.scale(*c * kern.voxel_volume);
        }
        g
    }
}

/// `V^N(·, θ, q)` for a fixed incidence.
pub struct TotalField<'a, T> {
    kernel: &'a HeterogeneousKernel<T>,
    theta: Vec3<T>,
    q: Vec3<T>,
    iterate: Vec<CVec3<T>>,
}

impl<T: Real> TotalField<'_, T> {
    pub fn eval(&self, x: &Vec3<T>) -> Result<CVec3<T>> {
        let kern = self.kernel;
        kern.check_point(x)?;
        let mut v = plane_wave(kern.k, x, &self.theta, &self.q);
        for ((y, c), it) in kern.centers.iter().zip(&kern.contrast).zip(&self.iterate) {
            v += dyadic_unchecked(kern.k, &(*x - *y)).mul_vec(&it.scale(*c * kern.voxel_volume));
        }
        Ok(v)
    }
}

/// `G_k(x, z)` at the kernel's Born order.
pub fn heterogeneous_green<T: Real>(
    kernel: &HeterogeneousKernel<T>,
    x: &Vec3<T>,
    z: &Vec3<T>,
) -> Result<CMat3<T>> {
    kernel.column(z)?.eval(x)
}

/// `G_k^∞(x̂, z)` at the kernel's Born order.
pub fn heterogeneous_farfield<T: Real>(
    kernel: &HeterogeneousKernel<T>,
    xhat: &Vec3<T>,
    z: &Vec3<T>,
) -> Result<CMat3<T>> {
    Ok(kernel.column(z)?.farfield(xhat))
}

fn check_incidence<T: Real>(theta: &Vec3<T>, q: &Vec3<T>) -> Result<()> {
    let tol = T::lit(1e-10);
    if (theta.norm() - T::one()).abs() > tol
        || (q.norm() - T::one()).abs() > tol
        || theta.dot(q).abs() > tol
    {
        return Err(Error::InvalidParameter(
            "theta and q must be orthonormal".into(),
        ));
    }
    Ok(())
}

/// `V(x, θ, q)` of the background at the kernel's Born order.
pub fn background_field<T: Real>(
    kernel: &HeterogeneousKernel<T>,
    x: &Vec3<T>,
    theta: &Vec3<T>,
    q: &Vec3<T>,
) -> Result<CVec3<T>> {
    check_incidence(theta, q)?;
    kernel.total_field(theta, q).eval(x)
}

/// Both sides of an identity and their largest componentwise gap.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport<T> {
    pub lhs: Vec<C<T>>,
    pub rhs: Vec<C<T>>,
    pub residual: T,
}

impl<T: Real> ResidualReport<T> {
    fn from_sides(lhs: Vec<C<T>>, rhs: Vec<C<T>>) -> Self {
        let residual = lhs
            .iter()
            .zip(&rhs)
            .fold(T::zero(), |m, (a, b)| m.max((*a - *b).norm()));
        Self { lhs, rhs, residual }
    }
}

/// Compares `(G^∞)ᵀ(x̂, z)(x̂×q)` with `−V(z, −x̂, q)/(4π)`.
pub fn verify_reciprocity<T: Real>(
    kernel: &HeterogeneousKernel<T>,
    xhat: &Vec3<T>,
    z: &Vec3<T>,
    q: &Vec3<T>,
) -> Result<ResidualReport<T>> {
    let g = heterogeneous_farfield(kernel, xhat, z)?;
    let lhs = g.transpose().mul_vec(&xhat.cross(q).to_complex());
    let v = kernel.total_field(&-*xhat, q).eval(z)?;
    let rhs = v.scale(creal(-T::one() / four_pi::<T>()));
    Ok(ResidualReport::from_sides(lhs.0.to_vec(), rhs.0.to_vec()))
}

/// Compares `G(x, y)` with `G(y, x)ᵀ`.
pub fn verify_symmetry<T: Real>(
    kernel: &HeterogeneousKernel<T>,
    x: &Vec3<T>,
    y: &Vec3<T>,
) -> Result<ResidualReport<T>> {
    let a = heterogeneous_green(kernel, x, y)?;
    let b = heterogeneous_green(kernel, y, x)?.transpose();
    let flat = |m: CMat3<T>| m.0.iter().flatten().copied().collect::<Vec<_>>();
    Ok(ResidualReport::from_sides(flat(a), flat(b)))
}

/// The unperturbed medium as seen by the forward models, at one frequency
/// per call.
pub trait Background<T: Real>: Send + Sync {
    fn wavenumber(&self, omega: T) -> T;

    /// `V(z, θ, q)` at each point.
    fn total_field(
        &self,
        omega: T,
        points: &[Vec3<T>],
        theta: &Vec3<T>,
        q: &Vec3<T>,
    ) -> Result<Vec<CVec3<T>>>;

    /// `G(x, z_j)` for each source.
    fn green(&self, omega: T, x: &Vec3<T>, sources: &[Vec3<T>]) -> Result<Vec<CMat3<T>>>;

    /// `G^∞(x̂, z_j)` for each source.
    fn green_farfield(&self, omega: T, xhat: &Vec3<T>, sources: &[Vec3<T>]) -> Result<Vec<CMat3<T>>>;

    /// `G(z_m, z_j)` in row-major `ℵ×ℵ` order, zero on the diagonal.
    fn coupling(&self, omega: T, points: &[Vec3<T>]) -> Result<Vec<CMat3<T>>> {
        let n = points.len();
        let mut out = vec![M3::zero(); n * n];
        for (m, zm) in points.iter().enumerate() {
            for (j, zj) in points.iter().enumerate() {
                if m != j {
                    out[m * n + j] = self.green(omega, zm, std::slice::from_ref(zj))?[0];
                }
            }
        }
        Ok(out)
    }
}

/// Constant `ε∞`, `μ`: plane wave and `Π_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomogeneousBackground<T> {
    pub eps_inf: T,
    pub mu: T,
}

impl<T: Real> HomogeneousBackground<T> {
    pub fn from_field(field: &BackgroundField<T>) -> Self {
        Self {
            eps_inf: field.eps_inf_bg,
            mu: field.mu,
        }
    }
}

impl<T: Real> Background<T> for HomogeneousBackground<T> {
    fn wavenumber(&self, omega: T) -> T {
        omega * (self.eps_inf * self.mu).sqrt()
    }

    fn total_field(
        &self,
        omega: T,
        points: &[Vec3<T>],
        theta: &Vec3<T>,
        q: &Vec3<T>,
    ) -> Result<Vec<CVec3<T>>> {
        let k = self.wavenumber(omega);
        Ok(points.iter().map(|z| plane_wave(k, z, theta, q)).collect())
    }

    fn green(&self, omega: T, x: &Vec3<T>, sources: &[Vec3<T>]) -> Result<Vec<CMat3<T>>> {
        let k = self.wavenumber(omega);
        sources.iter().map(|z| dyadic_green(k, x, z)).collect()
    }

    fn green_farfield(&self, omega: T, xhat: &Vec3<T>, sources: &[Vec3<T>]) -> Result<Vec<CMat3<T>>> {
        let k = self.wavenumber(omega);
        Ok(sources.iter().map(|z| dyadic_farfield(k, xhat, z)).collect())
    }
}

/// Heterogeneous background resolved by the voxel Born series.
#[derive(Debug, Clone, PartialEq)]
pub struct BornBackground<T> {
    pub field: BackgroundField<T>,
    pub resolution: usize,
    pub born_order: usize,
}

impl<T: Real> BornBackground<T> {
    pub fn kernel(&self, omega: T) -> Result<HeterogeneousKernel<T>> {
        HeterogeneousKernel::from_background(&self.field, omega, self.resolution, self.born_order)
    }
}

impl<T: Real> Background<T> for BornBackground<T> {
    fn wavenumber(&self, omega: T) -> T {
        self.field.wavenumber(omega)
    }

    fn total_field(
        &self,
        omega: T,
        points: &[Vec3<T>],
        theta: &Vec3<T>,
        q: &Vec3<T>,
    ) -> Result<Vec<CVec3<T>>> {
        let kern = self.kernel(omega)?;
        let f = kern.total_field(theta, q);
        points.iter().map(|z| f.eval(z)).collect()
    }

    fn green(&self, omega: T, x: &Vec3<T>, sources: &[Vec3<T>]) -> Result<Vec<CMat3<T>>> {
        let kern = self.kernel(omega)?;
        sources.iter().map(|z| kern.column(z)?.eval(x)).collect()
    }

    fn green_farfield(&self, omega: T, xhat: &Vec3<T>, sources: &[Vec3<T>]) -> Result<Vec<CMat3<T>>> {
        let kern = self.kernel(omega)?;
        sources.iter().map(|z| Ok(kern.column(z)?.farfield(xhat))).collect()
    }

    fn coupling(&self, omega: T, points: &[Vec3<T>]) -> Result<Vec<CMat3<T>>> {
        let kern = self.kernel(omega)?;
        let n = points.len();
        let mut out = vec![M3::zero(); n * n];
        for (j, zj) in points.iter().enumerate() {
            let col = kern.column(zj)?;
            for (m, zm) in points.iter().enumerate() {
                if m != j {
                    out[m * n + j] = col.eval(zm)?;
                }
            }
        }
        Ok(out)
    }
}

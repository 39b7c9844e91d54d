//! Magnetization-operator eigen-data of the reference particle shape:
//! closed form for the unit ball, voxel discretization for general shapes.

use std::sync::Arc;

use num_traits::Float;
use rustfft::{Fft, FftNum, FftPlanner};

use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigen_checked, Vec3, M3, V3};
use crate::scalar::{Real, C};

/// One (possibly degenerate) eigenvalue of the magnetization operator on
/// gradients of harmonic functions, with the moments of its eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenMode<T> {
    pub lambda: T,
    /// `∫_B e_ℓ`, one per multiplicity branch.
    pub moments: Vec<Vec3<T>>,
    pub multiplicity: usize,
    /// `Σ_ℓ m_ℓ ⊗ m_ℓ`.
    pub moment_gram: M3<T>,
}

impl<T: Real> EigenMode<T> {
    pub fn from_moments(lambda: T, moments: Vec<Vec3<T>>) -> Result<Self> {
        if !(lambda > T::zero() && lambda < T::one()) {
            return Err(Error::InvalidParameter(format!(
                "eigenvalue {lambda} outside (0, 1)"
            )));
        }
        let moment_gram = moments
            .iter()
            .fold(M3::zero(), |g, m| g + m.outer(m));
        Ok(Self {
            lambda,
            multiplicity: moments.len(),
            moments,
            moment_gram,
        })
    }
}

/// Dipole mode of the unit ball: `λ = 1/3`, moments `√(4π/3)·ê_ℓ`.
pub fn unit_ball_eigen_data<T: Real>(n0: usize) -> Result<EigenMode<T>> {
    if n0 != 1 {
        return Err(Error::UnsupportedMode(n0));
    }
    let s = (T::lit(4.0) * T::PI() / T::lit(3.0)).sqrt();
    let moments = (0..3)
        .map(|l| {
            let mut v = V3([T::zero(); 3]);
            v[l] = s;
            v
        })
        .collect();
    EigenMode::from_moments(T::one() / T::lit(3.0), moments)
}

/// Occupancy grid of `n³` cubic voxels over `[−1, 1]³`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelShape<T> {
    pub resolution: usize,
    pub occupancy: Vec<bool>,
    pub voxel_volume: T,
    occupied: Vec<[usize; 3]>,
}

impl<T: Real> VoxelShape<T> {
    /// Voxels whose centers satisfy `inside`.
    pub fn from_fn(resolution: usize, inside: impl Fn(&Vec3<T>) -> bool) -> Result<Self> {
        if resolution < 8 {
            return Err(Error::ResolutionTooLow(resolution));
        }
        let n = resolution;
        let mut occupancy = vec![false; n * n * n];
        let mut occupied = Vec::new();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let idx = [i, j, k];
                    if inside(&Self::center_of(n, idx)) {
                        occupancy[(i * n + j) * n + k] = true;
                        occupied.push(idx);
                    }
                }
            }
        }
        if occupied.is_empty() {
            return Err(Error::InvalidParameter("shape has no occupied voxels".into()));
        }
        let h = T::lit(2.0) / T::from_count(n);
        Ok(Self {
            resolution: n,
            occupancy,
            voxel_volume: h * h * h,
            occupied,
        })
    }

    /// Voxelized unit ball.
    pub fn ball(resolution: usize) -> Result<Self> {
        Self::from_fn(resolution, |x| x.dot(x) <= T::one())
    }

    fn center_of(n: usize, idx: [usize; 3]) -> Vec3<T> {
        let h = T::lit(2.0) / T::from_count(n);
        V3(idx.map(|i| -T::one() + h * (T::from_count(i) + T::lit(0.5))))
    }

    pub fn spacing(&self) -> T {
        T::lit(2.0) / T::from_count(self.resolution)
    }

    pub fn len(&self) -> usize {
        self.occupied.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupied.is_empty()
    }

    pub fn occupied(&self) -> &[[usize; 3]] {
        &self.occupied
    }

    /// Centers of the occupied voxels, in field order.
    pub fn centers(&self) -> Vec<Vec3<T>> {
        self.occupied
            .iter()
            .map(|&idx| Self::center_of(self.resolution, idx))
            .collect()
    }

    pub fn volume(&self) -> T {
        self.voxel_volume * T::from_count(self.len())
    }
}

/// Off-diagonal kernel `h³(I − 3r̂r̂)/(4πr³)` between two distinct voxels.
pub fn voxel_kernel<T: Real>(r: &Vec3<T>, voxel_volume: T) -> M3<T> {
    let d = r.norm();
    let rh = r.scale(T::one() / d);
    let c = voxel_volume / (T::lit(4.0) * T::PI() * d * d * d);
    (M3::identity() - rh.outer(&rh).scale(T::lit(3.0))).scale(c)
}

const PAIRS: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

fn pair_index(a: usize, b: usize) -> usize {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    PAIRS.iter().position(|&p| p == (a, b)).unwrap()
}

/// Discretized `∇M_B`: self term `I/3`, midpoint quadrature elsewhere,
/// applied as a zero-padded FFT convolution.
pub struct MagnetizationOperator<T: Real + FftNum> {
    shape: VoxelShape<T>,
    m: usize,
    kernel_hat: Vec<Vec<C<T>>>,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

impl<T: Real + FftNum> MagnetizationOperator<T> {
    pub fn new(shape: &VoxelShape<T>) -> Result<Self> {
        let n = shape.resolution;
        if n < 8 {
            return Err(Error::ResolutionTooLow(n));
        }
        let m = 2 * n;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(m);
        let inverse = planner.plan_fft_inverse(m);
        let h = shape.spacing();
        let wrap = |i: usize| -> T {
            if i < n {
                T::from_count(i)
            } else {
                -T::from_count(m - i)
            }
        };
        let mut kernel_hat = vec![vec![C::new(T::zero(), T::zero()); m * m * m]; 6];
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    if (i == 0 && j == 0 && k == 0) || i == n || j == n || k == n {
                        continue;
                    }
                    let r = V3([wrap(i) * h, wrap(j) * h, wrap(k) * h]);
                    let kv = voxel_kernel(&r, shape.voxel_volume);
                    for (c, &(a, b)) in PAIRS.iter().enumerate() {
                        kernel_hat[c][(i * m + j) * m + k] = C::new(kv.0[a][b], T::zero());
                    }
                }
            }
        }
        let mut op = Self {
            shape: shape.clone(),
            m,
            kernel_hat: Vec::new(),
            forward,
            inverse,
        };
        for grid in kernel_hat.iter_mut() {
            op.fft3(grid, false);
        }
        op.kernel_hat = kernel_hat;
        Ok(op)
    }

    pub fn shape(&self) -> &VoxelShape<T> {
        &self.shape
    }

    fn fft3(&self, data: &mut [C<T>], inverse: bool) {
        let m = self.m;
        let fft = if inverse { &self.inverse } else { &self.forward };
        fft.process(data);
        let mut line = vec![C::new(T::zero(), T::zero()); m];
        for stride in [m, m * m] {
            for base in 0..m * m {
                let origin = if stride == m {
                    (base / m) * m * m + base % m
                } else {
                    base
                };
                for (t, slot) in line.iter_mut().enumerate() {
                    *slot = data[origin + t * stride];
                }
                fft.process(&mut line);
                for (t, v) in line.iter().enumerate() {
                    data[origin + t * stride] = *v;
                }
            }
        }
    }

    /// Applies the operator to a field sampled at the occupied voxels.
    pub fn apply(&self, field: &[Vec3<T>]) -> Result<Vec<Vec3<T>>> {
        let occ = self.shape.occupied();
        if field.len() != occ.len() {
            return Err(Error::InvalidParameter(format!(
                "field has {} samples, shape has {} occupied voxels",
                field.len(),
                occ.len()
            )));
        }
        let m = self.m;
        let at = |idx: &[usize; 3]| (idx[0] * m + idx[1]) * m + idx[2];
        let zero = C::new(T::zero(), T::zero());
        let mut spectra: Vec<Vec<C<T>>> = (0..3)
            .map(|c| {
                let mut g = vec![zero; m * m * m];
                for (idx, f) in occ.iter().zip(field) {
                    g[at(idx)] = C::new(f[c], T::zero());
                }
                self.fft3(&mut g, false);
                g
            })
            .collect();
        let mut out = vec![vec![zero; m * m * m]; 3];
        for (a, grid) in out.iter_mut().enumerate() {
            for (b, spec) in spectra.iter().enumerate() {
                let kh = &self.kernel_hat[pair_index(a, b)];
                for ((o, &k), &f) in grid.iter_mut().zip(kh).zip(spec.iter()) {
                    *o = *o + k * f;
                }
            }
            self.fft3(grid, true);
        }
        spectra.clear();
        let norm = T::one() / T::from_count(m * m * m);
        let third = T::one() / T::lit(3.0);
        Ok(occ
            .iter()
            .zip(field)
            .map(|(idx, f)| {
                let p = at(idx);
                V3([0, 1, 2].map(|c| out[c][p].re * norm + third * f[c]))
            })
            .collect())
    }
}

/// Discretized `∇M_B F` at the occupied voxel centers.
pub fn magnetization_apply<T: Real + FftNum>(
    shape: &VoxelShape<T>,
    field: &[Vec3<T>],
) -> Result<Vec<Vec3<T>>> {
    MagnetizationOperator::new(shape)?.apply(field)
}

/// Harmonic homogeneous polynomials as `(coefficient, exponents)` lists.
type Poly = Vec<(f64, [u32; 3])>;

fn monomials(d: u32) -> Vec<[u32; 3]> {
    let mut out = Vec::new();
    for a in (0..=d).rev() {
        for b in (0..=d - a).rev() {
            out.push([a, b, d - a - b]);
        }
    }
    out
}

/// Basis of the kernel of the Laplacian on degree-`d` polynomials.
fn harmonic_basis(d: u32) -> Vec<Poly> {
    let cols = monomials(d);
    if d < 2 {
        return cols.into_iter().map(|e| vec![(1.0, e)]).collect();
    }
    let rows = monomials(d - 2);
    let mut mat = vec![vec![0.0f64; cols.len()]; rows.len()];
    for (c, e) in cols.iter().enumerate() {
        for ax in 0..3 {
            if e[ax] >= 2 {
                let mut t = *e;
                t[ax] -= 2;
                let r = rows.iter().position(|x| *x == t).unwrap();
                mat[r][c] += (e[ax] * (e[ax] - 1)) as f64;
            }
        }
    }
    // reduced row echelon form, then read off the null space
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..cols.len() {
        if row == rows.len() {
            break;
        }
        let Some(p) = (row..rows.len()).max_by(|&a, &b| mat[a][col].abs().total_cmp(&mat[b][col].abs())) else {
            break;
        };
        if mat[p][col].abs() < 1e-12 {
            continue;
        }
        mat.swap(row, p);
        let piv = mat[row][col];
        mat[row].iter_mut().for_each(|v| *v /= piv);
        for r in 0..rows.len() {
            if r != row && mat[r][col] != 0.0 {
                let f = mat[r][col];
                let src = mat[row].clone();
                mat[r].iter_mut().zip(&src).for_each(|(v, s)| *v -= f * s);
            }
        }
        pivots.push(col);
        row += 1;
    }
    (0..cols.len())
        .filter(|c| !pivots.contains(c))
        .map(|free| {
            let mut p = vec![(1.0, cols[free])];
            for (r, &pc) in pivots.iter().enumerate() {
                if mat[r][free] != 0.0 {
                    p.push((-mat[r][free], cols[pc]));
                }
            }
            p
        })
        .collect()
}

fn poly_gradient<T: Real>(p: &Poly, x: &Vec3<T>) -> Vec3<T> {
    let mut g = V3([T::zero(); 3]);
    for &(c, e) in p {
        for ax in 0..3 {
            if e[ax] == 0 {
                continue;
            }
            let mut v = T::lit(c) * T::from_count(e[ax] as usize);
            for (b, &q) in e.iter().enumerate() {
                let q = if b == ax { q - 1 } else { q };
                v *= Float::powi(x[b], q as i32);
            }
            g[ax] += v;
        }
    }
    g
}

/// Controls for [`magnetization_spectrum_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumOptions {
    /// Highest harmonic degree in the trial space; `None` uses `count + 1`.
    pub max_degree: Option<u32>,
    pub max_iterations: usize,
    /// Relative tolerance for merging eigenvalues into one mode.
    pub cluster_tol: f64,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self {
            max_degree: None,
            max_iterations: 500,
            cluster_tol: 1e-3,
        }
    }
}

/// Lowest `count` distinct eigenvalues of the discretized operator on
/// gradients of harmonic polynomials, ascending.
pub fn magnetization_spectrum<T: Real + FftNum>(
    shape: &VoxelShape<T>,
    count: usize,
) -> Result<Vec<EigenMode<T>>> {
    magnetization_spectrum_with(shape, count, &SpectrumOptions::default())
}

pub fn magnetization_spectrum_with<T: Real + FftNum>(
    shape: &VoxelShape<T>,
    count: usize,
    opts: &SpectrumOptions,
) -> Result<Vec<EigenMode<T>>> {
    if count == 0 || count > 3 * shape.len() {
        return Err(Error::InvalidParameter(format!(
            "count must lie in 1..={}",
            3 * shape.len()
        )));
    }
    let op = MagnetizationOperator::new(shape)?;
    let vol = shape.voxel_volume;
    let centers = shape.centers();
    let inner = |u: &[Vec3<T>], v: &[Vec3<T>]| {
        u.iter().zip(v).fold(T::zero(), |s, (a, b)| s + a.dot(b)) * vol
    };

    let degree = opts.max_degree.unwrap_or(count as u32 + 1).max(1);
    let mut basis: Vec<Vec<Vec3<T>>> = Vec::new();
    for d in 1..=degree {
        for p in harmonic_basis(d) {
            let mut f: Vec<Vec3<T>> = centers.iter().map(|x| poly_gradient(&p, x)).collect();
            let n0 = inner(&f, &f).sqrt();
            if n0 == T::zero() {
                continue;
            }
            for _ in 0..2 {
                for b in &basis {
                    let c = inner(b, &f);
                    f.iter_mut().zip(b).for_each(|(x, y)| *x = *x - y.scale(c));
                }
            }
            let nrm = inner(&f, &f).sqrt();
            if nrm > T::lit(1e-8) * n0 {
                f.iter_mut().for_each(|x| *x = x.scale(T::one() / nrm));
                basis.push(f);
            }
        }
    }
    let dim = basis.len();
    let images: Vec<Vec<Vec3<T>>> = basis.iter().map(|b| op.apply(b)).collect::<Result<_>>()?;
    let mut h = vec![T::zero(); dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            h[i * dim + j] = inner(&basis[i], &images[j]);
        }
    }
    for i in 0..dim {
        for j in 0..i {
            let s = T::lit(0.5) * (h[i * dim + j] + h[j * dim + i]);
            h[i * dim + j] = s;
            h[j * dim + i] = s;
        }
    }
    let (vals, vecs) = symmetric_eigen_checked(&h, dim, opts.max_iterations).map_err(|(_, change)| {
        Error::NonConvergence {
            iterations: opts.max_iterations,
            change: change.as_f64(),
        }
    })?;
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap());

    let moment = |col: usize| -> Vec3<T> {
        let mut m = V3([T::zero(); 3]);
        for (i, b) in basis.iter().enumerate() {
            let c = vecs[i * dim + col];
            let s = b.iter().fold(V3([T::zero(); 3]), |acc, v| acc + *v);
            m += s.scale(c * vol);
        }
        m
    };

    let tol = T::lit(opts.cluster_tol);
    let mut modes = Vec::new();
    let mut i = 0;
    while i < dim && modes.len() < count {
        let lead = vals[order[i]];
        let mut j = i;
        let mut members = Vec::new();
        while j < dim && (vals[order[j]] - lead).abs() <= tol * lead.abs() {
            members.push(order[j]);
            j += 1;
        }
        let lambda = members.iter().fold(T::zero(), |s, &c| s + vals[c]) / T::from_count(members.len());
        let moments: Vec<Vec3<T>> = members.iter().map(|&c| moment(c)).collect();
        modes.push(EigenMode::from_moments(lambda, moments)?);
        i = j;
    }
    if modes.len() < count {
        return Err(Error::InvalidParameter(format!(
            "trial space resolves only {} distinct modes",
            modes.len()
        )));
    }
    Ok(modes)
}

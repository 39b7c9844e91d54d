//! Forward models: Born-approximation fields of small dispersive particles
//! and the Foldy multiple-scattering system, plus sweep simulation.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::FftNum;

use crate::error::{Error, Result};
use crate::greens::{Background, HomogeneousBackground};
use crate::inversion::{MeasurementSeries, SceneMeta};
use crate::linalg::{CMat3, CVec3, DenseMatrix, Vec3, M3, V3};
use crate::media::{eval_permittivity, LorentzModel, Scene, ScatteringModel, ShapeKind};
use crate::resonance::{resonance_band, Dispersion, ResonanceBand};
use crate::scalar::{cplx, creal, four_pi, Real, C};
use crate::shapes::{magnetization_spectrum, unit_ball_eigen_data, EigenMode, VoxelShape};

/// Dominant-order polarization tensor `𝒞 = a³ε₀/Λ(ω)·gram` of one particle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarizationTensor<T> {
    pub value: CMat3<T>,
    pub particle_index: usize,
}

fn guard_lambda<T: Real>(lam: C<T>) -> Result<C<T>> {
    if lam.norm() < T::lit(1e-14) {
        Err(Error::ResonanceSingularity(lam.norm().as_f64()))
    } else {
        Ok(lam)
    }
}

pub fn polarization_tensor<T: Real>(
    eps0: C<T>,
    mode: &EigenMode<T>,
    a: T,
    omega: T,
    lorentz: &LorentzModel<T>,
) -> Result<PolarizationTensor<T>> {
    let lam = guard_lambda(Dispersion::new(eps0, mode.lambda, *lorentz)?.value(omega)?)?;
    let s = eps0 * (a * a * a) / lam;
    Ok(PolarizationTensor {
        value: mode.moment_gram.to_complex().scale(s),
        particle_index: 0,
    })
}

/// Eigen-data for the scene's reference shape and mode index.
pub fn eigen_mode_for<T: Real + FftNum>(scene: &Scene<T>) -> Result<EigenMode<T>> {
    match scene.shape {
        ShapeKind::UnitBall => unit_ball_eigen_data(scene.n0),
        ShapeKind::Voxelized { resolution } => {
            let shape = VoxelShape::ball(resolution)?;
            let mut modes = magnetization_spectrum(&shape, scene.n0)?;
            Ok(modes.swap_remove(scene.n0 - 1))
        }
    }
}

/// Row sums of the Foldy coupling norms.
#[derive(Debug, Clone, PartialEq)]
pub struct DominanceReport<T> {
    pub row_sums: Vec<T>,
    pub passed: bool,
}

/// A solved Foldy system at one frequency.
#[derive(Debug, Clone)]
pub struct FoldySolution<T: Real> {
    pub omega: T,
    pub matrix: DenseMatrix<T>,
    pub rhs: Vec<CVec3<T>>,
    pub q: Vec<CVec3<T>>,
    pub tensors: Vec<CMat3<T>>,
    /// `ε₀(z_j) − ε_p(ω)`.
    pub contrast: Vec<C<T>>,
    pub dominance: DominanceReport<T>,
}

impl<T: Real> FoldySolution<T> {
    /// Total moment `𝒞_j Q_j`.
    pub fn total_moment(&self, j: usize) -> CVec3<T> {
        self.tensors[j].mul_vec(&self.q[j])
    }
}

/// Multiplicative noise `v ← v + rel·|v|·ξ`, `ξ` standard complex normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec<T> {
    pub relative: T,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationOptions<T> {
    pub model: ScatteringModel,
    pub noise: Option<NoiseSpec<T>>,
    /// Solve Foldy systems even when the dominance check fails.
    pub force: bool,
}

impl<T> Default for SimulationOptions<T> {
    fn default() -> Self {
        Self {
            model: ScatteringModel::Born,
            noise: None,
            force: false,
        }
    }
}

/// Particles of a scene embedded in a background, with their resonances
/// resolved once.
#[derive(Clone)]
pub struct ForwardModel<T: Real> {
    scene: Scene<T>,
    mode: EigenMode<T>,
    background: Arc<dyn Background<T>>,
    eps0: Vec<C<T>>,
    resonances: Vec<Result<T>>,
    raw: bool,
}

impl<T: Real> std::fmt::Debug for ForwardModel<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ForwardModel")
            .field("particles", &self.scene.particles.len())
            .field("lambda", &self.mode.lambda)
            .field("raw", &self.raw)
            .finish()
    }
}

impl<T: Real> ForwardModel<T> {
    pub fn new(scene: Scene<T>, mode: EigenMode<T>, background: Arc<dyn Background<T>>) -> Result<Self> {
        let eps0 = scene
            .particles
            .iter()
            .map(|z| scene.background.eval(z))
            .collect::<Result<Vec<_>>>()?;
        let resonances = eps0
            .iter()
            .map(|&e| Dispersion::new(e, mode.lambda, scene.lorentz).and_then(|d| d.resonance()))
            .collect();
        Ok(Self {
            scene,
            mode,
            background,
            eps0,
            resonances,
            raw: false,
        })
    }

    /// Plane wave and `Π_k` in the exterior medium.
    pub fn homogeneous(scene: Scene<T>, mode: EigenMode<T>) -> Result<Self> {
        let bg = Arc::new(HomogeneousBackground::from_field(&scene.background));
        Self::new(scene, mode, bg)
    }

    /// Use `ω²` instead of the frozen `ω_P²` prefactor in far-field formulas.
    pub fn with_raw(mut self, raw: bool) -> Self {
        self.raw = raw;
        self
    }

    /// The same model restricted to the listed particles, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut out = self.clone();
        out.scene.particles = indices.iter().map(|&i| self.scene.particles[i]).collect();
        out.eps0 = indices.iter().map(|&i| self.eps0[i]).collect();
        out.resonances = indices.iter().map(|&i| self.resonances[i].clone()).collect();
        out
    }

    /// The first `count` particles.
    pub fn first(&self, count: usize) -> Self {
        self.subset(&(0..count).collect::<Vec<_>>())
    }

    pub fn scene(&self) -> &Scene<T> {
        &self.scene
    }

    pub fn mode(&self) -> &EigenMode<T> {
        &self.mode
    }

    pub fn background(&self) -> &dyn Background<T> {
        self.background.as_ref()
    }

    pub fn is_raw(&self) -> bool {
        self.raw
    }

    pub fn len(&self) -> usize {
        self.scene.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scene.particles.is_empty()
    }

    /// `ε₀(z_j)`.
    pub fn eps0(&self) -> &[C<T>] {
        &self.eps0
    }

    pub fn dispersion(&self, j: usize) -> Dispersion<T> {
        Dispersion {
            eps0: self.eps0[j],
            lambda: self.mode.lambda,
            lorentz: self.scene.lorentz,
        }
    }

    /// Closed-form resonance of particle `j`.
    pub fn resonance(&self, j: usize) -> Result<T> {
        self.resonances[j].clone()
    }

    /// Sampling band from the scene, defaulting to the admissible band.
    pub fn band(&self) -> Result<ResonanceBand<T>> {
        let b = &self.scene.band;
        let auto = resonance_band(&self.scene.lorentz, self.mode.lambda, b.samples.max(2))?;
        ResonanceBand::new(
            b.omega_min.unwrap_or(auto.omega_min),
            b.omega_max.unwrap_or(auto.omega_max),
            b.samples,
        )
    }

    pub fn meta(&self) -> SceneMeta<T> {
        SceneMeta {
            a: self.scene.a,
            mu: self.scene.background.mu,
            lambda: self.mode.lambda,
            n0: self.scene.n0,
            theta: self.scene.incidence.theta,
            q: self.scene.incidence.q,
        }
    }

    fn gram(&self) -> CMat3<T> {
        self.mode.moment_gram.to_complex()
    }

    fn a3(&self) -> T {
        self.scene.a * self.scene.a * self.scene.a
    }

    fn coef(&self, j: usize, omega: T, raw: bool) -> Result<C<T>> {
        let d = self.dispersion(j);
        let lam = guard_lambda(d.value(omega)?)?;
        let e = self.eps0[j];
        let (w2, lam_ref) = if raw {
            (omega * omega, lam)
        } else {
            let wp = self.resonance(j)?;
            (wp * wp, d.value(wp)?)
        };
        Ok(e * (e - lam_ref) * w2 / (lam * d.lambda))
    }

    /// Far-field prefactor of particle `j` in the current (`raw` or frozen) form.
    pub fn coefficient(&self, j: usize, omega: T) -> Result<C<T>> {
        self.coef(j, omega, self.raw)
    }

    pub fn polarization(&self, j: usize, omega: T) -> Result<PolarizationTensor<T>> {
        let mut p = polarization_tensor(self.eps0[j], &self.mode, self.scene.a, omega, &self.scene.lorentz)?;
        p.particle_index = j;
        Ok(p)
    }

    fn fields(&self, omega: T, theta: &Vec3<T>) -> Result<Vec<CVec3<T>>> {
        self.background
            .total_field(omega, &self.scene.particles, theta, &self.scene.incidence.q)
    }

    /// Per-particle summands of the back-scattered contrast.
    pub fn backscatter_terms(&self, omega: T) -> Result<Vec<C<T>>> {
        let v = self.fields(omega, &self.scene.incidence.theta)?;
        let g = self.gram();
        let pre = -self.scene.background.mu * self.a3() / four_pi::<T>();
        (0..self.len())
            .map(|j| Ok(self.coefficient(j, omega)? * v[j].dot(&g.mul_vec(&v[j])) * pre))
            .collect()
    }

    /// `⟨(E^∞ − V^∞)(−θ), θ×q⟩` in the Born approximation.
    pub fn backscatter(&self, omega: T) -> Result<C<T>> {
        Ok(self
            .backscatter_terms(omega)?
            .into_iter()
            .fold(creal(T::zero()), |s, t| s + t))
    }

    /// Born far field at `x̂`, projected on `x̂×q`.
    pub fn farfield(&self, omega: T, xhat: &Vec3<T>) -> Result<C<T>> {
        if (xhat.norm() - T::one()).abs() > T::lit(1e-10) {
            return Err(Error::InvalidParameter("xhat must be a unit vector".into()));
        }
        let vt = self.fields(omega, &self.scene.incidence.theta)?;
        let vr = self.fields(omega, &-*xhat)?;
        let g = self.gram();
        let pre = self.scene.background.mu * self.a3() / four_pi::<T>();
        let mut s = creal(T::zero());
        for j in 0..self.len() {
            s = s + self.coefficient(j, omega)? * vt[j].dot(&g.mul_vec(&vr[j]));
        }
        Ok(s * pre)
    }

    fn check_distance(&self, x: &Vec3<T>) -> Result<()> {
        let floor = T::lit(10.0) * self.scene.a;
        for (j, z) in self.scene.particles.iter().enumerate() {
            if x.distance(z) < floor {
                return Err(Error::TooCloseToParticle {
                    particle: j,
                    min_distance: floor.as_f64(),
                });
            }
        }
        Ok(())
    }

    /// Born scattered field at `x`, at least `10a` from every particle.
    pub fn scattered_near(&self, omega: T, x: &Vec3<T>) -> Result<CVec3<T>> {
        self.check_distance(x)?;
        let v = self.fields(omega, &self.scene.incidence.theta)?;
        let gk = self.background.green(omega, x, &self.scene.particles)?;
        let g = self.gram();
        let pre = -self.scene.background.mu * self.a3() * omega * omega;
        let mut out = V3::zero();
        for j in 0..self.len() {
            let c = self.coef(j, omega, true)? / (omega * omega) * pre;
            out += gk[j].mul_vec(&g.mul_vec(&v[j])).scale(c);
        }
        Ok(out)
    }

    /// `ω²μ Σ_{j≠m} ‖G(z_m, z_j)(ε₀ − ε_p)𝒞_j‖` per row.
    pub fn check_dominance(&self, omega: T) -> Result<DominanceReport<T>> {
        let n = self.len();
        let coupling = self.background.coupling(omega, &self.scene.particles)?;
        let ep = eval_permittivity(&self.scene.lorentz, omega)?;
        let w = omega * omega * self.scene.background.mu;
        let mut blocks = Vec::with_capacity(n);
        for j in 0..n {
            blocks.push(self.polarization(j, omega)?.value.scale(self.eps0[j] - ep));
        }
        let row_sums: Vec<T> = (0..n)
            .map(|m| {
                (0..n)
                    .filter(|&j| j != m)
                    .fold(T::zero(), |s, j| s + (coupling[m * n + j] * blocks[j]).op_norm() * w)
            })
            .collect();
        let passed = row_sums.iter().all(|&r| r < T::one());
        Ok(DominanceReport { row_sums, passed })
    }

    /// Assembles and solves `(I + ω²μ𝓜)Q = V(z_·)`.
    pub fn foldy_solve(&self, omega: T, force: bool) -> Result<FoldySolution<T>> {
        let n = self.len();
        let dominance = self.check_dominance(omega)?;
        if !dominance.passed {
            let (m, r) = dominance
                .row_sums
                .iter()
                .enumerate()
                .fold((0, T::zero()), |acc, (i, &r)| if r > acc.1 { (i, r) } else { acc });
            if !force {
                return Err(Error::DominanceViolation {
                    particle: m,
                    row_sum: r.as_f64(),
                });
            }
            log::warn!("Foldy system not diagonally dominant (row {m}: {r}); solving anyway");
        }
        let ep = eval_permittivity(&self.scene.lorentz, omega)?;
        let contrast: Vec<C<T>> = self.eps0.iter().map(|&e| e - ep).collect();
        let tensors = (0..n)
            .map(|j| Ok(self.polarization(j, omega)?.value))
            .collect::<Result<Vec<_>>>()?;
        let coupling = self.background.coupling(omega, &self.scene.particles)?;
        let w = creal(omega * omega * self.scene.background.mu);
        let mut matrix = DenseMatrix::identity(3 * n);
        for m in 0..n {
            for j in 0..n {
                if m != j {
                    let block = (coupling[m * n + j] * tensors[j]).scale(contrast[j] * w);
                    matrix.set_block(m, j, &block);
                }
            }
        }
        let rhs = self.fields(omega, &self.scene.incidence.theta)?;
        let flat: Vec<C<T>> = rhs.iter().flat_map(|v| v.0).collect();
        let sol = matrix.solve(&flat)?;
        if sol.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFinite("Foldy solution".into()));
        }
        let q = sol.chunks(3).map(|c| V3([c[0], c[1], c[2]])).collect();
        Ok(FoldySolution {
            omega,
            matrix,
            rhs,
            q,
            tensors,
            contrast,
            dominance,
        })
    }

    /// `−ω²μ Σ_j (ε₀ − ε_p) G(x, z_j) 𝒞_j Q_j`.
    pub fn foldy_scattered(&self, sol: &FoldySolution<T>, x: &Vec3<T>) -> Result<CVec3<T>> {
        self.check_distance(x)?;
        let gk = self.background.green(sol.omega, x, &self.scene.particles)?;
        Ok(self.foldy_sum(sol, &gk))
    }

    fn foldy_sum(&self, sol: &FoldySolution<T>, kernels: &[CMat3<T>]) -> CVec3<T> {
        let pre = creal(-sol.omega * sol.omega * self.scene.background.mu);
        let mut out = V3::zero();
        for j in 0..self.len() {
            out += kernels[j].mul_vec(&sol.total_moment(j)).scale(sol.contrast[j] * pre);
        }
        out
    }

    /// Foldy far field at `x̂`, projected on `x̂×q`.
    pub fn foldy_farfield(&self, sol: &FoldySolution<T>, xhat: &Vec3<T>) -> Result<C<T>> {
        let gk = self.background.green_farfield(sol.omega, xhat, &self.scene.particles)?;
        let e = self.foldy_sum(sol, &gk);
        Ok(xhat.cross(&self.scene.incidence.q).to_complex().dot(&e))
    }

    /// Foldy far field at `−θ`, projected on `θ×q`.
    pub fn foldy_backscatter(&self, sol: &FoldySolution<T>) -> Result<C<T>> {
        let inc = self.scene.incidence;
        let gk = self.background.green_farfield(sol.omega, &-inc.theta, &self.scene.particles)?;
        let e = self.foldy_sum(sol, &gk);
        Ok(inc.theta.cross(&inc.q).to_complex().dot(&e))
    }

    /// `|V(z_j)ᵀ·gram·V(z_j)|^{1/2}` per particle at frequency `omega`.
    pub fn excitation(&self, omega: T) -> Result<Vec<T>> {
        let v = self.fields(omega, &self.scene.incidence.theta)?;
        let g = self.gram();
        Ok(v.iter().map(|vj| vj.dot(&g.mul_vec(vj)).norm().sqrt()).collect())
    }

    /// Back-scattered contrasts for every injection count over `omegas`.
    pub fn simulate(&self, omegas: &[T], opts: &SimulationOptions<T>) -> Result<MeasurementSeries<T>> {
        let n = self.len();
        let columns: Vec<Vec<C<T>>> = omegas
            .par_iter()
            .map(|&w| -> Result<Vec<C<T>>> {
                let mut row = vec![creal(T::zero()); n + 1];
                match opts.model {
                    ScatteringModel::Born => {
                        let terms = self.backscatter_terms(w)?;
                        for l in 1..=n {
                            row[l] = row[l - 1] + terms[l - 1];
                        }
                    }
                    ScatteringModel::Foldy => {
                        for (l, slot) in row.iter_mut().enumerate().skip(1) {
                            let sub = self.first(l);
                            *slot = sub.foldy_backscatter(&sub.foldy_solve(w, opts.force)?)?;
                        }
                    }
                }
                Ok(row)
            })
            .collect::<Result<_>>()?;
        let mut contrasts: Vec<Vec<C<T>>> = (0..=n)
            .map(|l| columns.iter().map(|row| row[l]).collect())
            .collect();
        if let Some(noise) = opts.noise {
            add_relative_noise(&mut contrasts[1..], noise);
        }
        MeasurementSeries::new(omegas.to_vec(), contrasts, self.meta())
    }
}

/// Perturbs every value in row-major order from a seeded stream.
pub fn add_relative_noise<T: Real>(rows: &mut [Vec<C<T>>], noise: NoiseSpec<T>) {
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let s = T::one() / T::lit(2.0).sqrt();
    for v in rows.iter_mut().flatten() {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        *v = *v + cplx(T::lit(re), T::lit(im)) * (noise.relative * v.norm() * s);
    }
}

/// `born_contrast_backscatter`: back-scattered Born contrast.
pub fn born_contrast_backscatter<T: Real>(model: &ForwardModel<T>, omega: T) -> Result<C<T>> {
    model.backscatter(omega)
}

pub fn born_scattered_near<T: Real>(model: &ForwardModel<T>, omega: T, x: &Vec3<T>) -> Result<CVec3<T>> {
    model.scattered_near(omega, x)
}

pub fn born_farfield<T: Real>(model: &ForwardModel<T>, omega: T, xhat: &Vec3<T>) -> Result<C<T>> {
    model.farfield(omega, xhat)
}

pub fn foldy_solve<T: Real>(model: &ForwardModel<T>, omega: T, force: bool) -> Result<FoldySolution<T>> {
    model.foldy_solve(omega, force)
}

pub fn foldy_scattered<T: Real>(
    model: &ForwardModel<T>,
    sol: &FoldySolution<T>,
    x: &Vec3<T>,
) -> Result<CVec3<T>> {
    model.foldy_scattered(sol, x)
}

pub fn check_dominance<T: Real>(model: &ForwardModel<T>, omega: T) -> Result<DominanceReport<T>> {
    model.check_dominance(omega)
}

#[allow(dead_code)]
fn _assert_send_sync<T: Real>() {
    fn is<X: Send + Sync>() {}
    is::<ForwardModel<T>>();
    is::<M3<C<T>>>();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::greens::{dyadic_farfield, dyadic_green, plane_wave};
    use crate::media::{AxisBox, BackgroundField, BandSpec, Incidence, PermittivitySpec, ValidationSettings};
    use crate::resonance::plasmonic_resonance;
    use std::f64::consts::PI;

    fn scene(particles: Vec<Vec3<f64>>, eps0: C<f64>, gamma: f64) -> Scene<f64> {
        Scene {
            background: BackgroundField::homogeneous(eps0, AxisBox::centered_cube(1.0)),
            lorentz: LorentzModel::new(1.0, 1.0, 1.0, gamma).unwrap(),
            particles,
            a: 1e-2,
            t: 0.0,
            s: 0.0,
            h: 0.5,
            shape: ShapeKind::UnitBall,
            n0: 1,
            incidence: Incidence::along_z(),
            band: BandSpec { omega_min: None, omega_max: None, samples: 2001 },
            settings: ValidationSettings::default(),
        }
    }

    fn model(particles: Vec<Vec3<f64>>, gamma: f64) -> ForwardModel<f64> {
        let s = scene(particles, cplx(2.0, 0.0), gamma);
        ForwardModel::homogeneous(s, unit_ball_eigen_data(1).unwrap()).unwrap()
    }

    fn rel(a: C<f64>, b: C<f64>) -> f64 {
        (a - b).norm() / b.norm()
    }

    #[test]
    fn polarization_examples() {
        let mode = unit_ball_eigen_data::<f64>(1).unwrap();
        let lorentz = LorentzModel::new(1.0, 1.0, 1.0, 0.0).unwrap();
        let (e0, w, a) = (cplx(2.0, 0.0), 1.5, 0.01);
        let ep = eval_permittivity(&lorentz, w).unwrap();
        let p = polarization_tensor(e0, &mode, a, w, &lorentz).unwrap().value;
        let expect = 4.0 * PI * a.powi(3) * e0 / (2.0 * e0 + ep);
        assert!(rel(p.0[0][0], expect) < 1e-13);
        assert_eq!(p.0[0][1], cplx(0.0, 0.0));
        let p2 = polarization_tensor(e0, &mode, 2.0 * a, w, &lorentz).unwrap().value;
        assert!(rel(p2.0[1][1], p.0[1][1] * 8.0) < 1e-14);

        // no plasma term: ε_p = ε∞ = ε₀ so Λ = ε₀
        let flat = LorentzModel::new(2.0, 0.0, 1.0, 0.0).unwrap();
        let p = polarization_tensor(e0, &mode, a, w, &flat).unwrap().value;
        assert!(rel(p.0[2][2], cplx(a.powi(3) * 4.0 * PI / 3.0, 0.0)) < 1e-14);

        let wp = plasmonic_resonance(&Dispersion::new(e0, 1.0 / 3.0, lorentz).unwrap()).unwrap();
        assert!(matches!(
            polarization_tensor(e0, &mode, a, wp, &lorentz),
            Err(Error::ResonanceSingularity(_))
        ));
    }

    #[test]
    fn backscatter_single_particle_hand_value() {
        let m = model(vec![V3([0.1, -0.2, 0.3])], 1e-3);
        assert_eq!(model(vec![], 1e-3).backscatter(1.2).unwrap(), cplx(0.0, 0.0));
        let w = 1.2;
        let d = m.dispersion(0);
        let wp = d.resonance().unwrap();
        let e0 = cplx(2.0, 0.0);
        let expect = 1e-6 / (4.0 * PI) * wp * wp * (e0 * (e0 - d.value(wp).unwrap())).norm() * (4.0 * PI / 3.0)
            / (1.0 / 3.0 * d.value(w).unwrap().norm());
        assert!((m.backscatter(w).unwrap().norm() - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn farfield_back_direction_matches_backscatter() {
        let m = model(vec![V3([0.1, -0.2, 0.3]), V3([-0.4, 0.0, 0.1])], 1e-3);
        let w = 1.3;
        let theta = m.scene().incidence.theta;
        // projection vectors differ by sign: (−θ)×q = −(θ×q)
        let f = m.farfield(w, &-theta).unwrap();
        assert!(rel(-f, m.backscatter(w).unwrap()) < 1e-14);
    }

    #[test]
    fn farfield_forward_direction_oracle() {
        let z = V3([0.2, 0.1, -0.3]);
        let m = model(vec![z], 1e-3).with_raw(true);
        let w = 1.4;
        let theta = m.scene().incidence.theta;
        let q = m.scene().incidence.q;
        let k = w;
        let e0 = cplx(2.0, 0.0);
        let ep = eval_permittivity(&m.scene().lorentz, w).unwrap();
        let lam = e0 - (e0 - ep) / 3.0;
        // independent evaluation: (x̂×q)·[−ω²μ(ε₀−ε_p)Π^∞(x̂,z)𝒞 V(z)]
        let c = e0 * 1e-6 / lam * (4.0 * PI / 3.0);
        let vz = plane_wave(k, &z, &theta, &q);
        let e = dyadic_farfield(k, &theta, &z).mul_vec(&vz).scale(-(e0 - ep) * c * w * w);
        let expect = theta.cross(&q).to_complex().dot(&e);
        assert!(rel(m.farfield(w, &theta).unwrap(), expect) < 1e-13);
    }

    #[test]
    fn near_field_superposition_and_far_limit() {
        let (p1, p2) = (V3([0.1, 0.0, 0.0]), V3([-0.3, 0.2, 0.0]));
        let both = model(vec![p1, p2], 1e-3);
        let x = V3([0.5, 0.5, 0.5]);
        let sum = model(vec![p1], 1e-3).scattered_near(1.5, &x).unwrap()
            + model(vec![p2], 1e-3).scattered_near(1.5, &x).unwrap();
        assert!((both.scattered_near(1.5, &x).unwrap() - sum).max_abs() < 1e-18);
        assert!(matches!(
            both.scattered_near(1.5, &V3([0.1, 0.05, 0.0])),
            Err(Error::TooCloseToParticle { particle: 0, .. })
        ));

        let single = model(vec![V3([0.0; 3])], 1e-3).with_raw(true);
        let xhat = V3([0.0, 0.6, 0.8]);
        let r = 1e5;
        let near = single.scattered_near(1.5, &xhat.scale(r)).unwrap().scale(crate::scalar::cis(-1.5 * r) * r);
        let proj = xhat.cross(&single.scene().incidence.q).to_complex().dot(&near);
        assert!(rel(proj, single.farfield(1.5, &xhat).unwrap()) < 1e-4);
    }

    #[test]
    fn sweep_peak_near_resonance() {
        for &g in &[1e-2, 1e-3, 1e-4] {
            let m = model(vec![V3([0.0; 3])], g);
            let band = m.band().unwrap();
            let grid = band.grid();
            let vals: Vec<f64> = grid.iter().map(|&w| m.backscatter(w).unwrap().norm()).collect();
            let i = (0..vals.len()).max_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
            let wp = m.resonance(0).unwrap();
            let tol = (2.0 * band.step()).max(5.0 * g);
            assert!((grid[i] - wp).abs() <= tol, "gamma {g}");
        }
    }

    #[test]
    fn foldy_single_particle_equals_born() {
        let m = model(vec![V3([0.1, 0.2, -0.1])], 1e-3).with_raw(true);
        let w = 1.4;
        let sol = m.foldy_solve(w, false).unwrap();
        assert_eq!(sol.q[0], sol.rhs[0]);
        let x = V3([0.6, -0.4, 0.5]);
        let f = m.foldy_scattered(&sol, &x).unwrap();
        let b = m.scattered_near(w, &x).unwrap();
        assert!((f - b).max_abs() <= 1e-12 * b.max_abs());
        assert!(rel(m.foldy_backscatter(&sol).unwrap(), m.backscatter(w).unwrap()) < 1e-12);
    }

    #[test]
    fn foldy_matches_hand_assembled_oracle() {
        let (z1, z2) = (V3([0.0, 0.0, 0.0]), V3([0.05, 0.02, 0.0]));
        let m = model(vec![z1, z2], 1e-3);
        let w = 1.5;
        let sol = m.foldy_solve(w, false).unwrap();
        let lorentz = m.scene().lorentz;
        let ep = eval_permittivity(&lorentz, w).unwrap();
        let e0 = cplx(2.0, 0.0);
        let lam = e0 - (e0 - ep) / 3.0;
        let cs = 1e-6 * e0 / lam * (4.0 * PI / 3.0);
        let g = dyadic_green(w, &z1, &z2).unwrap();
        // 6×6 system [I, B; B, I] with B = ω²(ε₀−ε_p)·cs·G, solved by block elimination
        let b = g.scale((e0 - ep) * cs * w * w);
        let v1 = plane_wave(w, &z1, &V3([0.0, 0.0, 1.0]), &V3([1.0, 0.0, 0.0]));
        let v2 = plane_wave(w, &z2, &V3([0.0, 0.0, 1.0]), &V3([1.0, 0.0, 0.0]));
        let mut a = nalgebra::DMatrix::<nalgebra::Complex<f64>>::identity(6, 6);
        for i in 0..3 {
            for j in 0..3 {
                a[(i, 3 + j)] = b.0[i][j];
                a[(3 + i, j)] = b.0[i][j];
            }
        }
        let rhs = nalgebra::DVector::from_iterator(6, v1.0.iter().chain(v2.0.iter()).copied());
        let x = a.lu().solve(&rhs).unwrap();
        for i in 0..3 {
            assert!((sol.q[0][i] - x[i]).norm() < 1e-12);
            assert!((sol.q[1][i] - x[3 + i]).norm() < 1e-12);
        }
    }

    #[test]
    fn foldy_far_pair_decouples() {
        let w = 1.5;
        let gap = |d: f64| {
            let m = model(vec![V3([0.0; 3]), V3([d, 0.0, 0.0])], 1e-3);
            let sol = m.foldy_solve(w, false).unwrap();
            (sol.q[0] - sol.rhs[0]).max_abs()
        };
        let (g1, g2) = (gap(0.1), gap(0.2));
        assert!(g2 < g1 / 4.0, "{g1} {g2}");
    }

    #[test]
    fn zero_contrast_scatters_nothing() {
        let mut s = scene(vec![V3([0.0; 3]), V3([0.3, 0.0, 0.0])], cplx(2.0, 0.0), 0.0);
        s.lorentz = LorentzModel::new(2.0, 0.0, 1.0, 0.0).unwrap();
        let m = ForwardModel::homogeneous(s, unit_ball_eigen_data(1).unwrap()).unwrap();
        let sol = m.foldy_solve(1.3, false).unwrap();
        assert_eq!(m.foldy_scattered(&sol, &V3([0.5, 0.5, 0.5])).unwrap(), V3::zero());
    }

    #[test]
    fn dominance_examples() {
        let single = model(vec![V3([0.0; 3])], 1e-3);
        assert!(single.check_dominance(1.5).unwrap().passed);
        let far = model(vec![V3([0.0; 3]), V3([0.5, 0.0, 0.0])], 1e-3);
        let r = far.check_dominance(1.5).unwrap();
        assert!(r.passed && r.row_sums.iter().all(|&s| s < 1e-3));

        let close = model(vec![V3([0.0; 3]), V3([0.025, 0.0, 0.0])], 1e-3);
        let wp = close.resonance(0).unwrap();
        let r = close.check_dominance(wp).unwrap();
        assert!(!r.passed, "{:?}", r.row_sums);
        assert!(matches!(
            close.foldy_solve(wp, false),
            Err(Error::DominanceViolation { .. })
        ));
        assert!(close.foldy_solve(wp, true).is_ok());
    }

    #[test]
    fn simulate_rows_are_cumulative() {
        let m = model(vec![V3([0.0; 3]), V3([0.3, 0.0, 0.0]), V3([-0.3, 0.1, 0.0])], 1e-3);
        let omegas = [1.05, 1.1, 1.2];
        let s = m.simulate(&omegas, &SimulationOptions::default()).unwrap();
        assert!(s.contrasts[0].iter().all(|c| *c == cplx(0.0, 0.0)));
        for (i, &w) in omegas.iter().enumerate() {
            assert_eq!(s.contrasts[2][i], m.first(2).backscatter(w).unwrap());
            assert_eq!(s.contrasts[3][i], m.backscatter(w).unwrap());
        }
        let noisy = |seed| {
            let opts = SimulationOptions { noise: Some(NoiseSpec { relative: 0.01, seed }), ..Default::default() };
            m.simulate(&omegas, &opts).unwrap()
        };
        assert_eq!(noisy(7).contrasts, noisy(7).contrasts);
        assert_ne!(noisy(7).contrasts, noisy(8).contrasts);
        assert!(noisy(7).contrasts[0].iter().all(|c| *c == cplx(0.0, 0.0)));
    }

    #[test]
    fn heterogeneous_background_reduces_to_plane_wave() {
        let mut s = scene(vec![V3([0.05, 0.0, 0.0])], cplx(1.0, 0.0), 1e-3);
        s.background.eps0 = PermittivitySpec::Constant(cplx(1.0, 0.0));
        let bg = Arc::new(crate::greens::BornBackground { field: s.background.clone(), resolution: 4, born_order: 2 });
        let het = ForwardModel::new(s.clone(), unit_ball_eigen_data(1).unwrap(), bg).unwrap();
        let hom = ForwardModel::homogeneous(s, unit_ball_eigen_data(1).unwrap()).unwrap();
        assert!(rel(het.backscatter(1.1).unwrap(), hom.backscatter(1.1).unwrap()) < 1e-14);
    }
}

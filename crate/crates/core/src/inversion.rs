//! Imaging from sequential particle injections: per-particle functionals,
//! resonance peak location, point-wise permittivity recovery and
//! dual-reciprocity interpolation over the domain.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::forward::ForwardModel;
use crate::linalg::{DenseMatrix, Vec3, V3};
use crate::media::{AxisBox, LorentzModel};
use crate::resonance::{recover_permittivity, Dispersion};
use crate::scalar::{creal, four_pi, Real, C};

/// Scene quantities needed to turn contrasts into imaging functionals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneMeta<T> {
    pub a: T,
    pub mu: T,
    pub lambda: T,
    pub n0: usize,
    pub theta: Vec3<T>,
    pub q: Vec3<T>,
}

/// Back-scattered contrasts indexed by injection count and frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSeries<T> {
    pub omegas: Vec<T>,
    /// `contrasts[ℓ][i]` with the first `ℓ` particles present at `omegas[i]`.
    pub contrasts: Vec<Vec<C<T>>>,
    pub meta: SceneMeta<T>,
}

impl<T: Real> MeasurementSeries<T> {
    pub fn new(omegas: Vec<T>, contrasts: Vec<Vec<C<T>>>, meta: SceneMeta<T>) -> Result<Self> {
        if omegas.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter(
                "frequencies must be strictly increasing".into(),
            ));
        }
        if contrasts.is_empty() {
            return Err(Error::MissingInjectionLevel(0));
        }
        if contrasts.iter().any(|row| row.len() != omegas.len()) {
            return Err(Error::InvalidParameter(
                "every injection level needs one value per frequency".into(),
            ));
        }
        if contrasts[0].iter().any(|c| c.norm() != T::zero()) {
            return Err(Error::InvalidParameter(
                "baseline (zero-injection) contrasts must vanish".into(),
            ));
        }
        Ok(Self {
            omegas,
            contrasts,
            meta,
        })
    }

    /// Assembles a series from `(ℓ, ω, value)` rows in any order.
    pub fn from_rows(rows: &[(usize, T, C<T>)], meta: SceneMeta<T>) -> Result<Self> {
        let mut omegas: Vec<T> = rows.iter().map(|r| r.1).collect();
        omegas.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        omegas.dedup();
        let levels = rows.iter().map(|r| r.0).max().map_or(0, |m| m + 1);
        let mut table: Vec<Vec<Option<C<T>>>> = vec![vec![None; omegas.len()]; levels];
        for &(l, w, v) in rows {
            let i = omegas.iter().position(|&x| x == w).unwrap();
            if table[l][i].replace(v).is_some() {
                return Err(Error::InvalidParameter(format!(
                    "duplicate row for level {l} at omega {w}"
                )));
            }
        }
        let mut contrasts = Vec::with_capacity(levels);
        for (l, row) in table.into_iter().enumerate() {
            contrasts.push(
                row.into_iter()
                    .collect::<Option<Vec<_>>>()
                    .ok_or(Error::MissingInjectionLevel(l))?,
            );
        }
        Self::new(omegas, contrasts, meta)
    }

    /// Rows `(ℓ, ω, value)` sorted by `(ℓ, ω)`.
    pub fn rows(&self) -> Vec<(usize, T, C<T>)> {
        self.contrasts
            .iter()
            .enumerate()
            .flat_map(|(l, row)| self.omegas.iter().zip(row).map(move |(&w, &v)| (l, w, v)))
            .collect()
    }

    /// Number of injected particles `ℵ`.
    pub fn particle_count(&self) -> usize {
        self.contrasts.len().saturating_sub(1)
    }

    /// Multiplies every contrast by `c`.
    pub fn scaled(&self, c: C<T>) -> Self {
        let mut out = self.clone();
        out.contrasts.iter_mut().flatten().for_each(|v| *v = *v * c);
        out
    }
}

/// `𝒥(ω, z_j)` sampled on the measurement grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagingFunctional<T> {
    pub particle_index: usize,
    pub values: Vec<C<T>>,
}

/// `𝒥_j = −(4πλ/(μa³))·[contrast(j) − contrast(j−1)]` for `j = 1..=ℵ`.
pub fn extract_functionals<T: Real>(meas: &MeasurementSeries<T>) -> Result<Vec<ImagingFunctional<T>>> {
    let m = &meas.meta;
    if meas.contrasts.len() < 2 {
        return Err(Error::MissingInjectionLevel(1));
    }
    let pre = -four_pi::<T>() * m.lambda / (m.mu * m.a * m.a * m.a);
    Ok((1..meas.contrasts.len())
        .map(|j| ImagingFunctional {
            particle_index: j - 1,
            values: meas.contrasts[j]
                .iter()
                .zip(&meas.contrasts[j - 1])
                .map(|(a, b)| (*a - *b) * pre)
                .collect(),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakOptions {
    /// Quadratic refinement of `log|𝒥|` around the grid maximum.
    pub refine: bool,
    /// Moving median (window 5) over `|𝒥|` before the search.
    pub prefilter: bool,
}

impl Default for PeakOptions {
    fn default() -> Self {
        Self {
            refine: true,
            prefilter: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakEstimate<T> {
    pub omega_hat: T,
    /// Half-width of the confidence window (one grid step).
    pub window: T,
    pub index: usize,
    pub peak_height: T,
    /// The maximum sits on the first or last grid point.
    pub boundary: bool,
}

fn median<T: Real>(xs: &mut [T]) -> T {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) * T::lit(0.5)
    }
}

/// Moving median with a centered window, shrunk at the ends.
pub fn moving_median<T: Real>(xs: &[T], window: usize) -> Vec<T> {
    let half = window / 2;
    (0..xs.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(xs.len());
            median(&mut xs[lo..hi].to_vec())
        })
        .collect()
}

/// Locates the maximum of `|values|` over `omegas`.
pub fn peak_detect<T: Real>(omegas: &[T], values: &[C<T>], opts: &PeakOptions) -> Result<PeakEstimate<T>> {
    let n = omegas.len();
    if n < 5 || values.len() != n {
        return Err(Error::InvalidParameter(
            "peak detection needs at least 5 matching samples".into(),
        ));
    }
    let mut mag: Vec<T> = values.iter().map(|v| v.norm()).collect();
    if mag.iter().any(|m| !m.is_finite()) {
        return Err(Error::NonFinite("imaging functional".into()));
    }
    if opts.prefilter {
        mag = moving_median(&mag, 5);
    }
    let (index, peak) = mag
        .iter()
        .enumerate()
        .fold((0, T::neg_infinity()), |acc, (i, &m)| if m > acc.1 { (i, m) } else { acc });
    let med = median(&mut mag.clone());
    let ratio = if med > T::zero() { peak / med } else if peak > T::zero() { T::infinity() } else { T::zero() };
    if !(ratio >= T::lit(10.0)) {
        return Err(Error::FlatSignal {
            ratio: ratio.as_f64(),
        });
    }
    let boundary = index == 0 || index == n - 1;
    let window = if boundary {
        omegas[1] - omegas[0]
    } else {
        T::lit(0.5) * (omegas[index + 1] - omegas[index - 1])
    };
    let mut omega_hat = omegas[index];
    if opts.refine && !boundary && mag[index - 1] > T::zero() && mag[index + 1] > T::zero() {
        let (x0, x1, x2) = (omegas[index - 1], omegas[index], omegas[index + 1]);
        let (y0, y1, y2) = (mag[index - 1].ln(), peak.ln(), mag[index + 1].ln());
        let d01 = (y1 - y0) / (x1 - x0);
        let d12 = (y2 - y1) / (x2 - x1);
        let curv = (d12 - d01) / (x2 - x0);
        if curv < T::zero() {
            // vertex of the interpolating parabola
            let v = T::lit(0.5) * (x0 + x1) - d01 / (T::lit(2.0) * curv);
            omega_hat = v.max(x0).min(x2);
        }
    }
    Ok(PeakEstimate {
        omega_hat,
        window,
        index,
        peak_height: peak,
        boundary,
    })
}

/// Outcome of the recovery at one particle.
#[derive(Debug, Clone, PartialEq)]
pub enum RecoveryFlag {
    Ok,
    /// Peak on the edge of the sampled band.
    Boundary,
    /// Hypothesis gate tripped for this particle.
    Gated,
    Failed(String),
}

impl RecoveryFlag {
    pub fn is_clear(&self) -> bool {
        matches!(self, RecoveryFlag::Ok)
    }

    pub fn label(&self) -> String {
        match self {
            RecoveryFlag::Ok => "ok".into(),
            RecoveryFlag::Boundary => "boundary".into(),
            RecoveryFlag::Gated => "hypothesis-gate".into(),
            RecoveryFlag::Failed(m) => m.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleRecovery<T> {
    pub index: usize,
    pub z: Vec3<T>,
    pub omega_hat: Option<T>,
    pub eps0: Option<C<T>>,
    pub peak_height: T,
    /// `|Λ(ω̂)|` with the real part of the recovered `ε₀`.
    pub dispersion_residual: Option<T>,
    pub flag: RecoveryFlag,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RecoveryOptions {
    pub peak: PeakOptions,
    pub real_only: bool,
}

/// Peak location and point recovery for each functional; failures are
/// recorded per particle.
pub fn recover_points<T: Real>(
    meas: &MeasurementSeries<T>,
    functionals: &[ImagingFunctional<T>],
    particles: &[Vec3<T>],
    lorentz: &LorentzModel<T>,
    opts: &RecoveryOptions,
) -> Vec<ParticleRecovery<T>> {
    let lambda = meas.meta.lambda;
    functionals
        .iter()
        .map(|f| {
            let j = f.particle_index;
            let z = particles.get(j).copied().unwrap_or(V3([T::nan(); 3]));
            let fail = |flag: String| ParticleRecovery {
                index: j,
                z,
                omega_hat: None,
                eps0: None,
                peak_height: T::zero(),
                dispersion_residual: None,
                flag: RecoveryFlag::Failed(flag),
            };
            let peak = match peak_detect(&meas.omegas, &f.values, &opts.peak) {
                Ok(p) => p,
                Err(e @ Error::FlatSignal { .. }) => return fail(format!("flat-signal: {e}")),
                Err(e) => return fail(e.to_string()),
            };
            let eps0 = match recover_permittivity(peak.omega_hat, lambda, lorentz, opts.real_only) {
                Ok(e) => e,
                Err(e) => return fail(e.to_string()),
            };
            let residual = Dispersion::new(creal(eps0.re), lambda, *lorentz)
                .and_then(|d| d.value(peak.omega_hat))
                .map(|l| l.norm())
                .ok();
            ParticleRecovery {
                index: j,
                z,
                omega_hat: Some(peak.omega_hat),
                eps0: Some(eps0),
                peak_height: peak.peak_height,
                dispersion_residual: residual,
                flag: if peak.boundary {
                    RecoveryFlag::Boundary
                } else {
                    RecoveryFlag::Ok
                },
            }
        })
        .collect()
}

/// Radial basis used by the dual reciprocity interpolant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DrmBasis<T> {
    /// `1 + r`.
    Linear,
    /// `exp(−r²/σ²)`; `None` picks the mean nearest-neighbour center spacing.
    Gaussian { sigma: Option<T> },
    /// `r² ln r`, zero at `r = 0`.
    ThinPlate,
}

impl<T: Real> DrmBasis<T> {
    pub fn eval(&self, r: T) -> T {
        match *self {
            DrmBasis::Linear => T::one() + r,
            DrmBasis::Gaussian { sigma } => {
                let s = sigma.unwrap_or(T::one());
                (-(r * r) / (s * s)).exp()
            }
            DrmBasis::ThinPlate => {
                if r > T::zero() {
                    r * r * r.ln()
                } else {
                    T::zero()
                }
            }
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            DrmBasis::Linear => "linear",
            DrmBasis::Gaussian { .. } => "gaussian",
            DrmBasis::ThinPlate => "thin_plate_spline",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrmOptions<T> {
    pub basis: DrmBasis<T>,
    pub seed: u64,
    /// Place the centers on the data nodes instead of drawing them.
    pub centers_at_nodes: bool,
}

impl<T: Real> Default for DrmOptions<T> {
    fn default() -> Self {
        Self {
            basis: DrmBasis::ThinPlate,
            seed: 0,
            centers_at_nodes: false,
        }
    }
}

/// `ε₀(z) ≈ Σ_k β_k f_k(z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DrmInterpolant<T> {
    /// Basis with any default width resolved.
    pub basis: DrmBasis<T>,
    pub centers: Vec<Vec3<T>>,
    pub beta: Vec<C<T>>,
    pub seed: u64,
    /// 1-norm condition number of the collocation matrix.
    pub condition: T,
    pub domain: AxisBox<T>,
}

/// Draws `n` points uniformly in the box from `seed`.
pub fn random_centers<T: Real>(domain: &AxisBox<T>, n: usize, seed: u64) -> Vec<Vec3<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            V3(std::array::from_fn(|ax| {
                let u: f64 = rng.gen();
                domain.min[ax] + (domain.max[ax] - domain.min[ax]) * T::lit(u)
            }))
        })
        .collect()
}

fn mean_nearest_spacing<T: Real>(pts: &[Vec3<T>]) -> Option<T> {
    if pts.len() < 2 {
        return None;
    }
    let total = pts.iter().enumerate().fold(T::zero(), |s, (i, p)| {
        let nearest = pts
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .fold(T::infinity(), |m, (_, q)| m.min(p.distance(q)));
        s + nearest
    });
    Some(total / T::from_count(pts.len()))
}

/// Square collocation fit of nodal values.
pub fn drm_fit<T: Real>(
    nodes: &[(Vec3<T>, C<T>)],
    domain: &AxisBox<T>,
    opts: &DrmOptions<T>,
) -> Result<DrmInterpolant<T>> {
    let n = nodes.len();
    if n == 0 {
        return Err(Error::InvalidParameter("interpolation needs at least one node".into()));
    }
    for (i, (zi, _)) in nodes.iter().enumerate() {
        if !domain.contains(zi) {
            return Err(Error::OutOfDomain {
                point: [zi[0].as_f64(), zi[1].as_f64(), zi[2].as_f64()],
            });
        }
        if nodes[..i].iter().any(|(zj, _)| zj.distance(zi) == T::zero()) {
            return Err(Error::InvalidParameter("interpolation nodes must be distinct".into()));
        }
    }
    let centers = if opts.centers_at_nodes {
        nodes.iter().map(|(z, _)| *z).collect()
    } else {
        random_centers(domain, n, opts.seed)
    };
    let basis = match opts.basis {
        DrmBasis::Gaussian { sigma: None } => DrmBasis::Gaussian {
            sigma: Some(mean_nearest_spacing(&centers).unwrap_or_else(|| {
                let e = domain.extent();
                (e[0] + e[1] + e[2]) / T::lit(3.0)
            })),
        },
        b => b,
    };
    let a = DenseMatrix::from_fn(n, n, |j, k| creal(basis.eval(nodes[j].0.distance(&centers[k]))));
    let lu = a.lu()?;
    let condition = a.norm_1() * lu.inverse().norm_1();
    if !(condition <= T::lit(1e12)) {
        return Err(Error::IllConditioned {
            cond: condition.as_f64(),
        });
    }
    let rhs: Vec<C<T>> = nodes.iter().map(|(_, v)| *v).collect();
    let beta = lu.solve(&rhs);
    Ok(DrmInterpolant {
        basis,
        centers,
        beta,
        seed: opts.seed,
        condition,
        domain: *domain,
    })
}

impl<T: Real> DrmInterpolant<T> {
    pub fn eval(&self, z: &Vec3<T>) -> Result<C<T>> {
        drm_eval(self, z)
    }
}

pub fn drm_eval<T: Real>(interp: &DrmInterpolant<T>, z: &Vec3<T>) -> Result<C<T>> {
    if !interp.domain.contains(z) {
        return Err(Error::OutOfDomain {
            point: [z[0].as_f64(), z[1].as_f64(), z[2].as_f64()],
        });
    }
    Ok(interp
        .centers
        .iter()
        .zip(&interp.beta)
        .fold(creal(T::zero()), |s, (x, b)| s + *b * interp.basis.eval(z.distance(x))))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateRecord<T> {
    pub index: usize,
    /// `|V(z_j)ᵀ·gram·V(z_j)|^{1/2}`.
    pub value: T,
    pub flagged: bool,
}

/// Flags particles where the background field barely excites the mode.
pub fn hypothesis_gate<T: Real>(model: &ForwardModel<T>, omega: T, threshold: T) -> Result<Vec<GateRecord<T>>> {
    Ok(model
        .excitation(omega)?
        .into_iter()
        .enumerate()
        .map(|(index, value)| GateRecord {
            index,
            value,
            flagged: value < threshold,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InversionOptions<T> {
    pub recovery: RecoveryOptions,
    pub drm: DrmOptions<T>,
}

impl<T: Real> Default for InversionOptions<T> {
    fn default() -> Self {
        Self {
            recovery: RecoveryOptions::default(),
            drm: DrmOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction<T> {
    pub particles: Vec<ParticleRecovery<T>>,
    /// Fitted over the particles with a recovered value; `None` if none.
    pub interpolant: Option<DrmInterpolant<T>>,
}

/// Functionals, peaks, point values and the interpolant in one pass.
pub fn invert<T: Real>(
    meas: &MeasurementSeries<T>,
    particles: &[Vec3<T>],
    lorentz: &LorentzModel<T>,
    domain: &AxisBox<T>,
    opts: &InversionOptions<T>,
) -> Result<Reconstruction<T>> {
    if particles.len() != meas.particle_count() {
        return Err(Error::InvalidParameter(format!(
            "{} particle positions for {} injection levels",
            particles.len(),
            meas.particle_count()
        )));
    }
    let functionals = extract_functionals(meas)?;
    let recs = recover_points(meas, &functionals, particles, lorentz, &opts.recovery);
    let nodes: Vec<(Vec3<T>, C<T>)> = recs
        .iter()
        .filter_map(|r| r.eps0.map(|e| (r.z, e)))
        .collect();
    let interpolant = if nodes.is_empty() {
        None
    } else {
        Some(drm_fit(&nodes, domain, &opts.drm)?)
    };
    Ok(Reconstruction {
        particles: recs,
        interpolant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::cplx;

    fn meta() -> SceneMeta<f64> {
        SceneMeta {
            a: 1e-2,
            mu: 1.0,
            lambda: 1.0 / 3.0,
            n0: 1,
            theta: V3([0.0, 0.0, 1.0]),
            q: V3([1.0, 0.0, 0.0]),
        }
    }

    fn lorentz(g: f64) -> LorentzModel<f64> {
        LorentzModel::new(1.0, 1.0, 1.0, g).unwrap()
    }

    #[test]
    fn series_rows_round_trip_and_missing_level() {
        let omegas = vec![1.1, 1.2, 1.3];
        let c = vec![vec![cplx(0.0, 0.0); 3], vec![cplx(1.0, 2.0), cplx(3.0, 4.0), cplx(5.0, 6.0)]];
        let s = MeasurementSeries::new(omegas, c, meta()).unwrap();
        let mut rows = s.rows();
        rows.reverse();
        assert_eq!(MeasurementSeries::from_rows(&rows, meta()).unwrap(), s);
        let no_base: Vec<_> = rows.iter().copied().filter(|r| r.0 != 0).collect();
        assert_eq!(
            MeasurementSeries::from_rows(&no_base, meta()),
            Err(Error::MissingInjectionLevel(0))
        );
        assert!(Error::MissingInjectionLevel(0).to_string().contains("missing-injection-level"));
    }

    #[test]
    fn functionals_difference_and_scaling() {
        let omegas = vec![1.1, 1.2];
        let row = vec![cplx(1.0, 0.5), cplx(-2.0, 0.1)];
        let c = vec![vec![cplx(0.0, 0.0); 2], row.clone(), row.clone()];
        let s = MeasurementSeries::new(omegas, c, meta()).unwrap();
        let f = extract_functionals(&s).unwrap();
        assert!(f[1].values.iter().all(|v| v.norm() == 0.0));
        let mut big = s.clone();
        big.meta.a *= 2.0;
        let g = extract_functionals(&big).unwrap();
        for (x, y) in f[0].values.iter().zip(&g[0].values) {
            assert!((*x - *y * 8.0).norm() < 1e-9 * x.norm());
        }
    }

    #[test]
    fn peak_on_grid_and_flat() {
        let d = Dispersion::new(cplx(2.0, 0.0), 1.0 / 3.0, lorentz(0.0)).unwrap();
        let wp = d.resonance().unwrap();
        let step = 1e-3;
        let omegas: Vec<f64> = (-50..=50).map(|i| wp + step * i as f64).collect();
        // γ = 0 makes |1/Λ| infinite at ω_P; evaluate a damped copy instead
        let dd = Dispersion::new(cplx(2.0, 0.0), 1.0 / 3.0, lorentz(1e-6)).unwrap();
        let vals: Vec<_> = omegas.iter().map(|&w| creal(1.0) / dd.value(w).unwrap()).collect();
        let p = peak_detect(&omegas, &vals, &PeakOptions { refine: false, prefilter: false }).unwrap();
        assert_eq!(p.omega_hat, omegas[50]);
        assert!(!p.boundary);
        let zero = vec![cplx(0.0, 0.0); omegas.len()];
        assert!(matches!(
            peak_detect(&omegas, &zero, &PeakOptions::default()),
            Err(Error::FlatSignal { .. })
        ));
    }

    #[test]
    fn refinement_exact_for_gaussian_and_helps_lorentzian() {
        let c = 1.23456;
        let omegas: Vec<f64> = (0..41).map(|i| 1.0 + 0.01 * i as f64).collect();
        let vals: Vec<_> = omegas.iter().map(|&w| creal((-((w - c) / 0.02).powi(2)).exp())).collect();
        let p = peak_detect(&omegas, &vals, &PeakOptions::default()).unwrap();
        assert!((p.omega_hat - c).abs() < 1e-12, "{}", p.omega_hat);

        let d = Dispersion::new(cplx(2.0, 0.0), 1.0 / 3.0, lorentz(1e-3)).unwrap();
        let target = (0..200_001)
            .map(|i| 1.09 + 1e-7 * i as f64)
            .min_by(|&a, &b| d.value(a).unwrap().norm().total_cmp(&d.value(b).unwrap().norm()))
            .unwrap();
        let omegas: Vec<f64> = (0..201).map(|i| target - 0.1003 + 1e-3 * i as f64).collect();
        let vals: Vec<_> = omegas.iter().map(|&w| creal(1.0) / d.value(w).unwrap()).collect();
        let coarse = peak_detect(&omegas, &vals, &PeakOptions { refine: false, prefilter: false }).unwrap();
        let fine = peak_detect(&omegas, &vals, &PeakOptions::default()).unwrap();
        assert!((fine.omega_hat - target).abs() < 0.5 * (coarse.omega_hat - target).abs());
    }

    #[test]
    fn boundary_peak_is_flagged() {
        let omegas: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let vals: Vec<_> = (0..20).map(|i| creal(if i == 19 { 100.0 } else { 1.0 })).collect();
        assert!(peak_detect(&omegas, &vals, &PeakOptions::default()).unwrap().boundary);
    }

    #[test]
    fn prefilter_rejects_isolated_spike() {
        let omegas: Vec<f64> = (0..101).map(|i| i as f64).collect();
        let vals: Vec<_> = (0..101)
            .map(|i| {
                let base = 100.0 / (1.0 + ((i as f64 - 60.0) / 3.0).powi(2));
                creal(if i == 20 { 1e4 } else { base })
            })
            .collect();
        let raw = peak_detect(&omegas, &vals, &PeakOptions { refine: false, prefilter: false }).unwrap();
        let med = peak_detect(&omegas, &vals, &PeakOptions { refine: false, prefilter: true }).unwrap();
        assert_eq!(raw.index, 20);
        assert!(med.index.abs_diff(60) <= 1);
    }

    #[test]
    fn drm_scalar_linear_case() {
        let dom = AxisBox::centered_cube(1.0);
        let z = V3([0.2, 0.1, -0.3]);
        let v = cplx(2.5, 0.1);
        let f = drm_fit(&[(z, v)], &dom, &DrmOptions { basis: DrmBasis::Linear, seed: 3, centers_at_nodes: false }).unwrap();
        let x = f.centers[0];
        assert!((f.beta[0] - v / (1.0 + z.distance(&x))).norm() < 1e-15);
        assert!((f.eval(&z).unwrap() - v).norm() < 1e-14);
        assert!(matches!(f.eval(&V3([2.0, 0.0, 0.0])), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn drm_thin_plate_zero_at_center() {
        assert_eq!(DrmBasis::<f64>::ThinPlate.eval(0.0), 0.0);
        assert!((DrmBasis::<f64>::ThinPlate.eval(2.0) - 4.0 * 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn drm_reproduces_single_basis_function() {
        let dom = AxisBox::centered_cube(1.0);
        let pts = random_centers(&dom, 6, 11);
        let basis = DrmBasis::Gaussian { sigma: Some(0.7) };
        let k0 = 2;
        let nodes: Vec<_> = pts.iter().map(|z| (*z, creal(basis.eval(z.distance(&pts[k0]))))).collect();
        let f = drm_fit(&nodes, &dom, &DrmOptions { basis, seed: 0, centers_at_nodes: true }).unwrap();
        for (k, b) in f.beta.iter().enumerate() {
            let e = if k == k0 { 1.0 } else { 0.0 };
            assert!((*b - creal(e)).norm() < 1e-8, "{k}: {b}");
        }
    }

    #[test]
    fn drm_seed_determinism_and_conditioning() {
        let dom = AxisBox::centered_cube(1.0);
        assert_eq!(random_centers(&dom, 4, 9), random_centers::<f64>(&dom, 4, 9));
        assert_ne!(random_centers(&dom, 4, 9), random_centers::<f64>(&dom, 4, 10));
        let mut pts = random_centers(&dom, 5, 1);
        pts[4] = pts[3] + V3([1e-9, 0.0, 0.0]);
        let nodes: Vec<_> = pts.into_iter().map(|z| (z, creal(z[0]))).collect();
        let opts = DrmOptions { basis: DrmBasis::Gaussian { sigma: Some(1.0) }, seed: 1, centers_at_nodes: true };
        assert!(matches!(drm_fit(&nodes, &dom, &opts), Err(Error::IllConditioned { .. } | Error::SingularMatrix(_))));
        let spread: Vec<_> = random_centers(&dom, 5, 1).into_iter().map(|z| (z, creal(z[0]))).collect();
        let ok = drm_fit(&spread, &dom, &DrmOptions { basis: DrmBasis::Gaussian { sigma: None }, ..opts }).unwrap();
        assert!(matches!(ok.basis, DrmBasis::Gaussian { sigma: Some(s) } if s > 0.0));
    }

    #[test]
    fn lossless_recovery_exact_on_grid() {
        let d = Dispersion::new(cplx(2.0, 0.0), 1.0 / 3.0, lorentz(0.0)).unwrap();
        let wp = d.resonance().unwrap();
        let omegas: Vec<f64> = (-20..=20).map(|i| wp + 1e-3 * i as f64).collect();
        let dd = Dispersion::new(cplx(2.0, 0.0), 1.0 / 3.0, lorentz(1e-9)).unwrap();
        let row: Vec<_> = omegas.iter().map(|&w| creal(-1e-6) / dd.value(w).unwrap()).collect();
        let s = MeasurementSeries::new(omegas.clone(), vec![vec![creal(0.0); omegas.len()], row], meta()).unwrap();
        let f = extract_functionals(&s).unwrap();
        let opts = RecoveryOptions { peak: PeakOptions { refine: false, prefilter: false }, real_only: false };
        let r = recover_points(&s, &f, &[V3([0.0; 3])], &lorentz(0.0), &opts);
        assert!((r[0].eps0.unwrap() - cplx(2.0, 0.0)).norm() < 1e-10);
        assert!(r[0].flag.is_clear());
    }

    #[test]
    fn zeroed_row_fails_only_that_particle() {
        let d = Dispersion::new(cplx(2.0, 0.0), 1.0 / 3.0, lorentz(1e-3)).unwrap();
        let omegas: Vec<f64> = (0..200).map(|i| 1.01 + 0.005 * i as f64).collect();
        let peak: Vec<_> = omegas.iter().map(|&w| creal(1e-6) / d.value(w).unwrap()).collect();
        let c = vec![vec![creal(0.0); 200], peak.clone(), peak.clone(), peak.iter().map(|v| *v * 2.0).collect()];
        let s = MeasurementSeries::new(omegas, c, meta()).unwrap();
        let f = extract_functionals(&s).unwrap();
        let pts = [V3([0.0; 3]), V3([0.1, 0.0, 0.0]), V3([0.2, 0.0, 0.0])];
        let r = recover_points(&s, &f, &pts, &lorentz(1e-3), &RecoveryOptions::default());
        assert!(r[0].flag.is_clear() && r[2].flag.is_clear());
        assert!(matches!(&r[1].flag, RecoveryFlag::Failed(m) if m.starts_with("flat-signal")));
    }
}

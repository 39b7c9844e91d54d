//! Lorentz dispersion of the injected particles, the background permittivity
//! inside the imaging domain, and scene-level admissibility checks.

use crate::error::{Error, Result};
use crate::linalg::{Vec3, V3};
use crate::scalar::{cplx, creal, Real, C};

/// Lorentz permittivity model `ε_p(ω) = ε∞(1 + ω_p²/(ω₀² − ω² − iγω))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorentzModel<T> {
    pub eps_inf: T,
    pub omega_p: T,
    pub omega_0: T,
    pub gamma: T,
}

impl<T: Real> LorentzModel<T> {
    pub fn new(eps_inf: T, omega_p: T, omega_0: T, gamma: T) -> Result<Self> {
        let m = Self {
            eps_inf,
            omega_p,
            omega_0,
            gamma,
        };
        m.check()?;
        Ok(m)
    }

    fn check(&self) -> Result<()> {
        if !(self.eps_inf > T::zero()) {
            return Err(Error::InvalidParameter("eps_inf must be positive".into()));
        }
        if self.omega_p < T::zero() || self.omega_0 < T::zero() || self.gamma < T::zero() {
            return Err(Error::InvalidParameter(
                "omega_p, omega_0 and gamma must be nonnegative".into(),
            ));
        }
        Ok(())
    }

    /// Evaluates `ε_p(ω)`.
    pub fn permittivity(&self, omega: T) -> Result<C<T>> {
        eval_permittivity(self, omega)
    }
}

/// Lorentz permittivity at angular frequency `omega`.
pub fn eval_permittivity<T: Real>(model: &LorentzModel<T>, omega: T) -> Result<C<T>> {
    if !(omega > T::zero()) {
        return Err(Error::InvalidParameter(format!(
            "frequency must be positive, got {omega}"
        )));
    }
    let denom = cplx(
        model.omega_0 * model.omega_0 - omega * omega,
        -model.gamma * omega,
    );
    let plasma = model.omega_p * model.omega_p;
    if plasma == T::zero() {
        return Ok(creal(model.eps_inf));
    }
    if denom.norm() < T::lit(1e-300).max(T::min_positive_value()) {
        return Err(Error::DegeneratePole {
            omega: omega.as_f64(),
        });
    }
    Ok((creal(plasma) / denom + T::one()) * model.eps_inf)
}

/// Axis-aligned box standing in for the imaging domain Ω.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisBox<T> {
    pub min: Vec3<T>,
    pub max: Vec3<T>,
}

impl<T: Real> AxisBox<T> {
    pub fn new(min: Vec3<T>, max: Vec3<T>) -> Result<Self> {
        if (0..3).any(|i| !(max[i] > min[i])) {
            return Err(Error::InvalidParameter(
                "domain box must have positive extent on every axis".into(),
            ));
        }
        Ok(Self { min, max })
    }

    /// Cube `[-half, half]³`.
    pub fn centered_cube(half: T) -> Self {
        Self {
            min: V3([-half; 3]),
            max: V3([half; 3]),
        }
    }

    pub fn contains(&self, x: &Vec3<T>) -> bool {
        let tol = T::lit(1e-12);
        (0..3).all(|i| x[i] >= self.min[i] - tol && x[i] <= self.max[i] + tol)
    }

    pub fn extent(&self) -> Vec3<T> {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3<T> {
        (self.min + self.max).scale(T::lit(0.5))
    }

    pub fn volume(&self) -> T {
        let e = self.extent();
        e[0] * e[1] * e[2]
    }

    /// Regular `n³` lattice of points including the corners.
    pub fn lattice(&self, n: usize) -> Vec<Vec3<T>> {
        let n = n.max(2);
        let e = self.extent();
        let step = |i: usize, ax: usize| {
            self.min[ax] + e[ax] * T::from_count(i) / T::from_count(n - 1)
        };
        let mut pts = Vec::with_capacity(n * n * n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    pts.push(V3([step(i, 0), step(j, 1), step(k, 2)]));
                }
            }
        }
        pts
    }
}

/// One monomial term `coef · x^a y^b z^c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Monomial<T> {
    pub coef: C<T>,
    pub powers: [u32; 3],
}

/// How `ε₀` is specified over Ω.
#[derive(Debug, Clone, PartialEq)]
pub enum PermittivitySpec<T> {
    Constant(C<T>),
    Polynomial(Vec<Monomial<T>>),
    /// Nodal values on a regular grid spanning the domain box (corners
    /// included), indexed `[(i·ny + j)·nz + k]`.
    Grid { dims: [usize; 3], values: Vec<C<T>> },
}

/// Permittivity and permeability of the unperturbed medium.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundField<T> {
    /// Permittivity outside Ω.
    pub eps_inf_bg: T,
    /// Permeability, constant everywhere.
    pub mu: T,
    pub eps0: PermittivitySpec<T>,
    pub omega_domain: AxisBox<T>,
}

fn powi<T: Real>(x: T, p: u32) -> T {
    (0..p).fold(T::one(), |acc, _| acc * x)
}

impl<T: Real> BackgroundField<T> {
    pub fn homogeneous(eps0: C<T>, domain: AxisBox<T>) -> Self {
        Self {
            eps_inf_bg: T::one(),
            mu: T::one(),
            eps0: PermittivitySpec::Constant(eps0),
            omega_domain: domain,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps_inf_bg > T::zero()) || !(self.mu > T::zero()) {
            return Err(Error::InvalidParameter(
                "background eps_inf and mu must be positive".into(),
            ));
        }
        if let PermittivitySpec::Grid { dims, values } = &self.eps0 {
            if dims.iter().any(|&d| d < 2) || values.len() != dims[0] * dims[1] * dims[2] {
                return Err(Error::InvalidParameter(
                    "grid permittivity needs at least 2 nodes per axis and matching values".into(),
                ));
            }
        }
        Ok(())
    }

    /// Wavenumber of the exterior medium, `k = ω√(ε∞μ)`.
    pub fn wavenumber(&self, omega: T) -> T {
        omega * (self.eps_inf_bg * self.mu).sqrt()
    }

    /// Refractive index `n₀ = √(ε μ)` at `x` (exterior value outside Ω).
    pub fn refractive_index(&self, x: &Vec3<T>) -> C<T> {
        if self.omega_domain.contains(x) {
            match self.eval(x) {
                Ok(e) => (e * self.mu).sqrt(),
                Err(_) => creal((self.eps_inf_bg * self.mu).sqrt()),
            }
        } else {
            creal((self.eps_inf_bg * self.mu).sqrt())
        }
    }

    /// `ε₀(x)` for `x ∈ Ω`.
    pub fn eval(&self, x: &Vec3<T>) -> Result<C<T>> {
        if !self.omega_domain.contains(x) {
            return Err(Error::OutOfDomain {
                point: [x[0].as_f64(), x[1].as_f64(), x[2].as_f64()],
            });
        }
        Ok(match &self.eps0 {
            PermittivitySpec::Constant(c) => *c,
            PermittivitySpec::Polynomial(terms) => terms.iter().fold(C::new(T::zero(), T::zero()), |acc, m| {
                acc + m.coef * (powi(x[0], m.powers[0]) * powi(x[1], m.powers[1]) * powi(x[2], m.powers[2]))
            }),
            PermittivitySpec::Grid { dims, values } => self.trilinear(dims, values, x),
        })
    }

    /// `∇ε₀(x)`: analytic for polynomials, central differences with the
    /// grid step for sampled fields, zero for constants.
    pub fn gradient(&self, x: &Vec3<T>) -> Result<V3<C<T>>> {
        self.eval(x)?;
        let zero = C::new(T::zero(), T::zero());
        Ok(match &self.eps0 {
            PermittivitySpec::Constant(_) => V3([zero; 3]),
            PermittivitySpec::Polynomial(terms) => {
                let mut g = V3([zero; 3]);
                for m in terms {
                    for ax in 0..3 {
                        let p = m.powers[ax];
                        if p == 0 {
                            continue;
                        }
                        let mut f = T::from_count(p as usize);
                        for (b, &q) in m.powers.iter().enumerate() {
                            f *= powi(x[b], if b == ax { q - 1 } else { q });
                        }
                        g[ax] += m.coef * f;
                    }
                }
                g
            }
            PermittivitySpec::Grid { dims, values } => {
                let e = self.omega_domain.extent();
                let mut g = V3([zero; 3]);
                for ax in 0..3 {
                    let h = e[ax] / T::from_count(dims[ax] - 1);
                    let mut lo = *x;
                    let mut hi = *x;
                    lo[ax] = (x[ax] - h).max(self.omega_domain.min[ax]);
                    hi[ax] = (x[ax] + h).min(self.omega_domain.max[ax]);
                    let span = hi[ax] - lo[ax];
                    g[ax] = (self.trilinear(dims, values, &hi) - self.trilinear(dims, values, &lo)) / span;
                }
                g
            }
        })
    }

    fn trilinear(&self, dims: &[usize; 3], values: &[C<T>], x: &Vec3<T>) -> C<T> {
        let e = self.omega_domain.extent();
        let mut idx = [0usize; 3];
        let mut frac = [T::zero(); 3];
        for ax in 0..3 {
            let cells = dims[ax] - 1;
            let u = ((x[ax] - self.omega_domain.min[ax]) / e[ax] * T::from_count(cells))
                .max(T::zero())
                .min(T::from_count(cells));
            let i = u.floor().to_usize().unwrap_or(0).min(cells - 1);
            idx[ax] = i;
            frac[ax] = u - T::from_count(i);
        }
        let at = |i: usize, j: usize, k: usize| values[(i * dims[1] + j) * dims[2] + k];
        let mut acc = C::new(T::zero(), T::zero());
        for di in 0..2 {
            for dj in 0..2 {
                for dk in 0..2 {
                    let w = [di, dj, dk]
                        .iter()
                        .enumerate()
                        .fold(T::one(), |w, (ax, &d)| {
                            w * if d == 1 { frac[ax] } else { T::one() - frac[ax] }
                        });
                    if w != T::zero() {
                        acc += at(idx[0] + di, idx[1] + dj, idx[2] + dk) * w;
                    }
                }
            }
        }
        acc
    }
}

/// `ε₀(x)` for `x ∈ Ω`.
pub fn eval_background<T: Real>(field: &BackgroundField<T>, x: &Vec3<T>) -> Result<C<T>> {
    field.eval(x)
}

/// Reference particle shape `B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeKind {
    UnitBall,
    /// Voxelized unit ball at the given per-axis resolution, with eigen-data
    /// taken from the discrete magnetization spectrum.
    Voxelized { resolution: usize },
}

/// Incident plane-wave direction and polarization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Incidence<T> {
    pub theta: Vec3<T>,
    pub q: Vec3<T>,
}

impl<T: Real> Incidence<T> {
    /// Propagation along `+ê₃`, polarization `ê₁`.
    pub fn along_z() -> Self {
        Self {
            theta: V3([T::zero(), T::zero(), T::one()]),
            q: V3([T::one(), T::zero(), T::zero()]),
        }
    }
}

/// Frequency interval and sampling. Missing endpoints default to the
/// admissible resonance band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandSpec<T> {
    pub omega_min: Option<T>,
    pub omega_max: Option<T>,
    pub samples: usize,
}

/// Forward model used for a scene; controls which constraints are hard.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScatteringModel {
    #[default]
    Born,
    Foldy,
}

/// Thresholds used by [`validate_scene`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationSettings<T> {
    pub gamma_max: T,
    /// Bound `max |Im ε₀| ≤ c_im · γ`.
    pub c_im: T,
    /// Minimum pair distance is `d_scale · a^t`.
    pub d_scale: T,
}

impl<T: Real> Default for ValidationSettings<T> {
    fn default() -> Self {
        Self {
            gamma_max: T::lit(0.1),
            c_im: T::one(),
            d_scale: T::one(),
        }
    }
}

/// Complete description of one imaging experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene<T> {
    pub background: BackgroundField<T>,
    pub lorentz: LorentzModel<T>,
    pub particles: Vec<Vec3<T>>,
    pub a: T,
    pub t: T,
    pub s: T,
    pub h: T,
    pub shape: ShapeKind,
    pub n0: usize,
    pub incidence: Incidence<T>,
    pub band: BandSpec<T>,
    pub settings: ValidationSettings<T>,
}

impl<T: Real> Scene<T> {
    /// Particle-count bound `⌊a^{-s}⌋`.
    pub fn max_particles(&self) -> usize {
        self.a.powf(-self.s).floor().to_usize().unwrap_or(usize::MAX)
    }

    /// Declared minimum pair distance `d_scale · a^t`.
    pub fn min_distance(&self) -> T {
        self.settings.d_scale * self.a.powf(self.t)
    }

    /// Exponent `h` implied by `γ = a^h` (informational).
    pub fn implied_h(&self) -> T {
        self.lorentz.gamma.ln() / self.a.ln()
    }

    /// `3 − h − 3t − s`.
    pub fn born_margin(&self) -> T {
        T::lit(3.0) - self.h - T::lit(3.0) * self.t - self.s
    }

    /// A copy holding only the first `count` particles.
    pub fn with_first_particles(&self, count: usize) -> Self {
        let mut s = self.clone();
        s.particles.truncate(count);
        s
    }
}

/// Outcome of a single admissibility check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// Failing a hard check fails the scene; soft failures are warnings.
    pub hard: bool,
    pub measured: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed || !c.hard)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed && c.hard)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed && !c.hard)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn into_result(self) -> Result<Self> {
        if self.passed() {
            Ok(self)
        } else {
            let names: Vec<String> = self
                .failures()
                .map(|c| format!("{} ({})", c.name, c.detail))
                .collect();
            Err(Error::InvalidScene(names.join("; ")))
        }
    }
}

/// Checks every geometric, dispersive and scaling constraint on a scene.
pub fn validate_scene<T: Real>(scene: &Scene<T>, model: ScatteringModel) -> ValidationReport {
    let mut checks = Vec::new();
    let mut push = |name, passed, hard, measured: T, detail: String| {
        checks.push(Check {
            name,
            passed,
            hard,
            measured: measured.as_f64(),
            detail,
        })
    };

    let l = &scene.lorentz;
    push(
        "lorentz",
        l.check().is_ok() && l.omega_p > T::zero(),
        true,
        l.omega_p,
        "eps_inf > 0, omega_p > 0, gamma >= 0".into(),
    );
    push(
        "gamma_max",
        l.gamma <= scene.settings.gamma_max,
        true,
        l.gamma,
        format!("gamma <= {}", scene.settings.gamma_max),
    );
    push(
        "background",
        scene.background.validate().is_ok(),
        true,
        scene.background.mu,
        "eps_inf_bg > 0, mu > 0, well-formed eps0".into(),
    );
    push(
        "radius",
        scene.a > T::zero() && scene.a < T::one(),
        true,
        scene.a,
        "0 < a < 1".into(),
    );
    let exps_ok = [scene.t, scene.s, scene.h]
        .iter()
        .all(|&e| e >= T::zero() && e < T::one());
    push(
        "exponents",
        exps_ok,
        true,
        scene.t.max(scene.s).max(scene.h),
        "t, s, h in [0, 1)".into(),
    );
    push(
        "mode_index",
        scene.n0 >= 1,
        true,
        T::from_count(scene.n0),
        "n0 >= 1".into(),
    );

    let outside = scene
        .particles
        .iter()
        .filter(|z| !scene.background.omega_domain.contains(z))
        .count();
    push(
        "particles_in_domain",
        outside == 0,
        true,
        T::from_count(outside),
        "all centers inside the domain box".into(),
    );

    let mut dmin = T::infinity();
    for (i, zi) in scene.particles.iter().enumerate() {
        for zj in &scene.particles[i + 1..] {
            dmin = dmin.min(zi.distance(zj));
        }
    }
    let d_req = scene.min_distance();
    push(
        "separation",
        dmin >= d_req,
        true,
        dmin,
        format!("pairwise distance >= d_min = {d_req}"),
    );

    let cap = scene.max_particles();
    push(
        "particle_count",
        scene.particles.len() <= cap,
        true,
        T::from_count(scene.particles.len()),
        format!("count <= floor(a^-s) = {cap}"),
    );

    let margin = scene.born_margin();
    push(
        "born_regime",
        margin > T::zero(),
        model == ScatteringModel::Born,
        margin,
        "3 - h - 3t - s > 0".into(),
    );

    let inc = &scene.incidence;
    let tol = T::lit(1e-12);
    let unit = (inc.theta.norm() - T::one()).abs() <= tol && (inc.q.norm() - T::one()).abs() <= tol;
    let ortho = inc.theta.dot(&inc.q).abs();
    push(
        "incidence",
        unit && ortho <= tol,
        true,
        ortho,
        "|theta| = |q| = 1 and theta.q = 0".into(),
    );

    let mut samples = scene.background.omega_domain.lattice(9);
    samples.extend(scene.particles.iter().copied().filter(|z| scene.background.omega_domain.contains(z)));
    let mut max_im = T::zero();
    let mut min_re = T::infinity();
    let mut eval_ok = true;
    for x in &samples {
        match scene.background.eval(x) {
            Ok(e) => {
                max_im = max_im.max(e.im.abs());
                min_re = min_re.min(e.re);
            }
            Err(_) => eval_ok = false,
        }
    }
    push(
        "eps0_real_positive",
        eval_ok && min_re > T::zero(),
        true,
        min_re,
        "Re eps0 > 0 over the domain".into(),
    );
    let im_bound = scene.settings.c_im * l.gamma;
    push(
        "eps0_imag_small",
        max_im <= im_bound,
        true,
        max_im,
        format!("max |Im eps0| <= c_im * gamma = {im_bound}"),
    );
    let implied = if l.gamma > T::zero() { scene.implied_h() } else { T::infinity() };
    push(
        "implied_h",
        true,
        false,
        implied,
        "h implied by gamma = a^h (informational)".into(),
    );
    ValidationReport { checks }
}

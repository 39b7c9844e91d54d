//! Dispersion function, closed-form plasmonic resonance, the admissible
//! frequency band and permittivity recovery.

use crate::error::{Error, Result};
use crate::media::{eval_permittivity, LorentzModel};
use crate::scalar::{Real, C};

fn check_lambda<T: Real>(lambda: T) -> Result<()> {
    if lambda > T::zero() && lambda < T::one() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "eigenvalue lambda must lie in (0, 1), got {lambda}"
        )))
    }
}

/// `Λ(ω) = ε₀ − λ(ε₀ − ε_p(ω))` at one particle location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dispersion<T> {
    pub eps0: C<T>,
    pub lambda: T,
    pub lorentz: LorentzModel<T>,
}

impl<T: Real> Dispersion<T> {
    pub fn new(eps0: C<T>, lambda: T, lorentz: LorentzModel<T>) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(Self {
            eps0,
            lambda,
            lorentz,
        })
    }

    pub fn value(&self, omega: T) -> Result<C<T>> {
        dispersion_value(self, omega)
    }

    /// Closed-form resonance frequency.
    pub fn resonance(&self) -> Result<T> {
        plasmonic_resonance(self)
    }
}

pub fn dispersion_value<T: Real>(d: &Dispersion<T>, omega: T) -> Result<C<T>> {
    let ep = eval_permittivity(&d.lorentz, omega)?;
    Ok(d.eps0 - (d.eps0 - ep) * d.lambda)
}

/// Upper root of `Re Λ(ω) = 0`.
pub fn plasmonic_resonance<T: Real>(d: &Dispersion<T>) -> Result<T> {
    check_lambda(d.lambda)?;
    let LorentzModel {
        eps_inf,
        omega_p,
        omega_0,
        gamma,
    } = d.lorentz;
    let lam = d.lambda;
    let denom = d.eps0.re * (T::one() - lam) + lam * eps_inf;
    let scale = d.eps0.re.abs() + eps_inf;
    if denom.abs() <= T::epsilon() * scale {
        return Err(Error::DegenerateDenominator);
    }
    let a = omega_p * omega_p * lam * eps_inf / denom;
    let g2 = gamma * gamma;
    let w02 = omega_0 * omega_0;
    // (A − γ²)² − 4γ²ω₀², algebraically equal to A² − γ²(4ω₀² − γ² + 2A)
    let delta = (a - g2) * (a - g2) - T::lit(4.0) * g2 * w02;
    if delta < T::zero() {
        return Err(Error::Overdamped(delta.as_f64()));
    }
    let wp2 = T::lit(0.5) * (T::lit(2.0) * w02 - g2 + a + delta.sqrt());
    if !(wp2 > T::zero()) {
        return Err(Error::Overdamped(delta.as_f64()));
    }
    Ok(wp2.sqrt())
}

/// Frequency interval `(ω₀, √(ω₀² + ω_p²/λ))` with an open sampling grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResonanceBand<T> {
    pub omega_min: T,
    pub omega_max: T,
    pub n_samples: usize,
}

impl<T: Real> ResonanceBand<T> {
    pub fn new(omega_min: T, omega_max: T, n_samples: usize) -> Result<Self> {
        if !(omega_max > omega_min) || !(omega_min >= T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "band ({omega_min}, {omega_max}) is empty"
            )));
        }
        if n_samples < 2 {
            return Err(Error::InvalidParameter("band needs at least 2 samples".into()));
        }
        Ok(Self {
            omega_min,
            omega_max,
            n_samples,
        })
    }

    pub fn step(&self) -> T {
        (self.omega_max - self.omega_min) / T::from_count(self.n_samples + 1)
    }

    /// `i`-th sample, `i ∈ 0..n_samples`; endpoints are never sampled.
    pub fn sample(&self, i: usize) -> T {
        self.omega_min + self.step() * T::from_count(i + 1)
    }

    pub fn grid(&self) -> Vec<T> {
        (0..self.n_samples).map(|i| self.sample(i)).collect()
    }

    pub fn contains(&self, omega: T) -> bool {
        omega > self.omega_min && omega < self.omega_max
    }
}

pub fn resonance_band<T: Real>(
    lorentz: &LorentzModel<T>,
    lambda: T,
    n_samples: usize,
) -> Result<ResonanceBand<T>> {
    check_lambda(lambda)?;
    if !(lorentz.omega_p > T::zero()) {
        return Err(Error::InvalidParameter("omega_p must be positive".into()));
    }
    let w0 = lorentz.omega_0;
    let top = (w0 * w0 + lorentz.omega_p * lorentz.omega_p / lambda).sqrt();
    ResonanceBand::new(w0, top, n_samples)
}

/// `ε₀ = ε_p(ω̂)·λ/(λ − 1)`. With `real_only` the imaginary part of
/// `ε_p(ω̂)` is discarded first.
pub fn recover_permittivity<T: Real>(
    omega_hat: T,
    lambda: T,
    lorentz: &LorentzModel<T>,
    real_only: bool,
) -> Result<C<T>> {
    if lambda == T::one() {
        return Err(Error::InvalidParameter(
            "lambda = 1 makes the recovery singular".into(),
        ));
    }
    let mut ep = eval_permittivity(lorentz, omega_hat)?;
    if real_only {
        ep.im = T::zero();
    }
    Ok(ep * (lambda / (lambda - T::one())))
}

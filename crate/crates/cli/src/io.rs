//! On-disk formats: measurement CSV, reconstruction file, query points.

use std::path::Path;

use plasmon::inversion::{
    DrmBasis, DrmInterpolant, ImagingFunctional, MeasurementSeries, Reconstruction, SceneMeta,
};
use plasmon::linalg::{Vec3, V3};
use plasmon::media::AxisBox;
use serde::{Deserialize, Serialize};

use crate::CliError;

type C64 = num_complex::Complex<f64>;

/// 17 significant digits: every `f64` survives a write/read cycle.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::config(format!("cannot write {}: {e}", path.display()))
}

fn read_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::config(format!("cannot read {}: {e}", path.display()))
}

pub fn write_measurements(path: &Path, meas: &MeasurementSeries<f64>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| write_err(path, e))?;
    w.write_record(["ell", "omega", "re", "im"]).map_err(|e| write_err(path, e))?;
    for (l, omega, v) in meas.rows() {
        w.write_record([l.to_string(), fmt_f64(omega), fmt_f64(v.re), fmt_f64(v.im)])
            .map_err(|e| write_err(path, e))?;
    }
    w.flush().map_err(|e| write_err(path, e))
}

pub fn read_measurement_rows(path: &Path) -> Result<Vec<(usize, f64, C64)>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| read_err(path, e))?;
    let header = r.headers().map_err(|e| read_err(path, e))?.clone();
    if header.iter().collect::<Vec<_>>() != ["ell", "omega", "re", "im"] {
        return Err(CliError::config(format!(
            "{}: expected header ell,omega,re,im",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| read_err(path, e))?;
        let bad = |what: &str| CliError::config(format!("{}: row {}: bad {what}", path.display(), line + 2));
        let l: usize = rec[0].trim().parse().map_err(|_| bad("ell"))?;
        let num = |i: usize, what: &str| rec[i].trim().parse::<f64>().map_err(|_| bad(what));
        rows.push((l, num(1, "omega")?, C64::new(num(2, "re")?, num(3, "im")?)));
    }
    Ok(rows)
}

pub fn read_measurements(path: &Path, meta: SceneMeta<f64>) -> Result<MeasurementSeries<f64>, CliError> {
    let rows = read_measurement_rows(path)?;
    Ok(MeasurementSeries::from_rows(&rows, meta)?)
}

/// `(particle, omega, |𝒥|)` for external plotting.
pub fn write_functionals(path: &Path, omegas: &[f64], fs: &[ImagingFunctional<f64>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| write_err(path, e))?;
    w.write_record(["particle", "omega", "abs_j"]).map_err(|e| write_err(path, e))?;
    for f in fs {
        for (w_i, v) in omegas.iter().zip(&f.values) {
            w.write_record([f.particle_index.to_string(), fmt_f64(*w_i), fmt_f64(v.norm())])
                .map_err(|e| write_err(path, e))?;
        }
    }
    w.flush().map_err(|e| write_err(path, e))
}

pub fn read_points(path: &Path) -> Result<Vec<Vec3<f64>>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| read_err(path, e))?;
    let mut pts = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| read_err(path, e))?;
        if rec.len() != 3 {
            return Err(CliError::config(format!("{}: row {} needs x,y,z", path.display(), line + 2)));
        }
        let mut p = [0.0; 3];
        for (ax, field) in rec.iter().enumerate() {
            p[ax] = field
                .trim()
                .parse()
                .map_err(|_| CliError::config(format!("{}: row {}: bad coordinate", path.display(), line + 2)))?;
        }
        pts.push(V3(p));
    }
    Ok(pts)
}

pub fn write_values(path: &Path, pts: &[Vec3<f64>], vals: &[C64]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| write_err(path, e))?;
    w.write_record(["x", "y", "z", "eps0_re", "eps0_im"]).map_err(|e| write_err(path, e))?;
    for (p, v) in pts.iter().zip(vals) {
        w.write_record([fmt_f64(p[0]), fmt_f64(p[1]), fmt_f64(p[2]), fmt_f64(v.re), fmt_f64(v.im)])
            .map_err(|e| write_err(path, e))?;
    }
    w.flush().map_err(|e| write_err(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconFile {
    pub domain: DomainRecord,
    #[serde(rename = "particle")]
    pub particles: Vec<ParticleRecord>,
    pub interpolant: Option<InterpolantRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainRecord {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleRecord {
    pub index: usize,
    pub z: [f64; 3],
    #[serde(rename = "omega_P_hat")]
    pub omega_p_hat: Option<f64>,
    pub eps0_re: Option<f64>,
    pub eps0_im: Option<f64>,
    pub peak_height: f64,
    pub dispersion_residual: Option<f64>,
    pub flag: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolantRecord {
    pub basis: String,
    pub sigma: Option<f64>,
    pub seed: u64,
    pub condition: f64,
    pub centers: Vec<[f64; 3]>,
    pub beta_re: Vec<f64>,
    pub beta_im: Vec<f64>,
}

impl InterpolantRecord {
    pub fn from_core(f: &DrmInterpolant<f64>) -> Self {
        Self {
            basis: f.basis.tag().into(),
            sigma: match f.basis {
                DrmBasis::Gaussian { sigma } => sigma,
                _ => None,
            },
            seed: f.seed,
            condition: f.condition,
            centers: f.centers.iter().map(|c| c.0).collect(),
            beta_re: f.beta.iter().map(|b| b.re).collect(),
            beta_im: f.beta.iter().map(|b| b.im).collect(),
        }
    }

    pub fn to_core(&self, domain: AxisBox<f64>) -> Result<DrmInterpolant<f64>, CliError> {
        if self.beta_re.len() != self.centers.len() || self.beta_im.len() != self.centers.len() {
            return Err(CliError::config("interpolant: centers and coefficients differ in length"));
        }
        Ok(DrmInterpolant {
            basis: crate::config::parse_basis(&self.basis, self.sigma)?,
            centers: self.centers.iter().map(|&c| V3(c)).collect(),
            beta: self.beta_re.iter().zip(&self.beta_im).map(|(&r, &i)| C64::new(r, i)).collect(),
            seed: self.seed,
            condition: self.condition,
            domain,
        })
    }
}

impl ReconFile {
    pub fn from_core(rec: &Reconstruction<f64>, domain: &AxisBox<f64>) -> Self {
        Self {
            domain: DomainRecord {
                min: domain.min.0,
                max: domain.max.0,
            },
            particles: rec
                .particles
                .iter()
                .map(|p| ParticleRecord {
                    index: p.index,
                    z: p.z.0,
                    omega_p_hat: p.omega_hat,
                    eps0_re: p.eps0.map(|e| e.re),
                    eps0_im: p.eps0.map(|e| e.im),
                    peak_height: p.peak_height,
                    dispersion_residual: p.dispersion_residual,
                    flag: p.flag.label(),
                })
                .collect(),
            interpolant: rec.interpolant.as_ref().map(InterpolantRecord::from_core),
        }
    }

    pub fn domain(&self) -> Result<AxisBox<f64>, CliError> {
        AxisBox::new(V3(self.domain.min), V3(self.domain.max)).map_err(CliError::config)
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = toml::to_string(self).map_err(|e| write_err(path, e))?;
        std::fs::write(path, text).map_err(|e| write_err(path, e))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| read_err(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {}", path.display(), e.message())))
    }
}

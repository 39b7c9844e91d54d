//! Scene file schema (TOML) and its conversion into core types.

use std::path::Path;

use plasmon::inversion::{DrmBasis, DrmOptions, InversionOptions, PeakOptions, RecoveryOptions};
use plasmon::linalg::V3;
use plasmon::media::{
    AxisBox, BackgroundField, BandSpec, Incidence, LorentzModel, Monomial, PermittivitySpec, Scene,
    ShapeKind, ValidationSettings,
};
use serde::Deserialize;

use crate::CliError;

type C64 = num_complex::Complex<f64>;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    /// Drives noise and collocation centers.
    #[serde(default)]
    pub seed: u64,
    pub background: BackgroundDto,
    pub lorentz: LorentzDto,
    pub particles: ParticlesDto,
    #[serde(default)]
    pub shape: ShapeDto,
    #[serde(default)]
    pub incidence: IncidenceDto,
    pub band: BandDto,
    #[serde(default)]
    pub validation: ValidationDto,
    #[serde(default)]
    pub forward: ForwardDto,
    #[serde(default)]
    pub inversion: InversionDto,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundDto {
    #[serde(default = "one")]
    pub eps_inf: f64,
    #[serde(default = "one")]
    pub mu: f64,
    pub domain: DomainDto,
    pub eps0: Eps0Dto,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainDto {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Eps0Dto {
    /// `[re, im]`.
    Constant([f64; 2]),
    Polynomial(Vec<MonomialDto>),
    Grid {
        dims: [usize; 3],
        re: Vec<f64>,
        #[serde(default)]
        im: Vec<f64>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonomialDto {
    pub coef: [f64; 2],
    pub powers: [u32; 3],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LorentzDto {
    #[serde(default = "one")]
    pub eps_inf: f64,
    pub omega_p: f64,
    pub omega_0: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticlesDto {
    pub a: f64,
    pub t: f64,
    pub s: f64,
    pub h: f64,
    pub positions: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeDto {
    #[serde(default = "unit_ball")]
    pub kind: String,
    pub resolution: Option<usize>,
    #[serde(default = "one_usize")]
    pub n0: usize,
}

impl Default for ShapeDto {
    fn default() -> Self {
        Self {
            kind: unit_ball(),
            resolution: None,
            n0: 1,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IncidenceDto {
    pub theta: [f64; 3],
    pub q: [f64; 3],
}

impl Default for IncidenceDto {
    fn default() -> Self {
        Self {
            theta: [0.0, 0.0, 1.0],
            q: [1.0, 0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandDto {
    pub omega_min: Option<f64>,
    pub omega_max: Option<f64>,
    pub samples: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationDto {
    #[serde(default = "gamma_max")]
    pub gamma_max: f64,
    #[serde(default = "one")]
    pub c_im: f64,
    #[serde(default = "one")]
    pub d_scale: f64,
}

impl Default for ValidationDto {
    fn default() -> Self {
        Self {
            gamma_max: gamma_max(),
            c_im: 1.0,
            d_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForwardDto {
    /// `homogeneous` or `born`.
    #[serde(default = "homogeneous")]
    pub background: String,
    #[serde(default = "two")]
    pub born_order: usize,
    #[serde(default = "eight")]
    pub resolution: usize,
}

impl Default for ForwardDto {
    fn default() -> Self {
        Self {
            background: homogeneous(),
            born_order: 2,
            resolution: 8,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InversionDto {
    #[serde(default = "thin_plate")]
    pub basis: String,
    pub sigma: Option<f64>,
    #[serde(default)]
    pub centers_at_nodes: bool,
    #[serde(default = "yes")]
    pub refine: bool,
    #[serde(default)]
    pub prefilter: bool,
    #[serde(default)]
    pub real_only: bool,
    #[serde(default = "gate_threshold")]
    pub gate_threshold: f64,
}

impl Default for InversionDto {
    fn default() -> Self {
        Self {
            basis: thin_plate(),
            sigma: None,
            centers_at_nodes: false,
            refine: true,
            prefilter: false,
            real_only: false,
            gate_threshold: gate_threshold(),
        }
    }
}

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn two() -> usize {
    2
}
fn eight() -> usize {
    8
}
fn yes() -> bool {
    true
}
fn gamma_max() -> f64 {
    0.1
}
fn gate_threshold() -> f64 {
    1e-6
}
fn unit_ball() -> String {
    "unit_ball".into()
}
fn homogeneous() -> String {
    "homogeneous".into()
}
fn thin_plate() -> String {
    "thin_plate_spline".into()
}

pub fn load(path: &Path) -> Result<SceneFile, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {}", path.display(), e.message())))
}

pub fn parse_basis(tag: &str, sigma: Option<f64>) -> Result<DrmBasis<f64>, CliError> {
    match tag {
        "linear" => Ok(DrmBasis::Linear),
        "gaussian" => Ok(DrmBasis::Gaussian { sigma }),
        "thin_plate_spline" | "tps" => Ok(DrmBasis::ThinPlate),
        other => Err(CliError::config(format!(
            "unknown basis '{other}' (expected linear, gaussian or thin_plate_spline)"
        ))),
    }
}

impl SceneFile {
    pub fn domain(&self) -> Result<AxisBox<f64>, CliError> {
        let d = self.background.domain;
        AxisBox::new(V3(d.min), V3(d.max)).map_err(CliError::config)
    }

    pub fn scene(&self) -> Result<Scene<f64>, CliError> {
        let b = &self.background;
        let eps0 = match &b.eps0 {
            Eps0Dto::Constant([re, im]) => PermittivitySpec::Constant(C64::new(*re, *im)),
            Eps0Dto::Polynomial(terms) => PermittivitySpec::Polynomial(
                terms
                    .iter()
                    .map(|m| Monomial {
                        coef: C64::new(m.coef[0], m.coef[1]),
                        powers: m.powers,
                    })
                    .collect(),
            ),
            Eps0Dto::Grid { dims, re, im } => {
                if !im.is_empty() && im.len() != re.len() {
                    return Err(CliError::config("grid 're' and 'im' lengths differ"));
                }
                PermittivitySpec::Grid {
                    dims: *dims,
                    values: re
                        .iter()
                        .enumerate()
                        .map(|(i, &r)| C64::new(r, im.get(i).copied().unwrap_or(0.0)))
                        .collect(),
                }
            }
        };
        let background = BackgroundField {
            eps_inf_bg: b.eps_inf,
            mu: b.mu,
            eps0,
            omega_domain: self.domain()?,
        };
        background.validate().map_err(CliError::config)?;
        let l = &self.lorentz;
        let lorentz = LorentzModel::new(l.eps_inf, l.omega_p, l.omega_0, l.gamma).map_err(CliError::config)?;
        let shape = match self.shape.kind.as_str() {
            "unit_ball" => ShapeKind::UnitBall,
            "voxelized" => ShapeKind::Voxelized {
                resolution: self
                    .shape
                    .resolution
                    .ok_or_else(|| CliError::config("voxelized shape needs 'resolution'"))?,
            },
            other => return Err(CliError::config(format!("unknown shape kind '{other}'"))),
        };
        let p = &self.particles;
        Ok(Scene {
            background,
            lorentz,
            particles: p.positions.iter().map(|&x| V3(x)).collect(),
            a: p.a,
            t: p.t,
            s: p.s,
            h: p.h,
            shape,
            n0: self.shape.n0,
            incidence: Incidence {
                theta: V3(self.incidence.theta),
                q: V3(self.incidence.q),
            },
            band: BandSpec {
                omega_min: self.band.omega_min,
                omega_max: self.band.omega_max,
                samples: self.band.samples,
            },
            settings: ValidationSettings {
                gamma_max: self.validation.gamma_max,
                c_im: self.validation.c_im,
                d_scale: self.validation.d_scale,
            },
        })
    }

    pub fn inversion_options(&self, seed: u64) -> Result<InversionOptions<f64>, CliError> {
        let inv = &self.inversion;
        Ok(InversionOptions {
            recovery: RecoveryOptions {
                peak: PeakOptions {
                    refine: inv.refine,
                    prefilter: inv.prefilter,
                },
                real_only: inv.real_only,
            },
            drm: DrmOptions {
                basis: parse_basis(&inv.basis, inv.sigma)?,
                seed,
                centers_at_nodes: inv.centers_at_nodes,
            },
        })
    }
}

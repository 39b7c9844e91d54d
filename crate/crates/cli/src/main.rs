//! `plasmon`: simulate injection sweeps, invert them for the background
//! permittivity, interpolate the result and run the invariant suites.

mod config;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use plasmon::forward::{eigen_mode_for, ForwardModel, NoiseSpec, SimulationOptions};
use plasmon::greens::{verify_reciprocity, verify_symmetry, Background, BornBackground, HeterogeneousKernel, HomogeneousBackground};
use plasmon::inversion::{drm_fit, extract_functionals, invert, DrmOptions, RecoveryFlag};
use plasmon::linalg::V3;
use plasmon::media::{
    validate_scene, AxisBox, BackgroundField, Monomial, PermittivitySpec, ScatteringModel,
};
use plasmon::shapes::{magnetization_spectrum_with, SpectrumOptions, VoxelShape};

use crate::config::SceneFile;
use crate::io::ReconFile;

type C64 = num_complex::Complex<f64>;

/// Failure with its process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(msg: impl std::fmt::Display) -> Self {
        Self { code: 2, message: msg.to_string() }
    }

    pub fn validation(msg: impl std::fmt::Display) -> Self {
        Self { code: 3, message: msg.to_string() }
    }
}

impl From<plasmon::Error> for CliError {
    fn from(e: plasmon::Error) -> Self {
        Self {
            code: if e.is_numerical() { 4 } else { 3 },
            message: e.to_string(),
        }
    }
}

#[derive(Parser)]
#[command(name = "plasmon", version, about = "Permittivity imaging with plasmonic nano-particles")]
struct Cli {
    /// Worker threads for frequency sweeps and voxel sums (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Back-scattered contrasts for every injection count over the band.
    Simulate(SimulateArgs),
    /// Recover ε₀ at each particle and fit the interpolant.
    Invert(InvertArgs),
    /// Evaluate a reconstruction at query points.
    Interp(InterpArgs),
    /// Reciprocity and symmetry residual tables.
    Verify(VerifyArgs),
    /// Eigen-data of the voxelized magnetization operator.
    Spectrum(SpectrumArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Born,
    Foldy,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "born")]
    model: ModelArg,
    /// Use ω² instead of the frozen ω_P² prefactor.
    #[arg(long)]
    raw: bool,
    /// Relative amplitude of complex Gaussian noise.
    #[arg(long)]
    noise: Option<f64>,
    /// Overrides the scene seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Solve Foldy systems that fail the dominance check.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct InvertArgs {
    #[arg(long)]
    meas: PathBuf,
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write (particle, omega, |J|) rows here.
    #[arg(long)]
    functionals: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct InterpArgs {
    #[arg(long)]
    recon: PathBuf,
    /// linear, gaussian or thin_plate_spline; refits when it differs from the stored basis.
    #[arg(long)]
    basis: String,
    #[arg(long)]
    sigma: Option<f64>,
    /// CSV of x,y,z with a header row.
    #[arg(long)]
    query: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    centers_at_nodes: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 1e-12)]
    tol_homogeneous: f64,
    #[arg(long, default_value_t = 1e-10)]
    tol_voxel: f64,
    #[arg(long, default_value_t = 1e-3)]
    tol_grid: f64,
    #[arg(long, default_value_t = 1e-10)]
    tol_symmetry: f64,
    #[arg(long, default_value_t = 8)]
    resolution: usize,
    #[arg(long, default_value_t = 3)]
    born_order: usize,
}

#[derive(Args)]
struct SpectrumArgs {
    #[arg(long, default_value = "ball")]
    shape: String,
    #[arg(long)]
    res: usize,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = 500)]
    max_iterations: usize,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Invert(a) => run_invert(a),
        Command::Interp(a) => interp(a),
        Command::Verify(a) => verify(a),
        Command::Spectrum(a) => spectrum(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn build_model(file: &SceneFile, model: ScatteringModel) -> Result<ForwardModel<f64>, CliError> {
    let scene = file.scene()?;
    let report = validate_scene(&scene, model);
    for w in report.warnings() {
        log::warn!("{}: {}", w.name, w.detail);
    }
    if !report.passed() {
        let msgs: Vec<String> = report.failures().map(|c| format!("{} ({})", c.name, c.detail)).collect();
        return Err(CliError::validation(format!("scene validation failed: {}", msgs.join("; "))));
    }
    let mode = eigen_mode_for(&scene)?;
    let background: Arc<dyn Background<f64>> = match file.forward.background.as_str() {
        "homogeneous" => Arc::new(HomogeneousBackground::from_field(&scene.background)),
        "born" => Arc::new(BornBackground {
            field: scene.background.clone(),
            resolution: file.forward.resolution,
            born_order: file.forward.born_order,
        }),
        other => return Err(CliError::config(format!("unknown forward background '{other}'"))),
    };
    Ok(ForwardModel::new(scene, mode, background)?)
}

fn simulate(a: SimulateArgs) -> Result<(), CliError> {
    let file = config::load(&a.scene)?;
    let model_kind = match a.model {
        ModelArg::Born => ScatteringModel::Born,
        ModelArg::Foldy => ScatteringModel::Foldy,
    };
    if let Some(n) = a.noise {
        if !(n >= 0.0 && n.is_finite()) {
            return Err(CliError::config("--noise must be a non-negative number"));
        }
    }
    let model = build_model(&file, model_kind)?.with_raw(a.raw);
    let omegas = model.band()?.grid();
    let opts = SimulationOptions {
        model: model_kind,
        noise: a.noise.map(|relative| NoiseSpec {
            relative,
            seed: a.seed.unwrap_or(file.seed),
        }),
        force: a.force,
    };
    let meas = model.simulate(&omegas, &opts)?;
    io::write_measurements(&a.out, &meas)
}

fn run_invert(a: InvertArgs) -> Result<(), CliError> {
    let file = config::load(&a.scene)?;
    let model = build_model(&file, ScatteringModel::Born)?;
    let meas = io::read_measurements(&a.meas, model.meta())?;
    let seed = a.seed.unwrap_or(file.seed);
    let domain = file.domain()?;
    let scene = model.scene();
    let mut rec = invert(&meas, &scene.particles, &scene.lorentz, &domain, &file.inversion_options(seed)?)?;
    let mid = 0.5 * (meas.omegas[0] + meas.omegas[meas.omegas.len() - 1]);
    for p in rec.particles.iter_mut() {
        let omega = p.omega_hat.unwrap_or(mid);
        let excitation = model.subset(&[p.index]).excitation(omega)?[0];
        if excitation < file.inversion.gate_threshold && p.flag.is_clear() {
            p.flag = RecoveryFlag::Gated;
        }
    }
    for p in rec.particles.iter().filter(|p| !p.flag.is_clear()) {
        log::warn!("particle {}: {}", p.index, p.flag.label());
    }
    if let Some(path) = &a.functionals {
        io::write_functionals(path, &meas.omegas, &extract_functionals(&meas)?)?;
    }
    ReconFile::from_core(&rec, &domain).write(&a.out)
}

fn interp(a: InterpArgs) -> Result<(), CliError> {
    let recon = ReconFile::read(&a.recon)?;
    let domain = recon.domain()?;
    let basis = config::parse_basis(&a.basis, a.sigma)?;
    let stored = recon.interpolant.as_ref().ok_or_else(|| {
        CliError::validation("reconstruction holds no interpolant (no particle was recovered)")
    })?;
    let reuse = stored.basis == basis.tag() && (a.sigma.is_none() || a.sigma == stored.sigma) && !a.centers_at_nodes;
    let interpolant = if reuse {
        stored.to_core(domain)?
    } else {
        let nodes: Vec<_> = recon
            .particles
            .iter()
            .filter_map(|p| Some((V3(p.z), C64::new(p.eps0_re?, p.eps0_im?))))
            .collect();
        let f = drm_fit(
            &nodes,
            &domain,
            &DrmOptions {
                basis,
                seed: stored.seed,
                centers_at_nodes: a.centers_at_nodes,
            },
        )?;
        log::info!("refit interpolant with basis {}", f.basis.tag());
        f
    };
    let pts = io::read_points(&a.query)?;
    let vals = pts
        .iter()
        .map(|z| interpolant.eval(z))
        .collect::<Result<Vec<_>, _>>()?;
    io::write_values(&a.out, &pts, &vals)
}

struct Row {
    suite: &'static str,
    case: String,
    residual: f64,
    tol: f64,
}

fn smooth_background() -> BackgroundField<f64> {
    let amp = 0.1;
    let mut f = BackgroundField::homogeneous(C64::new(1.0, 0.0), AxisBox::centered_cube(0.5));
    f.eps0 = PermittivitySpec::Polynomial(vec![
        Monomial { coef: C64::new(1.0 + amp, 0.0), powers: [0, 0, 0] },
        Monomial { coef: C64::new(-amp, 0.0), powers: [2, 0, 0] },
        Monomial { coef: C64::new(-amp, 0.0), powers: [0, 2, 0] },
        Monomial { coef: C64::new(-amp, 0.0), powers: [0, 0, 2] },
    ]);
    f
}

fn verify(a: VerifyArgs) -> Result<(), CliError> {
    let k = 2.0;
    let xhat = V3([0.0, 0.6, 0.8]);
    let q = V3([1.0, 0.0, 0.0]);
    let z = V3([0.9, -0.7, 1.1]);
    let mut rows = Vec::new();

    let homog = HeterogeneousKernel::homogeneous(k)?;
    rows.push(Row {
        suite: "reciprocity",
        case: "homogeneous".into(),
        residual: verify_reciprocity(&homog, &xhat, &z, &q)?.residual,
        tol: a.tol_homogeneous,
    });
    let voxel = HeterogeneousKernel::new(k, vec![V3([0.1, 0.0, -0.1])], vec![C64::new(0.3, 0.02)], 1e-3, 1)?;
    rows.push(Row {
        suite: "reciprocity",
        case: "one voxel, order 1".into(),
        residual: verify_reciprocity(&voxel, &xhat, &z, &q)?.residual,
        tol: a.tol_voxel,
    });
    let field = smooth_background();
    let grid = HeterogeneousKernel::from_background(&field, k, a.resolution, a.born_order)?;
    rows.push(Row {
        suite: "reciprocity",
        case: format!("{0}x{0}x{0} grid, order {1}", a.resolution, a.born_order),
        residual: verify_reciprocity(&grid, &xhat, &z, &q)?.residual,
        tol: a.tol_grid,
    });
    let (x, y) = (V3([0.7, 0.2, -0.6]), V3([-0.3, 0.9, 0.8]));
    for order in 0..=a.born_order {
        let kern = HeterogeneousKernel::from_background(&field, k, a.resolution, order)?;
        rows.push(Row {
            suite: "symmetry",
            case: format!("{0}x{0}x{0} grid, order {order}", a.resolution),
            residual: verify_symmetry(&kern, &x, &y)?.residual,
            tol: a.tol_symmetry,
        });
    }

    println!("{:<12} {:<26} {:>12} {:>10}  status", "suite", "case", "residual", "tolerance");
    let mut failed = 0;
    for r in &rows {
        let ok = r.residual <= r.tol;
        failed += usize::from(!ok);
        println!(
            "{:<12} {:<26} {:>12.3e} {:>10.1e}  {}",
            r.suite,
            r.case,
            r.residual,
            r.tol,
            if ok { "ok" } else { "FAIL" }
        );
    }
    if failed > 0 {
        return Err(CliError::validation(format!("{failed} invariant check(s) failed")));
    }
    Ok(())
}

fn spectrum(a: SpectrumArgs) -> Result<(), CliError> {
    if a.shape != "ball" {
        return Err(CliError::config(format!("unsupported shape '{}' (only 'ball')", a.shape)));
    }
    let shape = VoxelShape::<f64>::ball(a.res)?;
    let opts = SpectrumOptions {
        max_iterations: a.max_iterations,
        ..SpectrumOptions::default()
    };
    let modes = magnetization_spectrum_with(&shape, a.count, &opts)?;
    println!("shape ball resolution {} voxels {}", a.res, shape.len());
    for (i, m) in modes.iter().enumerate() {
        println!("mode {} lambda {} multiplicity {}", i + 1, io::fmt_f64(m.lambda), m.multiplicity);
        for row in m.moment_gram.0 {
            println!("gram {} {} {}", io::fmt_f64(row[0]), io::fmt_f64(row[1]), io::fmt_f64(row[2]));
        }
    }
    Ok(())
}

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use hsad_core::detection::{auc, detection_map, normalize_map, roc_points, ser, DetectionMap};
use hsad_core::io;
use hsad_core::solver::compute_stepsizes;
use hsad_core::sweep::{format_sweep_csv, run_sweep, standard_grid, Radii, SweepGrid};
use hsad_core::synth::{apply_noise_case, calibrate_radii, generate_scene, NoiseMeta, Target};
use hsad_core::{
    feasibility_report, solve, Cube, Error, NoiseCase, ProblemSpec, Regularizer, SceneSpec, Shape, SolverConfig,
};

use crate::args::{DecomposeArgs, EvaluateArgs, ModelArgs, NoiseArgs, SimulateArgs, SweepArgs};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

/// 1 for usage errors, 2 for data errors, 3 for numerical failures.
pub fn exit_code(e: &CliError) -> u8 {
    match e {
        CliError::Usage(_) | CliError::Core(Error::InvalidParameter { .. }) => 1,
        CliError::Core(Error::Numerical(_) | Error::Diverged { .. }) => 3,
        CliError::Core(_) => 2,
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s: OsString = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn parse_target(spec: &str) -> CliResult<Target> {
    let bad = || CliError::Usage(format!("--target expects ROW,COL,HEIGHT,WIDTH,STRENGTH, got {spec:?}"));
    let fields: Vec<&str> = spec.split(',').map(str::trim).collect();
    if fields.len() != 5 {
        return Err(bad());
    }
    let n = |i: usize| fields[i].parse::<usize>().map_err(|_| bad());
    Ok(Target { row: n(0)?, col: n(1)?, height: n(2)?, width: n(3)?, strength: fields[4].parse().map_err(|_| bad())? })
}

pub fn simulate(a: SimulateArgs) -> CliResult {
    let shape = Shape::new(a.height, a.width, a.bands);
    let spec = if a.targets.is_empty() {
        SceneSpec::with_default_targets(shape, a.endmembers, a.seed)?
    } else {
        let targets = a.targets.iter().map(|t| parse_target(t)).collect::<CliResult<Vec<_>>>()?;
        SceneSpec { shape, endmembers: a.endmembers, targets, seed: a.seed }
    };
    let case = NoiseCase::from_id(a.case)?;
    let scene = apply_noise_case(generate_scene(&spec)?, case, a.seed)?;
    io::write_cube(&scene.clean, &with_suffix(&a.out, "_clean.raw"))?;
    io::write_cube(&scene.observed, &with_suffix(&a.out, "_observed.raw"))?;
    io::write_gt_pgm(&scene.gt, &with_suffix(&a.out, "_gt.pgm"))?;
    io::write_text(&with_suffix(&a.out, "_meta.txt"), &io::format_noise_meta(&scene.noise))?;
    let (epsilon, alpha) = calibrate_radii(&scene.noise, shape, a.eta);
    println!(
        "shape={shape} case={} seed={} targets={} anomaly_pixels={}",
        a.case,
        a.seed,
        spec.targets.len(),
        scene.gt.anomaly_count()
    );
    println!("eta={} epsilon={epsilon} alpha={alpha}", a.eta);
    Ok(())
}

/// Noise parameters from `--meta`, with `--sigma` / `--sp` overriding; `None`
/// when nothing was given.
fn noise_meta(n: &NoiseArgs) -> CliResult<Option<NoiseMeta>> {
    let mut meta = match &n.meta {
        Some(p) => io::read_noise_meta(p)?,
        None if n.sigma.is_none() && n.sp.is_none() => return Ok(None),
        None => NoiseMeta::NONE,
    };
    if let Some(s) = n.sigma {
        meta.sigma = s;
    }
    if let Some(s) = n.sp {
        meta.sp = s;
    }
    Ok(Some(meta))
}

fn regularizer(m: &ModelArgs) -> CliResult<Regularizer> {
    Ok(Regularizer::new(m.reg, m.omega)?)
}

fn solver_config(m: &ModelArgs, reg: &Regularizer, stride: usize) -> CliResult<SolverConfig> {
    let mut cfg = SolverConfig::for_regularizer(reg);
    cfg.tolerance = m.tol;
    cfg.diagnostics_stride = stride;
    if let Some(n) = m.max_iter {
        cfg.max_iterations = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Exact fraction when it is short, otherwise its decimal value (ω enters
/// through its binary expansion, which makes the HSSTV fraction huge).
fn show_ratio(exact: &impl fmt::Display, approx: f64) -> String {
    let exact = exact.to_string();
    if exact.len() <= 16 {
        exact
    } else {
        approx.to_string()
    }
}

fn load_input(path: &Path, m: &ModelArgs) -> CliResult<Cube> {
    let cube = io::read_cube(path)?;
    Ok(if m.normalize { cube.unit_range() } else { cube })
}

const NEED_RADII: &str = "radii unknown: pass --epsilon and --alpha, or noise parameters via --meta, --sigma or --sp";

pub fn decompose(a: DecomposeArgs) -> CliResult {
    let reg = regularizer(&a.model)?;
    let cfg = solver_config(&a.model, &reg, a.stride)?;
    let observed = load_input(&a.input, &a.model)?;
    let shape = observed.shape();
    let calibrated = match (a.epsilon, a.alpha) {
        (Some(_), Some(_)) => None,
        _ => {
            let meta = noise_meta(&a.noise)?.ok_or_else(|| CliError::Usage(NEED_RADII.into()))?;
            Some(calibrate_radii(&meta, shape, a.eta))
        }
    };
    let epsilon = a.epsilon.or(calibrated.map(|c| c.0)).expect("radius resolved");
    let alpha = a.alpha.or(calibrated.map(|c| c.1)).expect("radius resolved");

    let steps = compute_stepsizes(&reg);
    let approx = steps.to_f64();
    println!(
        "stepsizes gamma_b={} gamma_a={} gamma_s={} gamma_l={} gamma_y={}",
        show_ratio(&steps.gamma_b, approx.gamma_b),
        show_ratio(&steps.gamma_a, approx.gamma_a),
        show_ratio(&steps.gamma_s, approx.gamma_s),
        show_ratio(&steps.gamma_l, approx.gamma_l),
        show_ratio(&steps.gamma_y1, approx.gamma_y1)
    );
    println!("regularizer={} lambda1={} lambda2={} epsilon={epsilon} alpha={alpha}", reg.name(), a.lambda1, a.lambda2);

    let spec = ProblemSpec::new(observed, a.lambda1, a.lambda2, epsilon, alpha, reg)?;
    let result = solve(spec.clone(), &cfg)?;
    let report = feasibility_report(&result, &spec)?;
    println!(
        "iterations={} converged={} relative_change={}",
        result.iterations, result.converged, result.last_relative_change
    );
    println!(
        "data_residual={} s_l1={} stripe_flatness={} objective={}",
        report.data_residual, report.s_l1, report.stripe_flatness_residual, report.objective_value
    );

    io::write_cube(&result.background, &with_suffix(&a.out, "_background.raw"))?;
    io::write_cube(&result.anomaly, &with_suffix(&a.out, "_anomaly.raw"))?;
    io::write_cube(&result.sparse_noise, &with_suffix(&a.out, "_sparse.raw"))?;
    io::write_cube(&result.stripe_noise, &with_suffix(&a.out, "_stripe.raw"))?;
    let map = normalize_map(&detection_map(&result.anomaly));
    io::write_map_pgm16(&map, &with_suffix(&a.out, "_map.pgm"))?;
    io::write_map_csv(&map, &with_suffix(&a.out, "_map.csv"))?;
    io::write_text(&with_suffix(&a.out, "_diagnostics.csv"), &io::format_diagnostics(&result.history))?;
    Ok(())
}

fn load_map(path: &Path) -> CliResult<DetectionMap> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => Ok(io::read_map_csv(path)?),
        Some("pgm") => Ok(io::read_map_pgm(path)?),
        _ => Err(CliError::Usage(format!("map {} must end in .csv or .pgm", path.display()))),
    }
}

pub fn evaluate(a: EvaluateArgs) -> CliResult {
    let map = match (&a.map, &a.anomaly) {
        (Some(p), _) => load_map(p)?,
        (None, Some(p)) => detection_map(&io::read_cube(p)?),
        (None, None) => return Err(CliError::Usage("pass --map or --anomaly".into())),
    };
    let map = normalize_map(&map);
    let gt = io::read_gt_pgm(&a.gt)?;
    let metrics = io::format_metrics(auc(&map, &gt)?, ser(&map, &gt)?);
    print!("{metrics}");
    if let Some(p) = &a.out {
        io::write_text(p, &metrics)?;
    }
    if let Some(p) = &a.roc {
        io::write_roc_csv(&roc_points(&map, &gt)?, p)?;
    }
    Ok(())
}

pub fn sweep(a: SweepArgs) -> CliResult {
    let reg = regularizer(&a.model)?;
    let cfg = solver_config(&a.model, &reg, 0)?;
    let observed = load_input(&a.input, &a.model)?;
    let gt = io::read_gt_pgm(&a.gt)?;
    let (default_l1, default_l2) = standard_grid(reg.kind());
    let radii = match (a.epsilon, a.alpha) {
        (Some(epsilon), Some(alpha)) => Radii::Explicit { epsilon, alpha },
        _ => Radii::Calibrated {
            meta: noise_meta(&a.noise)?.ok_or_else(|| CliError::Usage(NEED_RADII.into()))?,
            etas: a.eta.clone(),
        },
    };
    let grid = SweepGrid {
        lambda1: if a.lambda1.is_empty() { default_l1 } else { a.lambda1.clone() },
        lambda2: if a.lambda2.is_empty() { default_l2 } else { a.lambda2.clone() },
        radii,
    };
    let rows = run_sweep(&observed, &gt, reg, &grid, &cfg, a.jobs)?;
    io::write_text(&a.out, &format_sweep_csv(&rows))?;
    let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
    println!("points={} failed={failed}", rows.len());
    if let Some(best) = rows.iter().find(|r| r.best) {
        let m = best.outcome.as_ref().expect("best row succeeded");
        println!(
            "best lambda1={} lambda2={} eta={} auc={} ser={}",
            best.point.lambda1,
            best.point.lambda2,
            best.point.eta.map(|e| e.to_string()).unwrap_or_else(|| "-".into()),
            m.auc,
            m.ser
        );
    }
    Ok(())
}

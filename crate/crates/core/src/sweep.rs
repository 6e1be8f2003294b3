//! Hyperparameter grid sweeps.
//!
//! Each grid point is an independent solve; points run in parallel on a
//! dedicated thread pool and the output is ordered lexicographically by
//! `(λ₁, λ₂, η)` regardless of scheduling.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::detection::{auc, detection_map, normalize_map, ser, GroundTruthMask};
use crate::error::{Error, Result};
use crate::regularizer::{Regularizer, RegularizerKind};
use crate::solver::{solve, ProblemSpec, SolverConfig};
use crate::synth::{calibrate_radii, NoiseMeta};
use crate::tensor::Cube;

/// λ₂ grid shared by the HTV, SSTV and nuclear-norm settings.
pub const LAMBDA2_GRID: [f64; 10] = [0.0, 0.001, 0.01, 0.025, 0.05, 0.075, 0.1, 0.25, 0.5, 1.0];
pub const HSSTV_LAMBDA2_GRID: [f64; 10] = [0.0, 0.001, 0.005, 0.0075, 0.01, 0.025, 0.05, 0.1, 0.5, 1.0];
pub const HTV_LAMBDA1_GRID: [f64; 9] = [0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0];
pub const SSTV_LAMBDA1_GRID: [f64; 9] = [0.1, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 5.0, 10.0];
pub const HSSTV_LAMBDA1_GRID: [f64; 9] = [0.05, 0.1, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0];
pub const NUCLEAR_LAMBDA1_GRID: [f64; 9] = [0.005, 0.01, 0.025, 0.05, 0.075, 0.1, 0.25, 0.5, 1.0];
/// λ₁ values recommended for the total-variation regularizers.
pub const RECOMMENDED_LAMBDA1: [f64; 3] = [0.5, 0.75, 1.0];
pub const RECOMMENDED_LAMBDA2: [f64; 3] = [0.025, 0.05, 0.075];
pub const DEFAULT_ETA: f64 = 0.9;

/// Documented `(λ₁, λ₂)` grids for a regularizer.
pub fn standard_grid(kind: RegularizerKind) -> (Vec<f64>, Vec<f64>) {
    match kind {
        RegularizerKind::Htv => (HTV_LAMBDA1_GRID.to_vec(), LAMBDA2_GRID.to_vec()),
        RegularizerKind::Sstv => (SSTV_LAMBDA1_GRID.to_vec(), LAMBDA2_GRID.to_vec()),
        RegularizerKind::Hsstv => (HSSTV_LAMBDA1_GRID.to_vec(), HSSTV_LAMBDA2_GRID.to_vec()),
        RegularizerKind::Nuclear => (NUCLEAR_LAMBDA1_GRID.to_vec(), LAMBDA2_GRID.to_vec()),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Radii {
    /// One point per η, with radii calibrated from the noise parameters.
    Calibrated { meta: NoiseMeta, etas: Vec<f64> },
    /// Fixed radii for every point.
    Explicit { epsilon: f64, alpha: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepGrid {
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
    pub radii: Radii,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepPoint {
    pub lambda1: f64,
    pub lambda2: f64,
    pub eta: Option<f64>,
    pub epsilon: f64,
    pub alpha: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointMetrics {
    pub auc: f64,
    pub ser: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub point: SweepPoint,
    pub outcome: std::result::Result<PointMetrics, String>,
    pub best: bool,
}

fn sorted(name: &'static str, v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::param(name, "grid must not be empty"));
    }
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

impl SweepGrid {
    /// Grid points in lexicographic `(λ₁, λ₂, η)` order.
    pub fn points(&self, shape: crate::tensor::Shape) -> Result<Vec<SweepPoint>> {
        let l1 = sorted("lambda1", &self.lambda1)?;
        let l2 = sorted("lambda2", &self.lambda2)?;
        let radii: Vec<(Option<f64>, f64, f64)> = match &self.radii {
            Radii::Calibrated { meta, etas } => sorted("eta", etas)?
                .into_iter()
                .map(|eta| {
                    let (e, a) = calibrate_radii(meta, shape, eta);
                    (Some(eta), e, a)
                })
                .collect(),
            Radii::Explicit { epsilon, alpha } => vec![(None, *epsilon, *alpha)],
        };
        let mut out = Vec::with_capacity(l1.len() * l2.len() * radii.len());
        for &lambda1 in &l1 {
            for &lambda2 in &l2 {
                for &(eta, epsilon, alpha) in &radii {
                    out.push(SweepPoint { lambda1, lambda2, eta, epsilon, alpha });
                }
            }
        }
        Ok(out)
    }
}

/// Solves one point and scores its anomaly component.
pub fn evaluate_point(
    observed: &Cube,
    gt: &GroundTruthMask,
    regularizer: Regularizer,
    point: &SweepPoint,
    config: &SolverConfig,
) -> Result<PointMetrics> {
    let spec =
        ProblemSpec::new(observed.clone(), point.lambda1, point.lambda2, point.epsilon, point.alpha, regularizer)?;
    let result = solve(spec, config)?;
    let map = normalize_map(&detection_map(&result.anomaly));
    Ok(PointMetrics {
        auc: auc(&map, gt)?,
        ser: ser(&map, gt)?,
        iterations: result.iterations,
        converged: result.converged,
    })
}

/// Runs every grid point with up to `jobs` worker threads (0 picks the
/// rayon default). A failing point becomes a row carrying its error.
pub fn run_sweep(
    observed: &Cube,
    gt: &GroundTruthMask,
    regularizer: Regularizer,
    grid: &SweepGrid,
    config: &SolverConfig,
    jobs: usize,
) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let shape = observed.shape();
    if (gt.height, gt.width) != (shape.height, shape.width) {
        return Err(Error::InvalidShape(format!(
            "cube is {}x{} but ground truth is {}x{}",
            shape.height, shape.width, gt.height, gt.width
        )));
    }
    let points = grid.points(shape)?;
    let pool =
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(|e| Error::param("jobs", e.to_string()))?;
    let outcomes: Vec<_> = pool.install(|| {
        points
            .par_iter()
            .map(|p| evaluate_point(observed, gt, regularizer, p, config).map_err(|e| e.to_string()))
            .collect()
    });
    let mut rows: Vec<SweepRow> =
        points.into_iter().zip(outcomes).map(|(point, outcome)| SweepRow { point, outcome, best: false }).collect();
    let mut best: Option<(usize, f64)> = None;
    for (n, row) in rows.iter().enumerate() {
        if let Ok(m) = &row.outcome {
            if best.is_none_or(|(_, b)| m.auc > b) {
                best = Some((n, m.auc));
            }
        }
    }
    if let Some((n, _)) = best {
        rows[n].best = true;
    }
    Ok(rows)
}

pub const SWEEP_CSV_HEADER: &str = "lambda1,lambda2,eta,epsilon,alpha,auc,ser,iterations,converged,best,error";

pub fn format_sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let p = &r.point;
        let eta = p.eta.map(|e| e.to_string()).unwrap_or_default();
        let _ = write!(out, "{},{},{},{},{},", p.lambda1, p.lambda2, eta, p.epsilon, p.alpha);
        match &r.outcome {
            Ok(m) => {
                let _ = writeln!(out, "{},{},{},{},{},", m.auc, m.ser, m.iterations, m.converged, r.best);
            }
            Err(e) => {
                let msg = e.replace(['\n', ','], " ");
                let _ = writeln!(out, ",,,,{},{msg}", r.best);
            }
        }
    }
    out
}

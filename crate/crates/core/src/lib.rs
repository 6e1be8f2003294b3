//! Hyperspectral anomaly detection with mixed-noise removal.
//!
//! An observed cube `V` is split into background `B`, anomalies `A`, sparse
//! noise `S` and stripe noise `L` by a constrained convex program solved with
//! preconditioned primal-dual splitting. The anomaly part yields a detection
//! map, scored by ROC AUC and squared error ratio.

pub mod detection;
pub mod error;
pub mod io;
pub mod linalg;
pub mod ppds;
pub mod prox;
pub mod regularizer;
pub mod solver;
pub mod sweep;
pub mod synth;
pub mod tensor;

pub use detection::{auc, detection_map, normalize_map, roc_points, ser, DetectionMap, GroundTruthMask};
pub use error::{Error, Result};
pub use regularizer::{Regularizer, RegularizerKind};
pub use solver::{compute_stepsizes, feasibility_report, solve, ProblemSpec, SolveResult, SolverConfig};
pub use synth::{NoiseCase, Scene, SceneSpec};
pub use tensor::{Axis, Cube, LinearMap, NormKind, Shape};

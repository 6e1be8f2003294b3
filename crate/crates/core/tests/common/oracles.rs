//! Independent recomputations of the library's numerical kernels. Each
//! `check_*` runs a batch of seeded random instances and reports the first
//! disagreement.

use hsad_core::detection::{auc, normalize_map, ser, DetectionMap, GroundTruthMask};
use hsad_core::prox::{
    nuclear_norm, project_frobenius_ball, project_l1_ball, project_l1_ball_sorted, prox_l1, prox_l21, prox_nuclear,
};
use hsad_core::solver::{Decomposer, SolverState};
use hsad_core::tensor::{estimate_opnorm, DEFAULT_POWER_ITERATIONS};
use hsad_core::{Axis, Cube, LinearMap, ProblemSpec, Regularizer, RegularizerKind, Shape};
use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use rand::Rng;

use super::*;

pub type Check = Result<(), String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------------------
// Proximal operators: `argmin_x γ f(x) + ½‖x − v‖²` by direct minimization.

pub const PROX_MAX_SHAPE: (usize, usize, usize) = (4, 4, 3);
pub const PROX_TOL: f64 = 1e-5;
pub const NUCLEAR_TOL: f64 = 1e-4;

fn sq_dist(x: &[f64], v: &[f64]) -> f64 {
    x.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn free_bracket(radius: f64) -> impl Fn(&[f64], &[f64]) -> (f64, f64) {
    move |_, _| (-radius, radius)
}

pub fn check_prox_l1(instances: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    for n in 0..instances {
        let shape = random_shape(&mut r, PROX_MAX_SHAPE);
        let v = random_cube(&mut r, shape, 2.0);
        let gamma = r.random_range(0.0..1.5);
        let vs = v.as_slice().to_vec();
        let f = |x: &[f64]| gamma * x.iter().map(|t| t.abs()).sum::<f64>() + 0.5 * sq_dist(x, &vs);
        let oracle = line_search_minimize(&f, &free_bracket(6.0), &|_| vec![], vec![0.0; vs.len()], false, 50);
        let d = max_abs_diff(prox_l1(&v, gamma).as_slice(), &oracle);
        ensure(d < PROX_TOL, || format!("l1 instance {n} (shape {shape}, gamma {gamma}): diff {d}"))?;
    }
    Ok(())
}

pub fn check_prox_l21(instances: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    for n in 0..instances {
        let shape = random_shape(&mut r, PROX_MAX_SHAPE);
        let v = random_cube(&mut r, shape, 1.5);
        // Half the instances use thresholds near the tube norms, so both
        // branches occur.
        let gamma = if n % 2 == 0 { r.random_range(0.0..1.0) } else { r.random_range(0.5..2.5) };
        let b = shape.bands;
        let vs = v.as_slice().to_vec();
        let f = |x: &[f64]| {
            gamma * x.chunks(b).map(|t| t.iter().map(|a| a * a).sum::<f64>().sqrt()).sum::<f64>()
                + 0.5 * sq_dist(x, &vs)
        };
        // Within each tube: toward the origin, and along the gradient of the
        // quadratic term, so the search can leave or reach a zero tube.
        let extra = |x: &[f64]| {
            let mut dirs = toward_origin(x, b);
            let g: Vec<f64> = vs.iter().zip(x).map(|(a, c)| a - c).collect();
            dirs.extend(toward_origin(&g, b).into_iter().map(|d| d.iter().map(|t| -t).collect()));
            dirs
        };
        let oracle = line_search_minimize(&f, &free_bracket(6.0), &extra, vec![0.0; vs.len()], false, 3000);
        let d = max_abs_diff(prox_l21(&v, gamma).as_slice(), &oracle);
        ensure(d < PROX_TOL, || format!("l21 instance {n} (shape {shape}, gamma {gamma}): diff {d}"))?;
    }
    Ok(())
}

/// Projection onto a convex set by maximizing the concave Lagrangian dual
/// `q(μ) = min_x ½‖x − v‖² + μ·(h(x) − r)` over `μ ≥ 0` with golden-section
/// search; `inner(μ)` is the inner minimizer. Strong duality makes the inner
/// minimizer at the best `μ` the projection.
fn dual_projection(
    v: &[f64],
    h: impl Fn(&[f64]) -> f64,
    r: f64,
    inner: impl Fn(f64) -> Vec<f64>,
    mu_max: f64,
) -> Vec<f64> {
    if h(v) <= r {
        return v.to_vec();
    }
    let q = |mu: f64| {
        let x = inner(mu);
        0.5 * sq_dist(&x, v) + mu * (h(&x) - r)
    };
    let mu = golden_section(|m| -q(m), 0.0, mu_max);
    inner(mu)
}

pub fn check_frobenius_projection(instances: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    for n in 0..instances {
        let shape = random_shape(&mut r, PROX_MAX_SHAPE);
        let v = random_cube(&mut r, shape, 2.0);
        let c = random_cube(&mut r, shape, 1.0);
        let dist = v.sub(&c).frobenius();
        let eps = match n % 4 {
            0 => 0.0,
            1 => dist * r.random_range(1.0..2.0),
            _ => dist * r.random_range(0.05..0.95),
        };
        let (vs, cs) = (v.as_slice().to_vec(), c.as_slice().to_vec());
        let got = project_frobenius_ball(&v, &c, eps).map_err(|e| e.to_string())?;
        let oracle = if eps == 0.0 {
            cs.clone()
        } else {
            // Constraint ‖x − c‖² ≤ ε²; the inner problem is an isotropic
            // quadratic with minimizer (v + 2μc)/(1 + 2μ).
            dual_projection(
                &vs,
                |x| sq_dist(x, &cs),
                eps * eps,
                |mu| vs.iter().zip(&cs).map(|(a, b)| (a + 2.0 * mu * b) / (1.0 + 2.0 * mu)).collect(),
                1e8,
            )
        };
        let d = max_abs_diff(got.as_slice(), &oracle);
        ensure(d < PROX_TOL, || format!("Frobenius ball instance {n} (shape {shape}, eps {eps}): diff {d}"))?;
        ensure(got.sub(&c).frobenius() <= eps * (1.0 + 1e-12) + 1e-15, || format!("instance {n} leaves the ball"))?;
    }
    Ok(())
}

pub fn check_l1_projection(instances: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    for n in 0..instances {
        let shape = random_shape(&mut r, PROX_MAX_SHAPE);
        let v = random_cube(&mut r, shape, 2.0);
        let l1: f64 = v.as_slice().iter().map(|a| a.abs()).sum();
        let alpha = match n % 4 {
            0 => 0.0,
            1 => l1 * r.random_range(1.0..1.5),
            _ => l1 * r.random_range(0.05..0.95),
        };
        let vs = v.as_slice().to_vec();
        let vmax = vs.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        // The inner problem separates per entry: soft thresholding at μ.
        let oracle = dual_projection(
            &vs,
            |x| x.iter().map(|a| a.abs()).sum(),
            alpha,
            |mu| vs.iter().map(|&a| a.signum() * (a.abs() - mu).max(0.0)).collect(),
            vmax + 1.0,
        );
        for got in [project_l1_ball(&v, alpha), project_l1_ball_sorted(&v, alpha)] {
            let d = max_abs_diff(got.as_slice(), &oracle);
            ensure(d < PROX_TOL, || format!("l1 ball instance {n} (shape {shape}, alpha {alpha}): diff {d}"))?;
            let norm: f64 = got.as_slice().iter().map(|a| a.abs()).sum();
            ensure(norm <= alpha * (1.0 + 1e-12) + 1e-15, || format!("instance {n} leaves the ball"))?;
        }
    }
    Ok(())
}

fn to_matrix(c: &Cube) -> DMatrix<f64> {
    let s = c.shape();
    DMatrix::from_fn(s.height, s.width, |i, j| c.get(i, j, 0))
}

/// Singular value thresholding through an independent eigendecomposition of
/// the Gram matrix on the short side: with `M Mᵀ = U Σ² Uᵀ`, the result is
/// `U diag(max(σ − γ, 0)/σ) Uᵀ M`. (nalgebra's SVD loses accuracy on some
/// rank-deficient inputs, so the oracle avoids it.)
fn svt_oracle(v: &DMatrix<f64>, gamma: f64) -> DMatrix<f64> {
    if v.nrows() > v.ncols() {
        return svt_oracle(&v.transpose(), gamma).transpose();
    }
    let eig = (v * v.transpose()).symmetric_eigen();
    let factors = eig.eigenvalues.map(|l| {
        let s = l.max(0.0).sqrt();
        if s > gamma {
            (s - gamma) / s
        } else {
            0.0
        }
    });
    let u = &eig.eigenvectors;
    u * DMatrix::from_diagonal(&factors) * u.transpose() * v
}

fn eigen_nuclear_norm(p: &DMatrix<f64>) -> f64 {
    (p * p.transpose()).symmetric_eigen().eigenvalues.iter().map(|l| l.max(0.0).sqrt()).sum()
}

fn prox_objective(p: &DMatrix<f64>, v: &DMatrix<f64>, gamma: f64) -> f64 {
    gamma * eigen_nuclear_norm(p) + 0.5 * (p - v).norm_squared()
}

fn random_matrix(r: &mut impl Rng, rows: usize, cols: usize, rank: Option<usize>) -> Cube {
    let shape = Shape::new(rows, cols, 1);
    match rank {
        None => random_cube(r, shape, 2.0),
        Some(k) => {
            let a = DMatrix::from_fn(rows, k, |_, _| r.random_range(-1.0..1.0));
            let b = DMatrix::from_fn(k, cols, |_, _| r.random_range(-1.0..1.0));
            let m = a * b;
            Cube::from_fn(shape, |i, j, _| m[(i, j)])
        }
    }
}

/// 5×8 and 8×5 matrices, some of low rank, against the eigen oracle plus a
/// subgradient optimality certificate.
pub fn check_prox_nuclear(instances: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    for n in 0..instances {
        let (rows, cols) = if n % 3 == 2 { (8, 5) } else { (5, 8) };
        let rank = if n % 4 == 3 { Some(r.random_range(1..=3)) } else { None };
        let v = random_matrix(&mut r, rows, cols, rank);
        let vm = to_matrix(&v);
        let sigma_max = (&vm * vm.transpose()).symmetric_eigen().eigenvalues.max().sqrt();
        let gamma = r.random_range(0.0..1.2) * sigma_max;
        let got = prox_nuclear(&v, gamma).map_err(|e| e.to_string())?;
        let gm = to_matrix(&got);
        let oracle = svt_oracle(&vm, gamma);
        let diff = (&gm - &oracle).abs().max();
        ensure(diff < NUCLEAR_TOL, || format!("nuclear instance {n}: differs from oracle by {diff}"))?;
        ensure(prox_objective(&gm, &vm, gamma) <= prox_objective(&oracle, &vm, gamma) + 1e-6, || {
            format!("nuclear instance {n}: objective above the oracle's")
        })?;

        // Optimality: (V − P)/γ must be a subgradient of the nuclear norm at
        // P, i.e. spectral norm ≤ 1 and ⟨(V − P)/γ, P⟩ = ‖P‖_*. Square roots
        // of tiny Gram eigenvalues limit these comparisons to ~1e-8.
        if gamma > 0.0 {
            let g = (&vm - &gm) / gamma;
            let spectral = (&g * g.transpose()).symmetric_eigen().eigenvalues.max().max(0.0).sqrt();
            ensure(spectral <= 1.0 + 1e-6, || format!("nuclear instance {n}: spectral norm {spectral}"))?;
            let inner = g.component_mul(&gm).sum();
            let nuc = eigen_nuclear_norm(&gm);
            ensure((inner - nuc).abs() <= 1e-6 * (1.0 + nuc), || format!("nuclear instance {n}: {inner} vs {nuc}"))?;
            let lib = nuclear_norm(&got).map_err(|e| e.to_string())?;
            ensure((lib - nuc).abs() <= 1e-6 * (1.0 + nuc), || format!("nuclear instance {n}: norm {lib} vs {nuc}"))?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Linear maps.

pub const OMEGA: f64 = 0.05;

#[derive(Clone, Copy, Debug)]
pub enum MapKind {
    Vertical,
    Horizontal,
    Spectral,
    Spatial,
    SpatialOfSpectral,
    Hybrid,
    Matricize,
}

pub const MAP_KINDS: [MapKind; 7] = [
    MapKind::Vertical,
    MapKind::Horizontal,
    MapKind::Spectral,
    MapKind::Spatial,
    MapKind::SpatialOfSpectral,
    MapKind::Hybrid,
    MapKind::Matricize,
];

pub fn build_map(kind: MapKind, shape: Shape) -> LinearMap {
    match kind {
        MapKind::Vertical => LinearMap::diff(Axis::Vertical, shape),
        MapKind::Horizontal => LinearMap::diff(Axis::Horizontal, shape),
        MapKind::Spectral => LinearMap::diff(Axis::Spectral, shape),
        MapKind::Spatial => LinearMap::spatial_diff(shape),
        MapKind::SpatialOfSpectral => {
            LinearMap::compose(LinearMap::spatial_diff(shape).unwrap(), LinearMap::diff(Axis::Spectral, shape).unwrap())
        }
        MapKind::Hybrid => LinearMap::spatial_spectral(OMEGA, shape),
        MapKind::Matricize => LinearMap::matricize(shape),
    }
    .unwrap()
}

/// Documented operator-norm bounds.
pub fn documented_bound(kind: MapKind) -> f64 {
    match kind {
        MapKind::Vertical | MapKind::Horizontal | MapKind::Spectral => 2.0,
        MapKind::Spatial => 2.0 * 2f64.sqrt(),
        MapKind::SpatialOfSpectral => 4.0 * 2f64.sqrt(),
        MapKind::Hybrid => (32.0 + 8.0 * OMEGA * OMEGA).sqrt(),
        MapKind::Matricize => 1.0,
    }
}

pub fn documented_bound_sq(kind: MapKind) -> BigRational {
    let int = |n: i64| BigRational::from_integer(BigInt::from(n));
    match kind {
        MapKind::Vertical | MapKind::Horizontal | MapKind::Spectral => int(4),
        MapKind::Spatial => int(8),
        MapKind::SpatialOfSpectral => int(32),
        MapKind::Hybrid => {
            let w = BigRational::from_float(OMEGA).unwrap();
            int(32) + int(8) * &w * &w
        }
        MapKind::Matricize => int(1),
    }
}

/// `⟨F(x), y⟩ = ⟨x, F*(y)⟩` at relative `1e-10`.
pub fn check_adjoint(kind: MapKind, shape: Shape, seed: u64) -> Check {
    let mut r = rng(seed);
    let map = build_map(kind, shape);
    let x = random_cube(&mut r, map.input_shape(), 1.0);
    let y = random_cube(&mut r, map.output_shape(), 1.0);
    let fx = map.forward(&x).map_err(|e| e.to_string())?;
    let fty = map.adjoint(&y).map_err(|e| e.to_string())?;
    let (lhs, rhs) = (fx.dot(&y), x.dot(&fty));
    let scale = (fx.frobenius() * y.frobenius()).max(x.frobenius() * fty.frobenius()).max(1e-300);
    ensure((lhs - rhs).abs() <= 1e-10 * scale, || format!("{kind:?} adjoint on {shape}: {lhs} vs {rhs}"))
}

pub fn check_power_bound(kind: MapKind, shape: Shape, seed: u64) -> Check {
    let map = build_map(kind, shape);
    let est = estimate_opnorm(&map, DEFAULT_POWER_ITERATIONS, seed).map_err(|e| e.to_string())?;
    ensure(est <= documented_bound(kind) + 1e-6, || format!("{kind:?} on {shape}: estimate {est} above bound"))?;
    ensure(est <= map.opnorm_bound() + 1e-6, || format!("{kind:?} on {shape}: estimate {est} above certified bound"))
}

/// The vertical difference estimate must approach its bound on tall cubes.
pub fn check_vertical_tightness() -> Check {
    for (h, w, b) in [(32, 8, 4), (48, 6, 3), (64, 4, 2)] {
        let map = LinearMap::diff(Axis::Vertical, Shape::new(h, w, b)).unwrap();
        let est = estimate_opnorm(&map, DEFAULT_POWER_ITERATIONS, 11).map_err(|e| e.to_string())?;
        ensure(est > 1.8 && est <= 2.0 + 1e-6, || format!("height {h}: estimate {est}"))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Dual updates against the conjugates' closed forms.

fn random_state(r: &mut impl Rng, shape: Shape, dual_shape: Shape) -> SolverState {
    SolverState {
        b: random_cube(r, shape, 1.0),
        a: random_cube(r, shape, 1.0),
        s: random_cube(r, shape, 1.0),
        l: random_cube(r, shape, 1.0),
        y1: random_cube(r, dual_shape, 2.0),
        y2: random_cube(r, shape, 1.0),
        y3: random_cube(r, shape, 3.0),
        iteration: 0,
        last_relative_change: f64::INFINITY,
    }
}

/// Projection onto the unit ball of the regularizer's dual norm.
fn conjugate_projection(kind: RegularizerKind, y: &Cube) -> Cube {
    match kind {
        RegularizerKind::Htv => {
            let mut out = y.clone();
            for tube in out.tubes_mut() {
                let n = tube.iter().map(|t| t * t).sum::<f64>().sqrt();
                if n > 1.0 {
                    tube.iter_mut().for_each(|t| *t /= n);
                }
            }
            out
        }
        RegularizerKind::Sstv | RegularizerKind::Hsstv => y.map(|t| t.clamp(-1.0, 1.0)),
        RegularizerKind::Nuclear => {
            let s = y.shape();
            let m = DMatrix::from_fn(s.height, s.width, |i, j| y.get(i, j, 0));
            let eig = (&m * m.transpose()).symmetric_eigen();
            let f = eig.eigenvalues.map(|l| {
                let sigma = l.max(0.0).sqrt();
                if sigma > 1.0 {
                    1.0 / sigma
                } else {
                    1.0
                }
            });
            let u = &eig.eigenvectors;
            let p = u * DMatrix::from_diagonal(&f) * u.transpose() * &m;
            Cube::from_fn(s, |i, j, _| p[(i, j)])
        }
    }
}

fn relative_gap(a: &Cube, b: &Cube) -> f64 {
    a.sub(b).frobenius() / (1.0 + b.frobenius())
}

/// One solver step from a random state, with the three dual updates rebuilt
/// from `prox_{γg*}`: a dual-norm ball projection for the regularizer, the
/// identity for the flatness constraint, and a shifted group shrinkage for
/// the data-fidelity ball. Agreement at `1e-10`.
pub fn check_dual_updates(trials: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let regs = [Regularizer::htv(), Regularizer::sstv(), Regularizer::hsstv(OMEGA).unwrap(), Regularizer::nuclear()];
    for trial in 0..trials {
        let shape = Shape::new(r.random_range(2..7), r.random_range(2..7), r.random_range(2..6));
        let reg = regs[trial % regs.len()];
        let observed = random_cube(&mut r, shape, 1.0);
        let lambda1 = r.random_range(0.0..1.5);
        let lambda2 = r.random_range(0.0..0.5);
        let epsilon = if trial % 5 == 0 { 0.0 } else { r.random_range(0.0..3.0) };
        let alpha = r.random_range(0.0..5.0);
        let spec = ProblemSpec::new(observed.clone(), lambda1, lambda2, epsilon, alpha, reg).unwrap();
        let solver = Decomposer::new(spec).unwrap();
        let map = reg.linmap(shape).unwrap();
        let dv = LinearMap::diff(Axis::Vertical, shape).unwrap();
        let g = solver.stepsizes();

        let before = random_state(&mut r, shape, map.output_shape());
        let mut after = before.clone();
        solver.step(&mut after).map_err(|e| e.to_string())?;

        let bar = |new: &Cube, old: &Cube| new.scale(2.0).sub(old);
        let (bb, ab, sb, lb) =
            (bar(&after.b, &before.b), bar(&after.a, &before.a), bar(&after.s, &before.s), bar(&after.l, &before.l));

        let y1_tilde = before.y1.add(&map.forward(&bb).unwrap().scale(g.gamma_y1));
        let y1 = conjugate_projection(reg.kind(), &y1_tilde);
        let gap = relative_gap(&after.y1, &y1);
        ensure(gap < 1e-10, || format!("{} trial {trial}: regularizer dual off by {gap}", reg.name()))?;

        let y2 = before.y2.add(&dv.forward(&lb).unwrap().scale(g.gamma_y2));
        let gap = relative_gap(&after.y2, &y2);
        ensure(gap < 1e-10, || format!("trial {trial}: flatness dual off by {gap}"))?;

        let push = bb.add(&ab).add(&sb).add(&lb);
        let z = before.y3.add(&push.scale(g.gamma_y3)).sub(&observed.scale(g.gamma_y3));
        let n = z.frobenius();
        let t = g.gamma_y3 * epsilon;
        let y3 = if n > t { z.scale(1.0 - t / n) } else { Cube::zeros(shape) };
        let gap = relative_gap(&after.y3, &y3);
        ensure(gap < 1e-10, || format!("trial {trial}: data-fidelity dual off by {gap}"))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Detection metrics.

/// Fraction of (anomaly, background) pairs ranked correctly, ties counting
/// one half.
pub fn mann_whitney(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (sa, _) in scores.iter().zip(labels).filter(|(_, &l)| l) {
        for (sb, _) in scores.iter().zip(labels).filter(|(_, &l)| !l) {
            pairs += 1.0;
            if sa > sb {
                wins += 1.0;
            } else if sa == sb {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

pub fn naive_ser(scores: &[f64], labels: &[bool]) -> f64 {
    let mut total = 0.0;
    for (s, &l) in scores.iter().zip(labels) {
        let target = if l { 1.0 } else { 0.0 };
        total += (s - target) * (s - target);
    }
    100.0 * total / scores.len() as f64
}

pub fn random_map_case(r: &mut impl Rng) -> (DetectionMap, GroundTruthMask) {
    let (h, w) = (r.random_range(1..12), r.random_range(2..12));
    let n = h * w;
    let mut labels: Vec<bool> = (0..n).map(|_| r.random_bool(0.2)).collect();
    labels[0] = true;
    labels[n - 1] = false;
    // Coarse quantization on some maps produces many ties.
    let levels = if r.random_bool(0.5) { r.random_range(2..6) as f64 } else { 0.0 };
    let scores: Vec<f64> = (0..n)
        .map(|_| {
            let s: f64 = r.random_range(0.0..1.0);
            if levels > 0.0 {
                (s * levels).floor() / levels
            } else {
                s
            }
        })
        .collect();
    (DetectionMap::new(h, w, scores).unwrap(), GroundTruthMask::new(h, w, labels).unwrap())
}

pub fn check_auc(maps: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    for n in 0..maps {
        let (map, gt) = random_map_case(&mut r);
        let expected = mann_whitney(&map.scores, &gt.labels);
        let got = auc(&map, &gt).map_err(|e| e.to_string())?;
        ensure((got - expected).abs() <= 1e-12, || format!("map {n}: auc {got} vs {expected}"))?;
    }
    Ok(())
}

pub fn check_ser(maps: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    for n in 0..maps {
        let (map, gt) = random_map_case(&mut r);
        let map = normalize_map(&map);
        let got = ser(&map, &gt).map_err(|e| e.to_string())?;
        let expected = naive_ser(&map.scores, &gt.labels);
        ensure((got - expected).abs() <= 1e-12, || format!("map {n}: ser {got} vs {expected}"))?;
    }
    Ok(())
}

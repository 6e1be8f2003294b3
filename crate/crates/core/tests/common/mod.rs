#![allow(dead_code)]

use hsad_core::{Cube, Shape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub mod oracles;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_cube(r: &mut impl Rng, shape: Shape, scale: f64) -> Cube {
    Cube::from_fn(shape, |_, _, _| r.random_range(-scale..scale))
}

/// Random shape with each extent in `1..=max`.
pub fn random_shape(r: &mut impl Rng, max: (usize, usize, usize)) -> Shape {
    Shape::new(r.random_range(1..=max.0), r.random_range(1..=max.1), r.random_range(1..=max.2))
}

/// Minimizer of a unimodal function on `[lo, hi]`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if hi - lo < 1e-13 * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// Derivative-free minimizer of a convex function by exact line searches
/// along coordinate directions, optional pairwise directions `eᵢ ± eⱼ`, and
/// the state-dependent directions from `extra`. `interval(x, d)` returns the
/// admissible step range along `d`.
pub type Interval<'a> = &'a dyn Fn(&[f64], &[f64]) -> (f64, f64);

pub fn line_search_minimize(
    f: &dyn Fn(&[f64]) -> f64,
    interval: Interval<'_>,
    extra: &dyn Fn(&[f64]) -> Vec<Vec<f64>>,
    x0: Vec<f64>,
    pairwise: bool,
    sweeps: usize,
) -> Vec<f64> {
    let n = x0.len();
    let mut x = x0;
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for i in 0..n {
        let mut d = vec![0.0; n];
        d[i] = 1.0;
        dirs.push(d);
    }
    if pairwise {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for i in 0..n {
            for j in i + 1..n {
                for s in [1.0, -1.0] {
                    let mut d = vec![0.0; n];
                    d[i] = h;
                    d[j] = s * h;
                    dirs.push(d);
                }
            }
        }
    }
    let mut best = f(&x);
    for _ in 0..sweeps {
        let start = best;
        let more = extra(&x);
        for d in dirs.iter().chain(more.iter()) {
            if d.iter().all(|v| *v == 0.0) {
                continue;
            }
            let (lo, hi) = interval(&x, d);
            if hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) {
                continue;
            }
            let along = |t: f64| {
                let y: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + t * b).collect();
                f(&y)
            };
            let t = golden_section(along, lo, hi);
            let y: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + t * b).collect();
            let fy = f(&y);
            if fy < best {
                best = fy;
                x = y;
            }
        }
        if start - best <= 1e-16 * (1.0 + best.abs()) {
            break;
        }
    }
    x
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Moves toward the origin, as a whole and within each consecutive group of
/// `group` entries.
pub fn toward_origin(x: &[f64], group: usize) -> Vec<Vec<f64>> {
    let mut out = vec![x.iter().map(|v| -v).collect::<Vec<f64>>()];
    for start in (0..x.len()).step_by(group) {
        let mut d = vec![0.0; x.len()];
        for k in start..(start + group).min(x.len()) {
            d[k] = -x[k];
        }
        out.push(d);
    }
    out
}

//! Closed-form proximity operators and metric projections.
//!
//! Every operator takes the threshold or radius already multiplied by any
//! stepsize, i.e. `prox_l1(x, γ)` evaluates `prox_{γ‖·‖₁}(x)`. A threshold of
//! zero is the identity.

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::tensor::{Cube, NormKind};

/// Element-wise soft thresholding `sgn(x)·max(|x| − γ, 0)`.
pub fn prox_l1(x: &Cube, gamma: f64) -> Cube {
    debug_assert!(gamma >= 0.0, "threshold must be nonnegative");
    x.map(|v| soft(v, gamma))
}

#[inline]
pub(crate) fn soft(v: f64, gamma: f64) -> f64 {
    let m = v.abs() - gamma;
    if m > 0.0 {
        m.copysign(v)
    } else {
        0.0
    }
}

/// Group shrinkage of each spectral tube by `max(1 − γ/‖tube‖₂, 0)`.
/// Tubes with norm at most `γ`, zero tubes included, map to zero.
pub fn prox_l21(x: &Cube, gamma: f64) -> Cube {
    debug_assert!(gamma >= 0.0, "threshold must be nonnegative");
    let mut out = x.clone();
    for tube in out.tubes_mut() {
        let n = tube.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n <= gamma {
            tube.iter_mut().for_each(|v| *v = 0.0);
        } else {
            let f = 1.0 - gamma / n;
            tube.iter_mut().for_each(|v| *v *= f);
        }
    }
    out
}

/// Singular value thresholding of a matrix stored as a single-band cube
/// (`height = rows`, `width = cols`).
pub fn prox_nuclear(x: &Cube, gamma: f64) -> Result<Cube> {
    let s = x.shape();
    if s.bands != 1 {
        return Err(Error::InvalidShape(format!("nuclear prox expects a single-band matrix cube, got {s}")));
    }
    let m = Matrix::from_row_major(s.height, s.width, x.as_slice().to_vec());
    let out = linalg::singular_value_threshold(&m, gamma)?;
    Ok(Cube::from_raw(s, out.data))
}

/// Nuclear norm of a single-band matrix cube.
pub fn nuclear_norm(x: &Cube) -> Result<f64> {
    let s = x.shape();
    if s.bands != 1 {
        return Err(Error::InvalidShape(format!("nuclear norm expects a single-band matrix cube, got {s}")));
    }
    let m = Matrix::from_row_major(s.height, s.width, x.as_slice().to_vec());
    Ok(linalg::singular_values(&m)?.iter().sum())
}

/// Projection onto `{O}`.
pub fn project_zero(x: &Cube) -> Cube {
    Cube::zeros(x.shape())
}

/// Projection onto the Frobenius ball of radius `epsilon` around `center`.
pub fn project_frobenius_ball(x: &Cube, center: &Cube, epsilon: f64) -> Result<Cube> {
    center.ensure_same_shape(x)?;
    if epsilon.is_nan() || epsilon < 0.0 {
        return Err(Error::param("epsilon", format!("must be nonnegative, got {epsilon}")));
    }
    let dist = x.sub(center).frobenius();
    if dist <= epsilon {
        return Ok(x.clone());
    }
    let f = epsilon / dist;
    Ok(center.zip_map(x, |c, v| c + f * (v - c)))
}

/// Projection onto the ℓ1 ball of radius `alpha` centered at the origin,
/// using Condat's linear expected-time threshold search.
pub fn project_l1_ball(x: &Cube, alpha: f64) -> Cube {
    debug_assert!(alpha >= 0.0);
    if alpha <= 0.0 {
        return Cube::zeros(x.shape());
    }
    if x.norm(NormKind::L1) <= alpha {
        return x.clone();
    }
    let tau = condat_threshold(x.as_slice(), alpha);
    prox_l1(x, tau)
}

/// Reference ℓ1-ball projection: sorts magnitudes to find the threshold.
pub fn project_l1_ball_sorted(x: &Cube, alpha: f64) -> Cube {
    debug_assert!(alpha >= 0.0);
    if alpha <= 0.0 {
        return Cube::zeros(x.shape());
    }
    if x.norm(NormKind::L1) <= alpha {
        return x.clone();
    }
    let mut mags: Vec<f64> = x.as_slice().iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (k, &u) in mags.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - alpha) / (k + 1) as f64;
        if u > t {
            tau = t;
        } else {
            break;
        }
    }
    prox_l1(x, tau)
}

/// Threshold `τ` with `Σ max(|xᵢ| − τ, 0) = alpha`, assuming `‖x‖₁ > alpha`.
fn condat_threshold(x: &[f64], alpha: f64) -> f64 {
    let mut iter = x.iter().map(|v| v.abs());
    let first = iter.next().expect("nonempty input");
    let mut active = vec![first];
    let mut parked: Vec<f64> = Vec::new();
    let mut rho = first - alpha;
    for y in iter {
        if y > rho {
            rho += (y - rho) / (active.len() + 1) as f64;
            if rho > y - alpha {
                active.push(y);
            } else {
                parked.append(&mut active);
                active.push(y);
                rho = y - alpha;
            }
        }
    }
    for y in parked {
        if y > rho {
            active.push(y);
            rho += (y - rho) / active.len() as f64;
        }
    }
    loop {
        let before = active.len();
        let mut i = 0;
        while i < active.len() {
            let y = active[i];
            if y <= rho {
                active.swap_remove(i);
                rho += (rho - y) / active.len() as f64;
            } else {
                i += 1;
            }
        }
        if active.len() == before {
            break;
        }
    }
    rho.max(0.0)
}

/// A convex set with a closed-form metric projection.
#[derive(Clone, Debug)]
pub enum BallSpec {
    FrobeniusCentered { center: Cube, radius: f64 },
    L1Origin { radius: f64 },
}

impl BallSpec {
    pub fn project(&self, x: &Cube) -> Result<Cube> {
        match self {
            BallSpec::FrobeniusCentered { center, radius } => project_frobenius_ball(x, center, *radius),
            BallSpec::L1Origin { radius } => Ok(project_l1_ball(x, *radius)),
        }
    }

    /// Membership with relative slack `tol`.
    pub fn contains(&self, x: &Cube, tol: f64) -> bool {
        match self {
            BallSpec::FrobeniusCentered { center, radius } => {
                x.shape() == center.shape() && x.sub(center).frobenius() <= radius * (1.0 + tol)
            }
            BallSpec::L1Origin { radius } => x.norm(NormKind::L1) <= radius * (1.0 + tol),
        }
    }
}

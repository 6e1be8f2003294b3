//! Generic preconditioned primal-dual splitting.
//!
//! Solves `min Σᵢ fᵢ(xᵢ) + Σⱼ gⱼ(Σᵢ 𝔏ⱼᵢ xᵢ)` with per-block stepsizes chosen
//! from operator-norm bounds: `γ_{xᵢ} = 1 / Σⱼ μ²ⱼᵢ` and `γ_{yⱼ} = 1/N`.
//! One iteration updates every primal block from the previous duals, then
//! every dual block from the extrapolated primal `2x⁽ⁿ⁺¹⁾ − x⁽ⁿ⁾` using
//! `y ← ỹ − γ·prox_{g/γ}(ỹ/γ)`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::tensor::{Cube, LinearMap, Shape};

/// `(x, τ) ↦ prox_{τh}(x)` for some proximable `h`.
pub type ProxFn = Box<dyn Fn(&Cube, f64) -> Result<Cube> + Send + Sync>;

pub struct PrimalBlock {
    pub init: Cube,
    /// `None` means `f = 0`, whose prox is the identity.
    pub prox: Option<ProxFn>,
}

pub struct DualBlock {
    pub shape: Shape,
    pub prox: ProxFn,
}

pub struct Coupling {
    pub dual: usize,
    pub primal: usize,
    pub map: LinearMap,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PpdsStepsizes {
    pub primal: Vec<BigRational>,
    pub dual: Vec<BigRational>,
}

impl PpdsStepsizes {
    pub fn primal_f64(&self) -> Vec<f64> {
        self.primal.iter().map(|g| g.to_f64().expect("finite stepsize")).collect()
    }

    pub fn dual_f64(&self) -> Vec<f64> {
        self.dual.iter().map(|g| g.to_f64().expect("finite stepsize")).collect()
    }
}

/// Operator-norm based diagonal preconditioning. `mu_sq` lists
/// `(dual j, primal i, μ²ⱼᵢ)` for each nonzero coupling.
pub fn ovdp_stepsizes(n_primal: usize, n_dual: usize, mu_sq: &[(usize, usize, &BigRational)]) -> Result<PpdsStepsizes> {
    if n_primal == 0 {
        return Err(Error::param("primal", "at least one primal block is required"));
    }
    let mut sums = vec![BigRational::zero(); n_primal];
    for &(j, i, m) in mu_sq {
        if j >= n_dual || i >= n_primal {
            return Err(Error::param("coupling", format!("index ({j}, {i}) out of range")));
        }
        sums[i] += m;
    }
    let primal = sums
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            if s.is_zero() {
                Err(Error::param("coupling", format!("primal block {i} is not coupled to any dual block")))
            } else {
                Ok(s.recip())
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let n = BigRational::from_integer(BigInt::from(n_primal));
    Ok(PpdsStepsizes { primal, dual: vec![n.recip(); n_dual] })
}

/// `x − γ·g`
pub(crate) fn descent(x: &Cube, gamma: f64, g: &Cube) -> Cube {
    x.zip_map(g, |a, b| a - gamma * b)
}

/// `y + γ·g`
pub(crate) fn ascent(y: &Cube, gamma: f64, g: &Cube) -> Cube {
    y.zip_map(g, |a, b| a + gamma * b)
}

/// `2·new − old`
pub(crate) fn extrapolate(new: &Cube, old: &Cube) -> Cube {
    new.zip_map(old, |a, b| 2.0 * a - b)
}

/// Dual update in Moreau form: `ỹ − γ·prox_{(1/γ)g}(ỹ/γ)`.
pub fn moreau_dual_update(y_tilde: &Cube, gamma: f64, prox_g: impl FnOnce(&Cube, f64) -> Result<Cube>) -> Result<Cube> {
    let scaled = y_tilde.map(|v| v / gamma);
    let p = prox_g(&scaled, 1.0 / gamma)?;
    Ok(descent(y_tilde, gamma, &p))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PpdsState {
    pub primal: Vec<Cube>,
    pub dual: Vec<Cube>,
    pub iteration: usize,
}

#[derive(Debug)]
pub struct PpdsOutcome {
    pub state: PpdsState,
    /// Whether the stopping rule fired before the iteration cap.
    pub stopped: bool,
}

pub struct PpdsProblem {
    primal: Vec<PrimalBlock>,
    dual: Vec<DualBlock>,
    couplings: Vec<Coupling>,
    /// Coupling indices per primal block, ordered by dual index.
    by_primal: Vec<Vec<usize>>,
    /// Coupling indices per dual block, ordered by primal index.
    by_dual: Vec<Vec<usize>>,
    gamma_x: Vec<f64>,
    gamma_y: Vec<f64>,
    stepsizes: PpdsStepsizes,
}

impl PpdsProblem {
    pub fn new(primal: Vec<PrimalBlock>, dual: Vec<DualBlock>, couplings: Vec<Coupling>) -> Result<Self> {
        for c in &couplings {
            let p = primal
                .get(c.primal)
                .ok_or_else(|| Error::param("coupling", format!("primal index {} out of range", c.primal)))?;
            let d = dual
                .get(c.dual)
                .ok_or_else(|| Error::param("coupling", format!("dual index {} out of range", c.dual)))?;
            if c.map.input_shape() != p.init.shape() {
                return Err(Error::ShapeMismatch { expected: p.init.shape(), found: c.map.input_shape() });
            }
            if c.map.output_shape() != d.shape {
                return Err(Error::ShapeMismatch { expected: d.shape, found: c.map.output_shape() });
            }
        }
        let mut by_primal = vec![Vec::new(); primal.len()];
        let mut by_dual = vec![Vec::new(); dual.len()];
        for (idx, c) in couplings.iter().enumerate() {
            by_primal[c.primal].push(idx);
            by_dual[c.dual].push(idx);
        }
        for list in &mut by_primal {
            list.sort_by_key(|&k| couplings[k].dual);
        }
        for list in &mut by_dual {
            list.sort_by_key(|&k| couplings[k].primal);
        }
        let mu: Vec<_> = couplings.iter().map(|c| (c.dual, c.primal, c.map.norm_sq_bound())).collect();
        let stepsizes = ovdp_stepsizes(primal.len(), dual.len(), &mu)?;
        Ok(PpdsProblem {
            gamma_x: stepsizes.primal_f64(),
            gamma_y: stepsizes.dual_f64(),
            stepsizes,
            primal,
            dual,
            couplings,
            by_primal,
            by_dual,
        })
    }

    pub fn stepsizes(&self) -> &PpdsStepsizes {
        &self.stepsizes
    }

    pub fn initial_state(&self) -> PpdsState {
        PpdsState {
            primal: self.primal.iter().map(|b| b.init.clone()).collect(),
            dual: self.dual.iter().map(|d| Cube::zeros(d.shape)).collect(),
            iteration: 0,
        }
    }

    /// Sum of the listed couplings, accumulated in list order.
    fn accumulate(&self, list: &[usize], shape: Shape, term: impl Fn(&Coupling) -> Cube) -> Cube {
        let mut iter = list.iter();
        match iter.next() {
            None => Cube::zeros(shape),
            Some(&first) => {
                let mut acc = term(&self.couplings[first]);
                for &k in iter {
                    acc.add_assign(&term(&self.couplings[k]));
                }
                acc
            }
        }
    }

    pub fn step(&self, state: &mut PpdsState) -> Result<()> {
        let mut next_primal = Vec::with_capacity(self.primal.len());
        for (i, block) in self.primal.iter().enumerate() {
            let x = &state.primal[i];
            let pull = self.accumulate(&self.by_primal[i], x.shape(), |c| c.map.apply_adjoint(&state.dual[c.dual]));
            let v = descent(x, self.gamma_x[i], &pull);
            next_primal.push(match &block.prox {
                Some(p) => p(&v, self.gamma_x[i])?,
                None => v,
            });
        }
        let bars: Vec<Cube> = next_primal.iter().zip(&state.primal).map(|(n, o)| extrapolate(n, o)).collect();
        let mut next_dual = Vec::with_capacity(self.dual.len());
        for (j, block) in self.dual.iter().enumerate() {
            let push = self.accumulate(&self.by_dual[j], block.shape, |c| c.map.apply(&bars[c.primal]));
            let y_tilde = ascent(&state.dual[j], self.gamma_y[j], &push);
            next_dual.push(moreau_dual_update(&y_tilde, self.gamma_y[j], |t, tau| (block.prox)(t, tau))?);
        }
        state.iteration += 1;
        if next_primal.iter().chain(&next_dual).any(|c| !c.all_finite()) {
            return Err(Error::Diverged { iteration: state.iteration });
        }
        state.primal = next_primal;
        state.dual = next_dual;
        Ok(())
    }

    /// Iterates until `stop(previous_primal, current_state)` returns true or
    /// `max_iterations` steps have run.
    pub fn solve(
        &self,
        max_iterations: usize,
        mut stop: impl FnMut(&[Cube], &PpdsState) -> bool,
    ) -> Result<PpdsOutcome> {
        let mut state = self.initial_state();
        while state.iteration < max_iterations {
            let prev = state.primal.clone();
            self.step(&mut state)?;
            if stop(&prev, &state) {
                return Ok(PpdsOutcome { state, stopped: true });
            }
        }
        Ok(PpdsOutcome { state, stopped: false })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prox;
    use num_traits::One;

    fn int(n: i64) -> BigRational {
        BigRational::from_integer(BigInt::from(n))
    }

    #[test]
    fn ovdp_rule() {
        let four = int(4);
        let one = int(1);
        let s = ovdp_stepsizes(2, 2, &[(0, 0, &four), (1, 0, &one), (1, 1, &one)]).unwrap();
        assert_eq!(s.primal, vec![int(1) / int(5), int(1)]);
        assert_eq!(s.dual, vec![int(1) / int(2); 2]);
        assert!(ovdp_stepsizes(2, 1, &[(0, 0, &one)]).is_err());
    }

    /// min ‖x‖₁ s.t. x = v: one primal block (ℓ1) and one dual block
    /// (indicator of {v}) coupled by the identity. The unique solution is v.
    #[test]
    fn equality_constrained_l1() {
        let shape = Shape::new(1, 1, 4);
        let v = Cube::from_vec(shape, vec![0.3, -0.2, 0.0, 0.05]).unwrap();
        let target = v.clone();
        let problem = PpdsProblem::new(
            vec![PrimalBlock { init: Cube::zeros(shape), prox: Some(Box::new(|x, g| Ok(prox::prox_l1(x, g)))) }],
            vec![DualBlock { shape, prox: Box::new(move |_, _| Ok(target.clone())) }],
            vec![Coupling { dual: 0, primal: 0, map: LinearMap::identity(shape).unwrap() }],
        )
        .unwrap();
        assert_eq!(problem.stepsizes().primal, vec![BigRational::one()]);
        let mut prev_dual = None;
        let out = problem
            .solve(20_000, |prev, st| {
                // The primal can sit still while the dual is still growing,
                // so require both to have settled.
                let settled = st.primal[0].sub(&prev[0]).frobenius() < 1e-13
                    && prev_dual.as_ref().is_some_and(|d: &Cube| st.dual[0].sub(d).frobenius() < 1e-13);
                prev_dual = Some(st.dual[0].clone());
                settled
            })
            .unwrap();
        assert!(out.stopped);
        for (a, b) in out.state.primal[0].as_slice().iter().zip(v.as_slice()) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_functions_keep_initial_state() {
        let shape = Shape::new(2, 2, 1);
        let problem = PpdsProblem::new(
            vec![PrimalBlock { init: Cube::zeros(shape), prox: None }],
            vec![DualBlock { shape, prox: Box::new(|x, _| Ok(x.clone())) }],
            vec![Coupling { dual: 0, primal: 0, map: LinearMap::identity(shape).unwrap() }],
        )
        .unwrap();
        let mut st = problem.initial_state();
        for _ in 0..5 {
            problem.step(&mut st).unwrap();
        }
        assert!(st.primal[0].is_zero() && st.dual[0].is_zero());
    }

    #[test]
    fn coupling_shape_checked() {
        let shape = Shape::new(2, 2, 1);
        let err = PpdsProblem::new(
            vec![PrimalBlock { init: Cube::zeros(shape), prox: None }],
            vec![DualBlock { shape: Shape::new(2, 2, 2), prox: Box::new(|x, _| Ok(x.clone())) }],
            vec![Coupling { dual: 0, primal: 0, map: LinearMap::identity(shape).unwrap() }],
        );
        assert!(matches!(err, Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn divergence_is_reported() {
        let shape = Shape::new(1, 1, 1);
        let problem = PpdsProblem::new(
            vec![PrimalBlock { init: Cube::zeros(shape), prox: Some(Box::new(|x, _| Ok(x.map(|_| f64::NAN)))) }],
            vec![DualBlock { shape, prox: Box::new(|x, _| Ok(x.clone())) }],
            vec![Coupling { dual: 0, primal: 0, map: LinearMap::identity(shape).unwrap() }],
        )
        .unwrap();
        let mut st = problem.initial_state();
        assert!(matches!(problem.step(&mut st), Err(Error::Diverged { iteration: 1 })));
    }
}

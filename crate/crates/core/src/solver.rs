//! Robust decomposition `V ≈ B + A + S + L`:
//!
//! ```text
//! min  R(𝔏(B)) + λ₁‖A‖₂,₁ + λ₂‖L‖₁
//! s.t. 𝔇_v(L) = O,  ‖B + A + S + L − V‖_F ≤ ε,  ‖S‖₁ ≤ α
//! ```
//!
//! solved by preconditioned primal-dual splitting with three dual variables:
//! `Y₁` for `R∘𝔏`, `Y₂` for the stripe flatness constraint and `Y₃` for the
//! data-fidelity ball.

use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;

use crate::error::{Error, Result};
use crate::ppds::{
    self, ascent, descent, extrapolate, moreau_dual_update, Coupling, DualBlock, PpdsProblem, PrimalBlock,
};
use crate::prox;
use crate::regularizer::Regularizer;
use crate::tensor::{Axis, Cube, LinearMap, NormKind};

#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub observed: Cube,
    /// Anomaly (ℓ2,1) weight.
    pub lambda1: f64,
    /// Stripe (ℓ1) weight.
    pub lambda2: f64,
    /// Radius of the Frobenius data-fidelity ball around `observed`.
    pub epsilon: f64,
    /// Radius of the ℓ1 ball holding the sparse noise.
    pub alpha: f64,
    pub regularizer: Regularizer,
}

impl ProblemSpec {
    pub fn new(
        observed: Cube,
        lambda1: f64,
        lambda2: f64,
        epsilon: f64,
        alpha: f64,
        regularizer: Regularizer,
    ) -> Result<Self> {
        let spec = ProblemSpec { observed, lambda1, lambda2, epsilon, alpha, regularizer };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in
            [("lambda1", self.lambda1), ("lambda2", self.lambda2), ("epsilon", self.epsilon), ("alpha", self.alpha)]
        {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be finite and nonnegative, got {v}")));
            }
        }
        if let Some(offset) = self.observed.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { offset });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// Stop once `‖T⁽ⁿ⁺¹⁾ − T⁽ⁿ⁾‖_F / ‖T⁽ⁿ⁾‖_F` falls to this value, with
    /// `T = B + A + S + L`.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Record diagnostics every this many iterations (0 disables history).
    pub diagnostics_stride: usize,
}

impl SolverConfig {
    pub const DEFAULT_TOLERANCE: f64 = 1e-5;

    pub fn for_regularizer(reg: &Regularizer) -> Self {
        SolverConfig {
            tolerance: Self::DEFAULT_TOLERANCE,
            max_iterations: reg.default_max_iterations(),
            diagnostics_stride: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::param("tolerance", format!("must be positive, got {}", self.tolerance)));
        }
        if self.max_iterations == 0 {
            return Err(Error::param("max_iterations", "must be at least 1"));
        }
        Ok(())
    }
}

/// Stepsizes as exact rationals.
#[derive(Clone, Debug, PartialEq)]
pub struct Stepsizes {
    pub gamma_b: BigRational,
    pub gamma_a: BigRational,
    pub gamma_s: BigRational,
    pub gamma_l: BigRational,
    pub gamma_y1: BigRational,
    pub gamma_y2: BigRational,
    pub gamma_y3: BigRational,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepsizesF64 {
    pub gamma_b: f64,
    pub gamma_a: f64,
    pub gamma_s: f64,
    pub gamma_l: f64,
    pub gamma_y1: f64,
    pub gamma_y2: f64,
    pub gamma_y3: f64,
}

impl Stepsizes {
    pub fn to_f64(&self) -> StepsizesF64 {
        let f = |g: &BigRational| g.to_f64().expect("finite stepsize");
        StepsizesF64 {
            gamma_b: f(&self.gamma_b),
            gamma_a: f(&self.gamma_a),
            gamma_s: f(&self.gamma_s),
            gamma_l: f(&self.gamma_l),
            gamma_y1: f(&self.gamma_y1),
            gamma_y2: f(&self.gamma_y2),
            gamma_y3: f(&self.gamma_y3),
        }
    }
}

fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Closed-form stepsizes: `γ_B` from the regularizer's analytic bound,
/// `γ_A = γ_S = 1`, `γ_L = 1/5`, `γ_Y = 1/4`.
pub fn compute_stepsizes(regularizer: &Regularizer) -> Stepsizes {
    Stepsizes {
        gamma_b: regularizer.gamma_b(),
        gamma_a: ratio(1, 1),
        gamma_s: ratio(1, 1),
        gamma_l: ratio(1, 5),
        gamma_y1: ratio(1, 4),
        gamma_y2: ratio(1, 4),
        gamma_y3: ratio(1, 4),
    }
}

/// Stepsizes derived from the generic preconditioning rule applied to the
/// four-primal / three-dual block structure of the decomposition.
pub fn ovdp_stepsizes(spec: &ProblemSpec) -> Result<Stepsizes> {
    let shape = spec.observed.shape();
    let l = spec.regularizer.linmap(shape)?;
    let dv = LinearMap::diff(Axis::Vertical, shape)?;
    let id = LinearMap::identity(shape)?;
    let mu = [
        (0, 0, l.norm_sq_bound()),
        (1, 3, dv.norm_sq_bound()),
        (2, 0, id.norm_sq_bound()),
        (2, 1, id.norm_sq_bound()),
        (2, 2, id.norm_sq_bound()),
        (2, 3, id.norm_sq_bound()),
    ];
    let s = ppds::ovdp_stepsizes(4, 3, &mu)?;
    Ok(Stepsizes {
        gamma_b: s.primal[0].clone(),
        gamma_a: s.primal[1].clone(),
        gamma_s: s.primal[2].clone(),
        gamma_l: s.primal[3].clone(),
        gamma_y1: s.dual[0].clone(),
        gamma_y2: s.dual[1].clone(),
        gamma_y3: s.dual[2].clone(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverState {
    pub b: Cube,
    pub a: Cube,
    pub s: Cube,
    pub l: Cube,
    pub y1: Cube,
    pub y2: Cube,
    pub y3: Cube,
    pub iteration: usize,
    pub last_relative_change: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagnosticsRecord {
    pub iteration: usize,
    pub relative_change: f64,
    /// `‖B + A + S + L − V‖_F`
    pub data_residual: f64,
    /// `‖S‖₁`
    pub s_l1: f64,
    /// `‖𝔇_v(L)‖_F`
    pub stripe_flatness: f64,
    pub objective: f64,
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub background: Cube,
    pub anomaly: Cube,
    pub sparse_noise: Cube,
    pub stripe_noise: Cube,
    pub iterations: usize,
    pub converged: bool,
    pub last_relative_change: f64,
    pub history: Vec<DiagnosticsRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeasibilityReport {
    pub data_residual: f64,
    pub s_l1: f64,
    pub stripe_flatness_residual: f64,
    pub objective_value: f64,
}

/// `‖T_new − T_old‖ / ‖T_old‖`, with `0/0 = 0` and `x/0 = ∞`.
pub fn relative_change(new: &Cube, old: &Cube) -> f64 {
    let num = new.sub(old).frobenius();
    let den = old.frobenius();
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    }
}

fn total(b: &Cube, a: &Cube, s: &Cube, l: &Cube) -> Cube {
    let mut t = b.add(a);
    t.add_assign(s);
    t.add_assign(l);
    t
}

/// One configured instance of the decomposition iteration.
pub struct Decomposer {
    spec: ProblemSpec,
    linmap: LinearMap,
    dv: LinearMap,
    steps: StepsizesF64,
}

impl Decomposer {
    pub fn new(spec: ProblemSpec) -> Result<Self> {
        spec.validate()?;
        let shape = spec.observed.shape();
        let linmap = spec.regularizer.linmap(shape)?;
        let dv = LinearMap::diff(Axis::Vertical, shape)?;
        let steps = compute_stepsizes(&spec.regularizer).to_f64();
        Ok(Decomposer { spec, linmap, dv, steps })
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn stepsizes(&self) -> StepsizesF64 {
        self.steps
    }

    pub fn initial_state(&self) -> SolverState {
        let shape = self.spec.observed.shape();
        SolverState {
            b: Cube::zeros(shape),
            a: Cube::zeros(shape),
            s: Cube::zeros(shape),
            l: Cube::zeros(shape),
            y1: Cube::zeros(self.linmap.output_shape()),
            y2: Cube::zeros(shape),
            y3: Cube::zeros(shape),
            iteration: 0,
            last_relative_change: f64::INFINITY,
        }
    }

    /// One iteration: the four primal updates from the previous duals, then
    /// the three dual updates from the extrapolated primals.
    pub fn step(&self, st: &mut SolverState) -> Result<()> {
        let g = &self.steps;
        let spec = &self.spec;

        let mut pull_b = self.linmap.apply_adjoint(&st.y1);
        pull_b.add_assign(&st.y3);
        let b = descent(&st.b, g.gamma_b, &pull_b);

        let a = prox::prox_l21(&descent(&st.a, g.gamma_a, &st.y3), g.gamma_a * spec.lambda1);

        let s = prox::project_l1_ball(&descent(&st.s, g.gamma_s, &st.y3), spec.alpha);

        let mut pull_l = self.dv.apply_adjoint(&st.y2);
        pull_l.add_assign(&st.y3);
        let l = prox::prox_l1(&descent(&st.l, g.gamma_l, &pull_l), g.gamma_l * spec.lambda2);

        let y1_tilde = ascent(&st.y1, g.gamma_y1, &self.linmap.apply(&extrapolate(&b, &st.b)));
        let y1 = moreau_dual_update(&y1_tilde, g.gamma_y1, |t, tau| spec.regularizer.prox(t, tau))?;

        let y2_tilde = ascent(&st.y2, g.gamma_y2, &self.dv.apply(&extrapolate(&l, &st.l)));
        let y2 = moreau_dual_update(&y2_tilde, g.gamma_y2, |t, _| Ok(prox::project_zero(t)))?;

        let mut push3 = extrapolate(&b, &st.b);
        push3.add_assign(&extrapolate(&a, &st.a));
        push3.add_assign(&extrapolate(&s, &st.s));
        push3.add_assign(&extrapolate(&l, &st.l));
        let y3_tilde = ascent(&st.y3, g.gamma_y3, &push3);
        let y3 = moreau_dual_update(&y3_tilde, g.gamma_y3, |t, _| {
            prox::project_frobenius_ball(t, &spec.observed, spec.epsilon)
        })?;

        let t_old = total(&st.b, &st.a, &st.s, &st.l);
        let t_new = total(&b, &a, &s, &l);
        let change = relative_change(&t_new, &t_old);
        st.iteration += 1;
        if change.is_nan() || !t_new.all_finite() || ![&y1, &y2, &y3].iter().all(|y| y.all_finite()) {
            return Err(Error::Diverged { iteration: st.iteration });
        }
        *st = SolverState { b, a, s, l, y1, y2, y3, iteration: st.iteration, last_relative_change: change };
        Ok(())
    }

    pub fn diagnostics(&self, st: &SolverState) -> Result<DiagnosticsRecord> {
        let r = measure(&self.spec, &self.linmap, &self.dv, &st.b, &st.a, &st.s, &st.l)?;
        Ok(DiagnosticsRecord {
            iteration: st.iteration,
            relative_change: st.last_relative_change,
            data_residual: r.data_residual,
            s_l1: r.s_l1,
            stripe_flatness: r.stripe_flatness_residual,
            objective: r.objective_value,
        })
    }

    pub fn run(&self, config: &SolverConfig) -> Result<SolveResult> {
        config.validate()?;
        let mut st = self.initial_state();
        let mut history = Vec::new();
        let mut converged = false;
        while st.iteration < config.max_iterations {
            self.step(&mut st)?;
            // The first step from the zero start cannot move the primal
            // blocks (all duals are still zero), so T stays 0 and the 0/0
            // rule would fire spuriously.
            converged = st.iteration >= 2 && st.last_relative_change <= config.tolerance;
            if config.diagnostics_stride > 0 && (st.iteration.is_multiple_of(config.diagnostics_stride) || converged) {
                history.push(self.diagnostics(&st)?);
            }
            if converged {
                break;
            }
        }
        if config.diagnostics_stride > 0 && history.last().map(|h| h.iteration) != Some(st.iteration) {
            history.push(self.diagnostics(&st)?);
        }
        Ok(SolveResult {
            background: st.b,
            anomaly: st.a,
            sparse_noise: st.s,
            stripe_noise: st.l,
            iterations: st.iteration,
            converged,
            last_relative_change: st.last_relative_change,
            history,
        })
    }

    /// The same problem expressed as blocks of the generic engine, in the
    /// order B, A, S, L (primal) and Y₁, Y₂, Y₃ (dual).
    pub fn as_ppds(&self) -> Result<PpdsProblem> {
        let spec = &self.spec;
        let shape = spec.observed.shape();
        let (lambda1, lambda2, alpha, epsilon) = (spec.lambda1, spec.lambda2, spec.alpha, spec.epsilon);
        let observed = Arc::new(spec.observed.clone());
        let reg = spec.regularizer;
        let primal = vec![
            PrimalBlock { init: Cube::zeros(shape), prox: None },
            PrimalBlock {
                init: Cube::zeros(shape),
                prox: Some(Box::new(move |x, g| Ok(prox::prox_l21(x, g * lambda1)))),
            },
            PrimalBlock {
                init: Cube::zeros(shape),
                prox: Some(Box::new(move |x, _| Ok(prox::project_l1_ball(x, alpha)))),
            },
            PrimalBlock {
                init: Cube::zeros(shape),
                prox: Some(Box::new(move |x, g| Ok(prox::prox_l1(x, g * lambda2)))),
            },
        ];
        let dual = vec![
            DualBlock { shape: self.linmap.output_shape(), prox: Box::new(move |x, tau| reg.prox(x, tau)) },
            DualBlock { shape, prox: Box::new(|x, _| Ok(prox::project_zero(x))) },
            DualBlock { shape, prox: Box::new(move |x, _| prox::project_frobenius_ball(x, &observed, epsilon)) },
        ];
        let id = || LinearMap::identity(shape);
        let couplings = vec![
            Coupling { dual: 0, primal: 0, map: self.linmap.clone() },
            Coupling { dual: 1, primal: 3, map: self.dv.clone() },
            Coupling { dual: 2, primal: 0, map: id()? },
            Coupling { dual: 2, primal: 1, map: id()? },
            Coupling { dual: 2, primal: 2, map: id()? },
            Coupling { dual: 2, primal: 3, map: id()? },
        ];
        PpdsProblem::new(primal, dual, couplings)
    }
}

pub fn solve(spec: ProblemSpec, config: &SolverConfig) -> Result<SolveResult> {
    Decomposer::new(spec)?.run(config)
}

fn measure(
    spec: &ProblemSpec,
    linmap: &LinearMap,
    dv: &LinearMap,
    b: &Cube,
    a: &Cube,
    s: &Cube,
    l: &Cube,
) -> Result<FeasibilityReport> {
    let t = total(b, a, s, l);
    Ok(FeasibilityReport {
        data_residual: t.sub(&spec.observed).frobenius(),
        s_l1: s.norm(NormKind::L1),
        stripe_flatness_residual: dv.apply(l).frobenius(),
        objective_value: spec.regularizer.value(&linmap.apply(b))?
            + spec.lambda1 * a.norm(NormKind::L21)
            + spec.lambda2 * l.norm(NormKind::L1),
    })
}

/// Direct measurement of the constraints and objective at a result.
pub fn feasibility_report(result: &SolveResult, spec: &ProblemSpec) -> Result<FeasibilityReport> {
    let shape = spec.observed.shape();
    for c in [&result.background, &result.anomaly, &result.sparse_noise, &result.stripe_noise] {
        spec.observed.ensure_same_shape(c)?;
    }
    let linmap = spec.regularizer.linmap(shape)?;
    let dv = LinearMap::diff(Axis::Vertical, shape)?;
    measure(spec, &linmap, &dv, &result.background, &result.anomaly, &result.sparse_noise, &result.stripe_noise)
}

//! Background characterizations: each pairs a proximable function `R` with a
//! linear map `𝔏` so the solver can treat them interchangeably.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;

use crate::error::{Error, Result};
use crate::prox;
use crate::tensor::{Axis, Cube, LinearMap, NormKind, Shape};

pub const DEFAULT_OMEGA: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RegularizerKind {
    /// `‖𝔇(·)‖₂,₁`: group-sparse spatial differences.
    Htv,
    /// `‖𝔇(𝔇_b(·))‖₁`: spatial differences of spectral differences.
    Sstv,
    /// `‖𝔄_ω(·)‖₁`: SSTV stacked over `ω`-weighted spatial differences.
    Hsstv,
    /// Nuclear norm of the `bands × pixels` matricization.
    Nuclear,
}

impl RegularizerKind {
    pub fn name(self) -> &'static str {
        match self {
            RegularizerKind::Htv => "htv",
            RegularizerKind::Sstv => "sstv",
            RegularizerKind::Hsstv => "hsstv",
            RegularizerKind::Nuclear => "nuclear",
        }
    }
}

impl fmt::Display for RegularizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RegularizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "htv" => Ok(RegularizerKind::Htv),
            "sstv" => Ok(RegularizerKind::Sstv),
            "hsstv" | "hsstv-omega" => Ok(RegularizerKind::Hsstv),
            "nuclear" => Ok(RegularizerKind::Nuclear),
            other => Err(Error::param("regularizer", format!("unknown name {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Regularizer {
    kind: RegularizerKind,
    omega: Option<f64>,
}

impl Regularizer {
    pub fn htv() -> Self {
        Regularizer { kind: RegularizerKind::Htv, omega: None }
    }

    pub fn sstv() -> Self {
        Regularizer { kind: RegularizerKind::Sstv, omega: None }
    }

    pub fn hsstv(omega: f64) -> Result<Self> {
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::param("omega", format!("must be positive and finite, got {omega}")));
        }
        Ok(Regularizer { kind: RegularizerKind::Hsstv, omega: Some(omega) })
    }

    pub fn nuclear() -> Self {
        Regularizer { kind: RegularizerKind::Nuclear, omega: None }
    }

    /// `omega` only applies to HSSTV and defaults to [`DEFAULT_OMEGA`].
    pub fn new(kind: RegularizerKind, omega: Option<f64>) -> Result<Self> {
        Ok(match kind {
            RegularizerKind::Htv => Self::htv(),
            RegularizerKind::Sstv => Self::sstv(),
            RegularizerKind::Hsstv => Self::hsstv(omega.unwrap_or(DEFAULT_OMEGA))?,
            RegularizerKind::Nuclear => Self::nuclear(),
        })
    }

    pub fn kind(&self) -> RegularizerKind {
        self.kind
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn omega(&self) -> Option<f64> {
        self.omega
    }

    pub fn linmap(&self, shape: Shape) -> Result<LinearMap> {
        match self.kind {
            RegularizerKind::Htv => LinearMap::spatial_diff(shape),
            RegularizerKind::Sstv => {
                LinearMap::compose(LinearMap::spatial_diff(shape)?, LinearMap::diff(Axis::Spectral, shape)?)
            }
            RegularizerKind::Hsstv => LinearMap::spatial_spectral(self.omega.unwrap_or(DEFAULT_OMEGA), shape),
            RegularizerKind::Nuclear => LinearMap::matricize(shape),
        }
    }

    /// Closed-form background stepsize `1/(1 + ‖𝔏‖²)` from the analytic
    /// operator-norm bounds: 1/9, 1/33, 1/(33 + 8ω²), 1/2.
    pub fn gamma_b(&self) -> BigRational {
        let int = |n: i64| BigRational::from_integer(BigInt::from(n));
        match self.kind {
            RegularizerKind::Htv => int(1) / int(9),
            RegularizerKind::Sstv => int(1) / int(33),
            RegularizerKind::Hsstv => {
                let w = BigRational::from_float(self.omega.unwrap_or(DEFAULT_OMEGA)).expect("omega is finite");
                int(1) / (int(33) + int(8) * &w * &w)
            }
            RegularizerKind::Nuclear => int(1) / int(2),
        }
    }

    /// `prox_{τR}` evaluated in the range of the linear map.
    pub fn prox(&self, y: &Cube, tau: f64) -> Result<Cube> {
        match self.kind {
            RegularizerKind::Htv => Ok(prox::prox_l21(y, tau)),
            RegularizerKind::Sstv | RegularizerKind::Hsstv => Ok(prox::prox_l1(y, tau)),
            RegularizerKind::Nuclear => prox::prox_nuclear(y, tau),
        }
    }

    /// `R(y)` for `y` in the range of the linear map.
    pub fn value(&self, y: &Cube) -> Result<f64> {
        match self.kind {
            RegularizerKind::Htv => Ok(y.norm(NormKind::L21)),
            RegularizerKind::Sstv | RegularizerKind::Hsstv => Ok(y.norm(NormKind::L1)),
            RegularizerKind::Nuclear => prox::nuclear_norm(y),
        }
    }

    /// `R(𝔏(x))`
    pub fn evaluate(&self, x: &Cube) -> Result<f64> {
        self.value(&self.linmap(x.shape())?.forward(x)?)
    }

    /// Iteration cap used by the reference experiments.
    pub fn default_max_iterations(&self) -> usize {
        match self.kind {
            RegularizerKind::Nuclear => 5000,
            _ => 10_000,
        }
    }
}

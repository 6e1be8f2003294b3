//! Dense hyperspectral cubes and the linear operators acting on them.
//!
//! A [`Cube`] stores `height × width × bands` values with the band index
//! fastest: element `(i, j, k)` lives at offset `((i * width) + j) * bands + k`,
//! so every spectral tube `(i, j, :)` is a contiguous slice.
//!
//! Matrices (for example the `bands × pixels` matricization) are represented
//! as single-band cubes with `height = rows` and `width = cols`.

mod cube;
mod linmap;

pub use cube::{Cube, NormKind, Shape};
pub use linmap::{estimate_opnorm, Axis, LinearMap, DEFAULT_POWER_ITERATIONS};

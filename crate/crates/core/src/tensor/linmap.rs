use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Cube, NormKind, Shape};
use crate::error::{Error, Result};

pub const DEFAULT_POWER_ITERATIONS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    /// Along the row index `i`.
    Vertical,
    /// Along the column index `j`.
    Horizontal,
    /// Along the band index `k`.
    Spectral,
}

/// A linear operator between cubes, bound to a concrete input shape, with a
/// certified upper bound on its operator norm.
///
/// The bound is kept as an exact rational `μ²` so stepsizes derived from it
/// can be compared without rounding. Maps built from scaled operators carry
/// the exact dyadic value of the `f64` scale factor.
#[derive(Clone, Debug)]
pub struct LinearMap {
    input: Shape,
    output: Shape,
    norm_sq_bound: BigRational,
    op: Op,
}

#[derive(Clone, Debug)]
enum Op {
    Identity,
    Diff(Axis),
    Scaled(f64, Box<LinearMap>),
    /// `outer ∘ inner`
    Compose(Box<LinearMap>, Box<LinearMap>),
    /// Outputs concatenated along the band axis, in order.
    Stack(Vec<LinearMap>),
    /// `H × W × B` cube to the `B × HW` matrix whose columns are tubes.
    Matricize,
}

fn int(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

impl LinearMap {
    pub fn identity(shape: Shape) -> Result<Self> {
        shape.validate()?;
        Ok(LinearMap { input: shape, output: shape, norm_sq_bound: BigRational::one(), op: Op::Identity })
    }

    /// Forward difference along `axis`; the last slice along the axis is zero.
    pub fn diff(axis: Axis, shape: Shape) -> Result<Self> {
        shape.validate()?;
        Ok(LinearMap { input: shape, output: shape, norm_sq_bound: int(4), op: Op::Diff(axis) })
    }

    /// Vertical differences in bands `0..B`, horizontal differences in `B..2B`.
    pub fn spatial_diff(shape: Shape) -> Result<Self> {
        Self::stack(vec![Self::diff(Axis::Vertical, shape)?, Self::diff(Axis::Horizontal, shape)?])
    }

    pub fn compose(outer: LinearMap, inner: LinearMap) -> Result<Self> {
        if inner.output != outer.input {
            return Err(Error::ShapeMismatch { expected: outer.input, found: inner.output });
        }
        Ok(LinearMap {
            input: inner.input,
            output: outer.output,
            norm_sq_bound: &outer.norm_sq_bound * &inner.norm_sq_bound,
            op: Op::Compose(Box::new(outer), Box::new(inner)),
        })
    }

    pub fn scaled(factor: f64, map: LinearMap) -> Result<Self> {
        let exact = BigRational::from_float(factor)
            .ok_or_else(|| Error::param("factor", format!("must be finite, got {factor}")))?;
        Ok(LinearMap {
            input: map.input,
            output: map.output,
            norm_sq_bound: &exact * &exact * &map.norm_sq_bound,
            op: Op::Scaled(factor, Box::new(map)),
        })
    }

    /// Stacks maps sharing one input shape; outputs are concatenated along
    /// the band axis. `‖[F₁; …; Fₙ]‖² ≤ Σ ‖Fᵢ‖²`.
    pub fn stack(maps: Vec<LinearMap>) -> Result<Self> {
        let first = maps.first().ok_or_else(|| Error::param("maps", "cannot stack an empty list"))?;
        let input = first.input;
        let (h, w) = (first.output.height, first.output.width);
        let mut bands = 0;
        let mut bound = BigRational::zero();
        for m in &maps {
            if m.input != input {
                return Err(Error::ShapeMismatch { expected: input, found: m.input });
            }
            if m.output.height != h || m.output.width != w {
                return Err(Error::ShapeMismatch { expected: Shape::new(h, w, m.output.bands), found: m.output });
            }
            bands += m.output.bands;
            bound += &m.norm_sq_bound;
        }
        Ok(LinearMap { input, output: Shape::new(h, w, bands), norm_sq_bound: bound, op: Op::Stack(maps) })
    }

    /// Stacks the spatial differences of spectral differences over `ω` times
    /// the spatial differences, giving `4B` output bands.
    pub fn spatial_spectral(omega: f64, shape: Shape) -> Result<Self> {
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::param("omega", format!("must be positive and finite, got {omega}")));
        }
        let sstv = Self::compose(Self::spatial_diff(shape)?, Self::diff(Axis::Spectral, shape)?)?;
        let htv = Self::scaled(omega, Self::spatial_diff(shape)?)?;
        Self::stack(vec![sstv, htv])
    }

    pub fn matricize(shape: Shape) -> Result<Self> {
        shape.validate()?;
        Ok(LinearMap {
            input: shape,
            output: Shape::new(shape.bands, shape.pixels(), 1),
            norm_sq_bound: BigRational::one(),
            op: Op::Matricize,
        })
    }

    pub fn input_shape(&self) -> Shape {
        self.input
    }

    pub fn output_shape(&self) -> Shape {
        self.output
    }

    /// Exact upper bound on `‖F‖²_op`.
    pub fn norm_sq_bound(&self) -> &BigRational {
        &self.norm_sq_bound
    }

    /// Upper bound on `‖F‖_op`.
    pub fn opnorm_bound(&self) -> f64 {
        self.norm_sq_bound.to_f64().unwrap_or(f64::INFINITY).sqrt()
    }

    pub fn forward(&self, x: &Cube) -> Result<Cube> {
        if x.shape() != self.input {
            return Err(Error::ShapeMismatch { expected: self.input, found: x.shape() });
        }
        Ok(self.apply(x))
    }

    pub fn adjoint(&self, y: &Cube) -> Result<Cube> {
        if y.shape() != self.output {
            return Err(Error::ShapeMismatch { expected: self.output, found: y.shape() });
        }
        Ok(self.apply_adjoint(y))
    }

    /// Forward application; the caller guarantees the input shape.
    pub(crate) fn apply(&self, x: &Cube) -> Cube {
        debug_assert_eq!(x.shape(), self.input);
        match &self.op {
            Op::Identity => x.clone(),
            Op::Diff(axis) => diff_forward(x, *axis),
            Op::Scaled(c, inner) => {
                let c = *c;
                let mut y = inner.apply(x);
                y.as_mut_slice().iter_mut().for_each(|v| *v *= c);
                y
            }
            Op::Compose(outer, inner) => outer.apply(&inner.apply(x)),
            Op::Stack(maps) => {
                let parts: Vec<Cube> = maps.iter().map(|m| m.apply(x)).collect();
                interleave(self.output, &parts)
            }
            Op::Matricize => matricize_forward(x),
        }
    }

    /// Adjoint application; the caller guarantees the output shape.
    pub(crate) fn apply_adjoint(&self, y: &Cube) -> Cube {
        debug_assert_eq!(y.shape(), self.output);
        match &self.op {
            Op::Identity => y.clone(),
            Op::Diff(axis) => diff_adjoint(y, *axis),
            Op::Scaled(c, inner) => {
                let c = *c;
                let mut x = inner.apply_adjoint(y);
                x.as_mut_slice().iter_mut().for_each(|v| *v *= c);
                x
            }
            Op::Compose(outer, inner) => inner.apply_adjoint(&outer.apply_adjoint(y)),
            Op::Stack(maps) => {
                let parts = split(y, maps.iter().map(|m| m.output.bands));
                let mut iter = maps.iter().zip(&parts);
                let (m0, p0) = iter.next().expect("stack is never empty");
                let mut acc = m0.apply_adjoint(p0);
                for (m, p) in iter {
                    acc.add_assign(&m.apply_adjoint(p));
                }
                acc
            }
            Op::Matricize => matricize_adjoint(y, self.input),
        }
    }
}

/// Views the buffer as `[outer][n][inner]` with `n` the extent along `axis`.
fn axis_layout(shape: Shape, axis: Axis) -> (usize, usize, usize) {
    match axis {
        Axis::Vertical => (1, shape.height, shape.width * shape.bands),
        Axis::Horizontal => (shape.height, shape.width, shape.bands),
        Axis::Spectral => (shape.pixels(), shape.bands, 1),
    }
}

fn diff_forward(x: &Cube, axis: Axis) -> Cube {
    let (outer, n, inner) = axis_layout(x.shape(), axis);
    let src = x.as_slice();
    let mut out = vec![0.0; src.len()];
    let block = n * inner;
    for o in 0..outer {
        let base = o * block;
        for t in 0..n.saturating_sub(1) {
            let cur = base + t * inner;
            let next = cur + inner;
            for q in 0..inner {
                out[cur + q] = src[next + q] - src[cur + q];
            }
        }
    }
    Cube::from_raw(x.shape(), out)
}

/// `(Dᵀy)_t = y_{t-1}·[t ≥ 1] − y_t·[t < n−1]`
fn diff_adjoint(y: &Cube, axis: Axis) -> Cube {
    let (outer, n, inner) = axis_layout(y.shape(), axis);
    let src = y.as_slice();
    let mut out = vec![0.0; src.len()];
    let block = n * inner;
    if n < 2 {
        return Cube::from_raw(y.shape(), out);
    }
    for o in 0..outer {
        let base = o * block;
        for q in 0..inner {
            out[base + q] = -src[base + q];
        }
        for t in 1..n - 1 {
            let cur = base + t * inner;
            let prev = cur - inner;
            for q in 0..inner {
                out[cur + q] = src[prev + q] - src[cur + q];
            }
        }
        let last = base + (n - 1) * inner;
        let prev = last - inner;
        out[last..last + inner].copy_from_slice(&src[prev..prev + inner]);
    }
    Cube::from_raw(y.shape(), out)
}

fn interleave(shape: Shape, parts: &[Cube]) -> Cube {
    let mut out = Vec::with_capacity(shape.len());
    let mut iters: Vec<_> = parts.iter().map(|p| p.tubes()).collect();
    for _ in 0..shape.pixels() {
        for it in iters.iter_mut() {
            out.extend_from_slice(it.next().expect("part has one tube per pixel"));
        }
    }
    Cube::from_raw(shape, out)
}

fn split(y: &Cube, bands: impl Iterator<Item = usize>) -> Vec<Cube> {
    let shape = y.shape();
    let widths: Vec<usize> = bands.collect();
    let mut bufs: Vec<Vec<f64>> = widths.iter().map(|b| Vec::with_capacity(b * shape.pixels())).collect();
    for tube in y.tubes() {
        let mut start = 0;
        for (buf, &b) in bufs.iter_mut().zip(&widths) {
            buf.extend_from_slice(&tube[start..start + b]);
            start += b;
        }
    }
    bufs.into_iter().zip(widths).map(|(buf, b)| Cube::from_raw(shape.with_bands(b), buf)).collect()
}

fn matricize_forward(x: &Cube) -> Cube {
    let shape = x.shape();
    let (p, b) = (shape.pixels(), shape.bands);
    let src = x.as_slice();
    let mut out = vec![0.0; src.len()];
    for (col, tube) in src.chunks_exact(b).enumerate() {
        for (row, &v) in tube.iter().enumerate() {
            out[row * p + col] = v;
        }
    }
    Cube::from_raw(Shape::new(b, p, 1), out)
}

fn matricize_adjoint(y: &Cube, input: Shape) -> Cube {
    let (p, b) = (input.pixels(), input.bands);
    let src = y.as_slice();
    let mut out = vec![0.0; src.len()];
    for (col, tube) in out.chunks_exact_mut(b).enumerate() {
        for (row, v) in tube.iter_mut().enumerate() {
            *v = src[row * p + col];
        }
    }
    Cube::from_raw(input, out)
}

/// Power-iteration estimate of `‖map‖_op` on the map's input shape, from a
/// seeded uniform start vector. The estimate is `‖F x‖` for a unit `x`, so it
/// never exceeds the true norm.
pub fn estimate_opnorm(map: &LinearMap, iterations: usize, seed: u64) -> Result<f64> {
    if iterations == 0 {
        return Err(Error::param("iterations", "must be at least 1"));
    }
    let shape = map.input_shape();
    shape.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Cube::from_raw(shape, (0..shape.len()).map(|_| rng.random_range(-1.0..1.0)).collect());
    let n = x.frobenius();
    if n == 0.0 {
        return Err(Error::Degenerate("power iteration start vector is zero".into()));
    }
    x = x.scale(1.0 / n);
    let mut estimate = 0.0;
    for _ in 0..iterations {
        let y = map.apply(&x);
        estimate = y.norm(NormKind::Frobenius);
        let z = map.apply_adjoint(&y);
        let zn = z.frobenius();
        if zn == 0.0 {
            return Ok(estimate);
        }
        x = z.scale(1.0 / zn);
    }
    Ok(estimate.max(map.apply(&x).frobenius()))
}

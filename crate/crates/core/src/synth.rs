//! Deterministic synthetic scenes and the five noise-contamination cases.
//!
//! All randomness comes from ChaCha8 seeded with a `u64`; each stage draws
//! from its own ChaCha stream (scene layout 0, Gaussian 1, impulse 2,
//! stripes 3), so every output is a pure function of its inputs.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::detection::GroundTruthMask;
use crate::error::{Error, Result};
use crate::tensor::{Cube, Shape};

const STREAM_LAYOUT: u64 = 0;
const STREAM_GAUSSIAN: u64 = 1;
const STREAM_IMPULSE: u64 = 2;
const STREAM_STRIPES: u64 = 3;

/// Stripe offsets are drawn uniformly from `[-STRIPE_AMPLITUDE, STRIPE_AMPLITUDE]`.
pub const STRIPE_AMPLITUDE: f64 = 0.3;
pub const MAX_TARGET_SIZE: usize = 4;
pub const MAX_ANOMALY_FRACTION: f64 = 0.02;
/// Range of blend fractions drawn for default targets.
pub const TARGET_STRENGTH: (f64, f64) = (0.3, 0.5);

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Target {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
    /// Fraction of each target tube taken by the anomalous signature; the
    /// rest keeps the local background spectrum.
    pub strength: f64,
}

impl Target {
    fn overlaps(&self, other: &Target) -> bool {
        self.row < other.row + other.height
            && other.row < self.row + self.height
            && self.col < other.col + other.width
            && other.col < self.col + self.width
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub shape: Shape,
    pub endmembers: usize,
    pub targets: Vec<Target>,
    pub seed: u64,
}

impl SceneSpec {
    /// Places a handful of 1×1 to 3×3 targets at seeded positions, keeping the
    /// anomaly fraction near 1.25% of the pixels.
    pub fn with_default_targets(shape: Shape, endmembers: usize, seed: u64) -> Result<Self> {
        shape.validate()?;
        const SIZES: [usize; 6] = [2, 3, 2, 1, 3, 2];
        let budget = 0.0125 * shape.pixels() as f64;
        let mut r = rng(seed, STREAM_LAYOUT);
        let mut targets: Vec<Target> = Vec::new();
        let mut used = 0;
        for (n, &size) in SIZES.iter().cycle().enumerate() {
            if (used + size * size) as f64 > budget || n >= 64 {
                break;
            }
            let margin = 2;
            if shape.height < size + 2 * margin || shape.width < size + 2 * margin {
                break;
            }
            // Rejection sampling with a one-pixel clearance between targets.
            let mut placed = None;
            for _ in 0..200 {
                let t = Target {
                    row: r.random_range(margin..=shape.height - size - margin),
                    col: r.random_range(margin..=shape.width - size - margin),
                    height: size,
                    width: size,
                    strength: r.random_range(TARGET_STRENGTH.0..TARGET_STRENGTH.1),
                };
                let padded = Target {
                    row: t.row.saturating_sub(1),
                    col: t.col.saturating_sub(1),
                    height: t.height + 2,
                    width: t.width + 2,
                    ..t
                };
                if targets.iter().all(|o| !padded.overlaps(o)) {
                    placed = Some(t);
                    break;
                }
            }
            match placed {
                Some(t) => {
                    used += size * size;
                    targets.push(t);
                }
                None => break,
            }
        }
        Ok(SceneSpec { shape, endmembers, targets, seed })
    }

    pub fn validate(&self) -> Result<()> {
        self.shape.validate()?;
        if self.endmembers == 0 {
            return Err(Error::param("endmembers", "need at least one endmember"));
        }
        let mut pixels = 0;
        for (n, t) in self.targets.iter().enumerate() {
            if t.height == 0 || t.width == 0 || t.height > MAX_TARGET_SIZE || t.width > MAX_TARGET_SIZE {
                return Err(Error::param("targets", format!("target {n} size {}x{} not in 1..=4", t.height, t.width)));
            }
            if t.row + t.height > self.shape.height || t.col + t.width > self.shape.width {
                return Err(Error::param("targets", format!("target {n} does not fit inside the image")));
            }
            if !(t.strength > 0.0 && t.strength <= 1.0) {
                return Err(Error::param("targets", format!("target {n} strength must lie in (0, 1]")));
            }
            if let Some(m) = self.targets[..n].iter().position(|o| o.overlaps(t)) {
                return Err(Error::param("targets", format!("targets {m} and {n} overlap")));
            }
            pixels += t.height * t.width;
        }
        if pixels as f64 > MAX_ANOMALY_FRACTION * self.shape.pixels() as f64 {
            return Err(Error::param("targets", format!("{pixels} anomaly pixels exceed 2% of the image")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseMeta {
    /// Gaussian standard deviation.
    pub sigma: f64,
    /// Salt-and-pepper rate.
    pub sp: f64,
    /// Stripe rate over (column, band) pairs.
    pub sl: f64,
    pub case: Option<NoiseCase>,
    pub seed: Option<u64>,
}

impl NoiseMeta {
    pub const NONE: NoiseMeta = NoiseMeta { sigma: 0.0, sp: 0.0, sl: 0.0, case: None, seed: None };
}

/// Noise fields added to the clean cube: `observed = clean + Σ fields`.
#[derive(Clone, Debug, PartialEq)]
pub struct InjectedNoise {
    pub gaussian: Cube,
    pub impulse: Cube,
    pub stripe: Cube,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub clean: Cube,
    pub observed: Cube,
    pub gt: GroundTruthMask,
    pub noise: NoiseMeta,
    pub injected: InjectedNoise,
}

/// Smooth bump spectrum scaled into `[lo, hi]`.
fn smooth_spectrum(r: &mut ChaCha8Rng, bands: usize, lo: f64, hi: f64) -> Vec<f64> {
    let bumps: Vec<(f64, f64, f64)> =
        (0..3).map(|_| (r.random_range(-1.0..1.0), r.random_range(0.0..1.0), r.random_range(0.08..0.3))).collect();
    let tilt = r.random_range(-0.5..0.5);
    let raw: Vec<f64> = (0..bands)
        .map(|k| {
            let x = if bands > 1 { k as f64 / (bands - 1) as f64 } else { 0.5 };
            tilt * x + bumps.iter().map(|(a, c, w)| a * (-(x - c).powi(2) / (2.0 * w * w)).exp()).sum::<f64>()
        })
        .collect();
    let mn = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let mx = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if mx > mn { mx - mn } else { 1.0 };
    raw.iter().map(|v| lo + (hi - lo) * (v - mn) / span).collect()
}

/// Noise-free scene: a linear mixture of smooth endmember spectra with
/// spatially smooth abundances. Target tubes are blended with a distinct
/// signature at the target's strength.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let shape = spec.shape;
    let mut r = rng(spec.seed, STREAM_LAYOUT);
    // Skip the draws made by default target placement so the background does
    // not depend on how the targets were produced.
    r.set_word_pos(1 << 20);

    let spectra: Vec<Vec<f64>> =
        (0..spec.endmembers).map(|_| smooth_spectrum(&mut r, shape.bands, 0.15, 0.75)).collect();

    // Low-frequency fields per endmember, turned into abundances by softmax.
    let waves: Vec<Vec<(f64, f64, f64, f64)>> = (0..spec.endmembers)
        .map(|_| {
            (0..3)
                .map(|_| {
                    (
                        r.random_range(0.5..1.5),
                        r.random_range(-1.2..1.2),
                        r.random_range(-1.2..1.2),
                        r.random_range(0.0..std::f64::consts::TAU),
                    )
                })
                .collect()
        })
        .collect();
    let mut abundance = vec![0.0; spec.endmembers];
    let mut clean = Cube::zeros(shape);
    for i in 0..shape.height {
        for j in 0..shape.width {
            let (y, x) = (i as f64 / shape.height as f64, j as f64 / shape.width as f64);
            for (e, w) in waves.iter().enumerate() {
                abundance[e] = w
                    .iter()
                    .map(|(amp, fy, fx, ph)| amp * (std::f64::consts::TAU * (fy * y + fx * x) + ph).sin())
                    .sum::<f64>()
                    .exp();
            }
            let z: f64 = abundance.iter().sum();
            for k in 0..shape.bands {
                let v = abundance.iter().zip(&spectra).map(|(a, s)| a * s[k]).sum::<f64>() / z;
                clean.set(i, j, k, v);
            }
        }
    }

    let mut labels = vec![false; shape.pixels()];
    for t in &spec.targets {
        let signature = smooth_spectrum(&mut r, shape.bands, 0.05, 0.95);
        for i in t.row..t.row + t.height {
            for j in t.col..t.col + t.width {
                labels[i * shape.width + j] = true;
                for (k, s) in signature.iter().enumerate() {
                    let b = clean.get(i, j, k);
                    clean.set(i, j, k, (1.0 - t.strength) * b + t.strength * s);
                }
            }
        }
    }

    let zeros = Cube::zeros(shape);
    Ok(Scene {
        observed: clean.clone(),
        clean,
        gt: GroundTruthMask::new(shape.height, shape.width, labels)?,
        noise: NoiseMeta::NONE,
        injected: InjectedNoise { gaussian: zeros.clone(), impulse: zeros.clone(), stripe: zeros },
    })
}

fn check_rate(name: &'static str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::param(name, format!("rate must lie in [0, 1], got {v}")));
    }
    Ok(())
}

/// Adds i.i.d. zero-mean Gaussian noise with standard deviation `sigma`.
pub fn add_gaussian(mut scene: Scene, sigma: f64, seed: u64) -> Result<Scene> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::param("sigma", format!("must be finite and nonnegative, got {sigma}")));
    }
    scene.noise.sigma = sigma;
    if sigma == 0.0 {
        return Ok(scene);
    }
    let mut r = rng(seed, STREAM_GAUSSIAN);
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::param("sigma", e.to_string()))?;
    let field: Vec<f64> = (0..scene.observed.shape().len()).map(|_| normal.sample(&mut r)).collect();
    let field = Cube::from_vec(scene.observed.shape(), field)?;
    scene.observed.add_assign(&field);
    scene.injected.gaussian.add_assign(&field);
    Ok(scene)
}

/// Sets `round(S_p · HWB)` distinct entries, chosen uniformly, to 0 or 1
/// with equal probability.
pub fn add_salt_pepper(mut scene: Scene, rate: f64, seed: u64) -> Result<Scene> {
    check_rate("sp", rate)?;
    scene.noise.sp = rate;
    let n = scene.observed.shape().len();
    let count = (rate * n as f64).round() as usize;
    if count == 0 {
        return Ok(scene);
    }
    let mut r = rng(seed, STREAM_IMPULSE);
    let picks = index::sample(&mut r, n, count);
    for idx in picks.iter() {
        let value = if r.random_bool(0.5) { 1.0 } else { 0.0 };
        let before = scene.observed.as_slice()[idx];
        scene.observed.as_mut_slice()[idx] = value;
        scene.injected.impulse.as_mut_slice()[idx] += value - before;
    }
    Ok(scene)
}

/// Adds a constant offset, uniform on `[-0.3, 0.3]`, down the full height of
/// `round(S_l · W · B)` distinct (column, band) pairs.
pub fn add_stripes(mut scene: Scene, rate: f64, seed: u64) -> Result<Scene> {
    check_rate("sl", rate)?;
    scene.noise.sl = rate;
    let shape = scene.observed.shape();
    let pairs = shape.width * shape.bands;
    let count = (rate * pairs as f64).round() as usize;
    if count == 0 {
        return Ok(scene);
    }
    let mut r = rng(seed, STREAM_STRIPES);
    let picks = index::sample(&mut r, pairs, count);
    for p in picks.iter() {
        let (j, k) = (p / shape.bands, p % shape.bands);
        let offset = r.random_range(-STRIPE_AMPLITUDE..=STRIPE_AMPLITUDE);
        for i in 0..shape.height {
            let o = scene.observed.offset(i, j, k);
            scene.observed.as_mut_slice()[o] += offset;
            scene.injected.stripe.as_mut_slice()[o] += offset;
        }
    }
    Ok(scene)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NoiseCase {
    /// Noise free.
    Case1,
    /// Gaussian σ = 0.03.
    Case2,
    /// Salt-and-pepper 0.03 and stripes 0.03.
    Case3,
    /// σ = S_p = S_l = 0.01.
    Case4,
    /// σ = S_p = S_l = 0.05.
    Case5,
}

impl NoiseCase {
    pub const ALL: [NoiseCase; 5] =
        [NoiseCase::Case1, NoiseCase::Case2, NoiseCase::Case3, NoiseCase::Case4, NoiseCase::Case5];

    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            1 => Ok(NoiseCase::Case1),
            2 => Ok(NoiseCase::Case2),
            3 => Ok(NoiseCase::Case3),
            4 => Ok(NoiseCase::Case4),
            5 => Ok(NoiseCase::Case5),
            _ => Err(Error::param("case", format!("unknown noise case {id}; expected 1..=5"))),
        }
    }

    pub fn id(self) -> u8 {
        match self {
            NoiseCase::Case1 => 1,
            NoiseCase::Case2 => 2,
            NoiseCase::Case3 => 3,
            NoiseCase::Case4 => 4,
            NoiseCase::Case5 => 5,
        }
    }

    /// `(σ, S_p, S_l)`
    pub fn params(self) -> (f64, f64, f64) {
        match self {
            NoiseCase::Case1 => (0.0, 0.0, 0.0),
            NoiseCase::Case2 => (0.03, 0.0, 0.0),
            NoiseCase::Case3 => (0.0, 0.03, 0.03),
            NoiseCase::Case4 => (0.01, 0.01, 0.01),
            NoiseCase::Case5 => (0.05, 0.05, 0.05),
        }
    }

    pub fn meta(self, seed: u64) -> NoiseMeta {
        let (sigma, sp, sl) = self.params();
        NoiseMeta { sigma, sp, sl, case: Some(self), seed: Some(seed) }
    }
}

/// Applies Gaussian, then salt-and-pepper, then stripe noise.
pub fn apply_noise_case(scene: Scene, case: NoiseCase, seed: u64) -> Result<Scene> {
    let (sigma, sp, sl) = case.params();
    let scene = add_gaussian(scene, sigma, seed)?;
    let scene = add_salt_pepper(scene, sp, seed)?;
    let mut scene = add_stripes(scene, sl, seed)?;
    scene.noise.case = Some(case);
    scene.noise.seed = Some(seed);
    Ok(scene)
}

/// `ε = η σ √(HWB(1 − S_p))` and `α = η S_p HWB / 2`.
pub fn calibrate_radii(meta: &NoiseMeta, shape: Shape, eta: f64) -> (f64, f64) {
    let n = shape.len() as f64;
    let epsilon = eta * meta.sigma * (n * (1.0 - meta.sp)).sqrt();
    let alpha = 0.5 * eta * meta.sp * n;
    (epsilon, alpha)
}

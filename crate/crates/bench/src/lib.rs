//! Shared fixtures for the benchmarks.

use hsad_core::synth::{apply_noise_case, generate_scene};
use hsad_core::{Cube, NoiseCase, SceneSpec, Shape};

/// Case 5 observation of a default synthetic scene.
pub fn noisy_scene(shape: Shape, seed: u64) -> Cube {
    let spec = SceneSpec::with_default_targets(shape, 4, seed).expect("valid scene spec");
    let scene = generate_scene(&spec).expect("scene generation");
    apply_noise_case(scene, NoiseCase::Case5, seed).expect("noise").observed
}

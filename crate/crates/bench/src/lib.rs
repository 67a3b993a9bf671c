//! Shared fixtures for the kernel benchmarks: the standard 784-pixel layer
//! shape, seeded circuits, and input batches.

use ttq_core::qsim::PqcParams;
use ttq_core::seed::rng_from;
use ttq_core::tt::{TtLayer, TtShape};
use rand::Rng;

/// The 784 -> 8 layer used by the image experiments:
/// dims (7, 16, 7) -> (2, 2, 2), ranks (1, 3, 3, 1).
pub fn image_layer(seed: u64) -> TtLayer {
    let shape = TtShape::new(vec![7, 16, 7], vec![2, 2, 2], vec![1, 3, 3, 1])
        .expect("static shape is valid");
    TtLayer::random(shape, &mut rng_from(seed))
}

/// A circuit matching the experiment recipes: ring-closed, three layers.
pub fn image_circuit(qubits: usize, depth: usize, seed: u64) -> PqcParams {
    let mut pqc = PqcParams::random(qubits, depth, &mut rng_from(seed));
    pqc.ring_closure = true;
    pqc
}

/// Pixel-scale random input vector.
pub fn random_input(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from(seed);
    (0..len).map(|_| rng.random_range(0.0..1.0)).collect()
}

/// Feature-scale random vector (pre-squash domain).
pub fn random_features(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from(seed);
    (0..len).map(|_| rng.random_range(-3.0..3.0)).collect()
}

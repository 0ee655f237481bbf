//! Fixtures shared by the benchmarks.

use hybridlearn_core::datagen::{gen_polyplant, PlantSpec};
use hybridlearn_core::IOTrace;

/// Smooth multichannel series; `phase` shifts every channel so that two calls
/// give similar but unequal sequences.
pub fn wave(len: usize, dim: usize, phase: f64) -> Vec<Vec<f64>> {
    (0..len)
        .map(|i| {
            let t = i as f64 / len as f64;
            (0..dim)
                .map(|c| (6.0 * t + phase + c as f64).sin() + 0.3 * (17.0 * t).cos())
                .collect()
        })
        .collect()
}

/// One trace of the built-in three-mode plant.
pub fn plant_trace(seed: u64) -> IOTrace {
    let spec = PlantSpec {
        traces: 1,
        seed,
        ..PlantSpec::three_mode()
    };
    gen_polyplant(&spec).expect("built-in spec is valid").remove(0).trace
}

/// Noiseless quadratic samples over `vars` inputs.
pub fn quadratic_samples(n: usize, vars: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    // Weyl sequences with irrational steps fill the unit cube evenly.
    let steps = [
        2f64.sqrt(),
        3f64.sqrt(),
        5f64.sqrt(),
        7f64.sqrt(),
        11f64.sqrt(),
        13f64.sqrt(),
    ];
    let x: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..vars).map(|v| (i as f64 * steps[v % steps.len()]).fract()).collect())
        .collect();
    let y = x
        .iter()
        .map(|r| {
            vec![
                1.0 + r
                    .iter()
                    .enumerate()
                    .map(|(k, v)| (k as f64 + 1.0) * v * v - v)
                    .sum::<f64>(),
            ]
        })
        .collect();
    (x, y)
}

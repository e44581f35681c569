//! Shared fixtures for the pipeline benchmarks: deterministic desk-scale
//! channels, observations, and estimator parameters so every benchmark run
//! measures the same workload.

use std::sync::Arc;

use hybeam_core::array::{
    generate_channels, make_nominal_ula, perturb_array, GainProfile, SPEED_OF_LIGHT,
};
use hybeam_core::mpnet::MpNetParams;
use hybeam_core::numerics::CMat;
use hybeam_core::rng::{complex_gaussian, rng};
use hybeam_core::sounding::{draw_measurement_matrix, observe_uplink, Observation};

/// 28 GHz carrier, the array geometry every benchmark shares.
pub const WAVELENGTH: f64 = SPEED_OF_LIGHT / 28e9;

/// A dense complex Gaussian test matrix.
pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> CMat {
    let mut g = rng(seed);
    CMat::from_fn(rows, cols, |_, _| complex_gaussian(&mut g, 1.0))
}

/// One sounding observation of `users` multipath channels on a 64-antenna
/// array with 16 RF chains over `t` frames, together with a learnable
/// estimator initialized at the (miscalibrated) nominal geometry.
pub fn desk_observation(users: usize, t: usize, seed: u64) -> (Observation, MpNetParams) {
    let nominal = make_nominal_ula(64, WAVELENGTH);
    let real = perturb_array(&nominal, 0.1, seed);
    let ds = generate_channels(&nominal, &real, users, 8, GainProfile::ExpDecay, seed + 1, "bench")
        .expect("benchmark channels generate");
    let cols: Vec<usize> = (0..users).collect();
    let h = ds.stack_columns(&cols);
    let meas = Arc::new(draw_measurement_matrix(64, 16, t, seed + 2));
    let obs = observe_uplink(&h, &meas, 0.02, seed + 3).expect("benchmark observation");
    let net = MpNetParams::constrained_from_array(&nominal, 1200);
    (obs, net)
}

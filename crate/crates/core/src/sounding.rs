//! Uplink sounding: measurement matrices, SNR calibration, observations.
//!
//! During sounding the base station cannot see antenna-domain signals
//! directly; each frame `t` it applies an analog combiner `W_a(t)` (L RF
//! chains) and stacking `T` frames yields `y = M·h + ñ` with
//! `M = [W_a(1) … W_a(T)]ᴴ` of shape TL×A. Crucially the noise enters *at
//! the antennas* and is filtered by the same combiners, so `ñ` is **not**
//! white: its covariance is block-diagonal with blocks `ζ²·W_a(t)ᴴW_a(t)`.
//! Estimators that assume white noise in the observation domain give away
//! performance; the matching-pursuit stopping rule and the structured LMMSE
//! baseline both consume the true covariance structure from here.

use std::sync::Arc;

use num_complex::Complex64;

use crate::array::ChannelDataset;
use crate::error::{Error, Result};
use crate::numerics::{matmul, CMat};
use crate::rng::{complex_gaussian, derive_seed, rng, uniform_phase};

const NOISE_STREAM: u64 = 0x6e6f_6973; // "nois"

/// Stacked sounding matrix `M` (TL×A) of unit-modulus combiner weights.
#[derive(Debug, Clone)]
pub struct MeasurementMatrix {
    /// TL×A stacked combiners; row block `t` equals `W_a(t)ᴴ`.
    pub m: CMat,
    /// Number of sounding frames `T`.
    pub t: usize,
    /// Number of RF chains `L`.
    pub l: usize,
    pub seed: u64,
}

impl MeasurementMatrix {
    /// Total observation length `T·L`.
    pub fn rows(&self) -> usize {
        self.t * self.l
    }

    /// Number of antennas `A`.
    pub fn antennas(&self) -> usize {
        self.m.cols()
    }

    /// The L×A row block of frame `t`, i.e. `W_a(t)ᴴ`.
    pub fn frame(&self, t: usize) -> CMat {
        assert!(t < self.t);
        CMat::from_fn(self.l, self.antennas(), |r, a| self.m[(self.l * t + r, a)])
    }
}

/// Draw an agnostic measurement matrix: i.i.d. phases `e^{jφ}`,
/// `φ ∼ U[0, 2π)`, filled column by column; deterministic per seed.
pub fn draw_measurement_matrix(a: usize, l: usize, t: usize, seed: u64) -> MeasurementMatrix {
    assert!(a >= 1 && l >= 1 && t >= 1);
    let mut g = rng(seed);
    let mut m = CMat::zeros(t * l, a);
    for j in 0..a {
        for z in m.col_mut(j) {
            *z = Complex64::from_polar(1.0, uniform_phase(&mut g));
        }
    }
    MeasurementMatrix { m, t, l, seed }
}

/// Noise variance that realizes a target average uplink SNR in dB:
/// `ζ² = mean‖h‖² / (A·10^{SNR/10})`.
pub fn calibrate_zeta2(ds: &ChannelDataset, target_snr_db: f64) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::Config("cannot calibrate noise on an empty dataset".into()));
    }
    Ok(ds.mean_norm_sq() / (ds.antennas() as f64 * 10f64.powf(target_snr_db / 10.0)))
}

/// One sounding outcome: `y = M·H + Ñ` for one or more users (columns).
#[derive(Debug, Clone)]
pub struct Observation {
    /// TL×U stacked received pilots after combining.
    pub y: CMat,
    pub meas: Arc<MeasurementMatrix>,
    /// Antenna-domain noise variance ζ² used for this draw.
    pub zeta2: f64,
    /// The channel matrix that produced `y`, if the caller is entitled to
    /// it (supervised training and scoring). `None` models deployment,
    /// where only `y` exists.
    pub truth: Option<CMat>,
}

impl Observation {
    /// Drop the ground-truth link, as at a deployed base station.
    pub fn strip_truth(mut self) -> Observation {
        self.truth = None;
        self
    }
}

/// Sound the channels `H` (A×U) through `meas` with antenna noise CN(0, ζ²I).
///
/// Per user `u` an independent stream seeded from (`seed`, u) supplies, for
/// each frame in order, `A` complex Gaussians (real then imaginary part per
/// antenna); the frame's noise contribution is `W_a(t)ᴴ·n`, which is what
/// makes the observation noise structured instead of white.
pub fn observe_uplink(
    h: &CMat,
    meas: &Arc<MeasurementMatrix>,
    zeta2: f64,
    seed: u64,
) -> Result<Observation> {
    if h.rows() != meas.antennas() {
        return Err(Error::Dim(format!(
            "channel has {} antennas but the measurement matrix expects {}",
            h.rows(),
            meas.antennas()
        )));
    }
    if !(zeta2.is_finite() && zeta2 >= 0.0) {
        return Err(Error::Numeric(format!("noise variance must be ≥ 0, got {zeta2}")));
    }
    let mut y = matmul(&meas.m, h)?;
    let (tl, a) = (meas.rows(), meas.antennas());
    let mut n = vec![Complex64::new(0.0, 0.0); a];
    for u in 0..h.cols() {
        let mut g = rng(derive_seed(seed, &[NOISE_STREAM, u as u64]));
        let ycol = y.col_mut(u);
        for t in 0..meas.t {
            for z in n.iter_mut() {
                *z = complex_gaussian(&mut g, zeta2);
            }
            for r in (meas.l * t)..(meas.l * (t + 1)) {
                debug_assert!(r < tl);
                let mut acc = Complex64::new(0.0, 0.0);
                for (col, &nz) in n.iter().enumerate() {
                    acc += meas.m[(r, col)] * nz;
                }
                ycol[r] += acc;
            }
        }
    }
    if !y.is_finite() {
        return Err(Error::Numeric("observation is not finite".into()));
    }
    Ok(Observation { y, meas: Arc::clone(meas), zeta2, truth: Some(h.clone()) })
}

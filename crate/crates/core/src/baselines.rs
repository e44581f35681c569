//! Reference methods the learned pipeline is measured against: matching
//! pursuit over a fixed dictionary, the oracle LMMSE estimator, projected
//! gradient ascent with hand-picked constant steps, and the fully digital
//! water-filling bound that caps every hybrid design.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array::ChannelDataset;
use crate::error::{Error, Result};
use crate::mpnet::{estimate_column, geff_cache, StopRule};
use crate::numerics::{self, CMat};
use crate::sounding::{MeasurementMatrix, Observation};
use crate::upga::{pga_forward, PgaParams, PgaTrace};

// ─── Matching pursuit with a frozen dictionary ───────────────────────────────

/// Matching pursuit over a fixed atom matrix, one pursuit per user column.
///
/// This is the learned estimator's exact forward pass with the dictionary
/// pinned — same selection metric, same stopping rule, same optional
/// least-squares re-fit — so any gap between the two is attributable to the
/// dictionary alone.
pub fn mp_baseline(obs: &Observation, atoms: &CMat, stop: &StopRule) -> Result<CMat> {
    let cache = geff_cache(&obs.meas.m, atoms)?;
    let mut cols = Vec::with_capacity(obs.y.cols());
    for u in 0..obs.y.cols() {
        let y = obs.y.column_matrix(u);
        cols.push(estimate_column(&y, &obs.meas, atoms, &cache, stop, obs.zeta2)?.h_hat);
    }
    let refs: Vec<&CMat> = cols.iter().collect();
    CMat::hstack(&refs)
}

// ─── Oracle LMMSE ────────────────────────────────────────────────────────────

/// How the estimator models the post-combining noise covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    /// Exact covariance of combined noise: ζ²·blockdiag(M_t·M_tᴴ) over the
    /// sounding frames. The default.
    Structured,
    /// White approximation ζ²·A·I, matching the structured model on its
    /// diagonal (every combiner row has squared norm A).
    White,
}

/// Statistical model granted to the oracle linear estimator: per-antenna
/// channel power and the covariance of the combined noise.
#[derive(Debug, Clone)]
pub struct LmmseModel {
    /// Diagonal of the channel prior covariance, length A, entries ≥ 0.
    pub r_diag: Vec<f64>,
    /// TL×TL Hermitian PSD noise covariance.
    pub noise_cov: CMat,
}

/// The covariance of stacked combined noise under the chosen model.
pub fn noise_covariance(meas: &MeasurementMatrix, zeta2: f64, model: NoiseModel) -> Result<CMat> {
    if zeta2 < 0.0 {
        return Err(Error::Config("noise power must be non-negative".into()));
    }
    let (rows, l, a) = (meas.rows(), meas.l, meas.antennas());
    let mut cov = CMat::zeros(rows, rows);
    match model {
        NoiseModel::Structured => {
            for t in 0..meas.t {
                let f = meas.frame(t);
                let block = numerics::matmul(&f, &f.adjoint())?.scale_re(zeta2);
                for j in 0..l {
                    for i in 0..l {
                        cov[(t * l + i, t * l + j)] = block[(i, j)];
                    }
                }
            }
        }
        NoiseModel::White => {
            for i in 0..rows {
                cov[(i, i)] = Complex64::new(zeta2 * a as f64, 0.0);
            }
        }
    }
    Ok(cov)
}

impl LmmseModel {
    pub fn new(r_diag: Vec<f64>, noise_cov: CMat) -> Result<Self> {
        if !r_diag.iter().all(|x| x.is_finite() && *x >= 0.0) {
            return Err(Error::Config("channel powers must be non-negative".into()));
        }
        if noise_cov.rows() != noise_cov.cols() || !noise_cov.is_finite() {
            return Err(Error::Dim("noise covariance must be a finite square matrix".into()));
        }
        if noise_cov.max_abs_diff(&noise_cov.adjoint()) > 1e-9 {
            return Err(Error::Numeric("noise covariance is not Hermitian".into()));
        }
        Ok(LmmseModel { r_diag, noise_cov })
    }

    /// Oracle model for a dataset: empirical per-antenna mean power over the
    /// given (training) channels, plus the exact covariance of the sounding
    /// noise unless the white variant is requested.
    pub fn from_dataset(
        train: &ChannelDataset,
        meas: &MeasurementMatrix,
        zeta2: f64,
        model: NoiseModel,
    ) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Config("LMMSE prior needs a non-empty dataset".into()));
        }
        if train.antennas() != meas.antennas() {
            return Err(Error::Dim(format!(
                "dataset has {} antennas, measurement matrix {}",
                train.antennas(),
                meas.antennas()
            )));
        }
        let a = train.antennas();
        let mut r_diag = vec![0.0; a];
        for h in &train.channels {
            for i in 0..a {
                r_diag[i] += h[(i, 0)].norm_sqr();
            }
        }
        let count = train.channels.len() as f64;
        for r in &mut r_diag {
            *r /= count;
        }
        LmmseModel::new(r_diag, noise_covariance(meas, zeta2, model)?)
    }
}

/// Linear MMSE channel estimate, per user column:
/// `ĥ = R·Mᴴ·(M·R·Mᴴ + C)⁻¹·y` with `R = diag(r_diag)`.
///
/// # Errors
/// Dimension mismatches, or a singular system matrix — excluded whenever
/// the noise covariance is positive definite (ζ² > 0 structured/white).
pub fn lmmse_estimate(obs: &Observation, model: &LmmseModel) -> Result<CMat> {
    let m = &obs.meas.m;
    let (rows, a) = (m.rows(), m.cols());
    if model.r_diag.len() != a {
        return Err(Error::Dim(format!(
            "prior covers {} antennas, measurement matrix {}",
            model.r_diag.len(),
            a
        )));
    }
    if model.noise_cov.rows() != rows || obs.y.rows() != rows {
        return Err(Error::Dim(format!(
            "noise covariance {}x{} / observation {}x{} against {rows} measurement rows",
            model.noise_cov.rows(),
            model.noise_cov.cols(),
            obs.y.rows(),
            obs.y.cols()
        )));
    }
    // B = R·Mᴴ; with diagonal R this is a row-scaled adjoint.
    let b = CMat::from_fn(a, rows, |i, j| m[(j, i)].conj() * model.r_diag[i]);
    let f = numerics::matmul(m, &b)?.add(&model.noise_cov);
    let x = numerics::solve_hpd(&f, &obs.y)?;
    numerics::matmul(&b, &x)
}

// ─── Fully digital water-filling bound ───────────────────────────────────────

/// A water-filling allocation over parallel channels with effective gains
/// `g_i` (rate terms `ln(1 + g_i·p_i)`).
#[derive(Debug, Clone)]
pub struct WaterFill {
    /// Power per channel, aligned with the input gains; zeros where the
    /// water level does not reach.
    pub powers: Vec<f64>,
    /// The common level ν with `p_i = max(0, ν − 1/g_i)`.
    pub level: f64,
}

/// Exact water-filling over gains sorted in descending order.
///
/// Uses the closed-form active set: try the k strongest channels, compute
/// `ν = (P + Σ 1/g_i)/k`, and shrink the set while the weakest member would
/// receive negative power.
pub fn water_fill(gains: &[f64], p_total: f64) -> Result<WaterFill> {
    if !(p_total > 0.0) {
        return Err(Error::Config("power budget must be positive".into()));
    }
    if gains.windows(2).any(|w| w[0] < w[1]) || gains.iter().any(|g| !g.is_finite() || *g < 0.0) {
        return Err(Error::Config(
            "water-filling expects finite non-negative gains in descending order".into(),
        ));
    }
    let positive = gains.iter().filter(|g| **g > 0.0).count();
    if positive == 0 {
        return Ok(WaterFill { powers: vec![0.0; gains.len()], level: 0.0 });
    }
    let mut active = positive;
    let mut level = 0.0;
    while active > 0 {
        let inv_sum: f64 = gains[..active].iter().map(|g| 1.0 / g).sum();
        level = (p_total + inv_sum) / active as f64;
        if level - 1.0 / gains[active - 1] >= 0.0 {
            break;
        }
        active -= 1;
    }
    let powers = gains
        .iter()
        .enumerate()
        .map(|(i, g)| if i < active { (level - 1.0 / g).max(0.0) } else { 0.0 })
        .collect();
    Ok(WaterFill { powers, level })
}

/// Best unconstrained-precoder sum-rate (bits): the same log-det objective
/// as the hybrid design, maximized over all `W` with `‖W‖²_F ≤ p_total` via
/// the SVD of `Hᵀ` and water-filling over its squared singular values. A
/// zero channel yields zero rate.
pub fn fully_digital_bound(h: &CMat, p_total: f64, sigma2: f64) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::Config("noise power must be positive".into()));
    }
    if !(p_total > 0.0) {
        return Err(Error::Config("power budget must be positive".into()));
    }
    if !h.is_finite() {
        return Err(Error::Numeric("non-finite channel".into()));
    }
    if h.frob_norm_sq() == 0.0 {
        return Ok(0.0);
    }
    let users = h.cols();
    let c = 1.0 / (users as f64 * sigma2);
    let svd = numerics::svd(&h.transpose())?;
    let gains: Vec<f64> = svd.s.iter().map(|s| c * s * s).collect();
    let fill = water_fill(&gains, p_total)?;
    Ok(gains
        .iter()
        .zip(&fill.powers)
        .map(|(g, p)| (1.0 + g * p).ln())
        .sum::<f64>()
        / std::f64::consts::LN_2)
}

// ─── Hand-tuned ascent ───────────────────────────────────────────────────────

/// The unrolled ascent with one constant step size everywhere — the
/// untrained reference the learned step sizes are compared against.
pub fn fixed_step_pga(
    h: &CMat,
    depth: usize,
    step: f64,
    l: usize,
    p_total: f64,
    sigma2: f64,
    seed: u64,
) -> Result<PgaTrace> {
    pga_forward(h, &PgaParams::constant(depth, step), l, p_total, sigma2, seed)
}

//! Unfolded matching pursuit over a learnable steering dictionary.
//!
//! The estimator runs classical matching pursuit in the measurement domain
//! — greedy atom selection against the residual — but the dictionary itself
//! is trainable, so each pursuit iteration doubles as one layer of an
//! unfolded network. Two parameterizations are supported:
//!
//! * **constrained**: the only learnables are the `A` antenna x-positions in
//!   meters; atoms are regenerated through the steering formula, so they
//!   stay physically consistent (entry modulus exactly `1/√A`).
//! * **unconstrained**: all `A×N` complex atom entries are free.
//!
//! Selection is a discrete argmax and is deliberately kept *off* the
//! gradient tape (stop-gradient): gradients flow through the coefficient
//! and reconstruction arithmetic of the chosen atoms only, mirroring how
//! unfolded sparse-recovery networks are trained.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array::{
    build_dictionary, complexes_to_le_bytes, dictionary_atoms, grid_directions,
    le_bytes_to_complexes, sha256_hex, AntennaArray, DictionaryParameterization,
    SteeringDictionary,
};
use crate::error::{Error, Result};
use crate::grad::{NodeId, ParamNodes, ParamSet, Tape, Tensor};
use crate::numerics::{matmul, CMat, RMat};
use crate::sounding::{MeasurementMatrix, Observation};

/// Trainable state of the estimator. The angle grid and wavelength are
/// immutable structure; only positions (constrained) or atoms
/// (unconstrained) are parameters.
#[derive(Debug, Clone)]
pub enum MpNetParams {
    Constrained { positions_x: Vec<f64>, angle_grid: Vec<[f64; 3]>, wavelength: f64 },
    Unconstrained { atoms: CMat, angle_grid: Vec<[f64; 3]>, wavelength: f64 },
}

impl MpNetParams {
    /// Constrained estimator initialized at an array's x-positions.
    pub fn constrained_from_array(array: &AntennaArray, n: usize) -> Self {
        assert!(n >= array.len());
        MpNetParams::Constrained {
            positions_x: array.x_positions(),
            angle_grid: grid_directions(n),
            wavelength: array.wavelength(),
        }
    }

    /// Unconstrained estimator whose atoms start as an array's dictionary.
    pub fn unconstrained_from_array(array: &AntennaArray, n: usize) -> Self {
        let dict = build_dictionary(array, n);
        MpNetParams::Unconstrained {
            atoms: dict.atoms,
            angle_grid: dict.directions,
            wavelength: array.wavelength(),
        }
    }

    pub fn antennas(&self) -> usize {
        match self {
            MpNetParams::Constrained { positions_x, .. } => positions_x.len(),
            MpNetParams::Unconstrained { atoms, .. } => atoms.rows(),
        }
    }

    pub fn grid_len(&self) -> usize {
        match self {
            MpNetParams::Constrained { angle_grid, .. }
            | MpNetParams::Unconstrained { angle_grid, .. } => angle_grid.len(),
        }
    }

    pub fn wavelength(&self) -> f64 {
        match self {
            MpNetParams::Constrained { wavelength, .. }
            | MpNetParams::Unconstrained { wavelength, .. } => *wavelength,
        }
    }

    pub fn variant_name(&self) -> &'static str {
        match self {
            MpNetParams::Constrained { .. } => "constrained",
            MpNetParams::Unconstrained { .. } => "unconstrained",
        }
    }

    /// Real trainable degrees of freedom: `A` constrained, `2AN` free.
    pub fn trainable_parameter_count(&self) -> usize {
        match self {
            MpNetParams::Constrained { positions_x, .. } => positions_x.len(),
            MpNetParams::Unconstrained { atoms, .. } => 2 * atoms.rows() * atoms.cols(),
        }
    }

    /// Build the current dictionary as plain values.
    pub fn materialize_dictionary(&self) -> SteeringDictionary {
        match self {
            MpNetParams::Constrained { positions_x, angle_grid, wavelength } => {
                let positions: Vec<[f64; 3]> = positions_x.iter().map(|&x| [x, 0.0, 0.0]).collect();
                SteeringDictionary {
                    atoms: dictionary_atoms(&positions, *wavelength, angle_grid),
                    directions: angle_grid.clone(),
                    parameterization: DictionaryParameterization::Positions,
                }
            }
            MpNetParams::Unconstrained { atoms, angle_grid, .. } => SteeringDictionary {
                atoms: atoms.clone(),
                directions: angle_grid.clone(),
                parameterization: DictionaryParameterization::FreeEntries,
            },
        }
    }

    /// Parameter tensor under the name `"dict"` for the optimizer.
    pub fn to_param_set(&self) -> ParamSet {
        let mut ps = ParamSet::new();
        match self {
            MpNetParams::Constrained { positions_x, .. } => {
                let m = RMat::from_fn(positions_x.len(), 1, |i, _| positions_x[i]);
                ps.insert("dict", Tensor::R(m));
            }
            MpNetParams::Unconstrained { atoms, .. } => {
                ps.insert("dict", Tensor::C(atoms.clone()));
            }
        }
        ps
    }

    /// Write an optimizer-updated `"dict"` tensor back into the params.
    pub fn set_from_tensor(&mut self, t: &Tensor) {
        match (self, t) {
            (MpNetParams::Constrained { positions_x, .. }, Tensor::R(m)) => {
                assert_eq!(m.rows(), positions_x.len());
                for (x, i) in positions_x.iter_mut().zip(0..m.rows()) {
                    *x = m[(i, 0)];
                }
            }
            (MpNetParams::Unconstrained { atoms, .. }, Tensor::C(m)) => {
                assert_eq!((m.rows(), m.cols()), (atoms.rows(), atoms.cols()));
                *atoms = m.clone();
            }
            _ => panic!("tensor kind does not match the dictionary parameterization"),
        }
    }

    /// Record the dictionary on the tape as a function of the `"dict"`
    /// parameter node, so gradients reach positions or atoms.
    pub fn dictionary_graph(&self, tape: &mut Tape, nodes: &ParamNodes) -> NodeId {
        match self {
            MpNetParams::Constrained { positions_x, angle_grid, wavelength } => {
                let a = positions_x.len();
                let k = 2.0 * std::f64::consts::PI / wavelength;
                // phase(i, n) = x_i·(−k·ux_n); atoms = (1/√A)·e^{j·phase}.
                let row = RMat::from_fn(1, angle_grid.len(), |_, n| -k * angle_grid[n][0]);
                let row_node = tape.const_r(row);
                let phase = tape.matmul_r(nodes.id("dict"), row_node);
                let raw = tape.cis(phase);
                tape.scale_const(raw, 1.0 / (a as f64).sqrt())
            }
            MpNetParams::Unconstrained { .. } => nodes.id("dict"),
        }
    }
}

/// When the greedy pursuit stops expanding the support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopMode {
    /// Always run `max_atoms` iterations (an exactly-zero residual still
    /// ends the pursuit early, since nothing is left to fit).
    FixedDepth,
    /// Stop once the residual energy falls to the expected noise energy
    /// times `threshold_factor`; `max_atoms` caps the depth regardless.
    ResidualThreshold,
}

/// Stopping rule for the pursuit, shared by the learned estimator and the
/// fixed-dictionary baseline so comparisons are like for like.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    pub mode: StopMode,
    pub max_atoms: usize,
    pub threshold_factor: f64,
    /// Re-fit the coefficients by least squares on the final support
    /// (orthogonal-matching-pursuit style). Applied only in value-level
    /// estimation, never inside gradient graphs.
    #[serde(default)]
    pub refit: bool,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            mode: StopMode::ResidualThreshold,
            max_atoms: 12,
            threshold_factor: 1.0,
            refit: false,
        }
    }
}

impl StopRule {
    pub fn validate(&self) -> Result<()> {
        if self.max_atoms == 0 {
            return Err(Error::Config("stop rule needs max_atoms ≥ 1".into()));
        }
        if !(self.threshold_factor > 0.0) {
            return Err(Error::Config("stop rule needs threshold_factor > 0".into()));
        }
        Ok(())
    }
}

/// One estimated channel with the pursuit's bookkeeping.
#[derive(Debug, Clone)]
pub struct EstimateResult {
    /// Antenna-domain estimate, A×1.
    pub h_hat: CMat,
    /// Selected atom indices in selection order.
    pub support: Vec<usize>,
    /// Coefficient per selected atom (post re-fit when enabled).
    pub coefficients: Vec<Complex64>,
    /// Final measurement-domain residual energy.
    pub residual_energy: f64,
    /// Residual energy before the pursuit and after each iteration.
    pub residual_energies: Vec<f64>,
}

/// Measurement-domain dictionary `M·D` with per-atom squared norms,
/// precomputed once and shared across the columns (and, during training,
/// across a whole batch) that select against it.
#[derive(Debug, Clone)]
pub struct GeffCache {
    pub geff: CMat,
    pub norms_sq: Vec<f64>,
}

/// Build the effective-atom cache for a measurement matrix and dictionary.
///
/// Errors if any effective atom has exactly zero norm: such an atom makes
/// the normalized selection metric undefined.
pub fn geff_cache(m: &CMat, atoms: &CMat) -> Result<GeffCache> {
    let geff = matmul(m, atoms)?;
    let mut norms_sq = Vec::with_capacity(geff.cols());
    for n in 0..geff.cols() {
        let e: f64 = geff.col(n).iter().map(|z| z.norm_sqr()).sum();
        if e == 0.0 {
            return Err(Error::Numeric(format!("effective atom {n} has zero norm")));
        }
        norms_sq.push(e);
    }
    Ok(GeffCache { geff, norms_sq })
}

/// Result of unrolling one pursuit column on a tape.
pub(crate) struct MpColumn {
    pub h_hat: NodeId,
    pub support: Vec<usize>,
    pub coefficients: Vec<Complex64>,
    pub residual_energies: Vec<f64>,
}

/// Relative residual floor below which the pursuit always halts: the
/// remaining energy is numerically indistinguishable from zero.
const RESIDUAL_FLOOR: f64 = 1e-26;

/// Unroll matching pursuit for one observation column onto the tape.
///
/// Atom selection reads plain numbers (the cache and the residual node's
/// current value) and only the selected columns enter the graph, so the
/// argmax is a structural stop-gradient. `forced_support` replaces the
/// greedy selection and stopping logic entirely — that is what freezes the
/// support for finite-difference gradient audits.
pub(crate) fn build_mp_column(
    tape: &mut Tape,
    dict_node: NodeId,
    cache: &GeffCache,
    m_node: NodeId,
    y_node: NodeId,
    stop: &StopRule,
    noise_energy: f64,
    forced_support: Option<&[usize]>,
) -> Result<MpColumn> {
    stop.validate()?;
    let a = tape.value_c(dict_node).rows();
    let threshold = stop.threshold_factor * noise_energy;

    let mut h_hat = tape.const_c(CMat::zeros(a, 1));
    let mut residual = y_node;
    let initial_energy = tape.value_c(residual).frob_norm_sq();
    let mut energies = vec![initial_energy];
    let mut support = Vec::new();
    let mut coefficients = Vec::new();

    let depth = forced_support.map_or(stop.max_atoms, |s| s.len());
    for iter in 0..depth {
        let res_energy = *energies.last().unwrap();
        if forced_support.is_none() {
            if res_energy == 0.0 || res_energy <= RESIDUAL_FLOOR * initial_energy {
                break;
            }
            if matches!(stop.mode, StopMode::ResidualThreshold) && res_energy <= threshold {
                break;
            }
        }

        let pick = match forced_support {
            Some(s) => s[iter],
            None => {
                // argmax_n |⟨g_n, r⟩| / ‖g_n‖, ties to the lowest index.
                let res_val = tape.value_c(residual);
                let mut best = 0usize;
                let mut best_metric = f64::NEG_INFINITY;
                for n in 0..cache.geff.cols() {
                    let mut inner = Complex64::new(0.0, 0.0);
                    for (g, r) in cache.geff.col(n).iter().zip(res_val.col(0)) {
                        inner += g.conj() * r;
                    }
                    let metric = inner.norm() / cache.norms_sq[n].sqrt();
                    if metric > best_metric {
                        best_metric = metric;
                        best = n;
                    }
                }
                best
            }
        };

        let d_sel = tape.col(dict_node, pick);
        let g_sel = tape.matmul(m_node, d_sel);
        let g_adj = tape.adjoint(g_sel);
        let num = tape.matmul(g_adj, residual);
        let den = tape.frob_sq(g_sel);
        let one = tape.scalar_r(1.0);
        let inv = tape.div_r(one, den);
        let coef = tape.scale_re(num, inv);
        let meas_part = tape.matmul(g_sel, coef);
        residual = tape.sub(residual, meas_part);
        let ant_part = tape.matmul(d_sel, coef);
        h_hat = tape.add(h_hat, ant_part);

        support.push(pick);
        coefficients.push(tape.value_c(coef)[(0, 0)]);
        energies.push(tape.value_c(residual).frob_norm_sq());
    }

    Ok(MpColumn { h_hat, support, coefficients, residual_energies: energies })
}

/// Least-squares re-fit of the coefficients on the (deduplicated) support.
fn refit_on_support(
    dict: &CMat,
    cache: &GeffCache,
    y: &CMat,
    support: &[usize],
) -> Result<(CMat, Vec<usize>, Vec<Complex64>, f64)> {
    let mut uniq: Vec<usize> = Vec::new();
    for &s in support {
        if !uniq.contains(&s) {
            uniq.push(s);
        }
    }
    let cols: Vec<CMat> = uniq.iter().map(|&n| cache.geff.column_matrix(n)).collect();
    let refs: Vec<&CMat> = cols.iter().collect();
    let gs = CMat::hstack(&refs)?;
    let gram = matmul(&gs.adjoint(), &gs)?;
    let rhs = matmul(&gs.adjoint(), y)?;
    let beta = crate::numerics::solve_hpd(&gram, &rhs)?;
    let dcols: Vec<CMat> = uniq.iter().map(|&n| dict.column_matrix(n)).collect();
    let drefs: Vec<&CMat> = dcols.iter().collect();
    let ds = CMat::hstack(&drefs)?;
    let h_hat = matmul(&ds, &beta)?;
    let res = y.sub(&matmul(&gs, &beta)?).frob_norm_sq();
    let coefficients = beta.col(0).to_vec();
    Ok((h_hat, uniq, coefficients, res))
}

/// Estimate a single channel from one observation column.
pub fn mp_forward(
    y: &CMat,
    meas: &MeasurementMatrix,
    params: &MpNetParams,
    stop: &StopRule,
    zeta2: f64,
) -> Result<EstimateResult> {
    if y.rows() != meas.rows() || y.cols() != 1 {
        return Err(Error::Dim(format!(
            "observation column must be {}×1, got {}×{}",
            meas.rows(),
            y.rows(),
            y.cols()
        )));
    }
    let dict = params.materialize_dictionary();
    let cache = geff_cache(&meas.m, &dict.atoms)?;
    estimate_column(y, meas, &dict.atoms, &cache, stop, zeta2)
}

pub(crate) fn estimate_column(
    y: &CMat,
    meas: &MeasurementMatrix,
    atoms: &CMat,
    cache: &GeffCache,
    stop: &StopRule,
    zeta2: f64,
) -> Result<EstimateResult> {
    let noise_energy = zeta2 * (meas.rows() * meas.antennas()) as f64;
    let mut tape = Tape::new();
    let dict_node = tape.const_c(atoms.clone());
    let m_node = tape.const_c(meas.m.clone());
    let y_node = tape.const_c(y.clone());
    let col = build_mp_column(&mut tape, dict_node, cache, m_node, y_node, stop, noise_energy, None)?;
    let mut result = EstimateResult {
        h_hat: tape.value_c(col.h_hat).clone(),
        support: col.support,
        coefficients: col.coefficients,
        residual_energy: *col.residual_energies.last().unwrap(),
        residual_energies: col.residual_energies,
    };
    if stop.refit && !result.support.is_empty() {
        let (h_hat, support, coefficients, res) = refit_on_support(atoms, cache, y, &result.support)?;
        result.h_hat = h_hat;
        result.support = support;
        result.coefficients = coefficients;
        result.residual_energy = res;
        result.residual_energies.push(res);
    }
    Ok(result)
}

/// Estimate every user column of an observation; returns Ĥ (A×U).
pub fn estimate_channels(obs: &Observation, params: &MpNetParams, stop: &StopRule) -> Result<CMat> {
    let dict = params.materialize_dictionary();
    let cache = geff_cache(&obs.meas.m, &dict.atoms)?;
    let mut cols = Vec::with_capacity(obs.y.cols());
    for u in 0..obs.y.cols() {
        let y = obs.y.column_matrix(u);
        cols.push(estimate_column(&y, &obs.meas, &dict.atoms, &cache, stop, obs.zeta2)?.h_hat);
    }
    let refs: Vec<&CMat> = cols.iter().collect();
    CMat::hstack(&refs)
}

/// The per-user atom selections the pursuit makes on an observation, in
/// selection order. Feeding these back as a forced support pins the
/// discrete part of the estimator, leaving a smooth map for gradient
/// checks.
pub fn mp_supports(
    obs: &Observation,
    params: &MpNetParams,
    stop: &StopRule,
) -> Result<Vec<Vec<usize>>> {
    let dict = params.materialize_dictionary();
    let cache = geff_cache(&obs.meas.m, &dict.atoms)?;
    let mut out = Vec::with_capacity(obs.y.cols());
    for u in 0..obs.y.cols() {
        let y = obs.y.column_matrix(u);
        out.push(estimate_column(&y, &obs.meas, &dict.atoms, &cache, stop, obs.zeta2)?.support);
    }
    Ok(out)
}

/// Which reconstruction error drives dictionary learning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MpLoss {
    /// Relative channel error ‖Ĥ−H‖²_F/‖H‖²_F — needs ground truth.
    Supervised,
    /// Relative observation error ‖MĤ−Y‖²_F/‖Y‖²_F — truth-free.
    Unsupervised,
}

/// Relative squared channel error ‖Ĥ − H‖²_F / ‖H‖²_F.
pub fn loss_supervised(h_hat: &CMat, h: &CMat) -> Result<f64> {
    let den = h.frob_norm_sq();
    if den == 0.0 {
        return Err(Error::Numeric("supervised loss needs a nonzero reference".into()));
    }
    Ok(h_hat.sub(h).frob_norm_sq() / den)
}

/// Relative squared observation error ‖MĤ − Y‖²_F / ‖Y‖²_F.
pub fn loss_unsupervised(h_hat: &CMat, y: &CMat, m: &CMat) -> Result<f64> {
    let den = y.frob_norm_sq();
    if den == 0.0 {
        return Err(Error::Numeric("unsupervised loss needs a nonzero observation".into()));
    }
    Ok(matmul(m, h_hat)?.sub(y).frob_norm_sq() / den)
}

/// Supervised loss in decibels, floored at −120 dB.
pub fn nmse_db(h_hat: &CMat, h: &CMat) -> Result<f64> {
    let l = loss_supervised(h_hat, h)?;
    Ok(10.0 * l.max(1e-12).log10())
}

/// Record the full estimator + loss for one observation on a tape.
///
/// The dictionary is rebuilt from the `"dict"` parameter node, every user
/// column is unrolled, and the chosen loss is divided by `denominator`
/// (defaults to this observation's own reference energy; batch training
/// passes the batch-wide energy so per-sample graphs sum to the batch
/// ratio). `forced_support`, when given, fixes the selected atoms per user.
pub fn mp_loss_graph(
    tape: &mut Tape,
    nodes: &ParamNodes,
    net: &MpNetParams,
    obs: &Observation,
    stop: &StopRule,
    loss: MpLoss,
    shared_cache: Option<&GeffCache>,
    denominator: Option<f64>,
    forced_support: Option<&[Vec<usize>]>,
) -> Result<NodeId> {
    let dict_node = net.dictionary_graph(tape, nodes);
    let local_cache;
    let cache = match shared_cache {
        Some(c) => c,
        None => {
            local_cache = geff_cache(&obs.meas.m, tape.value_c(dict_node))?;
            &local_cache
        }
    };
    let m_node = tape.const_c(obs.meas.m.clone());
    let noise_energy = obs.zeta2 * (obs.meas.rows() * obs.meas.antennas()) as f64;

    let mut cols = Vec::with_capacity(obs.y.cols());
    for u in 0..obs.y.cols() {
        let y_node = tape.const_c(obs.y.column_matrix(u));
        let forced = forced_support.map(|f| f[u].as_slice());
        let col = build_mp_column(tape, dict_node, cache, m_node, y_node, stop, noise_energy, forced)?;
        cols.push(col.h_hat);
    }
    let h_hat = if cols.len() == 1 { cols[0] } else { tape.hstack(&cols) };

    let (num, den) = match loss {
        MpLoss::Supervised => {
            let truth = obs
                .truth
                .as_ref()
                .ok_or_else(|| Error::Config("supervised loss requires ground truth".into()))?;
            let den = denominator.unwrap_or_else(|| truth.frob_norm_sq());
            let t_node = tape.const_c(truth.clone());
            let diff = tape.sub(h_hat, t_node);
            (tape.frob_sq(diff), den)
        }
        MpLoss::Unsupervised => {
            let den = denominator.unwrap_or_else(|| obs.y.frob_norm_sq());
            let y_node = tape.const_c(obs.y.clone());
            let mh = tape.matmul(m_node, h_hat);
            let diff = tape.sub(mh, y_node);
            (tape.frob_sq(diff), den)
        }
    };
    if !(den > 0.0) {
        return Err(Error::Numeric("loss denominator must be positive".into()));
    }
    Ok(tape.scale_const_r(num, 1.0 / den))
}

#[derive(Serialize, Deserialize)]
struct GridSpec {
    kind: String,
    n: usize,
}

#[derive(Serialize, Deserialize)]
struct MpNetHeader {
    variant: String,
    a: usize,
    n: usize,
    wavelength_m: f64,
    grid: GridSpec,
    payload_sha256: String,
}

/// Persist estimator parameters: one JSON header line, then the binary
/// payload (positions as (x, 0) pairs for the constrained variant, atoms
/// column-major for the unconstrained one).
pub fn save_mpnet(params: &MpNetParams, path: &Path) -> Result<()> {
    let n = params.grid_len();
    let grid_ok = match params {
        MpNetParams::Constrained { angle_grid, .. }
        | MpNetParams::Unconstrained { angle_grid, .. } => *angle_grid == grid_directions(n),
    };
    if !grid_ok {
        return Err(Error::Format("only uniform sine-angle grids are persisted".into()));
    }
    let payload = match params {
        MpNetParams::Constrained { positions_x, .. } => {
            let as_complex: Vec<Complex64> =
                positions_x.iter().map(|&x| Complex64::new(x, 0.0)).collect();
            complexes_to_le_bytes(&as_complex)
        }
        MpNetParams::Unconstrained { atoms, .. } => complexes_to_le_bytes(atoms.data()),
    };
    let header = MpNetHeader {
        variant: params.variant_name().to_string(),
        a: params.antennas(),
        n,
        wavelength_m: params.wavelength(),
        grid: GridSpec { kind: "uniform_sine".into(), n },
        payload_sha256: sha256_hex(&payload),
    };
    let json = serde_json::to_string(&header)
        .map_err(|e| Error::Format(format!("checkpoint header encoding failed: {e}")))?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(json.as_bytes())?;
    f.write_all(b"\n")?;
    f.write_all(&payload)?;
    Ok(())
}

/// Load a checkpoint written by [`save_mpnet`].
pub fn load_mpnet(path: &Path) -> Result<MpNetParams> {
    let bytes = std::fs::read(path)?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("checkpoint has no header line".into()))?;
    let header: MpNetHeader = serde_json::from_slice(&bytes[..nl])
        .map_err(|e| Error::Format(format!("bad checkpoint header: {e}")))?;
    let payload = &bytes[nl + 1..];
    if sha256_hex(payload) != header.payload_sha256 {
        return Err(Error::Format("checkpoint payload checksum mismatch".into()));
    }
    if header.grid.kind != "uniform_sine" || header.grid.n != header.n {
        return Err(Error::Format("unsupported grid spec in checkpoint".into()));
    }
    let values = le_bytes_to_complexes(payload)?;
    let angle_grid = grid_directions(header.n);
    match header.variant.as_str() {
        "constrained" => {
            if values.len() != header.a {
                return Err(Error::Format(format!(
                    "constrained payload holds {} values, expected {}",
                    values.len(),
                    header.a
                )));
            }
            Ok(MpNetParams::Constrained {
                positions_x: values.iter().map(|z| z.re).collect(),
                angle_grid,
                wavelength: header.wavelength_m,
            })
        }
        "unconstrained" => {
            let atoms = CMat::from_col_major(header.a, header.n, values)?;
            Ok(MpNetParams::Unconstrained { atoms, angle_grid, wavelength: header.wavelength_m })
        }
        other => Err(Error::Format(format!("unknown estimator variant {other:?}"))),
    }
}

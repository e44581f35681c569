//! Experiment orchestration: dataset generation, per-cell training, rate
//! evaluation, and metric emission.
//!
//! An experiment is a grid of independent *cells*, one per (SNR, frame
//! count) pair. Each cell derives its own seeds, draws its own measurement
//! matrix, calibrates its own noise level, and trains whatever strategies
//! the config requests. Cells run in parallel; their metric rows are
//! written in grid order through a single appender so two identical runs
//! produce byte-identical CSV files.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use hybeam_core::array::{
    build_dictionary, generate_channels, load_dataset, make_nominal_ula, perturb_array,
    save_dataset, ChannelDataset, GainProfile, SPEED_OF_LIGHT,
};
use hybeam_core::baselines::{
    fully_digital_bound, lmmse_estimate, mp_baseline, LmmseModel, NoiseModel,
};
use hybeam_core::mpnet::{estimate_channels, load_mpnet, nmse_db, save_mpnet, MpNetParams};
use hybeam_core::rng::derive_seed;
use hybeam_core::sounding::{
    calibrate_zeta2, draw_measurement_matrix, MeasurementMatrix, Observation,
};
use hybeam_core::training::{
    group_indices, group_observations, single_observations, train_e2e, train_mpnet, train_upga,
    PrecoderSample, Strategy, TrainConfig, TrainReport,
};
use hybeam_core::upga::{
    load_pga, pga_forward_scored, save_pga, PgaParams, DEFAULT_STEP_SIZE,
};
use hybeam_core::{CMat, Error, Result};

use crate::config::{DictionaryVariant, ExperimentConfig};
use crate::metrics::{MetricRow, MetricsWriter};
use crate::plot::{plot_file, PlotKind};

/// Metric name for channel-estimation quality in the metrics table.
pub const METRIC_NMSE: &str = "nmse_db";
/// Metric name for achieved downlink sum-rate in the metrics table.
pub const METRIC_RATE: &str = "sumrate_bits";

// Stream tags for per-cell seed derivation.
const MEAS_TAG: u64 = 1;
const TRAIN_OBS_TAG: u64 = 2;
const TEST_OBS_TAG: u64 = 3;
const TRAIN_GROUP_TAG: u64 = 4;
const EVAL_GROUP_TAG: u64 = 5;
const TRAIN_SEED_TAG: u64 = 6;
const EVAL_INIT_TAG: u64 = 7;
const PRECODER_STAGE_TAG: u64 = 8;
const REFERENCE_TAG: u64 = 9;

// ─── Dataset generation ──────────────────────────────────────────────────────

/// Carrier assumed throughout: 28 GHz.
pub fn default_wavelength() -> f64 {
    SPEED_OF_LIGHT / 28e9
}

/// Knobs for [`cmd_gen_data`]; `Default` gives the desk-scale dataset.
#[derive(Debug, Clone)]
pub struct GenDataSpec {
    pub antennas: usize,
    pub train_count: usize,
    pub test_count: usize,
    pub paths_max: usize,
    /// Std of the antenna position errors, in wavelengths.
    pub perturbation: f64,
    pub seed: u64,
}

impl Default for GenDataSpec {
    fn default() -> Self {
        GenDataSpec {
            antennas: 64,
            train_count: 3000,
            test_count: 300,
            paths_max: 8,
            perturbation: 0.1,
            seed: 0,
        }
    }
}

impl GenDataSpec {
    /// Switch to the full-size dataset (30,000 train / 1,000 test).
    pub fn paper_scale(mut self) -> Self {
        self.train_count = 30_000;
        self.test_count = 1_000;
        self
    }
}

/// Generate a train/test channel pair under one perturbed array and save it
/// as `<out>/train` and `<out>/test`. Returns the payload hashes of the two
/// splits (deterministic per seed).
pub fn cmd_gen_data(spec: &GenDataSpec, out: &Path) -> Result<(String, String)> {
    if spec.antennas < 2 {
        return Err(Error::Config("dataset needs at least 2 antennas".into()));
    }
    if spec.train_count == 0 || spec.test_count == 0 {
        return Err(Error::Config("dataset split sizes must be positive".into()));
    }
    let nominal = make_nominal_ula(spec.antennas, default_wavelength());
    let real = perturb_array(&nominal, spec.perturbation, derive_seed(spec.seed, &[1]));
    let train = generate_channels(
        &nominal,
        &real,
        spec.train_count,
        spec.paths_max,
        GainProfile::ExpDecay,
        derive_seed(spec.seed, &[2]),
        "train",
    )?;
    let test = generate_channels(
        &nominal,
        &real,
        spec.test_count,
        spec.paths_max,
        GainProfile::ExpDecay,
        derive_seed(spec.seed, &[3]),
        "test",
    )?;
    save_dataset(&train, &out.join("train"))?;
    save_dataset(&test, &out.join("test"))?;
    Ok((payload_hash(&out.join("train"))?, payload_hash(&out.join("test"))?))
}

/// Read the payload checksum recorded in a split's manifest.
pub fn payload_hash(split_dir: &Path) -> Result<String> {
    let text = std::fs::read_to_string(split_dir.join("manifest.json"))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("unreadable manifest: {e}")))?;
    value["payload_sha256"]
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| Error::Format("manifest has no payload_sha256".into()))
}

// ─── World and cells ─────────────────────────────────────────────────────────

/// A loaded experiment: validated config plus both dataset splits.
pub struct World {
    pub cfg: ExperimentConfig,
    pub train: ChannelDataset,
    pub test: ChannelDataset,
}

impl World {
    pub fn load(cfg: ExperimentConfig) -> Result<World> {
        cfg.validate()?;
        let train = load_dataset(&cfg.dataset.join("train"))?;
        let test = load_dataset(&cfg.dataset.join("test"))?;
        for (name, ds) in [("train", &train), ("test", &test)] {
            if ds.antennas() != cfg.antennas {
                return Err(Error::Config(format!(
                    "config expects {} antennas but the {name} split has {}",
                    cfg.antennas,
                    ds.antennas()
                )));
            }
        }
        if train.real_array.x_positions() != test.real_array.x_positions()
            || train.nominal_array.x_positions() != test.nominal_array.x_positions()
            || train.real_array.wavelength() != test.real_array.wavelength()
        {
            return Err(Error::Config(
                "train and test splits describe different antenna arrays".into(),
            ));
        }
        if test.len() < cfg.users * cfg.eval_partitions {
            return Err(Error::Config(format!(
                "test split has {} channels, too few for {} partitions of {}-user groups",
                test.len(),
                cfg.eval_partitions,
                cfg.users
            )));
        }
        Ok(World { cfg, train, test })
    }
}

/// One grid point of the experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub snr_db: f64,
    pub t: usize,
}

/// The grid in deterministic (SNR-major) order.
pub fn cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let mut out = Vec::with_capacity(cfg.snr_db.len() * cfg.frames.len());
    for &snr_db in &cfg.snr_db {
        for &t in &cfg.frames {
            out.push(Cell { snr_db, t });
        }
    }
    out
}

fn cell_seed(cfg_seed: u64, cell: Cell) -> u64 {
    derive_seed(cfg_seed, &[cell.snr_db.to_bits(), cell.t as u64])
}

/// Directory-name-safe tag for a cell, e.g. `snr15_t2`.
pub fn cell_tag(cell: Cell) -> String {
    let snr = format!("{}", cell.snr_db).replace('-', "m").replace('.', "p");
    format!("snr{snr}_t{}", cell.t)
}

/// Everything a cell's trainings and evaluations share: the sounding setup
/// plus pre-drawn observations for both splits.
pub struct CellData {
    pub cell: Cell,
    pub meas: Arc<MeasurementMatrix>,
    /// Antenna-domain noise variance realizing the cell's SNR (and, by the
    /// uplink-downlink reciprocity assumption, the downlink noise level).
    pub zeta2: f64,
    /// Single-user observations of every training channel.
    pub train_obs: Vec<Observation>,
    /// Single-user observations of every test channel.
    pub test_obs: Vec<Observation>,
    /// Multi-user observations of disjoint training groups.
    pub train_groups: Vec<Observation>,
    /// Multi-user observations of the test set, `eval_partitions`
    /// independent partitions concatenated.
    pub eval_groups: Vec<Observation>,
    /// Base seed for ascent initializations at evaluation time; shared
    /// across methods so per-group comparisons are paired.
    pub eval_seed: u64,
    /// Base seed for optimizer shuffling and initialization draws.
    pub train_seed: u64,
}

/// Draw the cell's measurement matrix, calibrate its noise, and sound both
/// dataset splits. Deterministic given (config seed, cell).
pub fn prepare_cell(world: &World, cell: Cell) -> Result<CellData> {
    let cfg = &world.cfg;
    let cs = cell_seed(cfg.seed, cell);
    let meas = Arc::new(draw_measurement_matrix(
        cfg.antennas,
        cfg.rf_chains,
        cell.t,
        derive_seed(cs, &[MEAS_TAG]),
    ));
    let zeta2 = calibrate_zeta2(&world.train, cell.snr_db)?;
    let train_obs =
        single_observations(&world.train, &meas, zeta2, derive_seed(cs, &[TRAIN_OBS_TAG]))?;
    let test_obs =
        single_observations(&world.test, &meas, zeta2, derive_seed(cs, &[TEST_OBS_TAG]))?;
    let groups = group_indices(world.train.len(), cfg.users, derive_seed(cs, &[TRAIN_GROUP_TAG]));
    let train_groups = group_observations(
        &world.train,
        &groups,
        &meas,
        zeta2,
        derive_seed(cs, &[TRAIN_GROUP_TAG, 1]),
    )?;
    let mut eval_groups = Vec::new();
    for p in 0..cfg.eval_partitions {
        let part =
            group_indices(world.test.len(), cfg.users, derive_seed(cs, &[EVAL_GROUP_TAG, p as u64]));
        eval_groups.extend(group_observations(
            &world.test,
            &part,
            &meas,
            zeta2,
            derive_seed(cs, &[EVAL_GROUP_TAG, p as u64, 1]),
        )?);
    }
    Ok(CellData {
        cell,
        meas,
        zeta2,
        train_obs,
        test_obs,
        train_groups,
        eval_groups,
        eval_seed: derive_seed(cs, &[EVAL_INIT_TAG]),
        train_seed: derive_seed(cs, &[TRAIN_SEED_TAG]),
    })
}

// ─── Strategy training ───────────────────────────────────────────────────────

/// CSV `method` tag for a strategy's estimator rows.
pub fn estimator_method(strategy: Strategy) -> &'static str {
    match strategy {
        Strategy::LblSupervised => "mpnet-lbl-supervised",
        Strategy::LblUnsupervised => "mpnet-lbl-unsupervised",
        Strategy::E2eCold => "mpnet-e2e-cold",
        Strategy::E2eWarm => "mpnet-e2e-warm",
    }
}

/// CSV `method` tag for a strategy's precoder rows.
pub fn precoder_method(strategy: Strategy) -> &'static str {
    match strategy {
        Strategy::LblSupervised => "upga-lbl-supervised",
        Strategy::LblUnsupervised => "upga-lbl-unsupervised",
        Strategy::E2eCold => "upga-e2e-cold",
        Strategy::E2eWarm => "upga-e2e-warm",
    }
}

/// Directory tag for a strategy (its config-file spelling).
pub fn strategy_tag(strategy: Strategy) -> &'static str {
    match strategy {
        Strategy::LblSupervised => "lbl-supervised",
        Strategy::LblUnsupervised => "lbl-unsupervised",
        Strategy::E2eCold => "e2e-cold",
        Strategy::E2eWarm => "e2e-warm",
    }
}

/// The estimator the config's dictionary variant starts from: nominal
/// positions, untrained.
pub fn initial_net(world: &World) -> MpNetParams {
    match world.cfg.variant {
        DictionaryVariant::Constrained => {
            MpNetParams::constrained_from_array(&world.train.nominal_array, world.cfg.grid_len)
        }
        DictionaryVariant::Unconstrained => {
            MpNetParams::unconstrained_from_array(&world.train.nominal_array, world.cfg.grid_len)
        }
    }
}

/// The ascent the training starts from: constant step sizes at every depth.
pub fn initial_pga(world: &World) -> PgaParams {
    PgaParams::constant(world.cfg.depth, DEFAULT_STEP_SIZE)
}

fn train_cfg(world: &World, strategy: Strategy, data: &CellData) -> TrainConfig {
    let cfg = &world.cfg;
    TrainConfig {
        strategy,
        lr_dictionary: cfg.lr_dictionary,
        lr_positions: cfg.lr_positions,
        lr_steps: cfg.lr_steps,
        epochs: cfg.epochs,
        batch: cfg.batch,
        streaming: cfg.streaming,
        seed: data.train_seed,
        l: cfg.rf_chains,
        p_total: cfg.p_total,
        sigma2: data.zeta2,
        stop: cfg.stop,
        patience: cfg.patience,
    }
}

/// A fully trained pipeline for one strategy in one cell.
pub struct Trained {
    pub strategy: Strategy,
    pub net: MpNetParams,
    pub pga: PgaParams,
    /// Estimator-stage report (layer-by-layer strategies and warm bases).
    pub estimator_report: Option<TrainReport>,
    /// Precoder-stage report (layer-by-layer strategies and warm bases).
    pub precoder_report: Option<TrainReport>,
    /// Joint end-to-end report (end-to-end strategies only).
    pub joint_report: Option<TrainReport>,
}

/// Train one strategy in one cell.
///
/// Held-out curves are computed on the test split, matching the
/// unseen-channel learning curves the metrics table reports. `warm_base`
/// short-circuits the warm start's inner supervised run when the caller
/// already has one; it must be a `LblSupervised` result from the same cell.
pub fn train_strategy(
    world: &World,
    data: &CellData,
    strategy: Strategy,
    warm_base: Option<&Trained>,
) -> Result<Trained> {
    let tc = train_cfg(world, strategy, data);
    match strategy {
        Strategy::LblSupervised | Strategy::LblUnsupervised => {
            let (net, estimator_report) =
                train_mpnet(&tc, &initial_net(world), &data.train_obs, &data.test_obs)?;
            let stop = world.cfg.stop;
            let train_samples =
                estimate_samples(&data.train_groups, |o| estimate_channels(o, &net, &stop))?;
            let eval_samples =
                estimate_samples(&data.eval_groups, |o| estimate_channels(o, &net, &stop))?;
            let mut pc = tc.clone();
            pc.seed = derive_seed(tc.seed, &[PRECODER_STAGE_TAG]);
            let (pga, precoder_report) =
                train_upga(&pc, &initial_pga(world), &train_samples, &eval_samples)?;
            Ok(Trained {
                strategy,
                net,
                pga,
                estimator_report: Some(estimator_report),
                precoder_report: Some(precoder_report),
                joint_report: None,
            })
        }
        Strategy::E2eCold => {
            let (net, pga, joint_report) = train_e2e(
                &tc,
                &initial_net(world),
                &initial_pga(world),
                &data.train_groups,
                &data.eval_groups,
            )?;
            Ok(Trained {
                strategy,
                net,
                pga,
                estimator_report: None,
                precoder_report: None,
                joint_report: Some(joint_report),
            })
        }
        Strategy::E2eWarm => {
            let base = match warm_base {
                Some(b) if b.strategy == Strategy::LblSupervised => None,
                Some(_) => {
                    return Err(Error::Config(
                        "warm start needs a supervised layer-by-layer base".into(),
                    ))
                }
                None => Some(train_strategy(world, data, Strategy::LblSupervised, None)?),
            };
            let base_ref = warm_base.or(base.as_ref()).expect("warm base exists");
            let (net, pga, joint_report) = train_e2e(
                &tc,
                &base_ref.net,
                &base_ref.pga,
                &data.train_groups,
                &data.eval_groups,
            )?;
            Ok(Trained {
                strategy,
                net,
                pga,
                estimator_report: base_ref.estimator_report.clone(),
                precoder_report: base_ref.precoder_report.clone(),
                joint_report: Some(joint_report),
            })
        }
    }
}

/// Train the ascent's step sizes on ground-truth channel inputs — the
/// topmost hybrid reference curve.
pub fn train_upga_on_truth(world: &World, data: &CellData) -> Result<(PgaParams, TrainReport)> {
    let mut tc = train_cfg(world, Strategy::LblSupervised, data);
    tc.seed = derive_seed(tc.seed, &[REFERENCE_TAG, 1]);
    let train: Vec<PrecoderSample> = truth_samples(&data.train_groups);
    let eval: Vec<PrecoderSample> = truth_samples(&data.eval_groups);
    train_upga(&tc, &initial_pga(world), &train, &eval)
}

/// Train the ascent's step sizes on linear-MMSE channel estimates — the
/// bottom hybrid reference curve.
pub fn train_upga_on_lmmse(
    world: &World,
    data: &CellData,
    lmmse: &LmmseModel,
) -> Result<(PgaParams, TrainReport)> {
    let mut tc = train_cfg(world, Strategy::LblSupervised, data);
    tc.seed = derive_seed(tc.seed, &[REFERENCE_TAG, 2]);
    let train = estimate_samples(&data.train_groups, |o| lmmse_estimate(o, lmmse))?;
    let eval = estimate_samples(&data.eval_groups, |o| lmmse_estimate(o, lmmse))?;
    train_upga(&tc, &initial_pga(world), &train, &eval)
}

/// Pair each multi-user observation's estimate with its ground truth.
pub fn estimate_samples(
    groups: &[Observation],
    mut estimate: impl FnMut(&Observation) -> Result<CMat>,
) -> Result<Vec<PrecoderSample>> {
    groups
        .iter()
        .map(|o| {
            let truth = o.truth.clone().ok_or_else(|| {
                Error::Config("evaluation observations must carry ground truth".into())
            })?;
            Ok(PrecoderSample::from_estimate(estimate(o)?, truth))
        })
        .collect()
}

/// Ground-truth inputs (the genie-aided reference).
pub fn truth_samples(groups: &[Observation]) -> Vec<PrecoderSample> {
    groups
        .iter()
        .map(|o| {
            PrecoderSample::from_truth(
                o.truth.clone().expect("evaluation observations must carry ground truth"),
            )
        })
        .collect()
}

// ─── Evaluation ──────────────────────────────────────────────────────────────

/// Realized sum-rates of one method over the evaluation groups.
pub struct RateEval {
    /// Final-iterate rate per group, scored on the true channel (bits).
    pub per_group_final: Vec<f64>,
    /// Mean rate across groups after 0..=K ascent iterations (bits).
    pub mean_per_iteration: Vec<f64>,
}

/// Run the ascent on each sample's input channel and score every iterate on
/// the true channel. Initialization seeds derive from `eval_seed` and the
/// group index only, so different methods evaluated with the same seed are
/// paired group by group.
pub fn evaluate_rates(
    samples: &[PrecoderSample],
    pga: &PgaParams,
    l: usize,
    p_total: f64,
    sigma2: f64,
    eval_seed: u64,
) -> Result<RateEval> {
    if samples.is_empty() {
        return Err(Error::Config("rate evaluation needs at least one group".into()));
    }
    let traces: Vec<Vec<f64>> = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let score = s.h_true.as_ref().unwrap_or(&s.h_opt);
            let trace = pga_forward_scored(
                &s.h_opt,
                score,
                pga,
                l,
                p_total,
                sigma2,
                derive_seed(eval_seed, &[i as u64]),
            )?;
            Ok(trace.rates_bits)
        })
        .collect::<Result<_>>()?;
    let depth = traces[0].len();
    let mut mean_per_iteration = vec![0.0; depth];
    let mut per_group_final = Vec::with_capacity(traces.len());
    for t in &traces {
        for (k, r) in t.iter().enumerate() {
            mean_per_iteration[k] += r / traces.len() as f64;
        }
        per_group_final.push(*t.last().expect("trace has K+1 rates"));
    }
    Ok(RateEval { per_group_final, mean_per_iteration })
}

/// Fully digital water-filling rate per evaluation group (bits).
pub fn digital_bounds(
    groups: &[Observation],
    p_total: f64,
    sigma2: f64,
) -> Result<Vec<f64>> {
    groups
        .iter()
        .map(|o| {
            let h = o
                .truth
                .as_ref()
                .ok_or_else(|| Error::Config("digital bound needs ground truth".into()))?;
            fully_digital_bound(h, p_total, sigma2)
        })
        .collect()
}

/// Test NMSE in dB, aggregated as total error energy over total channel
/// energy — the same aggregate the training reports use.
pub fn aggregate_nmse_db(
    obs: &[Observation],
    mut estimate: impl FnMut(&Observation) -> Result<CMat>,
) -> Result<f64> {
    let mut err = 0.0;
    let mut energy = 0.0;
    for o in obs {
        let h = o
            .truth
            .as_ref()
            .ok_or_else(|| Error::Config("NMSE needs ground truth".into()))?;
        err += estimate(o)?.sub(h).frob_norm_sq();
        energy += h.frob_norm_sq();
    }
    if energy == 0.0 {
        return Err(Error::Numeric("zero-energy reference set".into()));
    }
    Ok(10.0 * (err / energy).log10())
}

/// Per-observation NMSE in dB (for medians and spreads).
pub fn per_channel_nmse_db(
    obs: &[Observation],
    mut estimate: impl FnMut(&Observation) -> Result<CMat>,
) -> Result<Vec<f64>> {
    obs.iter()
        .map(|o| {
            let h = o
                .truth
                .as_ref()
                .ok_or_else(|| Error::Config("NMSE needs ground truth".into()))?;
            nmse_db(&estimate(o)?, h)
        })
        .collect()
}

/// Fixed estimators every cell is compared against.
pub struct References {
    /// Steering dictionary on the true (perturbed) array.
    pub real_atoms: CMat,
    /// Steering dictionary on the assumed λ/2 array.
    pub nominal_atoms: CMat,
    /// Linear MMSE with the training set's second-order statistics.
    pub lmmse: LmmseModel,
}

pub fn references(world: &World, data: &CellData) -> Result<References> {
    let n = world.cfg.grid_len;
    Ok(References {
        real_atoms: build_dictionary(&world.train.real_array, n).atoms,
        nominal_atoms: build_dictionary(&world.train.nominal_array, n).atoms,
        lmmse: LmmseModel::from_dataset(&world.train, &data.meas, data.zeta2, NoiseModel::Structured)?,
    })
}

// ─── Per-cell execution ──────────────────────────────────────────────────────

/// Machine-readable digest of one method in one cell.
#[derive(Debug, Clone, Serialize, Default)]
pub struct MethodSummary {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nmse_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_final_sumrate_bits: Option<f64>,
}

/// Machine-readable digest of one cell.
#[derive(Debug, Clone, Serialize)]
pub struct CellSummary {
    pub snr_db: f64,
    pub frames: usize,
    pub zeta2: f64,
    pub methods: BTreeMap<String, MethodSummary>,
}

pub struct CellOutput {
    pub rows: Vec<MetricRow>,
    pub summary: CellSummary,
}

fn nmse_summary(summary: &mut CellSummary, method: &str, value: f64) {
    summary.methods.entry(method.to_string()).or_default().nmse_db = Some(value);
}

fn rate_summary(summary: &mut CellSummary, method: &str, eval: &RateEval) {
    summary.methods.entry(method.to_string()).or_default().mean_final_sumrate_bits =
        Some(*eval.mean_per_iteration.last().expect("trace has K+1 rates"));
}

/// Execute one cell: baselines always, plus every configured strategy.
///
/// With `checkpoint_dir` set, each trained strategy saves its parameters
/// and per-stage `report.csv` files under `<dir>/<strategy>/`.
pub fn run_cell(world: &World, cell: Cell, checkpoint_dir: Option<&Path>) -> Result<CellOutput> {
    let cfg = &world.cfg;
    let data = prepare_cell(world, cell)?;
    let refs = references(world, &data)?;
    let mut summary = CellSummary {
        snr_db: cell.snr_db,
        frames: cell.t,
        zeta2: data.zeta2,
        methods: BTreeMap::new(),
    };
    let mut rows = Vec::new();
    let row = |method: &str, step: usize, metric: &str, value: f64| {
        MetricRow::new(method, cell.snr_db, cell.t, cfg.rf_chains, step, metric, value)
    };

    // Estimation baselines: constant in seen channels, drawn as flat lines
    // spanning the training horizon.
    let seen_cap = cfg.epochs * world.train.len();
    let stop = cfg.stop;
    let flats: [(&str, f64); 3] = [
        ("mp-real", aggregate_nmse_db(&data.test_obs, |o| mp_baseline(o, &refs.real_atoms, &stop))?),
        (
            "mp-nominal",
            aggregate_nmse_db(&data.test_obs, |o| mp_baseline(o, &refs.nominal_atoms, &stop))?,
        ),
        ("lmmse", aggregate_nmse_db(&data.test_obs, |o| lmmse_estimate(o, &refs.lmmse))?),
    ];
    for (method, value) in flats {
        rows.push(row(method, 0, METRIC_NMSE, value));
        rows.push(row(method, seen_cap, METRIC_NMSE, value));
        nmse_summary(&mut summary, method, value);
    }

    // Precoding references on the true channels: the fully digital bound
    // and the untrained constant-step ascent.
    let bound_mean = {
        let bounds = digital_bounds(&data.eval_groups, cfg.p_total, data.zeta2)?;
        bounds.iter().sum::<f64>() / bounds.len() as f64
    };
    let untrained = evaluate_rates(
        &truth_samples(&data.eval_groups),
        &initial_pga(world),
        cfg.rf_chains,
        cfg.p_total,
        data.zeta2,
        data.eval_seed,
    )?;
    for k in 0..=cfg.depth {
        rows.push(row("digital-bound", k, METRIC_RATE, bound_mean));
        rows.push(row("pga-untrained-true", k, METRIC_RATE, untrained.mean_per_iteration[k]));
    }
    summary
        .methods
        .entry("digital-bound".into())
        .or_default()
        .mean_final_sumrate_bits = Some(bound_mean);
    rate_summary(&mut summary, "pga-untrained-true", &untrained);

    if cfg.strategies.is_empty() {
        return Ok(CellOutput { rows, summary });
    }

    // Trained step-size references framing the learned pipelines.
    let (pga_true, _) = train_upga_on_truth(world, &data)?;
    let true_eval = evaluate_rates(
        &truth_samples(&data.eval_groups),
        &pga_true,
        cfg.rf_chains,
        cfg.p_total,
        data.zeta2,
        data.eval_seed,
    )?;
    let (pga_lmmse, _) = train_upga_on_lmmse(world, &data, &refs.lmmse)?;
    let lmmse_samples = estimate_samples(&data.eval_groups, |o| lmmse_estimate(o, &refs.lmmse))?;
    let lmmse_eval = evaluate_rates(
        &lmmse_samples,
        &pga_lmmse,
        cfg.rf_chains,
        cfg.p_total,
        data.zeta2,
        data.eval_seed,
    )?;
    for k in 0..=cfg.depth {
        rows.push(row("upga-true", k, METRIC_RATE, true_eval.mean_per_iteration[k]));
        rows.push(row("upga-lmmse", k, METRIC_RATE, lmmse_eval.mean_per_iteration[k]));
    }
    rate_summary(&mut summary, "upga-true", &true_eval);
    rate_summary(&mut summary, "upga-lmmse", &lmmse_eval);

    // Strategies, in config order; a supervised layer-by-layer result warms
    // any later end-to-end warm start in the same cell.
    let mut done: Vec<Strategy> = Vec::new();
    let mut sup_base: Option<Trained> = None;
    for &strategy in &cfg.strategies {
        if done.contains(&strategy) {
            continue;
        }
        done.push(strategy);
        let trained = train_strategy(world, &data, strategy, sup_base.as_ref())?;

        // Learning curve on unseen channels, one point per epoch.
        let report = trained.joint_report.as_ref().or(trained.estimator_report.as_ref());
        if let Some(r) = report {
            for (e, maybe) in r.nmse_db.iter().enumerate() {
                if let Some(v) = maybe {
                    rows.push(row(estimator_method(strategy), r.seen_channels[e], METRIC_NMSE, *v));
                }
            }
        }
        let final_nmse = aggregate_nmse_db(&data.test_obs, |o| {
            estimate_channels(o, &trained.net, &stop)
        })?;
        nmse_summary(&mut summary, estimator_method(strategy), final_nmse);

        // Realized rates per ascent iteration on the test groups.
        let samples = estimate_samples(&data.eval_groups, |o| {
            estimate_channels(o, &trained.net, &stop)
        })?;
        let eval = evaluate_rates(
            &samples,
            &trained.pga,
            cfg.rf_chains,
            cfg.p_total,
            data.zeta2,
            data.eval_seed,
        )?;
        for k in 0..=cfg.depth {
            rows.push(row(precoder_method(strategy), k, METRIC_RATE, eval.mean_per_iteration[k]));
        }
        rate_summary(&mut summary, precoder_method(strategy), &eval);

        if let Some(dir) = checkpoint_dir {
            save_trained(&trained, &dir.join(strategy_tag(strategy)))?;
        }
        if strategy == Strategy::LblSupervised {
            sup_base = Some(trained);
        }
    }
    Ok(CellOutput { rows, summary })
}

// ─── Checkpoints and reports ─────────────────────────────────────────────────

#[derive(Serialize)]
struct ReportRow {
    epoch: usize,
    loss: f64,
    nmse_db: Option<f64>,
    sumrate_bits: Option<f64>,
}

/// Write a training report as `report.csv` (epoch, loss, nmse_db,
/// sumrate_bits) in `dir`.
pub fn save_report(report: &TrainReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("report.csv"))
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    for (e, &loss) in report.losses.iter().enumerate() {
        w.serialize(ReportRow {
            epoch: e + 1,
            loss,
            nmse_db: report.nmse_db[e],
            sumrate_bits: report.sumrate_bits[e],
        })
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;
    Ok(())
}

/// Persist a trained pipeline: parameters at the root, one `report.csv` per
/// training stage (`estimator/`, `precoder/`, or the joint run at the root).
pub fn save_trained(trained: &Trained, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    save_mpnet(&trained.net, &dir.join("mpnet.bin"))?;
    save_pga(&trained.pga, &dir.join("pga.json"))?;
    if let Some(r) = &trained.estimator_report {
        save_report(r, &dir.join("estimator"))?;
    }
    if let Some(r) = &trained.precoder_report {
        save_report(r, &dir.join("precoder"))?;
    }
    if let Some(r) = &trained.joint_report {
        save_report(r, dir)?;
    }
    Ok(())
}

/// Load the pipeline parameters saved by [`save_trained`].
pub fn load_trained(dir: &Path) -> Result<(MpNetParams, PgaParams)> {
    Ok((load_mpnet(&dir.join("mpnet.bin"))?, load_pga(&dir.join("pga.json"))?))
}

// ─── Subcommands ─────────────────────────────────────────────────────────────

#[derive(Serialize)]
struct RunSummary {
    /// File names, relative to the run directory.
    config: &'static str,
    metrics: &'static str,
    cells: Vec<CellSummary>,
}

/// Execute the whole experiment grid in parallel and write a run directory:
/// `config.json` (echo), `metrics.csv`, `nmse.svg`, `sumrate.svg`,
/// `summary.json`, and per-cell checkpoints.
pub fn cmd_run(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let mut cfg = cfg.clone();
    // A run directory must be self-describing: its embedded config has to
    // work from any working directory, so the dataset path is made absolute.
    cfg.dataset = std::fs::canonicalize(&cfg.dataset)?;
    let world = World::load(cfg.clone())?;
    std::fs::create_dir_all(out)?;
    cfg.save(&out.join("config.json"))?;

    let grid = cells(&cfg);
    let outputs: Vec<CellOutput> = grid
        .par_iter()
        .map(|&cell| run_cell(&world, cell, Some(&out.join("checkpoints").join(cell_tag(cell)))))
        .collect::<Result<_>>()?;

    let metrics_path = out.join("metrics.csv");
    let mut writer = MetricsWriter::create(&metrics_path)?;
    for o in &outputs {
        writer.append(&o.rows)?;
    }
    writer.finish()?;

    plot_file(&metrics_path, PlotKind::NmseCurve, &out.join("nmse.svg"))?;
    plot_file(&metrics_path, PlotKind::SumratePerIteration, &out.join("sumrate.svg"))?;

    let summary = RunSummary {
        config: "config.json",
        metrics: "metrics.csv",
        cells: outputs.into_iter().map(|o| o.summary).collect(),
    };
    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::Format(format!("summary encoding failed: {e}")))?;
    std::fs::write(out.join("summary.json"), json + "\n")?;
    Ok(())
}

/// Resolve the cell a single-cell subcommand addresses.
pub fn pick_cell(cfg: &ExperimentConfig, snr_db: Option<f64>, t: Option<usize>) -> Result<Cell> {
    let snr_db = snr_db.or_else(|| cfg.snr_db.first().copied()).ok_or_else(|| {
        Error::Config("config lists no SNR points and none was given".into())
    })?;
    let t = t.or_else(|| cfg.frames.first().copied()).ok_or_else(|| {
        Error::Config("config lists no frame counts and none was given".into())
    })?;
    if !cfg.snr_db.contains(&snr_db) || !cfg.frames.contains(&t) {
        return Err(Error::Config(format!(
            "cell ({snr_db} dB, T={t}) is not on the configured grid"
        )));
    }
    Ok(Cell { snr_db, t })
}

/// Train one strategy in one cell and save its checkpoints under `out`.
pub fn cmd_train(
    cfg: &ExperimentConfig,
    strategy: Strategy,
    snr_db: Option<f64>,
    t: Option<usize>,
    out: &Path,
) -> Result<()> {
    let world = World::load(cfg.clone())?;
    let cell = pick_cell(cfg, snr_db, t)?;
    let data = prepare_cell(&world, cell)?;
    let trained = train_strategy(&world, &data, strategy, None)?;
    save_trained(&trained, out)?;
    Ok(())
}

/// Evaluate saved checkpoints on the test split of one cell, appending NMSE
/// and per-iteration rate rows to `<out>/metrics.csv` under `method`.
pub fn cmd_eval(
    cfg: &ExperimentConfig,
    checkpoints: &Path,
    method: &str,
    snr_db: Option<f64>,
    t: Option<usize>,
    out: &Path,
) -> Result<()> {
    let world = World::load(cfg.clone())?;
    let cell = pick_cell(cfg, snr_db, t)?;
    let data = prepare_cell(&world, cell)?;
    let (net, pga) = load_trained(checkpoints)?;
    let stop = cfg.stop;
    let nmse = aggregate_nmse_db(&data.test_obs, |o| estimate_channels(o, &net, &stop))?;
    let samples = estimate_samples(&data.eval_groups, |o| estimate_channels(o, &net, &stop))?;
    let eval = evaluate_rates(
        &samples,
        &pga,
        cfg.rf_chains,
        cfg.p_total,
        data.zeta2,
        data.eval_seed,
    )?;
    std::fs::create_dir_all(out)?;
    let mut rows =
        vec![MetricRow::new(method, cell.snr_db, cell.t, cfg.rf_chains, 0, METRIC_NMSE, nmse)];
    for (k, &r) in eval.mean_per_iteration.iter().enumerate() {
        rows.push(MetricRow::new(method, cell.snr_db, cell.t, cfg.rf_chains, k, METRIC_RATE, r));
    }
    let mut writer = MetricsWriter::create(&out.join("metrics.csv"))?;
    writer.append(&rows)?;
    writer.finish()?;
    Ok(())
}

/// Run only the untrained references over the whole grid and write their
/// metrics table under `out`.
pub fn cmd_baseline(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let mut cfg = cfg.clone();
    cfg.strategies.clear();
    cmd_run(&cfg, out)
}

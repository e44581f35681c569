//! The acceptance gate: eight criteria covering gradient fidelity,
//! constraint exactness, oracle equivalence, the two experiment-family
//! trends, parameter accounting, and byte-level determinism — all at desk
//! scale (A=64, L=16, N=1200, K=10, U=4, 3000/300 channels).
//!
//! Each test prints one `criterion N … PASS` line (visible with
//! `--nocapture`); the test harness line itself is the pass/fail verdict.

use std::process::Command;
use std::sync::Arc;

use num_complex::Complex64;
use once_cell::sync::Lazy;
use rand::RngCore;
use statrs::distribution::{ContinuousCDF, StudentsT};

use hybeam_cli::config::ExperimentConfig;
use hybeam_cli::runner::{
    cmd_gen_data, digital_bounds, estimate_samples, per_channel_nmse_db, prepare_cell, references,
    train_strategy, train_upga_on_lmmse, train_upga_on_truth, truth_samples, evaluate_rates, Cell,
    CellData, GenDataSpec, References, Trained, World,
};
use hybeam_core::baselines::{lmmse_estimate, mp_baseline, water_fill, LmmseModel};
use hybeam_core::grad::{grad_check, ParamSet, Tensor};
use hybeam_core::mpnet::{
    estimate_channels, mp_loss_graph, mp_supports, MpLoss, MpNetParams, StopMode, StopRule,
};
use hybeam_core::numerics::{matmul, CMat, RMat};
use hybeam_core::rng::{complex_gaussian, derive_seed, rng};
use hybeam_core::sounding::{draw_measurement_matrix, observe_uplink, MeasurementMatrix};
use hybeam_core::training::{e2e_loss_graph, PrecoderSample, Strategy};
use hybeam_core::upga::{
    init_precoders, pga_forward, pga_loss_graph, pga_unroll, rate_nats_node, HybridPrecoder,
    PgaParams, RateLossMode,
};

// ─── Desk-scale fixture, trained once and shared by criteria 4–7 ────────────

const ANTENNAS: usize = 64;
const RF_CHAINS: usize = 16;
const GRID_LEN: usize = 1200;
const DEPTH: usize = 10;
const USERS: usize = 4;
const P_TOTAL: f64 = 4.0;

struct Desk {
    _dir: tempfile::TempDir,
    world: World,
    /// (15 dB, T=2): the criterion-4/5/6 cell.
    data15: CellData,
    refs15: References,
    sup: Trained,
    unsup: Trained,
    cold: Trained,
    warm: Trained,
    pga_true: PgaParams,
    pga_lmmse: PgaParams,
    /// (5 dB, T=1): criterion 4's low-SNR clause.
    data5: CellData,
    refs5: References,
    unsup5: Trained,
}

static DESK: Lazy<Desk> = Lazy::new(|| {
    let dir = tempfile::tempdir().expect("tempdir");
    let spec = GenDataSpec { seed: 1, ..GenDataSpec::default() };
    cmd_gen_data(&spec, dir.path()).expect("dataset generates");
    let cfg_text = format!(
        r#"{{
            "antennas": {ANTENNAS},
            "rf_chains": {RF_CHAINS},
            "grid_len": {GRID_LEN},
            "depth": {DEPTH},
            "users": {USERS},
            "p_total": {P_TOTAL},
            "snr_db": [5.0, 15.0],
            "frames": [1, 2, 3],
            "strategies": ["lbl-supervised", "lbl-unsupervised", "e2e-cold", "e2e-warm"],
            "variant": "constrained",
            "dataset": {:?},
            "epochs": 4,
            "batch": 64,
            "eval_partitions": 4,
            "seed": 7
        }}"#,
        dir.path().to_str().unwrap()
    );
    let cfg_path = dir.path().join("cfg.json");
    std::fs::write(&cfg_path, cfg_text).expect("config writes");
    let cfg = ExperimentConfig::load(&cfg_path).expect("config loads");
    let world = World::load(cfg).expect("world loads");

    let data15 = prepare_cell(&world, Cell { snr_db: 15.0, t: 2 }).expect("cell (15,2)");
    let refs15 = references(&world, &data15).expect("references (15,2)");
    let sup = train_strategy(&world, &data15, Strategy::LblSupervised, None).expect("sup");
    let unsup = train_strategy(&world, &data15, Strategy::LblUnsupervised, None).expect("unsup");
    let cold = train_strategy(&world, &data15, Strategy::E2eCold, None).expect("cold");
    let warm = train_strategy(&world, &data15, Strategy::E2eWarm, Some(&sup)).expect("warm");
    let (pga_true, _) = train_upga_on_truth(&world, &data15).expect("true-input steps");
    let (pga_lmmse, _) = train_upga_on_lmmse(&world, &data15, &refs15.lmmse).expect("lmmse steps");

    let data5 = prepare_cell(&world, Cell { snr_db: 5.0, t: 1 }).expect("cell (5,1)");
    let refs5 = references(&world, &data5).expect("references (5,1)");
    let unsup5 =
        train_strategy(&world, &data5, Strategy::LblUnsupervised, None).expect("unsup (5,1)");

    Desk {
        _dir: dir,
        world,
        data15,
        refs15,
        sup,
        unsup,
        cold,
        warm,
        pga_true,
        pga_lmmse,
        data5,
        refs5,
        unsup5,
    }
});

fn median(mut xs: Vec<f64>) -> f64 {
    assert!(!xs.is_empty());
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Paired one-sided t statistic for `mean(a − b) > 0`.
fn paired_t(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let m = mean(&d);
    let var = d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    if se == 0.0 {
        return if m > 0.0 { f64::INFINITY } else if m < 0.0 { f64::NEG_INFINITY } else { 0.0 };
    }
    m / se
}

fn t_crit(n: usize) -> f64 {
    StudentsT::new(0.0, 1.0, (n - 1) as f64).unwrap().inverse_cdf(0.95)
}

fn random_cmat(rows: usize, cols: usize, seed: u64) -> CMat {
    let mut g = rng(seed);
    CMat::from_fn(rows, cols, |_, _| complex_gaussian(&mut g, 1.0))
}

// ─── Criterion 1: gradient fidelity ──────────────────────────────────────────

#[test]
fn criterion_1_gradient_fidelity() {
    // Reduced widths keep the finite-difference sweeps tractable; the unroll
    // depth stays at the full K=10.
    let stop = StopRule { mode: StopMode::FixedDepth, max_atoms: 3, refit: false, ..StopRule::default() };
    let mut worst: f64 = 0.0;

    // Estimator losses at a fixed support, both variants, both losses.
    let arr = hybeam_core::array::make_nominal_ula(8, 0.0107);
    let real = hybeam_core::array::perturb_array(&arr, 0.1, 11);
    let meas = Arc::new(draw_measurement_matrix(8, 4, 2, 12));
    let ds = hybeam_core::array::generate_channels(
        &arr,
        &real,
        2,
        3,
        hybeam_core::array::GainProfile::ExpDecay,
        13,
        "probe",
    )
    .unwrap();
    let h = ds.stack_columns(&[0, 1]);
    let obs = observe_uplink(&h, &meas, 0.05, 14).unwrap();
    for net in [
        MpNetParams::constrained_from_array(&arr, 24),
        MpNetParams::unconstrained_from_array(&arr, 24),
    ] {
        let support = mp_supports(&obs, &net, &stop).unwrap();
        for loss in [MpLoss::Supervised, MpLoss::Unsupervised] {
            let params = net.to_param_set();
            let report = grad_check(
                |tape, nodes| {
                    mp_loss_graph(tape, nodes, &net, &obs, &stop, loss, None, None, Some(&support))
                },
                &params,
                1e-6,
            )
            .unwrap();
            assert!(report.pass, "estimator {loss:?} gradient fails: {report:?}");
            worst = worst.max(report.max_rel_err);
        }
    }

    // Sum-rate gradients with respect to both precoder stages.
    let h = random_cmat(8, 2, 15);
    let init = init_precoders(&h, 3, P_TOTAL, 16).unwrap();
    let mut params = ParamSet::new();
    params.insert("wa", Tensor::C(init.wa.clone()));
    params.insert("wd", Tensor::C(init.wd.clone()));
    let report = grad_check(
        |tape, nodes| {
            let h_node = tape.const_c(h.clone());
            rate_nats_node(tape, h_node, nodes.id("wa"), nodes.id("wd"), 0.3)
        },
        &params,
        1e-6,
    )
    .unwrap();
    assert!(report.pass, "sum-rate precoder gradients fail: {report:?}");
    worst = worst.max(report.max_rel_err);
    let precoder_worst = report.max_rel_err;

    // Full K=10 unroll with respect to the raw step sizes.
    let h = random_cmat(8, 2, 17);
    let init = init_precoders(&h, 3, P_TOTAL, 18).unwrap();
    let mut params = ParamSet::new();
    params.insert("mu", Tensor::R(RMat::from_fn(DEPTH, 2, |k, j| 1e-2 + 1e-3 * (k + j) as f64)));
    let report = grad_check(
        |tape, nodes| {
            let h_node = tape.const_c(h.clone());
            pga_loss_graph(
                tape,
                h_node,
                h_node,
                nodes.id("mu"),
                &init,
                0.3,
                RateLossMode::FinalIterate,
            )
        },
        &params,
        1e-5,
    )
    .unwrap();
    assert!(report.pass, "unrolled step-size gradients fail: {report:?}");
    worst = worst.max(report.max_rel_err);

    // End-to-end composition on a two-sample batch, both variants. The
    // discrete parts (support selection, ascent initialization) are pinned
    // so the finite differences probe the same smooth branch the adjoints
    // differentiate.
    let arr6 = hybeam_core::array::make_nominal_ula(6, 0.0107);
    let real6 = hybeam_core::array::perturb_array(&arr6, 0.1, 21);
    let meas6 = Arc::new(draw_measurement_matrix(6, 3, 4, 22));
    let ds6 = hybeam_core::array::generate_channels(
        &arr6,
        &real6,
        4,
        2,
        hybeam_core::array::GainProfile::ExpDecay,
        23,
        "probe",
    )
    .unwrap();
    let zeta2 = 0.05;
    let batch: Vec<_> = (0..2)
        .map(|i| {
            let h = ds6.stack_columns(&[2 * i, 2 * i + 1]);
            observe_uplink(&h, &meas6, zeta2, 30 + i as u64).unwrap()
        })
        .collect();
    for net in [
        MpNetParams::constrained_from_array(&arr6, 16),
        MpNetParams::unconstrained_from_array(&arr6, 16),
    ] {
        let supports: Vec<_> = batch.iter().map(|o| mp_supports(o, &net, &stop).unwrap()).collect();
        let inits: Vec<HybridPrecoder> = batch
            .iter()
            .map(|o| {
                let h_hat = estimate_channels(o, &net, &stop).unwrap();
                init_precoders(&h_hat, 3, P_TOTAL, 86).unwrap()
            })
            .collect();
        let mut params = net.to_param_set();
        params.insert("mu_log", Tensor::R(RMat::from_fn(DEPTH, 2, |_, _| (1e-2f64).ln())));
        let report = grad_check(
            |tape, nodes| {
                let mut total = None;
                for (i, o) in batch.iter().enumerate() {
                    let term = e2e_loss_graph(
                        tape,
                        nodes,
                        &net,
                        o,
                        &stop,
                        3,
                        P_TOTAL,
                        zeta2,
                        86,
                        0.5,
                        None,
                        Some(&supports[i]),
                        Some(&inits[i]),
                    )?;
                    total = Some(match total {
                        None => term,
                        Some(acc) => tape.add_r(acc, term),
                    });
                }
                Ok(total.expect("non-empty batch"))
            },
            &params,
            1e-5,
        )
        .unwrap();
        assert!(report.pass, "end-to-end {} gradient fails: {report:?}", net.variant_name());
        worst = worst.max(report.max_rel_err);
    }

    println!(
        "criterion 1 (gradient fidelity): PASS — worst relative error {worst:.2e} \
         (precoder stages {precoder_worst:.2e})"
    );
}

// ─── Criterion 2: constraint exactness ───────────────────────────────────────

#[test]
fn criterion_2_constraint_exactness() {
    let mut iterations = 0usize;
    let mut worst_modulus: f64 = 0.0;
    let mut worst_excess: f64 = f64::NEG_INFINITY;
    for trial in 0..100u64 {
        let mut g = rng(derive_seed(5150, &[trial]));
        let a = 3 + (g.next_u64() % 8) as usize;
        let l = 1 + (g.next_u64() % a as u64) as usize;
        let users = 1 + (g.next_u64() % 4) as usize;
        let p_total = 0.5 + 4.0 * (g.next_u64() % 1000) as f64 / 1000.0;
        let sigma2 = 0.05 + (g.next_u64() % 1000) as f64 / 1000.0;
        let h = CMat::from_fn(a, users, |_, _| complex_gaussian(&mut g, 1.0));
        let mu = RMat::from_fn(DEPTH, 2, |_, _| 0.1 * (g.next_u64() % 1000) as f64 / 1000.0);

        let init = init_precoders(&h, l, p_total, derive_seed(5151, &[trial])).unwrap();
        let mut tape = hybeam_core::Tape::new();
        let h_node = tape.const_c(h);
        let mu_node = tape.const_r(mu);
        let unroll = pga_unroll(&mut tape, h_node, mu_node, &init, sigma2).unwrap();
        for &(wa, wd) in &unroll.iterates[1..] {
            let wa = tape.value_c(wa);
            let wd = tape.value_c(wd);
            for z in wa.data() {
                worst_modulus = worst_modulus.max((z.norm() - 1.0).abs());
            }
            let used = matmul(wa, wd).unwrap().frob_norm_sq();
            worst_excess = worst_excess.max(used - p_total);
            iterations += 1;
        }
    }
    assert_eq!(iterations, 1000, "the sweep must cover exactly 1000 iterations");
    assert!(worst_modulus < 1e-12, "unit-modulus drift {worst_modulus:.3e}");
    assert!(worst_excess <= 1e-9, "power budget exceeded by {worst_excess:.3e}");
    println!(
        "criterion 2 (constraint exactness): PASS — 1000 iterations, \
         max modulus drift {worst_modulus:.2e}, max power excess {worst_excess:.2e}"
    );
}

// ─── Criterion 3: oracle equivalences ────────────────────────────────────────

fn det2(s: &CMat) -> Complex64 {
    s[(0, 0)] * s[(1, 1)] - s[(0, 1)] * s[(1, 0)]
}

fn inv2(s: &CMat) -> CMat {
    let d = det2(s);
    let mut out = CMat::zeros(2, 2);
    out[(0, 0)] = s[(1, 1)] / d;
    out[(0, 1)] = -s[(0, 1)] / d;
    out[(1, 0)] = -s[(1, 0)] / d;
    out[(1, 1)] = s[(0, 0)] / d;
    out
}

fn phase_of(z: Complex64) -> Complex64 {
    if z == Complex64::new(0.0, 0.0) {
        Complex64::new(1.0, 0.0)
    } else {
        z / z.norm()
    }
}

#[test]
fn criterion_3_oracle_equivalences() {
    // (a) The learned estimator pinned at the true dictionary reproduces
    // matching pursuit with the real-array dictionary.
    let arr = hybeam_core::array::make_nominal_ula(12, 0.0107);
    let real = hybeam_core::array::perturb_array(&arr, 0.1, 31);
    let ds = hybeam_core::array::generate_channels(
        &arr,
        &real,
        20,
        4,
        hybeam_core::array::GainProfile::ExpDecay,
        32,
        "probe",
    )
    .unwrap();
    let meas = Arc::new(draw_measurement_matrix(12, 6, 2, 33));
    let stop = StopRule::default();
    let net_at_truth = MpNetParams::constrained_from_array(&real, 48);
    let atoms = hybeam_core::array::build_dictionary(&real, 48).atoms;
    let mut max_gap: f64 = 0.0;
    for i in 0..ds.len() {
        let obs = observe_uplink(&ds.stack_columns(&[i]), &meas, 0.02, 40 + i as u64).unwrap();
        let a = estimate_channels(&obs, &net_at_truth, &stop).unwrap();
        let b = mp_baseline(&obs, &atoms, &stop).unwrap();
        max_gap = max_gap.max(a.max_abs_diff(&b));
    }
    assert!(max_gap < 1e-12, "estimator at the true dictionary diverges: {max_gap:.3e}");

    // (b) Water-filling matches a brute-force grid search on two users.
    let mut wf_gap: f64 = 0.0;
    for (g1, g2) in [(3.0, 1.2), (5.0, 0.005), (0.9, 0.9), (10.0, 0.2)] {
        let p_total = 2.0;
        let fill = water_fill(&[g1, g2], p_total).unwrap();
        let rate_wf = (1.0 + g1 * fill.powers[0]).ln() + (1.0 + g2 * fill.powers[1]).ln();
        let mut best = f64::NEG_INFINITY;
        let steps = 200_000;
        for i in 0..=steps {
            let p1 = p_total * i as f64 / steps as f64;
            best = best.max((1.0 + g1 * p1).ln() + (1.0 + g2 * (p_total - p1)).ln());
        }
        wf_gap = wf_gap.max((rate_wf - best).abs());
        assert!(rate_wf >= best - 1e-6, "grid search beats water-filling at ({g1},{g2})");
    }
    assert!(wf_gap < 1e-6, "water-filling vs grid search gap {wf_gap:.3e}");

    // (c) Scalar case: one antenna, unit pilot, unit prior — the linear
    // estimator must equal y/(1+ζ²) exactly.
    let zeta2 = 0.3;
    let meas1 = Arc::new(MeasurementMatrix {
        m: CMat::from_fn(1, 1, |_, _| Complex64::new(1.0, 0.0)),
        t: 1,
        l: 1,
        seed: 0,
    });
    let model = LmmseModel::new(
        vec![1.0],
        CMat::from_fn(1, 1, |_, _| Complex64::new(zeta2, 0.0)),
    )
    .unwrap();
    let mut g = rng(51);
    for i in 0..50 {
        let h = CMat::from_fn(1, 1, |_, _| complex_gaussian(&mut g, 1.0));
        let obs = observe_uplink(&h, &meas1, zeta2, 60 + i).unwrap();
        let est = lmmse_estimate(&obs, &model).unwrap();
        let expected = obs.y[(0, 0)] / (1.0 + zeta2);
        assert_eq!(est[(0, 0)], expected, "scalar estimator is not exactly y/(1+ζ²)");
    }

    // (d) One ascent iteration against a hand-stepped oracle with a
    // closed-form 2×2 inverse.
    let (a, users, l) = (4usize, 2usize, 2usize);
    let p_total = 2.0;
    let sigma2 = 0.1;
    let c = 1.0 / (users as f64 * sigma2);
    let h = random_cmat(a, users, 71);
    let mut params = PgaParams::constant(1, 0.0);
    params.mu[(0, 0)] = 7e-3;
    params.mu[(0, 1)] = 3e-3;
    let trace = pga_forward(&h, &params, l, p_total, sigma2, 72).unwrap();

    let init = init_precoders(&h, l, p_total, 72).unwrap();
    let w0 = matmul(&init.wa, &init.wd).unwrap();
    let g0 = matmul(&h.transpose(), &w0).unwrap();
    let mut s0 = matmul(&g0, &g0.adjoint()).unwrap().scale(Complex64::new(c, 0.0));
    s0[(0, 0)] += 1.0;
    s0[(1, 1)] += 1.0;
    let x0 = matmul(&inv2(&s0), &g0).unwrap();
    let grad_w = matmul(&h.conj(), &x0).unwrap().scale(Complex64::new(c, 0.0));
    let grad_a = matmul(&grad_w, &init.wd.adjoint()).unwrap();
    let grad_d = matmul(&init.wa.adjoint(), &grad_w).unwrap();
    let wa_raw = init.wa.add(&grad_a.scale(Complex64::new(params.mu[(0, 0)], 0.0)));
    let wa1 = CMat::from_fn(a, l, |i, j| phase_of(wa_raw[(i, j)]));
    let wd_free = init.wd.add(&grad_d.scale(Complex64::new(params.mu[(0, 1)], 0.0)));
    let used = matmul(&wa1, &wd_free).unwrap().frob_norm_sq();
    let wd1 = wd_free.scale(Complex64::new((p_total / used).sqrt().min(1.0), 0.0));
    let step_gap = trace.precoder.wa.max_abs_diff(&wa1).max(trace.precoder.wd.max_abs_diff(&wd1));
    assert!(step_gap < 1e-10, "one ascent step diverges from the oracle: {step_gap:.3e}");

    println!(
        "criterion 3 (oracle equivalences): PASS — pursuit gap {max_gap:.2e}, \
         water-fill gap {wf_gap:.2e}, scalar estimator exact, ascent step gap {step_gap:.2e}"
    );
}

// ─── Criterion 4: estimation trend ───────────────────────────────────────────

#[test]
fn criterion_4_estimation_trend() {
    let desk = &*DESK;
    let stop = desk.world.cfg.stop;

    let med = |obs: &[hybeam_core::sounding::Observation], f: &dyn Fn(&hybeam_core::sounding::Observation) -> hybeam_core::Result<CMat>| {
        median(per_channel_nmse_db(obs, f).unwrap())
    };

    let m15 = med(&desk.data15.test_obs, &|o| estimate_channels(o, &desk.unsup.net, &stop));
    let nom15 = med(&desk.data15.test_obs, &|o| mp_baseline(o, &desk.refs15.nominal_atoms, &stop));
    let real15 = med(&desk.data15.test_obs, &|o| mp_baseline(o, &desk.refs15.real_atoms, &stop));
    assert!(
        m15 <= nom15 - 2.0,
        "15 dB / T=2: trained {m15:.2} dB vs nominal {nom15:.2} dB — needs a 2 dB gain"
    );
    assert!(
        m15 <= real15 + 1.0,
        "15 dB / T=2: trained {m15:.2} dB vs real-dictionary {real15:.2} dB — must be within 1 dB"
    );

    let m5 = med(&desk.data5.test_obs, &|o| estimate_channels(o, &desk.unsup5.net, &stop));
    let nom5 = med(&desk.data5.test_obs, &|o| mp_baseline(o, &desk.refs5.nominal_atoms, &stop));
    assert!(
        m5 <= nom5 - 0.5,
        "5 dB / T=1: trained {m5:.2} dB vs nominal {nom5:.2} dB — needs a 0.5 dB gain"
    );

    println!(
        "criterion 4 (estimation trend): PASS — 15 dB/T=2 median NMSE: trained {m15:.2} dB, \
         nominal {nom15:.2} dB, real {real15:.2} dB; 5 dB/T=1: trained {m5:.2} dB, nominal {nom5:.2} dB"
    );
}

// ─── Criterion 5: rate ordering ──────────────────────────────────────────────

#[test]
fn criterion_5_rate_ordering() {
    let desk = &*DESK;
    let cfg = &desk.world.cfg;
    let data = &desk.data15;
    let stop = cfg.stop;
    let finals = |samples: &[PrecoderSample], pga: &PgaParams| {
        evaluate_rates(samples, pga, cfg.rf_chains, cfg.p_total, data.zeta2, data.eval_seed)
            .unwrap()
            .per_group_final
    };
    let net_samples = |net: &MpNetParams| {
        estimate_samples(&data.eval_groups, |o| estimate_channels(o, net, &stop)).unwrap()
    };

    let bound = digital_bounds(&data.eval_groups, cfg.p_total, data.zeta2).unwrap();
    let truth = finals(&truth_samples(&data.eval_groups), &desk.pga_true);
    let sup = finals(&net_samples(&desk.sup.net), &desk.sup.pga);
    let unsup = finals(&net_samples(&desk.unsup.net), &desk.unsup.pga);
    let cold = finals(&net_samples(&desk.cold.net), &desk.cold.pga);
    let lmmse_in =
        estimate_samples(&data.eval_groups, |o| lmmse_estimate(o, &desk.refs15.lmmse)).unwrap();
    let lmmse = finals(&lmmse_in, &desk.pga_lmmse);

    let n = bound.len();
    assert_eq!(n, 300, "the ordering must be tested over 300 test groups");
    let crit = t_crit(n);

    // The named extremes hold strictly: true-channel inputs beat every
    // estimate-driven pipeline, and LMMSE inputs lose to every other one —
    // each at the 5% level, paired by group.
    let strict: [(&str, &[f64], &str, &[f64]); 8] = [
        ("digital-bound", &bound, "upga-true", &truth),
        ("upga-true", &truth, "upga-lbl-supervised", &sup),
        ("upga-true", &truth, "upga-lbl-unsupervised", &unsup),
        ("upga-true", &truth, "upga-e2e-cold", &cold),
        ("upga-true", &truth, "upga-lmmse", &lmmse),
        ("upga-lbl-supervised", &sup, "upga-lmmse", &lmmse),
        ("upga-lbl-unsupervised", &unsup, "upga-lmmse", &lmmse),
        ("upga-e2e-cold", &cold, "upga-lmmse", &lmmse),
    ];
    for (na, a, nb, b) in strict {
        let t = paired_t(a, b);
        assert!(
            t > crit,
            "{na} must exceed {nb} at the 5% level (t={t:.2}, crit={crit:.3}, \
             means {:.4} vs {:.4})",
            mean(a),
            mean(b)
        );
    }

    // Between the estimate-driven pipelines the claim is an ordering, not a
    // strict gap — the layer-by-layer results may not fall significantly
    // below the cold start.
    for (na, a, nb, b) in [
        ("upga-lbl-supervised", &sup, "upga-e2e-cold", &cold),
        ("upga-lbl-unsupervised", &unsup, "upga-e2e-cold", &cold),
    ] {
        let t = paired_t(a, b);
        assert!(
            t > -crit,
            "{nb} significantly exceeds {na} (t={t:.2}), breaking the expected ordering"
        );
    }

    // Unsupervised layer-by-layer training lands within 5% of supervised.
    let (ms, mu) = (mean(&sup), mean(&unsup));
    assert!(
        (mu - ms).abs() <= 0.05 * ms,
        "unsupervised mean rate {mu:.4} is not within 5% of supervised {ms:.4}"
    );

    println!(
        "criterion 5 (rate ordering): PASS — means: bound {:.3} ≥ true {:.3} ≥ \
         sup {:.3} / unsup {:.3} ≥ cold {:.3} ≥ lmmse {:.3} bits (n=300, 5% paired tests)",
        mean(&bound),
        mean(&truth),
        ms,
        mu,
        mean(&cold),
        mean(&lmmse)
    );
}

// ─── Criterion 6: warm-start marginality ─────────────────────────────────────

#[test]
fn criterion_6_warm_start_marginality() {
    let desk = &*DESK;
    let cfg = &desk.world.cfg;
    let data = &desk.data15;
    let stop = cfg.stop;
    let finals = |trained: &Trained| {
        let samples =
            estimate_samples(&data.eval_groups, |o| estimate_channels(o, &trained.net, &stop))
                .unwrap();
        evaluate_rates(&samples, &trained.pga, cfg.rf_chains, cfg.p_total, data.zeta2, data.eval_seed)
            .unwrap()
            .per_group_final
    };
    let sup = mean(&finals(&desk.sup));
    let warm = mean(&finals(&desk.warm));
    let rel = (warm - sup).abs() / sup;
    assert!(
        rel <= 0.03,
        "warm start moved the mean sum-rate by {:.2}% (supervised {sup:.4}, warm {warm:.4})",
        100.0 * rel
    );
    println!(
        "criterion 6 (warm-start marginality): PASS — supervised {sup:.4} vs warm {warm:.4} \
         bits ({:+.2}%)",
        100.0 * (warm - sup) / sup
    );
}

// ─── Criterion 7: parameter accounting ───────────────────────────────────────

#[test]
fn criterion_7_parameter_accounting() {
    let desk = &*DESK;
    let step_params = 2 * DEPTH;

    let constrained = desk.sup.net.trainable_parameter_count();
    assert_eq!(constrained, ANTENNAS);
    assert_eq!(desk.sup.pga.mu.rows() * desk.sup.pga.mu.cols(), step_params);
    assert_eq!(constrained + step_params, 84, "constrained pipeline budget");

    let unconstrained =
        MpNetParams::unconstrained_from_array(&desk.world.train.nominal_array, GRID_LEN)
            .trainable_parameter_count();
    assert_eq!(unconstrained, 2 * ANTENNAS * GRID_LEN);
    assert_eq!(unconstrained + step_params, 153_620, "unconstrained pipeline budget");

    println!(
        "criterion 7 (parameter accounting): PASS — constrained {} + {} = 84, \
         unconstrained {} + {} = 153620",
        constrained, step_params, unconstrained, step_params
    );
}

// ─── Criterion 8: determinism ────────────────────────────────────────────────

#[test]
fn criterion_8_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let run = |args: &[&str]| {
        let out = Command::new(env!("CARGO_BIN_EXE_hybeam"))
            .args(args)
            .current_dir(dir.path())
            .output()
            .expect("binary runs");
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    };
    run(&[
        "gen-data", "--out", "data", "--seed", "3", "--antennas", "8", "--train-count", "48",
        "--test-count", "12", "--paths-max", "3",
    ]);
    std::fs::write(
        dir.path().join("cfg.json"),
        r#"{
            "antennas": 8, "rf_chains": 4, "grid_len": 24, "depth": 3, "users": 2,
            "snr_db": [12.0], "frames": [2],
            "strategies": ["lbl-unsupervised", "e2e-cold"],
            "variant": "constrained", "dataset": "data",
            "epochs": 2, "batch": 12, "eval_partitions": 2, "seed": 5
        }"#,
    )
    .unwrap();
    run(&["run", "--config", "cfg.json", "--out", "r1"]);
    run(&["run", "--config", "cfg.json", "--out", "r2"]);
    let m1 = std::fs::read(dir.path().join("r1/metrics.csv")).unwrap();
    let m2 = std::fs::read(dir.path().join("r2/metrics.csv")).unwrap();
    assert!(!m1.is_empty());
    assert_eq!(m1, m2, "identical runs must produce byte-identical metrics CSVs");
    println!(
        "criterion 8 (determinism): PASS — two runs, {} identical metric bytes",
        m1.len()
    );
}

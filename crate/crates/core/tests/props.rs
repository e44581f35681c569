//! Property tests: geometric invariants of the two precoder projections,
//! the water-filling optimality conditions, feasibility of every unrolled
//! ascent output, and exact persistence round-trips.

use num_complex::Complex64;
use proptest::prelude::*;

use hybeam_core::array::{
    generate_channels, load_dataset, make_nominal_ula, perturb_array, save_dataset, GainProfile,
};
use hybeam_core::baselines::water_fill;
use hybeam_core::mpnet::{load_mpnet, save_mpnet, MpNetParams};
use hybeam_core::numerics::{matmul, CMat, RMat};
use hybeam_core::upga::{
    load_pga, pga_forward, project_power, project_unit_modulus, save_pga, HybridPrecoder,
    PgaParams,
};

fn wavelength() -> f64 {
    299_792_458.0 / 28e9
}

fn complex_entry() -> impl Strategy<Value = Complex64> {
    (-3.0f64..3.0, -3.0f64..3.0).prop_map(|(re, im)| Complex64::new(re, im))
}

fn cmat(rows: usize, cols: usize) -> impl Strategy<Value = CMat> {
    prop::collection::vec(complex_entry(), rows * cols)
        .prop_map(move |data| CMat::from_col_major(rows, cols, data).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, ..ProptestConfig::default() })]

    #[test]
    fn unit_modulus_projection_is_exact_and_idempotent(wa in cmat(5, 3)) {
        let once = project_unit_modulus(&wa);
        for j in 0..once.cols() {
            for i in 0..once.rows() {
                prop_assert!((once[(i, j)].norm() - 1.0).abs() < 1e-12);
            }
        }
        let twice = project_unit_modulus(&once);
        prop_assert!(twice.max_abs_diff(&once) < 1e-15);
    }

    #[test]
    fn power_projection_is_feasible_and_leaves_feasible_points_alone(
        wa in cmat(5, 3),
        wd in cmat(3, 2),
        p_total in 0.1f64..10.0,
    ) {
        let wa = project_unit_modulus(&wa);
        let projected = project_power(&wa, &wd, p_total).unwrap();
        let used = matmul(&wa, &projected).unwrap().frob_norm_sq();
        prop_assert!(used <= p_total + 1e-9, "projection overshoots: {used} > {p_total}");

        // A second projection is a no-op, and an already-feasible digital
        // stage comes back bit-identical.
        let again = project_power(&wa, &projected, p_total).unwrap();
        prop_assert!(again.max_abs_diff(&projected) < 1e-12);
        let norm = matmul(&wa, &wd).unwrap().frob_norm_sq();
        if norm <= p_total {
            prop_assert_eq!(project_power(&wa, &wd, p_total).unwrap(), wd);
        }
    }

    #[test]
    fn water_filling_satisfies_the_optimality_conditions(
        raw in prop::collection::vec(1e-3f64..1e3, 1..8),
        p_total in 0.05f64..20.0,
    ) {
        let mut gains = raw;
        gains.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let wf = water_fill(&gains, p_total).unwrap();

        // Full budget use.
        let spent: f64 = wf.powers.iter().sum();
        prop_assert!((spent - p_total).abs() < 1e-9, "budget violated: {spent} vs {p_total}");
        // Complementary slackness against the reported level.
        for (p, g) in wf.powers.iter().zip(&gains) {
            prop_assert!(*p >= 0.0);
            if *p > 0.0 {
                prop_assert!((wf.level - 1.0 / g - p).abs() < 1e-9);
            } else {
                prop_assert!(wf.level <= 1.0 / g + 1e-9);
            }
        }
        // Active channels are exactly the strongest prefix.
        let first_zero = wf.powers.iter().position(|p| *p == 0.0).unwrap_or(wf.powers.len());
        prop_assert!(wf.powers[..first_zero].iter().all(|p| *p > 0.0));
        prop_assert!(wf.powers[first_zero..].iter().all(|p| *p == 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn every_unrolled_ascent_output_is_feasible(
        h in cmat(6, 2),
        depth in 1usize..6,
        step in 1e-4f64..5e-2,
        seed in any::<u64>(),
    ) {
        let p_total = 2.0;
        let trace = pga_forward(&h, &PgaParams::constant(depth, step), 3, p_total, 0.1, seed)
            .unwrap();
        let prec: &HybridPrecoder = &trace.precoder;
        prop_assert!(prec.validate().is_ok());
        for j in 0..prec.wa.cols() {
            for i in 0..prec.wa.rows() {
                prop_assert!((prec.wa[(i, j)].norm() - 1.0).abs() < 1e-12);
            }
        }
        let used = matmul(&prec.wa, &prec.wd).unwrap().frob_norm_sq();
        prop_assert!(used <= p_total + 1e-9);
        prop_assert_eq!(trace.rates_bits.len(), depth + 1);
        prop_assert!(trace.rates_bits.iter().all(|r| r.is_finite()));
    }

    #[test]
    fn step_size_checkpoints_round_trip_exactly(
        raw in prop::collection::vec(1e-6f64..10.0, 1..6),
    ) {
        let depth = raw.len();
        let mut params = PgaParams::constant(depth, 1.0);
        params.mu = RMat::from_fn(depth, 2, |i, j| raw[i] * (1.0 + j as f64));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("steps.json");
        save_pga(&params, &path).unwrap();
        prop_assert_eq!(load_pga(&path).unwrap().mu, params.mu);
    }
}

#[test]
fn dataset_and_dictionary_checkpoints_round_trip_bit_exactly() {
    let nominal = make_nominal_ula(8, wavelength());
    let real = perturb_array(&nominal, 0.1, 11);
    let ds = generate_channels(&nominal, &real, 10, 4, GainProfile::ExpDecay, 12, "train").unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&ds, dir.path()).unwrap();
    let back = load_dataset(dir.path()).unwrap();
    assert_eq!(back.channels, ds.channels);
    assert_eq!(back.path_counts, ds.path_counts);
    assert_eq!(back.seed, ds.seed);
    assert_eq!(back.split, ds.split);

    let constrained = MpNetParams::constrained_from_array(&real, 24);
    let path = dir.path().join("constrained.bin");
    save_mpnet(&constrained, &path).unwrap();
    match (load_mpnet(&path).unwrap(), &constrained) {
        (
            MpNetParams::Constrained { positions_x: a, .. },
            MpNetParams::Constrained { positions_x: b, .. },
        ) => assert_eq!(&a, b),
        _ => panic!("variant changed across the round trip"),
    }

    let unconstrained = MpNetParams::unconstrained_from_array(&real, 24);
    let path = dir.path().join("unconstrained.bin");
    save_mpnet(&unconstrained, &path).unwrap();
    match (load_mpnet(&path).unwrap(), &unconstrained) {
        (MpNetParams::Unconstrained { atoms: a, .. }, MpNetParams::Unconstrained { atoms: b, .. }) => {
            assert_eq!(&a, b)
        }
        _ => panic!("variant changed across the round trip"),
    }
}

use beamshape::channel::{
    array_response, assemble_channel, assemble_ofdm_channel, sample_paths, ArrayGeometry, ChannelMatrix,
    HALF_WAVELENGTH,
};
use beamshape::eval::{ml_detect, mi_lower_bound, monte_carlo_ser, ser_union_bound, EvalConfig};
use beamshape::experiment::ExperimentConfig;
use beamshape::linalg::identity;
use beamshape::precoding::{build_analog_codebook, decompose_hybrid, enumerate_subspaces, Dictionary, Structure};
use beamshape::qcqp::{build_distance_forms, solve_min_power, LayoutArgs, SolverConfig};
use beamshape::seed::{complex_gaussian, mix, rng};
use beamshape::shaping::{dpss, fpss, joss, candidate_sets, min_distance, Method, ShapingCodebook, ShapingStats};
use beamshape::{CMatrix, CVector, C64};
use proptest::prelude::*;
use rand::Rng;

fn geom(n: usize) -> ArrayGeometry {
    ArrayGeometry::for_elements(n).unwrap()
}

fn random_matrix(seed: u64, rows: usize, cols: usize) -> CMatrix {
    let mut r = rng(seed);
    CMatrix::from_fn(rows, cols, |_, _| complex_gaussian(&mut r, 1.0))
}

fn random_book(seed: u64, n: usize, len: usize) -> ShapingCodebook {
    let mut r = rng(seed);
    let vectors: Vec<CVector> = (0..n).map(|_| CVector::from_fn(len, |_, _| complex_gaussian(&mut r, 1.0))).collect();
    let book = ShapingCodebook {
        method: Method::Fdss,
        n_bits: n.trailing_zeros() as usize,
        power: 0.0,
        labels: (0..n).map(|i| (0, i)).collect(),
        vectors,
        d_min_design: None,
        hybrid: None,
        stats: ShapingStats::default(),
    };
    beamshape::shaping::normalize_power(&book, 1.0).unwrap()
}

fn fast_solver(seed: u64) -> SolverConfig {
    SolverConfig { restarts: 2, max_iters: 800, ..SolverConfig::default() }.with_seed(seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn array_responses_have_unit_norm(w1 in 1usize..6, w2 in 1usize..6, theta in 0.0..3.14f64, phi in 0.0..6.28f64) {
        let g = ArrayGeometry::new(w1, w2, HALF_WAVELENGTH).unwrap();
        let f = array_response(&g, theta, phi).unwrap();
        prop_assert!((f.norm() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn channel_rank_is_at_most_path_count(seed in any::<u64>(), l in 1usize..5) {
        let paths = sample_paths(seed, l).unwrap();
        let chan = assemble_channel(&paths, &geom(16), &geom(9)).unwrap();
        prop_assert!(chan.rank() <= l);
        prop_assert_eq!(sample_paths(seed, l).unwrap(), paths);
    }

    #[test]
    fn single_carrier_ofdm_matches_narrowband(seed in any::<u64>(), l in 1usize..4) {
        let paths = sample_paths(seed, l).unwrap();
        let a = assemble_channel(&paths, &geom(4), &geom(4)).unwrap();
        let b = assemble_ofdm_channel(&paths, &geom(4), &geom(4), 1).unwrap();
        let diff = (a.h() - b.h()).iter().map(|v| v.norm()).fold(0.0, f64::max);
        prop_assert!(diff <= 1e-12);
    }

    #[test]
    fn svd_reconstructs_with_orthonormal_factors(seed in any::<u64>(), rows in 1usize..7, cols in 1usize..7) {
        let h = random_matrix(seed, rows, cols);
        let m = ChannelMatrix::new(h.clone());
        let back = m.svd.reconstruct();
        prop_assert!((&back - &h).norm() <= 1e-10 * h.norm());
        let r = m.svd.u.ncols();
        prop_assert!((m.svd.u.adjoint() * &m.svd.u - identity(r)).norm() <= 1e-10);
        prop_assert!((m.svd.v.adjoint() * &m.svd.v - identity(m.svd.v.ncols())).norm() <= 1e-10);
    }

    #[test]
    fn subspace_count_is_binomial(seed in any::<u64>(), l in 1usize..5, n_rf in 1usize..4) {
        let paths = sample_paths(seed, l).unwrap();
        let chan = assemble_channel(&paths, &geom(16), &geom(4)).unwrap();
        let m = chan.rank();
        match enumerate_subspaces(chan.primary(), n_rf) {
            Ok(s) => {
                let c = (0..n_rf).fold(1usize, |acc, i| acc * (m - i) / (i + 1));
                prop_assert_eq!(s.bases.len(), c);
            }
            Err(_) => prop_assert!(n_rf > m),
        }
    }

    #[test]
    fn analog_entries_follow_structure_bitwise(seed in any::<u64>(), pch in any::<bool>()) {
        let paths = sample_paths(seed, 3).unwrap();
        let chan = assemble_channel(&paths, &geom(16), &geom(4)).unwrap();
        let subs = enumerate_subspaces(chan.primary(), 2).unwrap();
        let structure = if pch { Structure::PartiallyConnected } else { Structure::FullyConnected };
        let dict = Dictionary::for_transmitter(&geom(16), chan.paths.as_ref()).unwrap();
        let book = build_analog_codebook(&subs, structure, Some(&dict)).unwrap();
        let fch = 1.0 / 16f64.sqrt();
        let pch_mag = (2.0f64 / 16.0).sqrt();
        for f in &book.analog {
            for c in 0..2 {
                for t in 0..16 {
                    let mag = f[(t, c)].norm();
                    if pch {
                        let inside = t / 8 == c;
                        let want = if inside { pch_mag } else { 0.0 };
                        prop_assert!((mag - want).abs() <= 4.0 * f64::EPSILON);
                    } else {
                        prop_assert!((mag - fch).abs() <= 4.0 * f64::EPSILON);
                    }
                }
            }
        }
    }

    #[test]
    fn omp_residual_never_grows_with_superset_dictionary(seed in any::<u64>(), extra in 1usize..20) {
        let n_t = 16;
        let basis = random_matrix(seed, n_t, 1);
        let basis = &basis / C64::new(basis.norm(), 0.0);
        let grid = Dictionary::upa_grid(&geom(n_t), 4, 8).unwrap();
        let mut r = rng(mix(seed, 1));
        let added: Vec<CVector> = (0..extra)
            .map(|_| array_response(&geom(n_t), r.random_range(0.0..3.14), r.random_range(0.0..6.28)).unwrap())
            .collect();
        let bigger = grid.extended(&added);
        let small = decompose_hybrid(&basis, Structure::FullyConnected, Some(&grid)).unwrap();
        let large = decompose_hybrid(&basis, Structure::FullyConnected, Some(&bigger)).unwrap();
        prop_assert!(large.residual <= small.residual + 1e-12);
    }

    #[test]
    fn ml_detection_is_scale_invariant(seed in any::<u64>(), c in 0.01..100.0f64) {
        let book = random_book(seed, 8, 3);
        let h = random_matrix(mix(seed, 1), 2, 3);
        let mut r = rng(mix(seed, 2));
        let y = CVector::from_fn(2, |_, _| complex_gaussian(&mut r, 2.0));
        let scaled = h.map(|v| v * c);
        prop_assert_eq!(ml_detect(&y, &h, &book), ml_detect(&y.map(|v| v * c), &scaled, &book));
    }

    #[test]
    fn mi_bound_is_capped_and_monotone(seed in any::<u64>(), rho in 0.0..1e3f64, more in 1.0..10.0f64) {
        let book = random_book(seed, 8, 3);
        let h = random_matrix(mix(seed, 1), 3, 3);
        let n_r = 3;
        let cap = 3.0 + n_r as f64 * (1.0 - std::f64::consts::LOG2_E);
        let a = mi_lower_bound(&book, &h, rho, n_r);
        let b = mi_lower_bound(&book, &h, rho * more, n_r);
        prop_assert!(a <= cap + 1e-12);
        prop_assert!(a <= b + 1e-12);
    }

    #[test]
    fn min_distance_is_homogeneous(seed in any::<u64>(), a in 0.1..10.0f64, b in 0.1..10.0f64) {
        let book = random_book(seed, 4, 3);
        let h = random_matrix(mix(seed, 1), 2, 3);
        let base = min_distance(&book, &h).unwrap();
        let mut scaled = book.clone();
        scaled.vectors.iter_mut().for_each(|v| *v *= C64::new(b, 0.0));
        let got = min_distance(&scaled, &h.map(|v| v * a)).unwrap();
        prop_assert!((got - a * b * base).abs() <= 1e-12 * got.max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn min_power_is_homogeneous(seed in any::<u64>(), alpha in 0.2..5.0f64) {
        let h = random_matrix(seed, 2, 3);
        let inst = build_distance_forms(&h, &LayoutArgs::Fdss { n_codewords: 4 }).unwrap();
        let cfg = fast_solver(mix(seed, 1));
        let base = solve_min_power(&inst, 1.0, &cfg, None).unwrap();
        let warm = base.z.map(|v| v * alpha);
        let again = solve_min_power(&inst, alpha, &cfg, Some(&warm)).unwrap();
        let from_warm = solve_min_power(&inst, 1.0, &cfg, Some(&base.z)).unwrap();
        let want = alpha * alpha * from_warm.power;
        prop_assert!((again.power - want).abs() <= 1e-6 * want, "{} vs {}", again.power, want);
    }

    #[test]
    fn channel_scaling_leaves_the_solution_unchanged(seed in any::<u64>()) {
        let h = random_matrix(seed, 2, 3);
        let h2 = h.map(|v| v * 2.0);
        let a = build_distance_forms(&h, &LayoutArgs::Fdss { n_codewords: 4 }).unwrap();
        let b = build_distance_forms(&h2, &LayoutArgs::Fdss { n_codewords: 4 }).unwrap();
        for (fa, fb) in a.forms().iter().zip(b.forms()) {
            prop_assert!((fa.map(|v| v * 4.0) - &fb).norm() <= 1e-12 * fb.norm());
        }
        // c = 2 keeps every rescaling exact, so the iterates coincide bitwise
        let cfg = fast_solver(mix(seed, 1));
        let ra = solve_min_power(&a, 1.0, &cfg, None).unwrap();
        let rb = solve_min_power(&b, 1.0, &cfg, None).unwrap();
        prop_assert_eq!(&ra.z, &rb.z.map(|v| v * 2.0));
        let na = ra.min_form_value / ra.power;
        let nb = rb.min_form_value / rb.power;
        prop_assert!((nb.sqrt() - 2.0 * na.sqrt()).abs() <= 1e-12 * nb.sqrt());
    }

    #[test]
    fn converged_runs_are_feasible(seed in any::<u64>(), d in 0.5..3.0f64) {
        let h = random_matrix(seed, 3, 3);
        let inst = build_distance_forms(&h, &LayoutArgs::Fdss { n_codewords: 4 }).unwrap();
        let cfg = fast_solver(mix(seed, 1));
        let r = solve_min_power(&inst, d, &cfg, None).unwrap();
        if r.converged {
            let worst = inst.pair_values(&r.z).into_iter().fold(f64::INFINITY, f64::min);
            prop_assert!(worst >= (1.0 - cfg.tol) * d * d);
        }
    }

    #[test]
    fn ser_estimate_is_thread_independent(seed in any::<u64>()) {
        let book = random_book(seed, 8, 2);
        let h = random_matrix(mix(seed, 1), 2, 2);
        let cfg = EvalConfig { snr_db_list: vec![0.0, 10.0], trials: 500, seed, dac_bits: None, csi_eta: None };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let a = one.install(|| monte_carlo_ser(&book, &h, &cfg, "x")).unwrap();
        let b = three.install(|| monte_carlo_ser(&book, &h, &cfg, "x")).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn union_bound_of_two_codewords(seed in any::<u64>(), rho in 0.0..50.0f64) {
        let book = random_book(seed, 2, 2);
        let h = random_matrix(mix(seed, 1), 2, 2);
        let d = min_distance(&book, &h).unwrap();
        let want = 0.5 * (-rho * d * d / 4.0).exp();
        prop_assert!((ser_union_bound(&book, &h, rho) - want).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn hybrid_codebooks_are_consistent(seed in any::<u64>(), pch in any::<bool>(), bits in 2usize..4) {
        let paths = sample_paths(seed, 3).unwrap();
        let chan = assemble_channel(&paths, &geom(4), &geom(4)).unwrap();
        let structure = if pch { Structure::PartiallyConnected } else { Structure::FullyConnected };
        let dict = Dictionary::for_transmitter(&geom(4), chan.paths.as_ref()).unwrap();
        let subs = enumerate_subspaces(chan.primary(), 2).unwrap();
        let analog = build_analog_codebook(&subs, structure, Some(&dict)).unwrap();
        let h = chan.h();
        let cfg = fast_solver(mix(seed, 2));
        let cands = candidate_sets(&analog, bits, 8).unwrap();
        let books = [
            joss(h, &analog, bits, &cfg).unwrap(),
            fpss(h, &analog, bits, &cands, &cfg).unwrap(),
            dpss(h, &analog, bits, &cands, &cfg).unwrap(),
        ];
        for b in &books {
            prop_assert_eq!(b.len(), 1 << bits);
            prop_assert!((b.average_power() - 1.0).abs() <= 1e-12);
            let parts = b.hybrid.as_ref().expect("hybrid parts");
            let rebuilt = parts.reconstruct(&b.labels);
            for (x, y) in rebuilt.iter().zip(&b.vectors) {
                prop_assert!((x - y).norm() <= 1e-10);
            }
            let alloc = b.allocation(analog.len());
            prop_assert_eq!(alloc.total(), 1 << bits);
            let d = min_distance(b, h).unwrap();
            prop_assert!((d - b.d_min_design.unwrap()).abs() <= 1e-12 * d.max(1.0));
        }
        for b in &books[1..] {
            let start = b.stats.best_candidate_d_min.unwrap();
            prop_assert!(b.d_min_design.unwrap() >= start * (1.0 - 1e-12));
        }
    }

    #[test]
    fn config_round_trips(seed in any::<u64>(), bits in 1usize..6, cap in 1usize..100, eta in 0.0..1.0f64) {
        let text = serde_json::json!({
            "system": {"n_t": 16, "n_r": 4, "n_rf": 2, "n_bits": bits, "l_paths": 3},
            "structure": "pch",
            "methods": ["joss", "fdss_mmi", "amss"],
            "channel_source": {"kind": "ofdm", "seed": seed, "k_carriers": 8},
            "eval": {"snr_db_list": [-1.5, 0.1, 7.3], "trials": 100, "seed": seed, "csi_eta": eta},
            "candidate_cap": cap,
            "seed": seed
        })
        .to_string();
        let cfg = ExperimentConfig::from_json(&text).unwrap();
        let again = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        prop_assert_eq!(&cfg, &again);
        prop_assert_eq!(cfg.hash(), again.hash());
    }
}

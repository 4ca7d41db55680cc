use boxrelax::boxsolve::{
    detect, kkt_residual, oracle_box_ls_active_set, solve_box_ls, SolveOptions,
};
use boxrelax::model::{make_shape, sample_instance, SignalPrior, TrialSeed};
use boxrelax::theory::{predict_pe, snr_gap_db};
use nalgebra::DVector;
use proptest::prelude::*;

fn residual_norm(inst: &boxrelax::model::ChannelInstance, x: &DVector<f64>) -> f64 {
    (&inst.y - &inst.a * x).norm()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn relabeling_is_equivariant(seed in any::<u64>(), n in 2usize..10, snr_db in -5.0f64..15.0, flips in prop::collection::vec(any::<bool>(), 10)) {
        let shape = make_shape(n, 1.5, snr_db).unwrap();
        let inst = sample_instance(&shape, &TrialSeed::new(seed, 0), SignalPrior::Uniform);
        let signs: Vec<f64> = flips[..n].iter().map(|&f| if f { -1.0 } else { 1.0 }).collect();
        let relabeled = inst.relabel_signs(&signs).unwrap();
        prop_assert_eq!(&relabeled.y, &inst.y);

        let opts = SolveOptions::with_tol(1e-10);
        let base = solve_box_ls(&inst.a, &inst.y, &opts).unwrap();
        let moved = solve_box_ls(&relabeled.a, &relabeled.y, &opts).unwrap();
        for (i, s) in signs.iter().enumerate() {
            prop_assert!((moved.x_hat[i] - s * base.x_hat[i]).abs() < 1e-6);
        }
        let b1 = detect(&base.x_hat, &inst.x0).unwrap();
        let b2 = detect(&moved.x_hat, &relabeled.x0).unwrap();
        // Exact ties at zero can flip one bit under relabeling; they do not occur here.
        prop_assert_eq!(b1.ber, b2.ber);
    }

    #[test]
    fn solutions_are_feasible_certified_and_monotone(seed in any::<u64>(), n in 1usize..40, delta in 0.3f64..2.0, snr_db in -5.0f64..20.0) {
        let shape = make_shape(n, delta, snr_db).unwrap();
        let inst = sample_instance(&shape, &TrialSeed::new(seed, 1), SignalPrior::Uniform);
        let sol = solve_box_ls(&inst.a, &inst.y, &SolveOptions::default()).unwrap();
        prop_assert!(sol.x_hat.iter().all(|v| (-1.0..=1.0).contains(v)));
        prop_assert!(sol.kkt_residual <= 1e-8);
        prop_assert_eq!(sol.kkt_residual, kkt_residual(&inst.a, &inst.y, &sol.x_hat));
        for pair in sol.objective_history.windows(2) {
            prop_assert!(pair[1] <= pair[0]);
        }
        prop_assert!((sol.objective - residual_norm(&inst, &sol.x_hat)).abs() < 1e-12);
    }

    #[test]
    fn matches_oracle_on_small_instances(seed in any::<u64>(), n in 1usize..=8, extra in 0usize..4, sigma_idx in 0usize..3) {
        let snr_db = [f64::INFINITY, 10.0, 0.0][sigma_idx];
        // m >= n keeps the minimiser unique, so coordinates can be compared.
        let delta = (n + extra) as f64 / n as f64;
        let shape = make_shape(n, delta, snr_db).unwrap();
        let inst = sample_instance(&shape, &TrialSeed::new(seed, 2), SignalPrior::Uniform);
        let oracle = oracle_box_ls_active_set(&inst.a, &inst.y).unwrap();
        let sol = solve_box_ls(&inst.a, &inst.y, &SolveOptions::with_tol(1e-10)).unwrap();
        prop_assert!((sol.objective - residual_norm(&inst, &oracle)).abs() <= 1e-6);
        for i in 0..n {
            prop_assert!((sol.x_hat[i] - oracle[i]).abs() <= 1e-5);
        }
    }

    #[test]
    fn theory_is_ordered(delta in 0.51f64..20.0, snr_db in -10.0f64..30.0) {
        let p = predict_pe(delta, 10f64.powf(snr_db / 10.0)).unwrap();
        prop_assert!(p.tau_star > 0.0);
        // Deep tails underflow in linear scale, so compare logarithms.
        prop_assert!(p.log10_pe().is_finite() && p.pe < 0.5);
        prop_assert!(p.pe_mfb <= p.pe);
        let louder = predict_pe(delta, 10f64.powf((snr_db + 1.0) / 10.0)).unwrap();
        prop_assert!(louder.log10_pe() < p.log10_pe());
        let gap = snr_gap_db(delta).unwrap();
        prop_assert!(gap > 0.0);
        prop_assert!(snr_gap_db(delta * 1.5).unwrap() < gap);
    }
}

#[test]
fn noiseless_threshold_contrast() {
    let mut exact_above = 0;
    let mut exact_below = 0;
    for t in 0..30 {
        let seed = TrialSeed::new(77, t);
        for (delta, count) in [(0.9, &mut exact_above), (0.25, &mut exact_below)] {
            let shape = make_shape(96, delta, f64::INFINITY).unwrap();
            let inst = sample_instance(&shape, &seed, SignalPrior::Uniform);
            let sol = solve_box_ls(&inst.a, &inst.y, &SolveOptions::default()).unwrap();
            if detect(&sol.x_hat, &inst.x0).unwrap().errors() == 0 {
                *count += 1;
            }
        }
    }
    assert!(exact_above >= 29, "{exact_above}");
    assert!(exact_below <= 3, "{exact_below}");
}

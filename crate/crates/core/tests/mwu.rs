mod common;

use common::{run_box_system, BoxSystem};
use mwauction::mwu::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn random_systems_meet_round_bound() {
    let eps = 0.1;
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sys = BoxSystem::random(&mut rng, 20, 4);
        let tr = run_box_system(&sys, eps).unwrap();
        assert_eq!(tr.status, MwuStatus::Completed, "seed {seed}");
        let rho = sys.width();
        for (i, v) in average_violation(&tr).unwrap().iter().enumerate() {
            assert!(*v >= -eps * rho, "seed {seed} row {i}: {v} < {}", -eps * rho);
        }
    }
}

#[test]
fn infeasible_system_is_declared() {
    // x >= 0.6 and -x >= -0.4 over [0, 1].
    let sys = BoxSystem {
        a: vec![vec![1.0], vec![-1.0]],
        b: vec![0.6, -0.4],
        widths: vec![0.6, 0.6],
        interior: vec![0.5],
    };
    let tr = run_box_system(&sys, 0.1).unwrap();
    assert!(matches!(tr.status, MwuStatus::DeclaredInfeasible { .. }));
    assert!(average_violation(&tr).is_err());
}

#[test]
fn early_stop_returns_converged_window() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let sys = BoxSystem::random(&mut rng, 8, 3);
    let rho = sys.width();
    let mut params = MwuParams::new(8, rho, 0.1, 100_000);
    params.early_stop = Some(EarlyStop {
        target: 0.05,
        window: Some(200),
        min_rounds: 200,
        check_every: 50,
    });
    let tr = run_generalized_ahk(&params, |_| Ok(&sys), |s: &&BoxSystem, y: &[f64]| Ok(s.oracle(y))).unwrap();
    let MwuStatus::Converged { round, from } = tr.status else {
        panic!("expected convergence, got {:?}", tr.status);
    };
    assert!(round + 1 - from <= 200);
    for (v, w) in average_violation(&tr).unwrap().iter().zip(&sys.widths) {
        assert!(v / w >= -0.05);
    }
}

#[test]
fn bad_parameters_rejected() {
    let sys = BoxSystem {
        a: vec![vec![1.0]],
        b: vec![0.0],
        widths: vec![1.0],
        interior: vec![0.5],
    };
    for (width, lr, rounds) in [(0.0, 0.1, 10), (1.0, 0.5, 10), (1.0, 0.1, 0)] {
        let params = MwuParams::new(1, width, lr, rounds);
        let r = run_generalized_ahk(&params, |_| Ok(&sys), |s: &&BoxSystem, y: &[f64]| Ok(s.oracle(y)));
        assert!(r.is_err());
    }
}

#[test]
fn wrong_row_count_is_dimension_mismatch() {
    let sys = BoxSystem {
        a: vec![vec![1.0]],
        b: vec![0.0],
        widths: vec![1.0],
        interior: vec![0.5],
    };
    let params = MwuParams::new(2, 1.0, 0.1, 10);
    let r = run_generalized_ahk(&params, |_| Ok(&sys), |s: &&BoxSystem, y: &[f64]| Ok(s.oracle(y)));
    assert!(matches!(r, Err(mwauction::Error::DimensionMismatch(_))));
}

proptest! {
    #[test]
    fn weights_stay_positive_and_normalized(
        steps in prop::collection::vec(prop::collection::vec(-1.0f64..=1.0, 5), 1..200),
        lr in 0.01f64..0.49,
    ) {
        let mut st = ExpertState::new(5, 1.0, lr, steps.len());
        for m in &steps {
            st.update(m).unwrap();
            let w = st.weights();
            prop_assert!(w.iter().all(|&x| x > 0.0));
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn update_matches_closed_form(m in -2.0f64..=2.0, lr in 0.01f64..0.49) {
        let st = ExpertState::new(1, 2.0, lr, 1).without_normalization();
        let st = update_weights(st, &[m]).unwrap();
        let expect = if m >= 0.0 { (1.0 - lr).powf(m / 2.0) } else { (1.0 + lr).powf(-m / 2.0) };
        prop_assert!((st.weights()[0] - expect).abs() <= 1e-12 * expect.max(1.0));
    }

    #[test]
    fn over_width_violation_rejected(m in 1.01f64..10.0) {
        let mut st = ExpertState::new(1, 1.0, 0.1, 1);
        let is_width_violation = matches!(st.update(&[m]), Err(mwauction::Error::WidthViolation { .. }));
        prop_assert!(is_width_violation);
    }
}

mod common;

use common::*;
use mwauction::model::{Budget, Buyer, Instance, Prior, Setting, SoftCost, TypeVector};
use mwauction::oracles::*;
use mwauction::verify::brute_force_oracle;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn setting_oracles_match_brute_force() {
    for kind in SIX_SETTINGS.into_iter().chain([OracleKind::Welfare]) {
        for seed in 0..200 {
            oracle_case(kind, seed).unwrap();
        }
    }
}

/// Payments off the candidate sets never beat the oracle: try every
/// allocation with payments on a 1/8 grid.
#[test]
fn candidate_payments_suffice() {
    for kind in [
        OracleKind::MultiUnit,
        OracleKind::QuittingRights,
        OracleKind::SoftBudget,
    ] {
        for seed in 0..60 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let mut inst = oracle_instance(&mut rng, kind);
            inst.buyers.truncate(2);
            if let Prior::Independent(p) = &mut inst.prior {
                p.truncate(2);
            }
            let t = random_types(&mut rng, &inst);
            let w = dyadic_weights(&mut rng, &inst, false);
            let (_, best) = solve_scenario(&inst, &t, &w).unwrap();
            let n = inst.num_buyers();
            for q0 in 0..=inst.items {
                for q1 in 0..=(inst.items - q0) * usize::from(n > 1) {
                    let q = [q0, q1][..n].to_vec();
                    let grid = |i: usize| -> Vec<f64> {
                        (0..=64)
                            .map(|k| k as f64 / 8.0)
                            .filter(|&p| p <= inst.budget(i, t.get(i)))
                            .collect()
                    };
                    let g0 = grid(0);
                    let g1 = if n > 1 { grid(1) } else { vec![0.0] };
                    for &p0 in &g0 {
                        for &p1 in &g1 {
                            let o = Outcome {
                                allocation: Allocation::Units(q.clone()),
                                payments: [p0, p1][..n].to_vec(),
                            };
                            if check_membership(&inst, &t, &o).total() == 0 {
                                let v = objective(&inst, &w, &o).unwrap();
                                assert!(v <= best + 1e-9, "{kind:?} seed {seed}: {o:?} scores {v} > {best}");
                            }
                        }
                    }
                }
            }
        }
    }
}

fn one_unit_buyers(values: &[f64], budget: f64, n: usize) -> Instance {
    let buyers = (0..n)
        .map(|_| Buyer::new(labels(1), vec![values.to_vec()], Budget::Public(budget)))
        .collect();
    base(
        Setting::MultiUnit,
        values.len() - 1,
        8.0,
        buyers,
        Prior::Independent(vec![vec![1.0]; n]),
    )
}

#[test]
fn spec_scenarios_agree_with_enumeration() {
    // Two buyers, two units, allocation weights only.
    let inst = one_unit_buyers(&[0.0, 1.0, 2.0], 8.0, 2);
    let t = TypeVector(vec![0, 0]);
    let w = ScenarioWeights {
        buyers: vec![vec![0.0, 0.5, 0.7, -1.0], vec![0.0, 0.6, 0.9, -1.0]],
        gamma: 0.0,
    };
    let (o, v) = oracle_multi_unit(&inst, &t, &w);
    assert_eq!(o.units(), &[1, 1]);
    assert!((v - 1.1).abs() < 1e-12);
    assert!((brute_force_oracle(&inst, &t, &w).unwrap().1 - 1.1).abs() < 1e-12);

    // Zero weights give zero everywhere.
    let zero = ScenarioWeights::zero(&inst);
    assert_eq!(brute_force_oracle(&inst, &t, &zero).unwrap().1, 0.0);
    assert_eq!(oracle_multi_unit(&inst, &t, &zero).1, 0.0);
}

#[test]
fn soft_budget_with_unit_cost_is_quitting_style() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let mut inst = {
            let d = dims(&mut rng, 3, 2, 3);
            soft_budget(&mut rng, &d, 4, 8.0)
        };
        for b in &mut inst.buyers {
            b.soft_cost = Some(SoftCost::linear());
        }
        let t = random_types(&mut rng, &inst);
        let w = dyadic_weights(&mut rng, &inst, false);
        let (_, v) = oracle_soft_budget(&inst, &t, &w);
        assert_eq!(v, brute_force_oracle(&inst, &t, &w).unwrap().1);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    /// Multi-unit payments are zero for non-positive payment weight and
    /// min(B, v) otherwise.
    #[test]
    fn multi_unit_payment_dichotomy(seed in 0u64..1_000_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = {
            let d = dims(&mut rng, 4, 3, 3);
            multi_unit(&mut rng, &d, 4, 8.0)
        };
        let t = random_types(&mut rng, &inst);
        let w = dyadic_weights(&mut rng, &inst, false);
        let (o, _) = oracle_multi_unit(&inst, &t, &w);
        for i in 0..inst.num_buyers() {
            let beta = w.buyers[i][inst.items + 1];
            let q = o.units()[i];
            let expect = if beta > 0.0 { inst.budget(i, t.get(i)).min(inst.value(i, q, t.get(i))) } else { 0.0 };
            prop_assert_eq!(o.payments[i], expect);
        }
    }

    /// Repeated calls return the same outcome.
    #[test]
    fn oracles_are_deterministic(seed in 0u64..1_000_000, k in 0usize..6) {
        let kind = SIX_SETTINGS[k];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = oracle_instance(&mut rng, kind);
        let t = random_types(&mut rng, &inst);
        let w = dyadic_weights(&mut rng, &inst, false);
        let a = solve_scenario(&inst, &t, &w).unwrap();
        let b = solve_scenario(&inst, &t, &w).unwrap();
        prop_assert_eq!(a.0, b.0);
        prop_assert_eq!(a.1.to_bits(), b.1.to_bits());
    }

    /// At most one procured agent is paid above cost, and every procured
    /// agent's payment weight is at most that agent's.
    #[test]
    fn procurement_winner_property(seed in 0u64..1_000_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=4);
        let inst = procurement(&mut rng, n, 3, 6);
        let t = random_types(&mut rng, &inst);
        let w = dyadic_weights(&mut rng, &inst, false);
        let (o, _) = oracle_procurement(&inst, &t, &w);
        let Allocation::Procured(x) = &o.allocation else { panic!("procurement outcome") };
        let cost = |i: usize| inst.buyers[i].cost[t.get(i)] as f64;
        let winners: Vec<usize> = (0..n).filter(|&i| x[i] && o.payments[i] > cost(i)).collect();
        prop_assert!(winners.len() <= 1);
        if let Some(&i) = winners.first() {
            for j in (0..n).filter(|&j| x[j]) {
                prop_assert!(w.buyers[j][1] <= w.buyers[i][1]);
            }
        }
    }
}

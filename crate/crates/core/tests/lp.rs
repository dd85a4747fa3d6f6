use mwauction::lp::*;
use mwauction::verify::vertex_maximize;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A bounded 6-variable, 8-row LP with small-integer data.
fn random_lp(rng: &mut ChaCha8Rng) -> LinearProgram {
    let n = 6;
    let objective: Vec<f64> = (0..n).map(|_| rng.random_range(-5..=5) as f64).collect();
    let sense = if rng.random_bool(0.5) {
        Sense::Maximize
    } else {
        Sense::Minimize
    };
    let mut lp = LinearProgram::new(sense, objective);
    lp.bounds = (0..n)
        .map(|_| {
            let lo = rng.random_range(-3..=0) as f64;
            (lo, lo + rng.random_range(1..=4) as f64)
        })
        .collect();
    for _ in 0..8 {
        let coeffs: Vec<f64> = (0..n).map(|_| rng.random_range(-3..=3) as f64).collect();
        let rhs = rng.random_range(-4..=6) as f64;
        lp.push(match rng.random_range(0..6) {
            0 => Constraint::eq(coeffs, rhs),
            1 | 2 => Constraint::ge(coeffs, rhs),
            _ => Constraint::le(coeffs, rhs),
        });
    }
    lp
}

fn enumerate(lp: &LinearProgram) -> Option<f64> {
    let sign = if lp.sense == Sense::Maximize { 1.0 } else { -1.0 };
    let obj: Vec<f64> = lp.objective.iter().map(|c| sign * c).collect();
    vertex_maximize(&obj, &lp.rows, &lp.bounds).map(|(_, v)| sign * v)
}

#[test]
fn random_lps_match_vertex_enumeration() {
    let (mut optimal, mut infeasible) = (0, 0);
    for seed in 0..300 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lp = random_lp(&mut rng);
        let sol = solve_lp(&lp).unwrap();
        match enumerate(&lp) {
            Some(v) => {
                assert_eq!(sol.status, LpStatus::Optimal, "seed {seed}");
                assert!(
                    (sol.objective_value - v).abs() <= 1e-7,
                    "seed {seed}: {} vs {v}",
                    sol.objective_value
                );
                for r in &lp.rows {
                    assert!(r.is_satisfied(&sol.values, 1e-7), "seed {seed}");
                }
                optimal += 1;
            }
            None => {
                assert_eq!(sol.status, LpStatus::Infeasible, "seed {seed}");
                infeasible += 1;
            }
        }
    }
    assert!(
        optimal >= 50 && infeasible >= 10,
        "{optimal} optimal, {infeasible} infeasible"
    );
}

#[test]
fn duals_certify_optimality() {
    for seed in 0..200 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lp = random_lp(&mut rng);
        let sol = solve_lp(&lp).unwrap();
        if sol.status == LpStatus::Optimal {
            let d = lp.dual_objective(&sol.duals).expect("dual feasible");
            assert!(
                (d - sol.objective_value).abs() <= 1e-6,
                "seed {seed}: dual {d} primal {}",
                sol.objective_value
            );
        }
    }
}

#[test]
fn solves_are_bit_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..20 {
        let lp = random_lp(&mut rng);
        let bits = |s: &LpSolution| {
            (
                s.status,
                s.objective_value.to_bits(),
                s.values.iter().chain(&s.duals).map(|v| v.to_bits()).collect::<Vec<_>>(),
            )
        };
        assert_eq!(bits(&solve_lp(&lp).unwrap()), bits(&solve_lp(&lp).unwrap()));
    }
}

#[test]
fn feasibility_examples() {
    match check_feasible_lp(2, &[], &[(0.0, 1.0), (-1.0, 2.0)]).unwrap() {
        Feasibility::Feasible(x) => assert!((0.0..=1.0).contains(&x[0]) && (-1.0..=2.0).contains(&x[1])),
        Feasibility::Infeasible => panic!("empty row set is feasible"),
    }
    let rows = [Constraint::ge(vec![1.0], 2.0)];
    assert_eq!(
        check_feasible_lp(1, &rows, &[(0.0, 1.0)]).unwrap(),
        Feasibility::Infeasible
    );
    assert!(matches!(
        check_feasible_lp(2, &rows, &[(0.0, 1.0), (0.0, 1.0)]),
        Err(mwauction::Error::DimensionMismatch(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// Systems built around a known point are feasible and the witness satisfies every row.
    #[test]
    fn constructed_systems_are_feasible(
        point in prop::collection::vec(-2.0f64..2.0, 4),
        rows in prop::collection::vec((prop::collection::vec(-3.0f64..3.0, 4), 0usize..3, 0.0f64..1.0), 1..10),
    ) {
        let cons: Vec<Constraint> = rows
            .into_iter()
            .map(|(a, kind, slack)| {
                let at: f64 = a.iter().zip(&point).map(|(p, q)| p * q).sum();
                match kind {
                    0 => Constraint::le(a, at + slack),
                    1 => Constraint::ge(a, at - slack),
                    _ => Constraint::eq(a, at),
                }
            })
            .collect();
        let bounds = vec![(-3.0, 3.0); 4];
        match check_feasible_lp(4, &cons, &bounds).unwrap() {
            Feasibility::Feasible(x) => {
                for c in &cons {
                    prop_assert!(c.is_satisfied(&x, 1e-7));
                }
                for (v, (lo, hi)) in x.iter().zip(&bounds) {
                    prop_assert!(*v >= lo - 1e-9 && *v <= hi + 1e-9);
                }
            }
            Feasibility::Infeasible => prop_assert!(false, "constructed system reported infeasible"),
        }
    }
}

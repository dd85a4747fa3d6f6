mod common;

use common::*;
use mwauction::model::{Setting, TypeVector};
use mwauction::oracles::check_membership;
use mwauction::runtime::*;
use mwauction::synthesis::Mechanism;
use mwauction::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

type Cache = HashMap<(usize, u64), Mechanism>;

/// Synthesized once per (case, seed) across the tests in this binary.
fn mechanism(case: Case, seed: u64) -> Mechanism {
    static CACHE: OnceLock<Mutex<Cache>> = OnceLock::new();
    let key = (ALL_CASES.iter().position(|c| *c == case).unwrap(), seed);
    let cache = CACHE.get_or_init(Default::default);
    if let Some(m) = cache.lock().unwrap().get(&key) {
        return m.clone();
    }
    let m = search(&case_instance(case, seed), 0.15).mechanism;
    cache.lock().unwrap().insert(key, m.clone());
    m
}

#[test]
fn single_snapshot_is_deterministic() {
    let mut mech = mechanism(Case::MultiUnit, 2);
    mech.snapshots.truncate(1);
    let t = TypeVector(mech.instance.type_counts().iter().map(|k| 1 % k).collect());
    let first = execute_keyed(&mech, &t, 1, 0).unwrap();
    for id in 1..50 {
        let tr = execute_keyed(&mech, &t, 99, id).unwrap();
        assert_eq!(tr.round, Some(0));
        assert_eq!(tr.outcome, first.outcome);
    }
}

#[test]
fn fixed_seed_gives_identical_traces() {
    for case in ALL_CASES {
        let mech = mechanism(case, 1);
        let mut a = ChaCha8Rng::seed_from_u64(17);
        let mut b = ChaCha8Rng::seed_from_u64(17);
        let mut pick = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let t = random_types(&mut pick, &mech.instance);
            let x = trace_line(&execute(&mech, &t, &mut a).unwrap());
            let y = trace_line(&execute(&mech, &t, &mut b).unwrap());
            assert_eq!(x, y, "{case:?}");
        }
    }
}

#[test]
fn snapshot_choice_is_uniform() {
    let mut mech = mechanism(Case::MultiUnit, 2);
    let first = mech.snapshots[0].clone();
    mech.snapshots = vec![first; 10];
    let t = TypeVector(vec![0; mech.instance.num_buyers()]);
    let mut hits = [0usize; 10];
    let runs = 100_000;
    for id in 0..runs {
        hits[execute_keyed(&mech, &t, 8, id).unwrap().round.unwrap()] += 1;
    }
    for h in hits {
        let freq = h as f64 / runs as f64;
        assert!((freq - 0.1).abs() <= 0.01, "{hits:?}");
    }
}

#[test]
fn round_trip_preserves_execution() {
    for case in ALL_CASES {
        let mech = mechanism(case, 4);
        let doc = serialize(&mech);
        let back = deserialize(&doc).unwrap();
        assert_eq!(serialize(&back), doc, "{case:?}");
        let mut pick = ChaCha8Rng::seed_from_u64(1);
        for id in 0..30 {
            let t = random_types(&mut pick, &mech.instance);
            assert_eq!(
                execute_keyed(&mech, &t, 7, id).unwrap(),
                execute_keyed(&back, &t, 7, id).unwrap(),
                "{case:?}"
            );
        }
    }
}

#[test]
fn document_errors() {
    let mech = mechanism(Case::MultiUnit, 1);
    let doc = serialize(&mech);
    assert!(matches!(
        deserialize(&doc[..doc.len() / 2]),
        Err(Error::MalformedDocument(_))
    ));
    assert!(matches!(deserialize("not json"), Err(Error::MalformedDocument(_))));
    let mut v: serde_json::Value = serde_json::from_str(&doc).unwrap();
    v["version"] = serde_json::json!(99);
    assert!(matches!(
        deserialize(&v.to_string()),
        Err(Error::VersionMismatch { found: 99, .. })
    ));
    let mut v: serde_json::Value = serde_json::from_str(&doc).unwrap();
    v["snapshots"] = serde_json::json!([]);
    assert!(matches!(deserialize(&v.to_string()), Err(Error::MalformedDocument(_))));
}

#[test]
fn setting_and_type_checks() {
    let mech = mechanism(Case::MultiUnit, 1);
    let mut other = mech.instance.clone();
    other.setting = Setting::QuittingRights;
    let t = TypeVector(vec![0; mech.instance.num_buyers()]);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(matches!(
        execute_on(&mech, &other, &t, &mut rng),
        Err(Error::SettingMismatch { .. })
    ));
    assert!(execute_on(&mech, &mech.instance, &t, &mut rng).is_ok());
    let bad = TypeVector(vec![9; mech.instance.num_buyers()]);
    assert!(execute(&mech, &bad, &mut rng).is_err());
    let short = TypeVector(vec![]);
    assert!(execute(&mech, &short, &mut rng).is_err());
}

#[test]
fn trace_revenue_matches_payments() {
    for case in ALL_CASES {
        let mech = mechanism(case, 2);
        let mut pick = ChaCha8Rng::seed_from_u64(5);
        for id in 0..50 {
            let t = random_types(&mut pick, &mech.instance);
            let tr = execute_keyed(&mech, &t, 3, id).unwrap();
            assert_eq!(tr.revenue, tr.outcome.payments.iter().sum::<f64>());
            assert!(trace_objective(&mech, &tr).unwrap().is_finite());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Executions stay inside the feasible set exactly.
    #[test]
    fn executions_are_feasible(case in 0usize..9, seed in 0u64..4, id in 0u64..1_000_000) {
        let mech = mechanism(ALL_CASES[case], seed);
        let mut pick = ChaCha8Rng::seed_from_u64(id);
        let t = random_types(&mut pick, &mech.instance);
        let tr = execute_keyed(&mech, &t, seed, id).unwrap();
        prop_assert_eq!(check_membership(&mech.instance, &t, &tr.outcome).total(), 0);
    }
}

//! Random tiny instances and weights shared by the integration tests.
#![allow(dead_code)]

use mwauction::model::{Budget, Buyer, Instance, Prior, SellerUtility, Setting, SoftCost, TypeVector};
use mwauction::oracles::{feature_count, ScenarioWeights};
use rand::Rng;

pub fn labels(k: usize) -> Vec<String> {
    (0..k).map(|t| format!("t{t}")).collect()
}

pub fn base(setting: Setting, items: usize, scale: f64, buyers: Vec<Buyer>, prior: Prior) -> Instance {
    Instance {
        setting,
        items,
        scale,
        buyers,
        prior,
        seller_utility: None,
        procurement_budget: None,
        supply: Vec::new(),
        polytope: Vec::new(),
        envy_free: false,
        inequality_mode: false,
    }
}

/// A random pmf with every entry at least `1/scale` (needs `k <= scale`).
pub fn random_pmf<R: Rng>(rng: &mut R, k: usize, scale: f64) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| rng.random_range(1..=3) as f64).collect();
    let s: f64 = w.iter().sum();
    let free = 1.0 - k as f64 / scale;
    w.iter().map(|x| 1.0 / scale + free * x / s).collect()
}

/// Non-decreasing integer values `v(0) = 0 <= v(1) <= ... <= vmax`.
pub fn unit_values<R: Rng>(rng: &mut R, m: usize, vmax: u32) -> Vec<f64> {
    let mut v = vec![0.0];
    for _ in 0..m {
        let last = *v.last().unwrap();
        v.push((last + rng.random_range(0..=2) as f64).min(vmax as f64));
    }
    v
}

fn independent(buyers: &[Buyer], scale: f64, rng: &mut impl Rng) -> Prior {
    Prior::Independent(buyers.iter().map(|b| random_pmf(rng, b.num_types(), scale)).collect())
}

pub struct Dims {
    pub n: usize,
    pub m: usize,
    pub types: usize,
}

pub fn dims<R: Rng>(rng: &mut R, n_max: usize, m_max: usize, t_max: usize) -> Dims {
    Dims {
        n: rng.random_range(1..=n_max),
        m: rng.random_range(1..=m_max),
        types: t_max,
    }
}

pub fn multi_unit<R: Rng>(rng: &mut R, d: &Dims, vmax: u32, scale: f64) -> Instance {
    let buyers: Vec<Buyer> = (0..d.n)
        .map(|_| {
            let k = rng.random_range(1..=d.types);
            let values = (0..k).map(|_| unit_values(rng, d.m, vmax)).collect();
            let b = rng.random_range(1..=scale as u32) as f64;
            Buyer::new(labels(k), values, Budget::Public(b))
        })
        .collect();
    let prior = independent(&buyers, scale, rng);
    base(Setting::MultiUnit, d.m, scale, buyers, prior)
}

pub fn quitting<R: Rng>(rng: &mut R, d: &Dims, vmax: u32, scale: f64) -> Instance {
    let mut inst = multi_unit(rng, d, vmax, scale);
    inst.setting = Setting::QuittingRights;
    inst
}

/// Borrowing cost with slope 1 up to an integer knot, then slope 2.
pub fn soft_budget<R: Rng>(rng: &mut R, d: &Dims, vmax: u32, scale: f64) -> Instance {
    let inst = multi_unit(rng, d, vmax, scale);
    with_soft_costs(rng, inst)
}

pub fn with_soft_costs<R: Rng>(rng: &mut R, mut inst: Instance) -> Instance {
    inst.setting = Setting::SoftBudget;
    for b in &mut inst.buyers {
        let k = rng.random_range(1..=3) as f64;
        b.soft_cost = Some(SoftCost {
            knots: vec![0.0, k],
            slopes: vec![1.0, 2.0],
        });
    }
    inst
}

/// Integer-valued, concave seller utility over `[-nL, nL]`.
pub fn seller_utility<R: Rng>(rng: &mut R, d: &Dims, scale: i64) -> Instance {
    let mut inst = multi_unit(rng, d, scale as u32, scale as f64);
    inst.setting = Setting::SellerUtility;
    for b in &mut inst.buyers {
        b.budget = Budget::Public(scale as f64);
    }
    let span = d.n as i64 * scale;
    let knee = rng.random_range(1..=span);
    let mut points = vec![(-span, -2.0 * span as f64), (0, 0.0), (knee, knee as f64)];
    if knee < span {
        points.push((span, knee as f64));
    }
    inst.seller_utility = Some(SellerUtility {
        points,
        interpolate: true,
    });
    inst
}

pub fn procurement<R: Rng>(rng: &mut R, n: usize, types: usize, scale: i64) -> Instance {
    let buyers: Vec<Buyer> = (0..n)
        .map(|_| {
            let k = rng.random_range(1..=types);
            let mut b = Buyer::new(labels(k), Vec::new(), Budget::Public(0.0));
            b.cost = (0..k).map(|_| rng.random_range(0..=scale / 2)).collect();
            b.item_value = rng.random_range(0..=scale) as f64;
            b
        })
        .collect();
    let prior = independent(&buyers, scale as f64, rng);
    let mut inst = base(Setting::Procurement, 1, scale as f64, buyers, prior);
    inst.procurement_budget = Some(rng.random_range(1..=scale));
    inst
}

pub fn multi_item<R: Rng>(rng: &mut R, d: &Dims, vmax: u32, scale: f64, envy_free: bool) -> Instance {
    let buyers: Vec<Buyer> = (0..d.n)
        .map(|_| {
            let k = rng.random_range(1..=d.types);
            let values = (0..k)
                .map(|_| (0..d.m).map(|_| rng.random_range(0..=vmax) as f64).collect())
                .collect();
            let b = rng.random_range(1..=scale as u32) as f64;
            Buyer::new(labels(k), values, Budget::Public(b))
        })
        .collect();
    let prior = independent(&buyers, scale, rng);
    let mut inst = base(Setting::MultiItem, d.m, scale, buyers, prior);
    inst.envy_free = envy_free;
    inst
}

pub fn inequality<R: Rng>(rng: &mut R, d: &Dims, vmax: u32, scale: f64) -> Instance {
    let mut inst = multi_item(rng, d, vmax, scale, false);
    inst.inequality_mode = true;
    inst
}

/// Multi-unit with a full-support joint prior that is not a product.
pub fn correlated<R: Rng>(rng: &mut R, d: &Dims, vmax: u32, scale: f64) -> Instance {
    let mut inst = multi_unit(rng, d, vmax, scale);
    let counts = inst.type_counts();
    let entries: Vec<(TypeVector, f64)> = mwauction::model::product_space(&counts)
        .map(|t| (t, rng.random_range(1..=4) as f64))
        .collect();
    let total: f64 = entries.iter().map(|e| e.1).sum();
    inst.prior = Prior::joint(entries.into_iter().map(|(t, w)| (t, w / total)).collect());
    inst
}

/// Private budgets drawn per type.
pub fn private_budgets<R: Rng>(rng: &mut R, d: &Dims, vmax: u32, scale: f64) -> Instance {
    let mut inst = multi_unit(rng, d, vmax, scale);
    for b in &mut inst.buyers {
        let k = b.num_types();
        b.budget = Budget::Private((0..k).map(|_| rng.random_range(1..=scale as u32) as f64).collect());
    }
    inst
}

/// A random type vector in the instance's product space.
pub fn random_types<R: Rng>(rng: &mut R, inst: &Instance) -> TypeVector {
    TypeVector(inst.buyers.iter().map(|b| rng.random_range(0..b.num_types())).collect())
}

/// Weights that are multiples of 1/8 in [-2, 2], so every sum the oracles
/// and the brute force form is exact.
pub fn dyadic_weights<R: Rng>(rng: &mut R, inst: &Instance, nonnegative: bool) -> ScenarioWeights {
    let lo = if nonnegative { 0 } else { -16 };
    let mut w = ScenarioWeights {
        buyers: (0..inst.num_buyers())
            .map(|i| {
                (0..feature_count(inst, i))
                    .map(|_| rng.random_range(lo..=16) as f64 / 8.0)
                    .collect()
            })
            .collect(),
        gamma: 0.0,
    };
    if matches!(inst.setting, Setting::SellerUtility | Setting::Procurement) {
        w.gamma = rng.random_range(0..=16) as f64 / 8.0;
    }
    w
}

/// Rows `a_i x >= b_i` over the box `[0, 1]^d`, built around a known interior point.
pub struct BoxSystem {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub widths: Vec<f64>,
    pub interior: Vec<f64>,
}

impl BoxSystem {
    pub fn random<R: Rng>(rng: &mut R, rows: usize, dim: usize) -> Self {
        let interior: Vec<f64> = (0..dim).map(|_| rng.random_range(0.2..0.8)).collect();
        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut widths = Vec::new();
        for _ in 0..rows {
            let row: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let at: f64 = row.iter().zip(&interior).map(|(p, q)| p * q).sum();
            let rhs = at - rng.random_range(0.01..0.1);
            let hi: f64 = row.iter().map(|c| c.max(0.0)).sum();
            let lo: f64 = row.iter().map(|c| c.min(0.0)).sum();
            widths.push((hi - rhs).abs().max((lo - rhs).abs()));
            a.push(row);
            b.push(rhs);
        }
        BoxSystem { a, b, widths, interior }
    }

    pub fn width(&self) -> f64 {
        self.widths.iter().copied().fold(0.0, f64::max)
    }

    /// Maximize `y^T A x` over the box.
    pub fn oracle(&self, y: &[f64]) -> (Vec<f64>, f64) {
        let dim = self.interior.len();
        let c: Vec<f64> = (0..dim)
            .map(|j| self.a.iter().zip(y).map(|(r, w)| r[j] * w).sum())
            .collect();
        let x: Vec<f64> = c.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
        let value = c.iter().zip(&x).map(|(p, q)| p * q).sum();
        (x, value)
    }
}

impl mwauction::mwu::RoundConstraints<Vec<f64>> for BoxSystem {
    fn rhs(&self) -> &[f64] {
        &self.b
    }

    fn widths(&self) -> &[f64] {
        &self.widths
    }

    fn evaluate(&self, x: &Vec<f64>) -> Vec<f64> {
        self.a
            .iter()
            .map(|r| r.iter().zip(x).map(|(p, q)| p * q).sum())
            .collect()
    }
}

/// Run the engine on a box system for the theoretical round count.
pub fn run_box_system(sys: &BoxSystem, eps: f64) -> mwauction::Result<mwauction::mwu::MwuTranscript<Vec<f64>>> {
    use mwauction::mwu::{run_generalized_ahk, MwuParams};
    let rho = sys.width();
    let rounds = MwuParams::theoretical_rounds(sys.b.len(), rho, eps);
    let params = MwuParams::new(sys.b.len(), rho, eps, rounds);
    run_generalized_ahk(&params, |_| Ok(sys), |s: &&BoxSystem, y: &[f64]| Ok(s.oracle(y)))
}

/// The six setting oracles, plus the welfare oracle of inequality mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleKind {
    MultiUnit,
    QuittingRights,
    SoftBudget,
    SellerUtility,
    Procurement,
    MultiItem,
    Welfare,
}

pub const SIX_SETTINGS: [OracleKind; 6] = [
    OracleKind::MultiUnit,
    OracleKind::QuittingRights,
    OracleKind::SoftBudget,
    OracleKind::SellerUtility,
    OracleKind::Procurement,
    OracleKind::MultiItem,
];

/// A tiny instance for oracle comparisons: n <= 4, m <= 3, |T_i| <= 3 and
/// at most 9 payment candidates per (buyer, units) pair.
pub fn oracle_instance<R: Rng>(rng: &mut R, kind: OracleKind) -> Instance {
    let mut inst = match kind {
        OracleKind::SellerUtility => {
            let scale = rng.random_range(1..=3);
            let d = dims(rng, 3, 2, 3.min(scale as usize));
            return seller_utility(rng, &d, scale);
        }
        OracleKind::Procurement => {
            let n = rng.random_range(1..=4);
            return procurement(rng, n, 3, 6);
        }
        OracleKind::MultiItem => {
            let d = dims(rng, 2, 2, 3);
            let envy_free = rng.random_bool(0.5);
            multi_item(rng, &d, 4, 4.0, envy_free)
        }
        OracleKind::Welfare => {
            let d = dims(rng, 4, 3, 3);
            inequality(rng, &d, 4, 4.0)
        }
        _ => {
            let d = dims(rng, 4, 3, 3);
            let inst = multi_unit(rng, &d, 4, 8.0);
            return match kind {
                OracleKind::QuittingRights => Instance {
                    setting: Setting::QuittingRights,
                    ..inst
                },
                OracleKind::SoftBudget => with_soft_costs(rng, inst),
                _ => inst,
            };
        }
    };
    inst.supply = (0..inst.items).map(|_| rng.random_range(1..=2) as f64).collect();
    inst
}

/// Compare the setting oracle against exhaustive enumeration on one random
/// scenario. Exact equality except for the LP setting (1e-6).
pub fn oracle_case(kind: OracleKind, seed: u64) -> Result<(), String> {
    use mwauction::oracles::{check_membership, objective, solve_scenario};
    use mwauction::verify::brute_force_oracle;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let inst = oracle_instance(&mut rng, kind);
    let errs = mwauction::model::validate_instance(&inst);
    if !errs.is_empty() {
        return Err(format!("{kind:?} seed {seed}: invalid instance {errs:?}"));
    }
    let t = random_types(&mut rng, &inst);
    let w = dyadic_weights(&mut rng, &inst, kind == OracleKind::Welfare);
    let (out, value) = solve_scenario(&inst, &t, &w).map_err(|e| format!("{kind:?} seed {seed}: {e}"))?;
    let (_, brute) = brute_force_oracle(&inst, &t, &w).map_err(|e| format!("{kind:?} seed {seed}: brute {e}"))?;
    let direct = objective(&inst, &w, &out).map_err(|e| e.to_string())?;
    let lp = matches!(kind, OracleKind::MultiItem);
    let same = |a: f64, b: f64| if lp { (a - b).abs() <= 1e-6 } else { a == b };
    if !same(value, brute) {
        return Err(format!("{kind:?} seed {seed}: oracle {value} vs brute force {brute}"));
    }
    if !same(direct, value) {
        return Err(format!(
            "{kind:?} seed {seed}: reported {value} but outcome scores {direct}"
        ));
    }
    let v = check_membership(&inst, &t, &out);
    if v.total() != 0 {
        return Err(format!("{kind:?} seed {seed}: outcome {out:?} breaks {v:?}"));
    }
    Ok(())
}

/// Settings and modes exercised end to end.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Case {
    MultiUnit,
    QuittingRights,
    SoftBudget,
    SellerUtility,
    Procurement,
    EnvyFree,
    Correlated,
    PrivateBudgets,
    Inequality,
}

pub const ALL_CASES: [Case; 9] = [
    Case::MultiUnit,
    Case::QuittingRights,
    Case::SoftBudget,
    Case::SellerUtility,
    Case::Procurement,
    Case::EnvyFree,
    Case::Correlated,
    Case::PrivateBudgets,
    Case::Inequality,
];

/// A tiny instance for synthesis: n <= 2 (3 for procurement), m <= 2, |T_i| <= 2.
pub fn case_instance(case: Case, seed: u64) -> Instance {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let d = dims(&mut rng, 2, 2, 2);
    match case {
        Case::MultiUnit => multi_unit(&mut rng, &d, 4, 8.0),
        Case::QuittingRights => quitting(&mut rng, &d, 4, 8.0),
        Case::SoftBudget => soft_budget(&mut rng, &d, 4, 8.0),
        Case::SellerUtility => seller_utility(&mut rng, &d, 2),
        Case::Procurement => procurement(&mut rng, d.n + 1, 2, 4),
        Case::EnvyFree => multi_item(&mut rng, &d, 4, 4.0, true),
        Case::Correlated => correlated(&mut rng, &d, 4, 8.0),
        Case::PrivateBudgets => private_budgets(&mut rng, &d, 4, 8.0),
        Case::Inequality => inequality(&mut rng, &d, 4, 4.0),
    }
}

/// Revenue search at `epsilon = frac * L`.
pub fn search(inst: &Instance, frac: f64) -> mwauction::synthesis::SearchResult {
    let cfg = mwauction::synthesis::SynthesisConfig::with_epsilon(frac * inst.scale);
    mwauction::synthesis::binary_search_revenue(inst, &cfg).expect("search runs")
}

/// One buyer, one unit, values {1, 2} uniform, budget `budget`.
pub fn two_value_buyer(budget: f64) -> Instance {
    let b = Buyer::new(labels(2), vec![vec![0.0, 1.0], vec![0.0, 2.0]], Budget::Public(budget));
    base(
        Setting::MultiUnit,
        1,
        2.0,
        vec![b],
        Prior::Independent(vec![vec![0.5, 0.5]]),
    )
}

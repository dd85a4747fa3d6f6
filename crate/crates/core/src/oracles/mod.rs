//! Per-scenario optimization problems and the holistic LP.
//!
//! Every scenario objective has the same shape: a weight vector per buyer,
//! dotted with that buyer's feature vector (see [`features`]), plus an
//! optional `gamma` times a scenario-wide quantity (seller utility of the
//! revenue, or procured value).

mod holistic;
mod items;
mod procurement;
mod unit;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{Instance, Setting, TypeVector};

pub use holistic::{bic_pairs, solve_lp_exp, HolisticLp, Layout};
pub(crate) use items::scenario_rows;
pub use items::{oracle_multi_item_lp, oracle_welfare_downward_closed};
pub use procurement::{knapsack, oracle_procurement};
pub use unit::{
    oracle_multi_unit, oracle_quitting_rights, oracle_seller_utility, oracle_soft_budget, quitting_candidates,
    soft_budget_candidates,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Allocation {
    /// Units per buyer (multi-unit family and seller utility).
    Units(Vec<usize>),
    /// Fraction of each item per buyer, `[i][j]`.
    Items(Vec<Vec<f64>>),
    /// Which agents are procured.
    Procured(Vec<bool>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub allocation: Allocation,
    pub payments: Vec<f64>,
}

impl Outcome {
    pub fn revenue(&self) -> f64 {
        self.payments.iter().sum()
    }

    pub fn units(&self) -> &[usize] {
        match &self.allocation {
            Allocation::Units(q) => q,
            _ => panic!("outcome does not allocate units"),
        }
    }

    pub fn empty(inst: &Instance) -> Outcome {
        let n = inst.num_buyers();
        let allocation = match inst.setting {
            Setting::MultiItem => Allocation::Items(vec![vec![0.0; inst.items]; n]),
            Setting::Procurement => Allocation::Procured(vec![false; n]),
            _ => Allocation::Units(vec![0; n]),
        };
        Outcome {
            allocation,
            payments: vec![0.0; n],
        }
    }
}

/// Objective weights for one scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioWeights {
    pub buyers: Vec<Vec<f64>>,
    pub gamma: f64,
}

impl ScenarioWeights {
    pub fn zero(inst: &Instance) -> Self {
        ScenarioWeights {
            buyers: (0..inst.num_buyers())
                .map(|i| vec![0.0; feature_count(inst, i)])
                .collect(),
            gamma: 0.0,
        }
    }
}

pub fn feature_count(inst: &Instance, buyer: usize) -> usize {
    let m = inst.items;
    match inst.setting {
        Setting::MultiUnit => m + 2,
        Setting::QuittingRights | Setting::SoftBudget => inst.buyers[buyer].num_types() + 1,
        Setting::SellerUtility => (2 * inst.int_scale() as usize + 1) * (m + 1),
        Setting::Procurement => 2,
        Setting::MultiItem => m + 1,
    }
}

/// Index of the payment feature, if the setting has one.
pub fn payment_feature(inst: &Instance, buyer: usize) -> Option<usize> {
    match inst.setting {
        Setting::SellerUtility => None,
        _ => Some(feature_count(inst, buyer) - 1),
    }
}

/// Feature index of `(p, q)` in the seller-utility grid.
pub fn grid_index(inst: &Instance, p: i64, q: usize) -> usize {
    (p + inst.int_scale()) as usize * (inst.items + 1) + q
}

/// Whether a feature is tied to scenario outcomes (false only for the
/// holistic payment in inequality mode).
pub fn coupled(inst: &Instance, buyer: usize, f: usize) -> bool {
    !(inst.setting == Setting::MultiItem && inst.inequality_mode && Some(f) == payment_feature(inst, buyer))
}

/// Feature vector of buyer `i` (reporting `t_i`) in `outcome`.
///
/// Multi-unit: unit indicators then payment. Quitting rights: for every type
/// `t'`, the utility `max(v(q, t') - p, 0)`, then payment. Soft budget: for
/// every `t'`, `v(q, t') - c(p)`, then payment. Seller utility: indicator of
/// the `(p, q)` pair. Procurement: procured flag and payment. Multi-item:
/// item fractions and payment.
pub fn features(inst: &Instance, buyer: usize, outcome: &Outcome) -> Vec<f64> {
    let mut out = vec![0.0; feature_count(inst, buyer)];
    let p = outcome.payments[buyer];
    match (&outcome.allocation, inst.setting) {
        (Allocation::Units(q), Setting::MultiUnit) => {
            out[q[buyer]] = 1.0;
            out[inst.items + 1] = p;
        }
        (Allocation::Units(q), Setting::QuittingRights) => {
            let b = &inst.buyers[buyer];
            for (tp, o) in out.iter_mut().take(b.num_types()).enumerate() {
                *o = (b.values[tp][q[buyer]] - p).max(0.0);
            }
            out[b.num_types()] = p;
        }
        (Allocation::Units(q), Setting::SoftBudget) => {
            let b = &inst.buyers[buyer];
            let c = inst.soft_cost(buyer).cost(p);
            for (tp, o) in out.iter_mut().take(b.num_types()).enumerate() {
                *o = b.values[tp][q[buyer]] - c;
            }
            out[b.num_types()] = p;
        }
        (Allocation::Units(q), Setting::SellerUtility) => {
            out[grid_index(inst, p.round() as i64, q[buyer])] = 1.0;
        }
        (Allocation::Procured(x), Setting::Procurement) => {
            out[0] = if x[buyer] { 1.0 } else { 0.0 };
            out[1] = p;
        }
        (Allocation::Items(x), Setting::MultiItem) => {
            out[..inst.items].copy_from_slice(&x[buyer]);
            out[inst.items] = p;
        }
        _ => panic!("outcome does not match the {} setting", inst.setting.name()),
    }
    out
}

/// Range `[lo, hi]` of a feature over every feasible outcome where buyer `i`
/// reports `t_rep`. Also the box of the matching holistic variable.
pub fn feature_range(inst: &Instance, buyer: usize, t_rep: usize, f: usize) -> (f64, f64) {
    let b = &inst.buyers[buyer];
    let vmax_type = |t: usize| b.values.get(t).map_or(0.0, |v| v.iter().copied().fold(0.0, f64::max));
    let vmax_all = (0..b.num_types()).map(vmax_type).fold(0.0, f64::max);
    let budget = inst.budget(buyer, t_rep).min(inst.scale);
    let is_pay = Some(f) == payment_feature(inst, buyer);
    match inst.setting {
        Setting::MultiUnit => {
            if is_pay {
                (0.0, budget.min(vmax_type(t_rep)))
            } else {
                (0.0, 1.0)
            }
        }
        Setting::QuittingRights => {
            if is_pay {
                (0.0, budget.min(vmax_type(t_rep)))
            } else {
                (0.0, vmax_all)
            }
        }
        Setting::SoftBudget => {
            if is_pay {
                (0.0, budget.min(vmax_type(t_rep)))
            } else {
                (-vmax_all, vmax_all)
            }
        }
        Setting::SellerUtility => (0.0, 1.0),
        Setting::Procurement => {
            if is_pay {
                (0.0, inst.procurement_budget.unwrap_or(0) as f64)
            } else {
                (0.0, 1.0)
            }
        }
        Setting::MultiItem => {
            if is_pay {
                let total: f64 = b.values[t_rep].iter().map(|v| v.max(0.0)).sum();
                (0.0, budget.min(total))
            } else {
                (0.0, 1.0)
            }
        }
    }
}

/// Coefficients `c` with `utility of true type t_real = c . features`.
pub fn utility_coefficients(inst: &Instance, buyer: usize, t_real: usize) -> Vec<f64> {
    let b = &inst.buyers[buyer];
    let mut c = vec![0.0; feature_count(inst, buyer)];
    match inst.setting {
        Setting::MultiUnit => {
            c[..=inst.items].copy_from_slice(&b.values[t_real]);
            c[inst.items + 1] = -1.0;
        }
        Setting::QuittingRights | Setting::SoftBudget => c[t_real] = 1.0,
        Setting::SellerUtility => {
            let l = inst.int_scale();
            for p in -l..=l {
                for q in 0..=inst.items {
                    c[grid_index(inst, p, q)] = inst.buyer_utility(buyer, p, q, t_real);
                }
            }
        }
        Setting::Procurement => {
            c[0] = -(b.cost[t_real] as f64);
            c[1] = 1.0;
        }
        Setting::MultiItem => {
            c[..inst.items].copy_from_slice(&b.values[t_real]);
            c[inst.items] = -1.0;
        }
    }
    c
}

/// Whether the setting has a scenario-wide objective row.
pub fn has_global_row(inst: &Instance) -> bool {
    matches!(inst.setting, Setting::SellerUtility | Setting::Procurement)
}

/// The scenario-wide quantity: seller utility of revenue, or procured value.
pub fn global_value(inst: &Instance, outcome: &Outcome) -> Result<f64> {
    match (&outcome.allocation, inst.setting) {
        (_, Setting::SellerUtility) => inst.seller_utility(outcome.revenue().round() as i64),
        (Allocation::Procured(x), Setting::Procurement) => Ok(x
            .iter()
            .zip(&inst.buyers)
            .filter(|(s, _)| **s)
            .map(|(_, b)| b.item_value)
            .sum()),
        _ => Ok(0.0),
    }
}

/// The seller's objective for an outcome: revenue, seller utility, or procured value.
pub fn seller_objective(inst: &Instance, outcome: &Outcome) -> Result<f64> {
    if has_global_row(inst) {
        global_value(inst, outcome)
    } else {
        Ok(outcome.revenue())
    }
}

/// Direct evaluation of the scenario objective.
pub fn objective(inst: &Instance, w: &ScenarioWeights, outcome: &Outcome) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..inst.num_buyers() {
        let phi = features(inst, i, outcome);
        total += phi.iter().zip(&w.buyers[i]).map(|(a, b)| a * b).sum::<f64>();
    }
    if has_global_row(inst) && w.gamma != 0.0 {
        total += w.gamma * global_value(inst, outcome)?;
    }
    Ok(total)
}

/// Dispatch to the setting's exact oracle.
pub fn solve_scenario(inst: &Instance, t: &TypeVector, w: &ScenarioWeights) -> Result<(Outcome, f64)> {
    match inst.setting {
        Setting::MultiUnit => Ok(oracle_multi_unit(inst, t, w)),
        Setting::QuittingRights => Ok(oracle_quitting_rights(inst, t, w)),
        Setting::SoftBudget => Ok(oracle_soft_budget(inst, t, w)),
        Setting::SellerUtility => oracle_seller_utility(inst, t, w),
        Setting::Procurement => Ok(oracle_procurement(inst, t, w)),
        Setting::MultiItem if inst.inequality_mode => oracle_welfare_downward_closed(inst, t, w),
        Setting::MultiItem => oracle_multi_item_lp(inst, t, w),
    }
}

/// Counts of broken feasibility rows in one outcome.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violations {
    pub ir: usize,
    pub budget: usize,
    pub supply: usize,
    pub other: usize,
}

impl Violations {
    pub fn total(&self) -> usize {
        self.ir + self.budget + self.supply + self.other
    }

    pub fn add(&mut self, o: Violations) {
        self.ir += o.ir;
        self.budget += o.budget;
        self.supply += o.supply;
        self.other += o.other;
    }
}

const LP_ROW_TOL: f64 = 1e-7;

/// Exact membership check of `outcome` in the scenario's feasible set.
///
/// IR, budget and supply rows are checked without tolerance. Polytope and
/// envy-freeness rows use `1e-7`. In inequality mode payments are all-pay
/// and only interim IR is promised, so ex-post IR is not checked.
pub fn check_membership(inst: &Instance, t: &TypeVector, outcome: &Outcome) -> Violations {
    let mut v = Violations::default();
    let n = inst.num_buyers();
    let m = inst.items;
    let pay = &outcome.payments;
    if pay.len() != n {
        v.other += 1;
        return v;
    }
    match (&outcome.allocation, inst.setting) {
        (Allocation::Units(q), s) if s.is_multi_unit_family() => {
            if q.len() != n || q.iter().any(|&x| x > m) {
                v.other += 1;
                return v;
            }
            if q.iter().sum::<usize>() > m {
                v.supply += 1;
            }
            for i in 0..n {
                let ti = t.get(i);
                let value = inst.value(i, q[i], ti);
                if pay[i] < 0.0 || pay[i] > inst.budget(i, ti) {
                    v.budget += 1;
                }
                let ir_ok = match s {
                    Setting::SoftBudget => inst.soft_cost(i).cost(pay[i]) <= value,
                    _ => pay[i] <= value,
                };
                if !ir_ok {
                    v.ir += 1;
                }
            }
        }
        (Allocation::Units(q), Setting::SellerUtility) => {
            if q.len() != n || q.iter().any(|&x| x > m) {
                v.other += 1;
                return v;
            }
            if q.iter().sum::<usize>() > m {
                v.supply += 1;
            }
            let l = inst.int_scale();
            for i in 0..n {
                let p = pay[i];
                if p.fract() != 0.0 || p.abs() > l as f64 {
                    v.other += 1;
                    continue;
                }
                if inst.buyer_utility(i, p as i64, q[i], t.get(i)) < 0.0 {
                    v.ir += 1;
                }
            }
        }
        (Allocation::Procured(x), Setting::Procurement) => {
            let budget = inst.procurement_budget.unwrap_or(0) as f64;
            if pay.iter().sum::<f64>() > budget {
                v.budget += 1;
            }
            for i in 0..n {
                let c = inst.buyers[i].cost[t.get(i)] as f64;
                if x[i] && pay[i] < c {
                    v.ir += 1;
                }
                if pay[i] < 0.0 {
                    v.other += 1;
                }
            }
        }
        (Allocation::Items(x), Setting::MultiItem) => {
            for j in 0..m {
                let mut total = 0.0;
                for row in x.iter() {
                    let f = row[j];
                    if !(0.0..=1.0).contains(&f) {
                        v.other += 1;
                    }
                    total += f;
                }
                if total > inst.supply(j) {
                    v.supply += 1;
                }
            }
            let utility = |i: usize, k: usize| -> f64 {
                let vals = &inst.buyers[i].values[t.get(i)];
                (0..m).map(|j| vals[j] * x[k][j]).sum::<f64>() - pay[k]
            };
            for i in 0..n {
                if pay[i] < 0.0 || pay[i] > inst.budget(i, t.get(i)) {
                    v.budget += 1;
                }
                if !inst.inequality_mode {
                    let vals = &inst.buyers[i].values[t.get(i)];
                    let welfare: f64 = (0..m).map(|j| vals[j] * x[i][j]).sum();
                    if pay[i] > welfare {
                        v.ir += 1;
                    }
                }
            }
            if !inst.inequality_mode {
                let flat: Vec<f64> = x.iter().flatten().copied().chain(pay.iter().copied()).collect();
                for row in &inst.polytope {
                    let lhs: f64 = row.coeffs.iter().zip(&flat).map(|(a, b)| a * b).sum();
                    if lhs > row.rhs + LP_ROW_TOL {
                        v.other += 1;
                    }
                }
                if inst.envy_free {
                    for i in 0..n {
                        for k in 0..n {
                            if i != k && utility(i, k) > utility(i, i) + LP_ROW_TOL {
                                v.other += 1;
                            }
                        }
                    }
                }
            }
        }
        _ => v.other += 1,
    }
    v
}

/// Largest float strictly below a positive `x`.
pub(crate) fn prev_float(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        f64::from_bits(x.to_bits() - 1)
    }
}

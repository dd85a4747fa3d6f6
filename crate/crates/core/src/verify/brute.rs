//! Brute-force ground truth: the optimal randomized mechanism as an LP over
//! per-scenario action distributions, and an exhaustive scenario oracle.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{report_vectors, Interim};
use crate::error::{Error, Result};
use crate::lp::{solve_lp, Constraint, LinearProgram, LpStatus, Sense};
use crate::model::{Instance, Setting, TypeVector, DEFAULT_ENUMERATION_CAP};
use crate::oracles::{
    bic_pairs, feature_count, features, objective, quitting_candidates, seller_objective, soft_budget_candidates,
    utility_coefficients, Allocation, Layout, Outcome, ScenarioWeights, Violations,
};

/// Largest LP (in columns) the brute force builds.
pub const DEFAULT_COLUMN_CAP: usize = 100_000;

/// Largest per-scenario action set.
const ACTION_CAP: u128 = 200_000;

/// Every unit vector `q` with `sum q <= m`.
fn unit_allocations(n: usize, m: usize) -> Vec<Vec<usize>> {
    fn rec(i: usize, n: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        for q in 0..=left {
            cur.push(q);
            rec(i + 1, n, left - q, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, m, &mut Vec::new(), &mut out);
    out
}

/// Cartesian product of per-buyer payment lists.
fn payment_product(lists: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for l in lists {
        let mut next = Vec::with_capacity(out.len() * l.len());
        for prefix in &out {
            for &p in l {
                let mut v = prefix.clone();
                v.push(p);
                next.push(v);
            }
        }
        out = next;
    }
    out
}

fn check_size(size: u128) -> Result<()> {
    if size > ACTION_CAP {
        return Err(Error::CapExceeded { size, cap: ACTION_CAP });
    }
    Ok(())
}

/// The finite action set of a scenario whose convex hull (in feature space)
/// is the hull of its feasible outcomes. Not defined for multi-item.
pub fn action_set(inst: &Instance, t: &TypeVector) -> Result<Vec<Outcome>> {
    let n = inst.num_buyers();
    let m = inst.items;
    let mut out = Vec::new();
    match inst.setting {
        Setting::MultiUnit | Setting::QuittingRights | Setting::SoftBudget | Setting::SellerUtility => {
            for q in unit_allocations(n, m) {
                let lists: Vec<Vec<f64>> = (0..n)
                    .map(|i| {
                        let ti = t.get(i);
                        match inst.setting {
                            Setting::MultiUnit => {
                                let cap = inst.budget(i, ti).min(inst.value(i, q[i], ti)).max(0.0);
                                if cap > 0.0 {
                                    vec![0.0, cap]
                                } else {
                                    vec![0.0]
                                }
                            }
                            Setting::QuittingRights => quitting_candidates(inst, i, q[i], ti),
                            Setting::SoftBudget => soft_budget_candidates(inst, i, q[i], ti),
                            _ => {
                                let l = inst.int_scale();
                                (-l..=l)
                                    .filter(|&p| inst.buyer_utility(i, p, q[i], ti) >= 0.0)
                                    .map(|p| p as f64)
                                    .collect()
                            }
                        }
                    })
                    .collect();
                check_size(lists.iter().map(|l| l.len() as u128).product::<u128>() * (out.len() as u128 + 1))?;
                for payments in payment_product(&lists) {
                    out.push(Outcome {
                        allocation: Allocation::Units(q.clone()),
                        payments,
                    });
                }
            }
        }
        Setting::Procurement => {
            check_size(1u128 << n.min(100))?;
            let budget = inst.procurement_budget.unwrap_or(0);
            let cost: Vec<i64> = (0..n).map(|i| inst.buyers[i].cost[t.get(i)]).collect();
            for mask in 0u64..(1u64 << n) {
                let chosen: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
                let spent: i64 = (0..n).filter(|&i| chosen[i]).map(|i| cost[i]).sum();
                if spent > budget {
                    continue;
                }
                let base: Vec<f64> = (0..n).map(|i| if chosen[i] { cost[i] as f64 } else { 0.0 }).collect();
                out.push(Outcome {
                    allocation: Allocation::Procured(chosen.clone()),
                    payments: base.clone(),
                });
                if spent < budget {
                    for i in (0..n).filter(|&i| chosen[i]) {
                        let mut p = base.clone();
                        p[i] += (budget - spent) as f64;
                        out.push(Outcome {
                            allocation: Allocation::Procured(chosen.clone()),
                            payments: p,
                        });
                    }
                }
            }
        }
        Setting::MultiItem => {
            return Err(Error::Unsupported(
                "multi-item scenarios are continuous; use the LP form".into(),
            ));
        }
    }
    Ok(out)
}

/// Exhaustive scenario oracle: the best action under `w`. Multi-item uses
/// vertex enumeration of the scenario LP.
pub fn brute_force_oracle(inst: &Instance, t: &TypeVector, w: &ScenarioWeights) -> Result<(Outcome, f64)> {
    if inst.setting == Setting::MultiItem {
        return multi_item_vertices(inst, t, w);
    }
    let mut best: Option<(Outcome, f64)> = None;
    for a in action_set(inst, t)? {
        let v = objective(inst, w, &a)?;
        if best.as_ref().is_none_or(|(_, bv)| v > *bv) {
            best = Some((a, v));
        }
    }
    best.ok_or_else(|| Error::InfeasibleScenario(format!("types {:?}: no action", t.0)))
}

fn multi_item_vertices(inst: &Instance, t: &TypeVector, w: &ScenarioWeights) -> Result<(Outcome, f64)> {
    let n = inst.num_buyers();
    let m = inst.items;
    if inst.inequality_mode && (0..m).all(|j| inst.supply(j).fract() == 0.0) {
        return welfare_assignments(inst, w);
    }
    let (mut rows, mut bounds) = crate::oracles::scenario_rows(inst, t);
    if inst.inequality_mode {
        // Supply rows only, no payments.
        rows.truncate(m);
        for b in bounds.iter_mut().skip(n * m) {
            *b = (0.0, 0.0);
        }
    }
    let mut obj = vec![0.0; n * m + n];
    for i in 0..n {
        obj[i * m..(i + 1) * m].copy_from_slice(&w.buyers[i][..m]);
        obj[n * m + i] = w.buyers[i][m];
    }
    let (x, v) = super::vertex_maximize(&obj, &rows, &bounds)
        .ok_or_else(|| Error::InfeasibleScenario(format!("types {:?}", t.0)))?;
    Ok((
        Outcome {
            allocation: Allocation::Items((0..n).map(|i| x[i * m..(i + 1) * m].to_vec()).collect()),
            payments: x[n * m..].to_vec(),
        },
        v,
    ))
}

/// With integral supply the welfare polytope's vertices are the 0/1
/// allocations within supply, so enumerate those.
fn welfare_assignments(inst: &Instance, w: &ScenarioWeights) -> Result<(Outcome, f64)> {
    let n = inst.num_buyers();
    let m = inst.items;
    check_size(1u128 << (n * m).min(100))?;
    let mut best = (vec![vec![0.0; m]; n], 0.0);
    for mask in 0u64..(1u64 << (n * m)) {
        let x: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..m).map(|j| (mask >> (i * m + j) & 1) as f64).collect())
            .collect();
        if (0..m).any(|j| (0..n).map(|i| x[i][j]).sum::<f64>() > inst.supply(j)) {
            continue;
        }
        let v: f64 = (0..n)
            .flat_map(|i| (0..m).map(move |j| (i, j)))
            .map(|(i, j)| w.buyers[i][j] * x[i][j])
            .sum();
        if v > best.1 {
            best = (x, v);
        }
    }
    Ok((
        Outcome {
            allocation: Allocation::Items(best.0),
            payments: vec![0.0; n],
        },
        best.1,
    ))
}

/// The optimal mechanism's lottery at one report vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioPlan {
    pub types: TypeVector,
    pub actions: Vec<(Outcome, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BruteForce {
    /// Optimal expected revenue (seller utility, procured value).
    pub opt: f64,
    pub plans: Vec<ScenarioPlan>,
}

/// Columns of one report vector's block.
enum Block {
    /// One column per action, weights summing to one.
    Discrete { offset: usize, actions: Vec<Outcome> },
    /// `x` (row-major) then payments.
    Continuous { offset: usize },
}

impl Block {
    /// Sparse `(column, coefficient)` form of `c . features_i`.
    fn linear(&self, inst: &Instance, buyer: usize, c: &[f64]) -> Vec<(usize, f64)> {
        match self {
            Block::Discrete { offset, actions } => actions
                .iter()
                .enumerate()
                .map(|(a, o)| {
                    let phi = features(inst, buyer, o);
                    (offset + a, phi.iter().zip(c).map(|(x, y)| x * y).sum())
                })
                .collect(),
            Block::Continuous { offset } => {
                let n = inst.num_buyers();
                let m = inst.items;
                let mut out: Vec<(usize, f64)> = (0..m).map(|j| (offset + buyer * m + j, c[j])).collect();
                out.push((offset + n * m + buyer, c[m]));
                out
            }
        }
    }

    fn objective(&self, inst: &Instance) -> Result<Vec<(usize, f64)>> {
        match self {
            Block::Discrete { offset, actions } => actions
                .iter()
                .enumerate()
                .map(|(a, o)| Ok((offset + a, seller_objective(inst, o)?)))
                .collect(),
            Block::Continuous { offset } => {
                let n = inst.num_buyers();
                let m = inst.items;
                Ok((0..n).map(|i| (offset + n * m + i, 1.0)).collect())
            }
        }
    }
}

/// Exact optimum over randomized mechanisms: per report vector a lottery
/// over the action set (or a point of the multi-item scenario polytope),
/// with exact BIC rows.
/// Sparse coefficients, relation, right-hand side.
type SparseRow = (Vec<(usize, f64)>, crate::lp::Relation, f64);

pub fn brute_force_opt(inst: &Instance) -> Result<BruteForce> {
    brute_force_opt_capped(inst, DEFAULT_COLUMN_CAP)
}

pub fn brute_force_opt_capped(inst: &Instance, column_cap: usize) -> Result<BruteForce> {
    if inst.inequality_mode {
        return Err(Error::Unsupported("brute force in inequality mode".into()));
    }
    let counts = inst.type_counts();
    let support = inst.prior.enumerate(&counts, DEFAULT_ENUMERATION_CAP)?;
    let reports = report_vectors(inst, &support);
    let n = inst.num_buyers();
    let m = inst.items;

    let mut blocks = Vec::with_capacity(reports.len());
    let mut index = BTreeMap::new();
    let mut cols = 0usize;
    let mut bounds: Vec<(f64, f64)> = Vec::new();
    let mut rows: Vec<SparseRow> = Vec::new();
    for (k, t) in reports.iter().enumerate() {
        index.insert(t.clone(), k);
        let block = if inst.setting == Setting::MultiItem {
            let (r, b) = crate::oracles::scenario_rows(inst, t);
            for c in r {
                let sparse = c
                    .coeffs
                    .iter()
                    .enumerate()
                    .filter(|e| *e.1 != 0.0)
                    .map(|(j, v)| (cols + j, *v))
                    .collect();
                rows.push((sparse, c.relation, c.rhs));
            }
            bounds.extend(b);
            let blk = Block::Continuous { offset: cols };
            cols += n * m + n;
            blk
        } else {
            let actions = action_set(inst, t)?;
            rows.push((
                (cols..cols + actions.len()).map(|j| (j, 1.0)).collect(),
                crate::lp::Relation::Eq,
                1.0,
            ));
            bounds.extend(std::iter::repeat_n((0.0, 1.0), actions.len()));
            let blk = Block::Discrete { offset: cols, actions };
            cols += match &blk {
                Block::Discrete { actions, .. } => actions.len(),
                _ => unreachable!(),
            };
            blk
        };
        if cols > column_cap {
            return Err(Error::CapExceeded {
                size: cols as u128,
                cap: column_cap as u128,
            });
        }
        blocks.push(block);
    }

    for i in 0..n {
        for (t, tp) in bic_pairs(inst, i) {
            let u = utility_coefficients(inst, i, t);
            let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
            for (s, p) in support.iter().filter(|(s, _)| s.get(i) == t) {
                for (c, v) in blocks[index[s]].linear(inst, i, &u) {
                    *acc.entry(c).or_default() += p * v;
                }
                for (c, v) in blocks[index[&s.with(i, tp)]].linear(inst, i, &u) {
                    *acc.entry(c).or_default() -= p * v;
                }
            }
            rows.push((acc.into_iter().collect(), crate::lp::Relation::Ge, 0.0));
        }
    }

    let mut obj = vec![0.0; cols];
    for (s, p) in &support {
        for (c, v) in blocks[index[s]].objective(inst)? {
            obj[c] += p * v;
        }
    }
    let mut lp = LinearProgram::new(Sense::Maximize, obj);
    lp.bounds = bounds;
    for (sparse, rel, rhs) in rows {
        let mut dense = vec![0.0; cols];
        for (c, v) in sparse {
            dense[c] += v;
        }
        lp.push(Constraint::new(dense, rel, rhs));
    }
    let sol = solve_lp(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::InfeasibleScenario(format!("brute-force LP: {:?}", sol.status)));
    }

    let plans = reports
        .iter()
        .zip(&blocks)
        .map(|(t, b)| {
            let actions = match b {
                Block::Discrete { offset, actions } => actions
                    .iter()
                    .enumerate()
                    .filter(|(a, _)| sol.values[offset + a] > 1e-12)
                    .map(|(a, o)| (o.clone(), sol.values[offset + a]))
                    .collect(),
                Block::Continuous { offset } => {
                    let x = &sol.values[*offset..*offset + n * m + n];
                    vec![(
                        Outcome {
                            allocation: Allocation::Items((0..n).map(|i| x[i * m..(i + 1) * m].to_vec()).collect()),
                            payments: x[n * m..].to_vec(),
                        },
                        1.0,
                    )]
                }
            };
            ScenarioPlan {
                types: t.clone(),
                actions,
            }
        })
        .collect();
    Ok(BruteForce {
        opt: sol.objective_value,
        plans,
    })
}

impl BruteForce {
    /// Interim tables of the optimal lotteries.
    pub fn interim(&self, inst: &Instance) -> Result<Interim> {
        let counts = inst.type_counts();
        let support = inst.prior.enumerate(&counts, DEFAULT_ENUMERATION_CAP)?;
        let marginals = inst.prior.marginals(&counts);
        let mut feats: BTreeMap<&TypeVector, Vec<Vec<f64>>> = BTreeMap::new();
        for plan in &self.plans {
            let mut f: Vec<Vec<f64>> = (0..inst.num_buyers())
                .map(|i| vec![0.0; feature_count(inst, i)])
                .collect();
            for (o, w) in &plan.actions {
                for (i, fi) in f.iter_mut().enumerate() {
                    for (a, b) in fi.iter_mut().zip(features(inst, i, o)) {
                        *a += w * b;
                    }
                }
            }
            feats.insert(&plan.types, f);
        }
        let layout = Layout::new(inst, true);
        let mut table = vec![0.0; layout.len()];
        let mut objective_value = 0.0;
        for (t, p) in &support {
            let plan = self
                .plans
                .iter()
                .find(|pl| &pl.types == t)
                .expect("plan for every support point");
            for (o, w) in &plan.actions {
                objective_value += p * w * seller_objective(inst, o)?;
            }
            for i in 0..inst.num_buyers() {
                let tr = t.get(i);
                for tp in 0..counts[i] {
                    let f = &feats[&t.with(i, tp)][i];
                    let base = layout.cell(i, tr, tp, 0);
                    for (k, x) in f.iter().enumerate() {
                        table[base + k] += p / marginals[i][tr] * x;
                    }
                }
            }
        }
        Ok(Interim {
            layout,
            table,
            half_width: None,
            objective: objective_value,
            objective_half_width: 0.0,
            violations: Violations::default(),
            outcomes_checked: 0,
        })
    }
}

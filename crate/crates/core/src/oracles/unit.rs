//! Oracles for identical units: plain multi-unit, quitting rights, soft
//! budgets (one DP over buyers and remaining units) and the seller-utility
//! DP over buyers, units and accumulated revenue.

use super::{grid_index, prev_float, Allocation, Outcome, ScenarioWeights};
use crate::error::{Error, Result};
use crate::model::{Instance, TypeVector};

/// Best `(value, payment)` per buyer and quantity, then a DP over buyers
/// (last to first) and remaining units. Ties go to the lower quantity for
/// the earlier buyer.
fn allocate_units(inst: &Instance, best: impl Fn(usize, usize) -> (f64, f64)) -> (Outcome, f64) {
    let n = inst.num_buyers();
    let m = inst.items;
    let table: Vec<Vec<(f64, f64)>> = (0..n).map(|i| (0..=m).map(|q| best(i, q)).collect()).collect();
    // value[i][k]: best total of buyers i.. with at most k units left.
    let mut value = vec![vec![0.0; m + 1]; n + 1];
    let mut choice = vec![vec![0usize; m + 1]; n];
    for i in (0..n).rev() {
        for k in 0..=m {
            let mut top = f64::NEG_INFINITY;
            for j in 0..=k {
                let v = table[i][j].0 + value[i + 1][k - j];
                if v > top {
                    top = v;
                    choice[i][k] = j;
                }
            }
            value[i][k] = top;
        }
    }
    let mut q = vec![0; n];
    let mut pay = vec![0.0; n];
    let mut k = m;
    for i in 0..n {
        q[i] = choice[i][k];
        pay[i] = table[i][q[i]].1;
        k -= q[i];
    }
    (
        Outcome {
            allocation: Allocation::Units(q),
            payments: pay,
        },
        value[0][m],
    )
}

/// Among `candidates` (ascending), the payment maximizing `score`; ties to the lower payment.
fn best_payment(candidates: &[f64], score: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut top = f64::NEG_INFINITY;
    let mut arg = 0.0;
    for &p in candidates {
        let s = score(p);
        if s > top {
            top = s;
            arg = p;
        }
    }
    (top, arg)
}

fn sorted_unique(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

pub fn oracle_multi_unit(inst: &Instance, t: &TypeVector, w: &ScenarioWeights) -> (Outcome, f64) {
    let m = inst.items;
    allocate_units(inst, |i, q| {
        let ti = t.get(i);
        let wi = &w.buyers[i];
        let beta = wi[m + 1];
        let p = if beta > 0.0 {
            inst.budget(i, ti).min(inst.value(i, q, ti))
        } else {
            0.0
        };
        (wi[q] + beta * p, p)
    })
}

/// Payment candidates for quitting rights: `0`, the IR/budget cap, and every
/// type's value for `q` below the cap.
pub fn quitting_candidates(inst: &Instance, buyer: usize, q: usize, ty: usize) -> Vec<f64> {
    let cap = inst.budget(buyer, ty).min(inst.value(buyer, q, ty)).max(0.0);
    let mut c = vec![0.0, cap];
    for row in &inst.buyers[buyer].values {
        if row[q] > 0.0 && row[q] < cap {
            c.push(row[q]);
        }
    }
    sorted_unique(c)
}

pub fn oracle_quitting_rights(inst: &Instance, t: &TypeVector, w: &ScenarioWeights) -> (Outcome, f64) {
    allocate_units(inst, |i, q| {
        let ti = t.get(i);
        let wi = &w.buyers[i];
        let b = &inst.buyers[i];
        let k = b.num_types();
        best_payment(&quitting_candidates(inst, i, q, ti), |p| {
            let mut s = 0.0;
            for tp in 0..k {
                s += wi[tp] * (b.values[tp][q] - p).max(0.0);
            }
            s + wi[k] * p
        })
    })
}

/// Payment candidates for soft budgets: `0`, the largest payment whose cost
/// fits the value and the budget, the cost breakpoints below it, and the
/// value itself when below it.
pub fn soft_budget_candidates(inst: &Instance, buyer: usize, q: usize, ty: usize) -> Vec<f64> {
    let cost = inst.soft_cost(buyer);
    let value = inst.value(buyer, q, ty);
    let mut cap = inst.budget(buyer, ty).min(cost.inverse(value)).max(0.0);
    while cap > 0.0 && cost.cost(cap) > value {
        cap = prev_float(cap);
    }
    let mut c = vec![0.0, cap];
    for &k in &cost.knots {
        if k > 0.0 && k < cap {
            c.push(k);
        }
    }
    if value > 0.0 && value < cap {
        c.push(value);
    }
    sorted_unique(c)
}

pub fn oracle_soft_budget(inst: &Instance, t: &TypeVector, w: &ScenarioWeights) -> (Outcome, f64) {
    allocate_units(inst, |i, q| {
        let ti = t.get(i);
        let wi = &w.buyers[i];
        let b = &inst.buyers[i];
        let k = b.num_types();
        let cost = inst.soft_cost(i);
        best_payment(&soft_budget_candidates(inst, i, q, ti), |p| {
            let c = cost.cost(p);
            let mut s = 0.0;
            for tp in 0..k {
                s += wi[tp] * (b.values[tp][q] - c);
            }
            s + wi[k] * p
        })
    })
}

/// DP over buyers, remaining units and accumulated revenue `z`, with the
/// seller-utility term `gamma * U(z)` charged once all buyers are placed.
pub fn oracle_seller_utility(inst: &Instance, t: &TypeVector, w: &ScenarioWeights) -> Result<(Outcome, f64)> {
    if inst.scale.fract() != 0.0 {
        return Err(Error::NonIntegerPayment(inst.scale));
    }
    let n = inst.num_buyers();
    let m = inst.items;
    let l = inst.int_scale();
    let span = n as i64 * l;
    let width = (2 * span + 1) as usize;
    let idx = |z: i64| (z + span) as usize;
    let mut terminal = vec![0.0; width];
    if w.gamma != 0.0 {
        for z in -span..=span {
            terminal[idx(z)] = w.gamma * inst.seller_utility(z)?;
        }
    }
    // Feasible (p, q) per buyer, u(p, q, t_i) >= 0, in tie-break order:
    // fewer units first, then payments closest to zero.
    let options: Vec<Vec<(usize, i64)>> = (0..n)
        .map(|i| {
            let ti = t.get(i);
            let mut payments: Vec<i64> = (-l..=l).collect();
            payments.sort_by_key(|p| (p.abs(), *p));
            let mut o = Vec::new();
            for q in 0..=m {
                for &p in &payments {
                    if inst.buyer_utility(i, p, q, ti) >= 0.0 {
                        o.push((q, p));
                    }
                }
            }
            o
        })
        .collect();

    // value[i][k][z]: best over buyers i.. with k units left and revenue z so far.
    let mut next = vec![vec![0.0; width]; m + 1];
    for row in next.iter_mut() {
        row.copy_from_slice(&terminal);
    }
    let mut choices: Vec<Vec<Vec<(usize, i64)>>> = vec![vec![vec![(0, 0); width]; m + 1]; n];
    for i in (0..n).rev() {
        let reach = i as i64 * l;
        let mut cur = vec![vec![f64::NEG_INFINITY; width]; m + 1];
        for k in 0..=m {
            for z in -reach..=reach {
                let mut top = f64::NEG_INFINITY;
                let mut arg = (0, 0);
                for &(q, p) in &options[i] {
                    if q > k {
                        continue;
                    }
                    let v = w.buyers[i][grid_index(inst, p, q)] + next[k - q][idx(z + p)];
                    if v > top {
                        top = v;
                        arg = (q, p);
                    }
                }
                cur[k][idx(z)] = top;
                choices[i][k][idx(z)] = arg;
            }
        }
        next = cur;
    }
    let total = next[m][idx(0)];
    let mut q = vec![0; n];
    let mut pay = vec![0.0; n];
    let (mut k, mut z) = (m, 0i64);
    for i in 0..n {
        let (qi, pi) = choices[i][k][idx(z)];
        q[i] = qi;
        pay[i] = pi as f64;
        k -= qi;
        z += pi;
    }
    Ok((
        Outcome {
            allocation: Allocation::Units(q),
            payments: pay,
        },
        total,
    ))
}

//! Heterogeneous items: the per-scenario LP, and the welfare oracle used
//! when only interim constraints are imposed.

use super::{Allocation, Outcome, ScenarioWeights};
use crate::error::{Error, Result};
use crate::lp::{solve_lp, Constraint, LinearProgram, LpStatus, Sense};
use crate::model::{Instance, TypeVector};

/// Rows of one scenario's feasible set over `(x_ij..., p_i...)`, row-major in `x`.
pub(crate) fn scenario_rows(inst: &Instance, t: &TypeVector) -> (Vec<Constraint>, Vec<(f64, f64)>) {
    let n = inst.num_buyers();
    let m = inst.items;
    let dim = n * m + n;
    let mut rows = Vec::new();
    for j in 0..m {
        let mut c = vec![0.0; dim];
        for i in 0..n {
            c[i * m + j] = 1.0;
        }
        rows.push(Constraint::le(c, inst.supply(j)));
    }
    for r in &inst.polytope {
        rows.push(Constraint::le(r.coeffs.clone(), r.rhs));
    }
    // utility[i][k]: buyer i's utility for buyer k's bundle, as a row.
    let utility = |i: usize, k: usize| {
        let mut c = vec![0.0; dim];
        let vals = &inst.buyers[i].values[t.get(i)];
        for j in 0..m {
            c[k * m + j] = vals[j];
        }
        c[n * m + k] = -1.0;
        c
    };
    for i in 0..n {
        rows.push(Constraint::ge(utility(i, i), 0.0));
    }
    if inst.envy_free {
        for i in 0..n {
            for k in 0..n {
                if i != k {
                    let c: Vec<f64> = utility(i, i).iter().zip(utility(i, k)).map(|(a, b)| a - b).collect();
                    rows.push(Constraint::ge(c, 0.0));
                }
            }
        }
    }
    let mut bounds = vec![(0.0, 1.0); n * m];
    for i in 0..n {
        bounds.push((0.0, inst.budget(i, t.get(i))));
    }
    (rows, bounds)
}

/// Nudge an LP solution so supply, IR and budget rows hold exactly.
fn repair(inst: &Instance, t: &TypeVector, x: &mut [Vec<f64>], pay: &mut [f64]) {
    let n = inst.num_buyers();
    let m = inst.items;
    for row in x.iter_mut() {
        for v in row.iter_mut() {
            *v = v.clamp(0.0, 1.0);
        }
    }
    for j in 0..m {
        loop {
            let total: f64 = (0..n).map(|i| x[i][j]).sum();
            let excess = total - inst.supply(j);
            if excess <= 0.0 {
                break;
            }
            let top = (0..n)
                .max_by(|&a, &b| x[a][j].total_cmp(&x[b][j]))
                .expect("at least one buyer");
            x[top][j] = (x[top][j] - excess.max(f64::EPSILON)).max(0.0);
        }
    }
    for i in 0..n {
        let vals = &inst.buyers[i].values[t.get(i)];
        let welfare: f64 = (0..m).map(|j| vals[j] * x[i][j]).sum();
        pay[i] = pay[i].max(0.0).min(inst.budget(i, t.get(i))).min(welfare.max(0.0));
    }
}

pub fn oracle_multi_item_lp(inst: &Instance, t: &TypeVector, w: &ScenarioWeights) -> Result<(Outcome, f64)> {
    let n = inst.num_buyers();
    let m = inst.items;
    let (rows, bounds) = scenario_rows(inst, t);
    let mut objective = vec![0.0; n * m + n];
    for i in 0..n {
        objective[i * m..(i + 1) * m].copy_from_slice(&w.buyers[i][..m]);
        objective[n * m + i] = w.buyers[i][m];
    }
    let lp = LinearProgram {
        sense: Sense::Maximize,
        objective,
        rows,
        bounds,
    };
    let sol = solve_lp(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::InfeasibleScenario(format!("types {:?}: {:?}", t.0, sol.status)));
    }
    let mut x: Vec<Vec<f64>> = (0..n).map(|i| sol.values[i * m..(i + 1) * m].to_vec()).collect();
    let mut pay: Vec<f64> = sol.values[n * m..].to_vec();
    repair(inst, t, &mut x, &mut pay);
    let outcome = Outcome {
        allocation: Allocation::Items(x),
        payments: pay,
    };
    let value = super::objective(inst, w, &outcome)?;
    Ok((outcome, value))
}

/// Each item goes to the buyers with the largest positive weight (whole
/// units, a fractional remainder for non-integral supply). Payments are zero.
pub fn oracle_welfare_downward_closed(inst: &Instance, _t: &TypeVector, w: &ScenarioWeights) -> Result<(Outcome, f64)> {
    let n = inst.num_buyers();
    let m = inst.items;
    for i in 0..n {
        for j in 0..m {
            let a = w.buyers[i][j];
            if a < 0.0 {
                return Err(Error::NegativeDual {
                    buyer: i,
                    item: j,
                    value: a,
                });
            }
        }
    }
    let mut x = vec![vec![0.0; m]; n];
    let mut value = 0.0;
    for j in 0..m {
        let mut order: Vec<usize> = (0..n).filter(|&i| w.buyers[i][j] > 0.0).collect();
        order.sort_by(|&a, &b| w.buyers[b][j].total_cmp(&w.buyers[a][j]).then(a.cmp(&b)));
        let mut left = inst.supply(j);
        for i in order {
            if left <= 0.0 {
                break;
            }
            let share = left.min(1.0);
            x[i][j] = share;
            value += w.buyers[i][j] * share;
            left -= share;
        }
    }
    Ok((
        Outcome {
            allocation: Allocation::Items(x),
            payments: vec![0.0; n],
        },
        value,
    ))
}

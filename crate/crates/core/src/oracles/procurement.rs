//! Budget-feasible procurement: knapsack with an optional top-up winner.

use super::{Allocation, Outcome, ScenarioWeights};
use crate::model::{Instance, TypeVector};

/// 0/1 knapsack over integer sizes. Returns the best total profit and the
/// chosen set; items with non-positive profit are never taken.
pub fn knapsack(sizes: &[usize], profits: &[f64], capacity: usize) -> (f64, Vec<bool>) {
    let k = sizes.len();
    // best[j][c]: best profit from items j.. with capacity c.
    let mut best = vec![vec![0.0; capacity + 1]; k + 1];
    for j in (0..k).rev() {
        for c in 0..=capacity {
            let skip = best[j + 1][c];
            best[j][c] = if sizes[j] <= c {
                let take = profits[j] + best[j + 1][c - sizes[j]];
                if take > skip {
                    take
                } else {
                    skip
                }
            } else {
                skip
            };
        }
    }
    let mut chosen = vec![false; k];
    let mut c = capacity;
    for j in 0..k {
        if sizes[j] <= c && profits[j] + best[j + 1][c - sizes[j]] > best[j + 1][c] {
            chosen[j] = true;
            c -= sizes[j];
        }
    }
    (best[0][capacity], chosen)
}

/// Maximizes `sum_i (alpha_i x_i + beta_i p_i) + gamma * sum_i v_i x_i`.
///
/// Either every procured agent is paid its cost, or one guessed winner `i`
/// also receives the unspent budget; then only agents with `beta_j <= beta_i`
/// are worth procuring alongside it.
pub fn oracle_procurement(inst: &Instance, t: &TypeVector, w: &ScenarioWeights) -> (Outcome, f64) {
    let n = inst.num_buyers();
    let budget = inst.procurement_budget.unwrap_or(0).max(0) as usize;
    let cost: Vec<usize> = (0..n).map(|i| inst.buyers[i].cost[t.get(i)].max(0) as usize).collect();
    let alpha: Vec<f64> = (0..n)
        .map(|i| w.buyers[i][0] + w.gamma * inst.buyers[i].item_value)
        .collect();
    let beta: Vec<f64> = (0..n).map(|i| w.buyers[i][1]).collect();

    let profits: Vec<f64> = (0..n).map(|i| alpha[i] + beta[i] * cost[i] as f64).collect();
    let (mut top, chosen) = knapsack(&cost, &profits, budget);
    let mut selected = chosen;
    let mut payments: Vec<f64> = (0..n).map(|i| if selected[i] { cost[i] as f64 } else { 0.0 }).collect();

    for i in 0..n {
        if cost[i] > budget {
            continue;
        }
        let others: Vec<usize> = (0..n).filter(|&j| j != i && beta[j] <= beta[i]).collect();
        let sizes: Vec<usize> = others.iter().map(|&j| cost[j]).collect();
        let prof: Vec<f64> = others
            .iter()
            .map(|&j| alpha[j] + (beta[j] - beta[i]) * cost[j] as f64)
            .collect();
        let (k, pick) = knapsack(&sizes, &prof, budget - cost[i]);
        let value = k + alpha[i] + beta[i] * budget as f64;
        if value > top {
            top = value;
            selected = vec![false; n];
            payments = vec![0.0; n];
            let mut spent = 0;
            for (&j, &p) in others.iter().zip(&pick) {
                if p {
                    selected[j] = true;
                    payments[j] = cost[j] as f64;
                    spent += cost[j];
                }
            }
            selected[i] = true;
            payments[i] = (budget - spent) as f64;
        }
    }
    (
        Outcome {
            allocation: Allocation::Procured(selected),
            payments,
        },
        top,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Budget, Buyer, Prior, Setting};

    fn agents(costs: &[i64], values: &[f64], budget: i64) -> Instance {
        let buyers = costs
            .iter()
            .zip(values)
            .map(|(&c, &v)| {
                let mut b = Buyer::new(vec!["t".into()], vec![], Budget::Public(0.0));
                b.cost = vec![c];
                b.item_value = v;
                b
            })
            .collect::<Vec<_>>();
        Instance {
            setting: Setting::Procurement,
            items: 1,
            scale: 4.0,
            prior: Prior::Independent(vec![vec![1.0]; buyers.len()]),
            buyers,
            seller_utility: None,
            procurement_budget: Some(budget),
            supply: Vec::new(),
            polytope: Vec::new(),
            envy_free: false,
            inequality_mode: false,
        }
    }

    #[test]
    fn knapsack_core() {
        let (v, pick) = knapsack(&[2, 3, 4], &[3.0, 4.0, 5.0], 5);
        assert_eq!(v, 7.0);
        assert_eq!(pick, vec![true, true, false]);
    }

    #[test]
    fn value_only() {
        let inst = agents(&[1, 2], &[3.0, 1.0], 3);
        let w = ScenarioWeights {
            buyers: vec![vec![0.0, 0.0]; 2],
            gamma: 1.0,
        };
        let (o, v) = oracle_procurement(&inst, &TypeVector(vec![0, 0]), &w);
        assert_eq!(o.allocation, Allocation::Procured(vec![true, true]));
        assert_eq!(o.payments, vec![1.0, 2.0]);
        assert_eq!(v, 4.0);
    }

    #[test]
    fn zero_budget() {
        let inst = agents(&[1, 2], &[3.0, 1.0], 0);
        let w = ScenarioWeights {
            buyers: vec![vec![1.0, 0.0]; 2],
            gamma: 1.0,
        };
        let (o, v) = oracle_procurement(&inst, &TypeVector(vec![0, 0]), &w);
        assert_eq!(o.allocation, Allocation::Procured(vec![false, false]));
        assert_eq!(v, 0.0);
    }

    #[test]
    fn winner_takes_leftover() {
        let inst = agents(&[1, 1], &[0.0, 0.0], 4);
        let w = ScenarioWeights {
            buyers: vec![vec![1.0, 0.5], vec![1.0, -0.25]],
            gamma: 0.0,
        };
        let (o, v) = oracle_procurement(&inst, &TypeVector(vec![0, 0]), &w);
        assert_eq!(o.allocation, Allocation::Procured(vec![true, true]));
        assert_eq!(o.payments, vec![3.0, 1.0]);
        assert_eq!(v, 1.0 + 1.5 + 1.0 - 0.25);
    }
}

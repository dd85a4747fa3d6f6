//! Holistic (interim) variables and the LP over them.
//!
//! One holistic variable per `(buyer, report, feature)` cell. In correlated
//! mode a cell is `(buyer, true type, report, feature)`: the expectation is
//! over the other buyers' types conditioned on the true type.

use super::{feature_count, feature_range, payment_feature, utility_coefficients};
use crate::error::Result;
use crate::lp::{solve_lp, Constraint, LinearProgram, LpStatus, Sense};
use crate::model::{Instance, Setting};

#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub types: Vec<usize>,
    pub features: Vec<usize>,
    pub correlated: bool,
    offsets: Vec<usize>,
    len: usize,
}

/// Decoded cell index.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Cell {
    pub buyer: usize,
    pub t_real: usize,
    pub t_rep: usize,
    pub feature: usize,
}

impl Layout {
    pub fn new(inst: &Instance, correlated: bool) -> Self {
        let types = inst.type_counts();
        let features: Vec<usize> = (0..inst.num_buyers()).map(|i| feature_count(inst, i)).collect();
        let mut offsets = Vec::with_capacity(types.len());
        let mut len = 0;
        for (i, &k) in types.iter().enumerate() {
            offsets.push(len);
            let pairs = if correlated { k * k } else { k };
            len += pairs * features[i];
        }
        Layout {
            types,
            features,
            correlated,
            offsets,
            len,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn num_buyers(&self) -> usize {
        self.types.len()
    }

    /// Index of a cell; `t_real` is ignored unless correlated.
    pub fn cell(&self, buyer: usize, t_real: usize, t_rep: usize, feature: usize) -> usize {
        let f = self.features[buyer];
        let slot = if self.correlated {
            t_real * self.types[buyer] + t_rep
        } else {
            t_rep
        };
        self.offsets[buyer] + slot * f + feature
    }

    pub fn decode(&self, k: usize) -> Cell {
        let buyer = self.offsets.partition_point(|&o| o <= k) - 1;
        let rel = k - self.offsets[buyer];
        let f = self.features[buyer];
        let slot = rel / f;
        let feature = rel % f;
        let (t_real, t_rep) = if self.correlated {
            (slot / self.types[buyer], slot % self.types[buyer])
        } else {
            (slot, slot)
        };
        Cell {
            buyer,
            t_real,
            t_rep,
            feature,
        }
    }

    /// `(t_real, t_rep)` slots of a buyer.
    pub fn slots(&self, buyer: usize) -> Vec<(usize, usize)> {
        let k = self.types[buyer];
        if self.correlated {
            (0..k).flat_map(|a| (0..k).map(move |b| (a, b))).collect()
        } else {
            (0..k).map(|a| (a, a)).collect()
        }
    }
}

/// Ordered misreport pairs `(t_real, t_rep)` covered by the BIC rows. With
/// private budgets only reports of a type with no larger budget count.
pub fn bic_pairs(inst: &Instance, buyer: usize) -> Vec<(usize, usize)> {
    let k = inst.buyers[buyer].num_types();
    let private = inst.buyers[buyer].budget.is_private();
    let mut out = Vec::new();
    for t in 0..k {
        for tp in 0..k {
            if t != tp && (!private || inst.budget(buyer, t) >= inst.budget(buyer, tp)) {
                out.push((t, tp));
            }
        }
    }
    out
}

/// The holistic polytope without its objective, plus the revenue row.
#[derive(Clone, Debug)]
pub struct HolisticLp {
    base: LinearProgram,
    revenue: Option<Vec<f64>>,
}

impl HolisticLp {
    pub fn new(inst: &Instance, layout: &Layout) -> Self {
        let dim = layout.len();
        let mut rows = Vec::new();
        let mut bounds = vec![(0.0, 0.0); dim];
        for i in 0..layout.num_buyers() {
            for (tr, tp) in layout.slots(i) {
                for f in 0..layout.features[i] {
                    let k = layout.cell(i, tr, tp, f);
                    bounds[k] = feature_range(inst, i, tp, f);
                    if inst.setting == Setting::SellerUtility {
                        let (p, q) = grid_pair(inst, f);
                        if inst.buyer_utility(i, p, q, tp) < 0.0 {
                            bounds[k] = (0.0, 0.0);
                        }
                    }
                }
                let simplex: Option<std::ops::Range<usize>> = match inst.setting {
                    Setting::MultiUnit => Some(0..inst.items + 1),
                    Setting::SellerUtility => Some(0..layout.features[i]),
                    _ => None,
                };
                if let Some(range) = simplex {
                    let mut c = vec![0.0; dim];
                    for f in range {
                        c[layout.cell(i, tr, tp, f)] = 1.0;
                    }
                    rows.push(Constraint::eq(c, 1.0));
                }
            }
            for (t, tp) in bic_pairs(inst, i) {
                let u = utility_coefficients(inst, i, t);
                let mut c = vec![0.0; dim];
                for (f, &uf) in u.iter().enumerate() {
                    c[layout.cell(i, t, t, f)] += uf;
                    c[layout.cell(i, t, tp, f)] -= uf;
                }
                rows.push(Constraint::ge(c, 0.0));
            }
            if inst.setting == Setting::MultiItem && inst.inequality_mode {
                // Payments are all-pay, so only interim IR protects the buyer.
                for t in 0..layout.types[i] {
                    let u = utility_coefficients(inst, i, t);
                    let mut c = vec![0.0; dim];
                    for (f, &uf) in u.iter().enumerate() {
                        c[layout.cell(i, t, t, f)] += uf;
                    }
                    rows.push(Constraint::ge(c, 0.0));
                }
            }
        }
        let revenue = if super::has_global_row(inst) {
            None
        } else {
            let marginals = inst.prior.marginals(&layout.types);
            let mut c = vec![0.0; dim];
            for i in 0..layout.num_buyers() {
                let pf = payment_feature(inst, i).expect("revenue settings have a payment feature");
                for t in 0..layout.types[i] {
                    c[layout.cell(i, t, t, pf)] += marginals[i][t];
                }
            }
            Some(c)
        };
        HolisticLp {
            base: LinearProgram {
                sense: Sense::Minimize,
                objective: vec![0.0; dim],
                rows,
                bounds,
            },
            revenue,
        }
    }

    pub fn dim(&self) -> usize {
        self.base.objective.len()
    }

    /// Expected revenue of a holistic point, when the setting has a revenue row.
    pub fn revenue_of(&self, h: &[f64]) -> Option<f64> {
        self.revenue.as_ref().map(|c| c.iter().zip(h).map(|(a, b)| a * b).sum())
    }

    /// Minimize `alpha . H` with expected revenue at least `target`.
    /// `None` means the holistic polytope is empty at this target.
    pub fn solve(&self, alpha: &[f64], target: f64) -> Result<Option<(Vec<f64>, f64)>> {
        let mut lp = self.base.clone();
        lp.objective = alpha.to_vec();
        if let Some(c) = &self.revenue {
            lp.rows.push(Constraint::ge(c.clone(), target));
        }
        let sol = solve_lp(&lp)?;
        Ok(match sol.status {
            LpStatus::Optimal => Some((sol.values, sol.objective_value)),
            _ => None,
        })
    }

    /// Largest expected revenue of any holistic point (an upper bound on OPT).
    pub fn max_revenue(&self) -> Result<Option<f64>> {
        let Some(c) = &self.revenue else {
            return Ok(None);
        };
        let mut lp = self.base.clone();
        lp.sense = Sense::Maximize;
        lp.objective = c.clone();
        let sol = solve_lp(&lp)?;
        Ok((sol.status == LpStatus::Optimal).then_some(sol.objective_value))
    }
}

/// `(p, q)` of a seller-utility grid feature.
pub(crate) fn grid_pair(inst: &Instance, f: usize) -> (i64, usize) {
    let m1 = inst.items + 1;
    ((f / m1) as i64 - inst.int_scale(), f % m1)
}

/// `solve_lp_exp` as a one-shot call.
pub fn solve_lp_exp(inst: &Instance, layout: &Layout, alpha: &[f64], target: f64) -> Result<Option<(Vec<f64>, f64)>> {
    HolisticLp::new(inst, layout).solve(alpha, target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Budget, Buyer, Prior};

    fn demo() -> Instance {
        Instance {
            setting: Setting::MultiUnit,
            items: 1,
            scale: 4.0,
            buyers: vec![Buyer::new(
                vec!["lo".into(), "hi".into()],
                vec![vec![0.0, 1.0], vec![0.0, 2.0]],
                Budget::Public(4.0),
            )],
            prior: Prior::Independent(vec![vec![0.5, 0.5]]),
            seller_utility: None,
            procurement_budget: None,
            supply: Vec::new(),
            polytope: Vec::new(),
            envy_free: false,
            inequality_mode: false,
        }
    }

    #[test]
    fn layout_round_trip() {
        let inst = demo();
        for corr in [false, true] {
            let l = Layout::new(&inst, corr);
            assert_eq!(l.len(), if corr { 12 } else { 6 });
            for k in 0..l.len() {
                let c = l.decode(k);
                assert_eq!(l.cell(c.buyer, c.t_real, c.t_rep, c.feature), k);
            }
        }
    }

    #[test]
    fn lp_exp_zero_duals() {
        let inst = demo();
        let l = Layout::new(&inst, false);
        let (_, v) = solve_lp_exp(&inst, &l, &vec![0.0; l.len()], 0.0).unwrap().unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn lp_exp_revenue_targets() {
        let inst = demo();
        let l = Layout::new(&inst, false);
        let (h, _) = solve_lp_exp(&inst, &l, &vec![0.0; l.len()], 1.0).unwrap().unwrap();
        let lp = HolisticLp::new(&inst, &l);
        assert!(lp.revenue_of(&h).unwrap() >= 1.0 - 1e-9);
        assert!(solve_lp_exp(&inst, &l, &vec![0.0; l.len()], 2.5).unwrap().is_none());
        assert!((lp.max_revenue().unwrap().unwrap() - 1.5).abs() < 1e-9);
    }
}

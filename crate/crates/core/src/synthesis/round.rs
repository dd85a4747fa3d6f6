//! One MWU round: sampled scenarios, the relaxed coupling rows, and the
//! combined oracle (holistic LP plus one setting oracle per scenario).

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Instance, PriorSampler, TypeVector};
use crate::mwu::RoundConstraints;
use crate::oracles::{
    coupled, feature_range, features, global_value, has_global_row, solve_scenario, HolisticLp, Layout, Outcome,
    ScenarioWeights,
};
use crate::par::par_map;

/// Largest support enumerated for multinomial sampling.
const MULTINOMIAL_SUPPORT_CAP: u128 = 100_000;

/// Where a round's scenarios come from.
#[derive(Clone, Debug)]
pub enum ScenarioSource {
    /// The whole prior, every round.
    Exact(Vec<(TypeVector, f64)>),
    /// `samples` draws from an enumerated support, as multinomial counts.
    Multinomial {
        support: Vec<(TypeVector, f64)>,
        samples: u64,
    },
    /// `samples` independent draws, merged by type vector.
    Draws { sampler: PriorSampler, samples: u64 },
}

impl ScenarioSource {
    pub fn new(inst: &Instance, samples: u64, exact: bool) -> Result<Self> {
        let counts = inst.type_counts();
        if exact {
            return Ok(ScenarioSource::Exact(
                inst.prior.enumerate(&counts, crate::model::DEFAULT_ENUMERATION_CAP)?,
            ));
        }
        if samples == 0 {
            return Err(Error::InvalidConfig("samples per round must be positive".into()));
        }
        Ok(match inst.prior.enumerate(&counts, MULTINOMIAL_SUPPORT_CAP) {
            Ok(support) => ScenarioSource::Multinomial { support, samples },
            Err(_) => ScenarioSource::Draws {
                sampler: inst.prior.sampler(),
                samples,
            },
        })
    }

    /// Scenarios with their empirical (or exact) probabilities.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<(TypeVector, f64)> {
        match self {
            ScenarioSource::Exact(all) => all.clone(),
            ScenarioSource::Multinomial { support, samples } => {
                let total = *samples as f64;
                let mut left = *samples;
                let mut mass = 1.0;
                let mut out = Vec::new();
                for (k, (t, p)) in support.iter().enumerate() {
                    if left == 0 {
                        break;
                    }
                    let q = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 1.0 };
                    let c = if k + 1 == support.len() || q >= 1.0 {
                        left
                    } else {
                        Binomial::new(left, q).expect("probability in [0, 1]").sample(rng)
                    };
                    mass -= p;
                    left -= c;
                    if c > 0 {
                        out.push((t.clone(), c as f64 / total));
                    }
                }
                out
            }
            ScenarioSource::Draws { sampler, samples } => {
                let mut counts: BTreeMap<TypeVector, u64> = BTreeMap::new();
                for _ in 0..*samples {
                    *counts.entry(sampler.sample(rng)).or_default() += 1;
                }
                let total = *samples as f64;
                counts.into_iter().map(|(t, c)| (t, c as f64 / total)).collect()
            }
        }
    }
}

/// Per-cell dual divided by the cell's sampled mass, plus the global dual.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualSnapshot {
    pub weights: Vec<f64>,
    pub gamma: f64,
}

/// Objective weights for one scenario under a snapshot.
///
/// `ratios[i][t_real]` are the conditional ratios of the scenario; they are
/// only read in correlated mode.
pub fn snapshot_weights(
    layout: &Layout,
    snapshot: &DualSnapshot,
    t: &TypeVector,
    ratios: Option<&[Vec<f64>]>,
) -> ScenarioWeights {
    let buyers = (0..layout.num_buyers())
        .map(|i| {
            let f = layout.features[i];
            let rep = t.get(i);
            let mut w = vec![0.0; f];
            match ratios {
                Some(z) if layout.correlated => {
                    for (tr, &zr) in z[i].iter().enumerate() {
                        if zr == 0.0 {
                            continue;
                        }
                        for (k, wk) in w.iter_mut().enumerate() {
                            *wk += snapshot.weights[layout.cell(i, tr, rep, k)] * zr;
                        }
                    }
                }
                _ => {
                    for (k, wk) in w.iter_mut().enumerate() {
                        *wk = snapshot.weights[layout.cell(i, rep, rep, k)];
                    }
                }
            }
            w
        })
        .collect();
    ScenarioWeights {
        buyers,
        gamma: snapshot.gamma,
    }
}

/// `ratios[i][t_real] = mu(t_real, t_-i) / mu(t)` for every buyer.
pub fn conditional_ratios(inst: &Instance, t: &TypeVector) -> Result<Vec<Vec<f64>>> {
    (0..inst.num_buyers())
        .map(|i| {
            (0..inst.buyers[i].num_types())
                .map(|tr| inst.prior.conditional_ratio(i, tr, t.get(i), t))
                .collect()
        })
        .collect()
}

/// The fixed part of a synthesis run at one revenue target.
#[derive(Clone, Debug)]
pub struct Problem<'a> {
    pub inst: &'a Instance,
    pub layout: Layout,
    pub lp: HolisticLp,
    pub delta: f64,
    pub target: f64,
    /// Coupled cells in row order.
    pub cells: Vec<usize>,
    /// `range + delta` per layout cell.
    pub cell_width: Vec<f64>,
    pub global_width: f64,
    /// Inequality mode: one `>=` row per cell instead of a pair.
    pub one_sided: bool,
}

impl<'a> Problem<'a> {
    pub fn new(inst: &'a Instance, correlated: bool, delta: f64, target: f64) -> Self {
        let layout = Layout::new(inst, correlated);
        let lp = HolisticLp::new(inst, &layout);
        let mut cells = Vec::new();
        let mut cell_width = vec![0.0; layout.len()];
        for (k, w) in cell_width.iter_mut().enumerate() {
            let c = layout.decode(k);
            let (lo, hi) = feature_range(inst, c.buyer, c.t_rep, c.feature);
            *w = hi - lo + delta;
            if coupled(inst, c.buyer, c.feature) {
                cells.push(k);
            }
        }
        let global_width = if has_global_row(inst) {
            let (lo, hi) = global_bounds(inst);
            (hi - target + delta).abs().max((lo - target + delta).abs()).max(delta)
        } else {
            0.0
        };
        Problem {
            inst,
            layout,
            lp,
            delta,
            target,
            cells,
            cell_width,
            global_width,
            one_sided: inst.inequality_mode,
        }
    }

    pub fn num_rows(&self) -> usize {
        let per = if self.one_sided { 1 } else { 2 };
        self.cells.len() * per + usize::from(has_global_row(self.inst))
    }

    /// Relaxed coupling rows for this round's scenarios. Cells no scenario
    /// reaches get zero rows.
    pub fn build_round_constraints(&self, scenarios: Vec<(TypeVector, f64)>) -> Result<ConstraintSystem> {
        let correlated = self.layout.correlated;
        let ratios = if correlated {
            scenarios
                .iter()
                .map(|(t, _)| conditional_ratios(self.inst, t))
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        let mut mass = vec![0.0; self.layout.len()];
        for (s, (t, p)) in scenarios.iter().enumerate() {
            for i in 0..self.layout.num_buyers() {
                let rep = t.get(i);
                if correlated {
                    for (tr, z) in ratios[s][i].iter().enumerate() {
                        let k = self.layout.cell(i, tr, rep, 0);
                        mass[k] += p * z;
                    }
                } else {
                    mass[self.layout.cell(i, rep, rep, 0)] += p;
                }
            }
        }
        // Spread each slot's mass over its features.
        for i in 0..self.layout.num_buyers() {
            for (tr, tp) in self.layout.slots(i) {
                let base = self.layout.cell(i, tr, tp, 0);
                for f in 1..self.layout.features[i] {
                    mass[base + f] = mass[base];
                }
            }
        }
        let active: Vec<bool> = self.cells.iter().map(|&k| mass[k] > 0.0).collect();
        let mut rhs = Vec::with_capacity(self.num_rows());
        for (j, &k) in self.cells.iter().enumerate() {
            let b = if active[j] {
                -self.delta / self.cell_width[k]
            } else {
                0.0
            };
            rhs.push(b);
            if !self.one_sided {
                rhs.push(b);
            }
        }
        if has_global_row(self.inst) {
            rhs.push((self.target - self.delta) / self.global_width);
        }
        let widths = vec![1.0; rhs.len()];
        Ok(ConstraintSystem {
            scenarios,
            ratios,
            mass,
            active,
            rhs,
            widths,
            one_sided: self.one_sided,
            cell_width: self.cell_width.clone(),
            cells: self.cells.clone(),
            global_width: self.global_width,
        })
    }

    /// Signed cell duals and the global dual from expert weights.
    pub fn duals(&self, system: &ConstraintSystem, y: &[f64]) -> (Vec<f64>, f64) {
        let mut alpha = vec![0.0; self.layout.len()];
        let per = if self.one_sided { 1 } else { 2 };
        for (j, &k) in self.cells.iter().enumerate() {
            if !system.active[j] {
                continue;
            }
            let signed = if self.one_sided {
                y[j]
            } else {
                y[per * j] - y[per * j + 1]
            };
            alpha[k] = signed / self.cell_width[k];
        }
        let gamma = if has_global_row(self.inst) {
            y[y.len() - 1] / self.global_width
        } else {
            0.0
        };
        (alpha, gamma)
    }

    /// Maximize `y . A x` over the product of the holistic polytope and every
    /// scenario's feasible set. A `-inf` value means the holistic LP is
    /// infeasible at this target.
    pub fn combined_oracle(&self, system: &ConstraintSystem, y: &[f64]) -> Result<(RoundSolution, f64)> {
        let (alpha, gamma) = self.duals(system, y);
        let Some((holistic, lp_min)) = self.lp.solve(&alpha, self.target)? else {
            return Ok((RoundSolution::infeasible(), f64::NEG_INFINITY));
        };
        let weights: Vec<f64> = alpha
            .iter()
            .zip(&system.mass)
            .map(|(a, m)| if *m > 0.0 { a / m } else { 0.0 })
            .collect();
        let snapshot = DualSnapshot { weights, gamma };
        let agg = aggregate(self.inst, &self.layout, &snapshot, system)?;
        let value = agg.value - lp_min;
        Ok((
            RoundSolution {
                snapshot,
                holistic,
                averages: agg.averages,
                global: agg.global,
                value,
            },
            value,
        ))
    }
}

/// Global-row range: seller utility over reachable revenues, or procured value.
pub(crate) fn global_bounds(inst: &Instance) -> (f64, f64) {
    match inst.setting {
        crate::model::Setting::SellerUtility => {
            let cap = inst.int_scale() * inst.num_buyers() as i64;
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for z in -cap..=cap {
                if let Ok(u) = inst.seller_utility(z) {
                    lo = lo.min(u);
                    hi = hi.max(u);
                }
            }
            (lo.min(0.0), hi.max(0.0))
        }
        _ => (0.0, inst.buyers.iter().map(|b| b.item_value.max(0.0)).sum()),
    }
}

/// Per-cell normalized feature averages and the weighted oracle value.
pub struct Aggregate {
    pub averages: Vec<f64>,
    pub global: f64,
    /// `sum_s pi_s * (oracle value of s)`.
    pub value: f64,
    pub outcomes: Vec<Outcome>,
}

/// Solve every scenario under `snapshot` and average its features per cell.
pub fn aggregate(
    inst: &Instance,
    layout: &Layout,
    snapshot: &DualSnapshot,
    system: &ConstraintSystem,
) -> Result<Aggregate> {
    let correlated = layout.correlated;
    let solved: Vec<Result<(Outcome, f64)>> = par_map(&system.scenarios_indexed(), |&(s, t)| {
        let ratios = correlated.then(|| system.ratios[s].as_slice());
        let w = snapshot_weights(layout, snapshot, t, ratios);
        solve_scenario(inst, t, &w)
    });
    let mut averages = vec![0.0; layout.len()];
    let mut value = 0.0;
    let mut global = 0.0;
    let want_global = has_global_row(inst);
    let mut outcomes = Vec::with_capacity(solved.len());
    for (s, r) in solved.into_iter().enumerate() {
        let (outcome, v) = r?;
        let (t, p) = &system.scenarios[s];
        value += p * v;
        if want_global {
            global += p * global_value(inst, &outcome)?;
        }
        for i in 0..layout.num_buyers() {
            let phi = features(inst, i, &outcome);
            let rep = t.get(i);
            if correlated {
                for (tr, &z) in system.ratios[s][i].iter().enumerate() {
                    let base = layout.cell(i, tr, rep, 0);
                    let m = system.mass[base];
                    if m > 0.0 && z > 0.0 {
                        for (f, x) in phi.iter().enumerate() {
                            averages[base + f] += p * z * x / m;
                        }
                    }
                }
            } else {
                let base = layout.cell(i, rep, rep, 0);
                let m = system.mass[base];
                for (f, x) in phi.iter().enumerate() {
                    averages[base + f] += p * x / m;
                }
            }
        }
        outcomes.push(outcome);
    }
    Ok(Aggregate {
        averages,
        global,
        value,
        outcomes,
    })
}

/// This round's rows. Every row is pre-divided by its own width, so the
/// engine sees width 1 everywhere.
#[derive(Clone, Debug)]
pub struct ConstraintSystem {
    pub scenarios: Vec<(TypeVector, f64)>,
    /// Per scenario, per buyer, per true type (correlated mode only).
    pub ratios: Vec<Vec<Vec<f64>>>,
    /// Sampled mass of the slot each layout cell belongs to.
    pub mass: Vec<f64>,
    /// Per coupled cell: whether any scenario reaches it.
    pub active: Vec<bool>,
    rhs: Vec<f64>,
    widths: Vec<f64>,
    one_sided: bool,
    cell_width: Vec<f64>,
    cells: Vec<usize>,
    global_width: f64,
}

impl ConstraintSystem {
    pub fn num_rows(&self) -> usize {
        self.rhs.len()
    }

    fn scenarios_indexed(&self) -> Vec<(usize, &TypeVector)> {
        self.scenarios.iter().enumerate().map(|(s, (t, _))| (s, t)).collect()
    }
}

impl RoundConstraints<RoundSolution> for ConstraintSystem {
    fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    fn widths(&self) -> &[f64] {
        &self.widths
    }

    fn evaluate(&self, x: &RoundSolution) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.rhs.len());
        for (j, &k) in self.cells.iter().enumerate() {
            let gap = if self.active[j] {
                (x.averages[k] - x.holistic[k]) / self.cell_width[k]
            } else {
                0.0
            };
            out.push(gap);
            if !self.one_sided {
                out.push(-gap);
            }
        }
        if self.global_width > 0.0 {
            out.push(x.global / self.global_width);
        }
        out
    }
}

/// The oracle's answer for one round.
#[derive(Clone, Debug)]
pub struct RoundSolution {
    pub snapshot: DualSnapshot,
    pub holistic: Vec<f64>,
    pub averages: Vec<f64>,
    pub global: f64,
    /// `y . A x` as computed by the oracle.
    pub value: f64,
}

impl RoundSolution {
    fn infeasible() -> Self {
        RoundSolution {
            snapshot: DualSnapshot {
                weights: Vec::new(),
                gamma: 0.0,
            },
            holistic: Vec::new(),
            averages: Vec::new(),
            global: 0.0,
            value: f64::NEG_INFINITY,
        }
    }
}

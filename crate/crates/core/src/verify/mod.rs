//! Ground truth: interim tables of a mechanism (exact or Monte Carlo), BIC
//! and ex-post checks, and the brute-force optimum on tiny instances.

mod brute;
mod vertex;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Instance, TypeVector, DEFAULT_ENUMERATION_CAP};
use crate::oracles::{
    bic_pairs, check_membership, coupled, feature_count, feature_range, features, has_global_row, payment_feature,
    seller_objective, utility_coefficients, Allocation, Layout, Outcome, Violations,
};
use crate::par::par_map;
use crate::runtime::{base_outcome, execute, giveaway_outcome, keyed_rng, scaled_outcome};
use crate::synthesis::Mechanism;

pub use brute::{action_set, brute_force_opt, brute_force_oracle, BruteForce, ScenarioPlan, DEFAULT_COLUMN_CAP};
pub use vertex::vertex_maximize;

/// Default cap on `snapshots x type vectors` for exact evaluation.
pub const EXACT_EVALUATION_CAP: u128 = 10_000_000;

/// Interim feature expectations `I(i, t_real, t_rep, f)` over every ordered
/// type pair: the expected feature of buyer `i` reporting `t_rep` when its
/// true type is `t_real` (others drawn from the conditional prior).
#[derive(Clone, Debug, PartialEq)]
pub struct Interim {
    pub layout: Layout,
    pub table: Vec<f64>,
    /// Per-cell 99% Hoeffding half-widths (Monte Carlo only).
    pub half_width: Option<Vec<f64>>,
    /// Expected seller objective under truthful reports.
    pub objective: f64,
    pub objective_half_width: f64,
    pub violations: Violations,
    pub outcomes_checked: usize,
}

impl Interim {
    pub fn get(&self, buyer: usize, t_real: usize, t_rep: usize, f: usize) -> f64 {
        self.table[self.layout.cell(buyer, t_real, t_rep, f)]
    }
}

/// Expected features of every buyer, the expected objective, and the
/// ex-post violations over every outcome the mechanism can produce at `t`.
struct PointValue {
    features: Vec<Vec<f64>>,
    objective: f64,
    violations: Violations,
    outcomes: usize,
}

fn add_into(acc: &mut [Vec<f64>], x: &[Vec<f64>], w: f64) {
    for (a, b) in acc.iter_mut().zip(x) {
        for (p, q) in a.iter_mut().zip(b) {
            *p += w * q;
        }
    }
}

fn all_features(inst: &Instance, o: &Outcome) -> Vec<Vec<f64>> {
    (0..inst.num_buyers()).map(|i| features(inst, i, o)).collect()
}

/// Exact expectation over snapshots and wrapper coins at one report vector.
fn evaluate_point(mech: &Mechanism, layout: &Layout, t: &TypeVector) -> Result<PointValue> {
    let inst = &mech.instance;
    let k = mech.snapshots.len() as f64;
    let mut feats: Vec<Vec<f64>> = (0..inst.num_buyers())
        .map(|i| vec![0.0; feature_count(inst, i)])
        .collect();
    let mut objective = 0.0;
    let mut violations = Violations::default();
    let mut outcomes = 0;
    for round in 0..mech.snapshots.len() {
        let base = base_outcome(mech, layout, round, t)?;
        let (o, coins_mean) = match &mech.scaling {
            Some(fix) => {
                // Every coin landing heads is the outcome with the most allocated.
                let all: Vec<Vec<bool>> = (0..inst.num_buyers()).map(|_| vec![true; inst.items]).collect();
                let o = scaled_outcome(mech, &base, t, &all);
                let mut mean = o.clone();
                if let Allocation::Items(x) = &mut mean.allocation {
                    for (i, row) in x.iter_mut().enumerate() {
                        for (j, v) in row.iter_mut().enumerate() {
                            *v *= fix.factors[i][t.get(i)][j];
                        }
                    }
                }
                (o, Some(mean))
            }
            None => (base, None),
        };
        violations.add(check_membership(inst, t, &o));
        outcomes += 1;
        let mean = coins_mean.as_ref().unwrap_or(&o);
        add_into(&mut feats, &all_features(inst, mean), (1.0 - mech.giveaway) / k);
        objective += (1.0 - mech.giveaway) / k * seller_objective(inst, mean)?;
    }
    if mech.giveaway > 0.0 {
        let g = giveaway_outcome(inst);
        violations.add(check_membership(inst, t, &g));
        outcomes += 1;
        add_into(&mut feats, &all_features(inst, &g), mech.giveaway);
        objective += mech.giveaway * seller_objective(inst, &g)?;
    }
    Ok(PointValue {
        features: feats,
        objective,
        violations,
        outcomes,
    })
}

/// The support plus every unilateral deviation from it.
fn report_vectors(inst: &Instance, support: &[(TypeVector, f64)]) -> Vec<TypeVector> {
    let counts = inst.type_counts();
    let mut set = std::collections::BTreeSet::new();
    for (t, _) in support {
        for (i, &k) in counts.iter().enumerate() {
            for tp in 0..k {
                set.insert(t.with(i, tp));
            }
        }
    }
    set.into_iter().collect()
}

/// Exact interim tables by enumerating every snapshot and type vector.
pub fn exact_interim(mech: &Mechanism) -> Result<Interim> {
    exact_interim_capped(mech, EXACT_EVALUATION_CAP)
}

pub fn exact_interim_capped(mech: &Mechanism, cap: u128) -> Result<Interim> {
    let inst = &mech.instance;
    let counts = inst.type_counts();
    let support = inst.prior.enumerate(&counts, DEFAULT_ENUMERATION_CAP)?;
    let reports = report_vectors(inst, &support);
    let size = reports.len() as u128 * mech.snapshots.len() as u128;
    if size > cap {
        return Err(Error::CapExceeded { size, cap });
    }
    let mech_layout = mech.layout();
    let values: Vec<Result<PointValue>> = par_map(&reports, |t| evaluate_point(mech, &mech_layout, t));
    let mut index = BTreeMap::new();
    let mut points = Vec::with_capacity(values.len());
    let mut violations = Violations::default();
    let mut outcomes_checked = 0;
    for (t, v) in reports.iter().zip(values) {
        let v = v?;
        violations.add(v.violations);
        outcomes_checked += v.outcomes;
        index.insert(t.clone(), points.len());
        points.push(v);
    }
    let layout = Layout::new(inst, true);
    let marginals = inst.prior.marginals(&counts);
    let mut table = vec![0.0; layout.len()];
    let mut objective = 0.0;
    for (t, p) in &support {
        objective += p * points[index[t]].objective;
        for i in 0..inst.num_buyers() {
            let tr = t.get(i);
            let w = p / marginals[i][tr];
            for tp in 0..counts[i] {
                let feats = &points[index[&t.with(i, tp)]].features[i];
                let base = layout.cell(i, tr, tp, 0);
                for (f, x) in feats.iter().enumerate() {
                    table[base + f] += w * x;
                }
            }
        }
    }
    Ok(Interim {
        layout,
        table,
        half_width: None,
        objective,
        objective_half_width: 0.0,
        violations,
        outcomes_checked,
    })
}

/// `z` with `P(|mean - E| > h) <= 0.01` for `h = range * z / sqrt(count)`.
fn hoeffding_99() -> f64 {
    ((2.0f64 / 0.01).ln() / 2.0).sqrt()
}

/// Bound on the seller objective's range, for half-widths.
fn objective_range(inst: &Instance) -> f64 {
    if has_global_row(inst) {
        let (lo, hi) = crate::synthesis::global_bounds(inst);
        hi - lo
    } else {
        (0..inst.num_buyers())
            .map(|i| {
                let pf = payment_feature(inst, i).expect("revenue settings have a payment feature");
                (0..inst.buyers[i].num_types())
                    .map(|t| feature_range(inst, i, t, pf).1)
                    .fold(0.0, f64::max)
            })
            .sum()
    }
}

struct McAccumulator {
    sums: Vec<f64>,
    counts: Vec<u64>,
    objective: f64,
    violations: Violations,
    outcomes: usize,
}

/// Monte Carlo interim tables from `samples` truthful draws; each draw also
/// runs every unilateral misreport.
pub fn mc_interim(mech: &Mechanism, samples: usize, seed: u64) -> Result<Interim> {
    if samples == 0 {
        return Err(Error::InvalidConfig("Monte Carlo needs at least one sample".into()));
    }
    let inst = &mech.instance;
    let counts = inst.type_counts();
    let layout = Layout::new(inst, true);
    let sampler = inst.prior.sampler();
    let chunks = 64.min(samples);
    let ids: Vec<usize> = (0..chunks).collect();
    let partial: Vec<Result<McAccumulator>> = par_map(&ids, |&c| {
        let mut acc = McAccumulator {
            sums: vec![0.0; layout.len()],
            counts: vec![0; layout.len()],
            objective: 0.0,
            violations: Violations::default(),
            outcomes: 0,
        };
        let mut s = c;
        while s < samples {
            let mut rng = keyed_rng(seed, s as u64);
            let t = sampler.sample(&mut rng);
            let truthful = execute(mech, &t, &mut rng)?;
            acc.objective += seller_objective(inst, &truthful.outcome)?;
            acc.violations.add(check_membership(inst, &t, &truthful.outcome));
            acc.outcomes += 1;
            for i in 0..inst.num_buyers() {
                let tr = t.get(i);
                for tp in 0..counts[i] {
                    let outcome = if tp == tr {
                        truthful.outcome.clone()
                    } else {
                        let tv = t.with(i, tp);
                        let o = execute(mech, &tv, &mut rng)?.outcome;
                        acc.violations.add(check_membership(inst, &tv, &o));
                        acc.outcomes += 1;
                        o
                    };
                    let base = layout.cell(i, tr, tp, 0);
                    for (f, x) in features(inst, i, &outcome).iter().enumerate() {
                        acc.sums[base + f] += x;
                        acc.counts[base + f] += 1;
                    }
                }
            }
            s += chunks;
        }
        Ok(acc)
    });
    let mut sums = vec![0.0; layout.len()];
    let mut cnt = vec![0u64; layout.len()];
    let mut objective = 0.0;
    let mut violations = Violations::default();
    let mut outcomes_checked = 0;
    for p in partial {
        let p = p?;
        for k in 0..layout.len() {
            sums[k] += p.sums[k];
            cnt[k] += p.counts[k];
        }
        objective += p.objective;
        violations.add(p.violations);
        outcomes_checked += p.outcomes;
    }
    let z = hoeffding_99();
    let mut table = vec![0.0; layout.len()];
    let mut half = vec![f64::INFINITY; layout.len()];
    for k in 0..layout.len() {
        if cnt[k] > 0 {
            table[k] = sums[k] / cnt[k] as f64;
            let c = layout.decode(k);
            let (lo, hi) = feature_range(inst, c.buyer, c.t_rep, c.feature);
            half[k] = (hi - lo) * z / (cnt[k] as f64).sqrt();
        }
    }
    Ok(Interim {
        layout,
        table,
        half_width: Some(half),
        objective: objective / samples as f64,
        objective_half_width: objective_range(inst) * z / (samples as f64).sqrt(),
        violations,
        outcomes_checked,
    })
}

/// Worst BIC gap found by [`check_bic`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BicCheck {
    /// `max(0, max over pairs of U(t -> t') - U(t -> t))`.
    pub max_violation: f64,
    /// `(buyer, true type, reported type)` of the worst pair.
    pub worst: Option<(usize, usize, usize)>,
}

/// Largest interim gain from misreporting, over the pairs BIC covers.
pub fn check_bic(interim: &Interim, inst: &Instance) -> BicCheck {
    let mut out = BicCheck {
        max_violation: 0.0,
        worst: None,
    };
    for i in 0..inst.num_buyers() {
        for (t, tp) in bic_pairs(inst, i) {
            let u = utility_coefficients(inst, i, t);
            let gap: f64 = u
                .iter()
                .enumerate()
                .map(|(f, c)| c * (interim.get(i, t, tp, f) - interim.get(i, t, t, f)))
                .sum();
            if gap > out.max_violation {
                out.max_violation = gap;
                out.worst = Some((i, t, tp));
            }
        }
    }
    out
}

/// Largest `|interim - holistic|` over the coupled cells of a mechanism.
/// With a scaling fix the targets are the scaled holistic values.
pub fn eq_residual(mech: &Mechanism, interim: &Interim) -> f64 {
    let inst = &mech.instance;
    let layout = mech.layout();
    let scale = mech.scaling.as_ref().map_or(1.0, |s| s.c);
    let mut worst: f64 = 0.0;
    for k in 0..layout.len() {
        let c = layout.decode(k);
        if !coupled(inst, c.buyer, c.feature) {
            continue;
        }
        let realized = interim.get(c.buyer, c.t_real, c.t_rep, c.feature);
        worst = worst.max((realized - mech.holistic[k] / scale).abs());
    }
    worst
}

/// Ex-post violation counts over executed outcomes.
pub fn check_expost<'a>(inst: &Instance, runs: impl IntoIterator<Item = (&'a TypeVector, &'a Outcome)>) -> Violations {
    let mut v = Violations::default();
    for (t, o) in runs {
        v.add(check_membership(inst, t, o));
    }
    v
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifyMode {
    Exact,
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub mode: VerifyMode,
    pub epsilon: f64,
    pub target: f64,
    pub max_eq_residual: f64,
    pub max_bic_violation: f64,
    pub worst_bic_pair: Option<(usize, usize, usize)>,
    /// Expected revenue, or seller utility / procured value in those settings.
    pub objective: f64,
    pub objective_half_width: f64,
    pub violations: Violations,
    pub outcomes_checked: usize,
    pub brute_force_opt: Option<f64>,
    pub pass: bool,
}

impl VerificationReport {
    pub fn hard_violations(&self) -> usize {
        self.violations.total()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per check: `check,value,threshold,pass`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("check,value,threshold,pass\n");
        // Informational rows leave the threshold empty.
        let mut row = |name: &str, value: f64, threshold: f64, pass: bool| {
            let threshold = if threshold.is_nan() {
                String::new()
            } else {
                threshold.to_string()
            };
            out.push_str(&format!("{name},{value},{threshold},{pass}\n"));
        };
        row("ir_violations", self.violations.ir as f64, 0.0, self.violations.ir == 0);
        row(
            "budget_violations",
            self.violations.budget as f64,
            0.0,
            self.violations.budget == 0,
        );
        row(
            "supply_violations",
            self.violations.supply as f64,
            0.0,
            self.violations.supply == 0,
        );
        row(
            "other_violations",
            self.violations.other as f64,
            0.0,
            self.violations.other == 0,
        );
        row(
            "max_bic_violation",
            self.max_bic_violation,
            self.epsilon,
            self.max_bic_violation <= self.epsilon,
        );
        row("max_eq_residual", self.max_eq_residual, f64::NAN, true);
        if let Some(opt) = self.brute_force_opt {
            row(
                "objective_vs_opt",
                self.objective + self.objective_half_width,
                opt - self.epsilon,
                self.objective + self.objective_half_width >= opt - self.epsilon,
            );
        } else {
            row("objective", self.objective, f64::NAN, true);
        }
        out
    }
}

/// Full check of a mechanism: hard violations, BIC within `epsilon`, and
/// (when `opt` is given) objective within `epsilon` of it.
pub fn verify_mechanism(mech: &Mechanism, mode: VerifyMode, opt: Option<f64>) -> Result<VerificationReport> {
    let interim = match mode {
        VerifyMode::Exact => exact_interim(mech)?,
        VerifyMode::MonteCarlo { samples, seed } => mc_interim(mech, samples, seed)?,
    };
    let bic = check_bic(&interim, &mech.instance);
    let eps = mech.params.epsilon;
    let mut pass = interim.violations.total() == 0 && bic.max_violation <= eps;
    if let Some(o) = opt {
        pass &= interim.objective + interim.objective_half_width >= o - eps;
    }
    Ok(VerificationReport {
        mode,
        epsilon: eps,
        target: mech.target_revenue,
        max_eq_residual: eq_residual(mech, &interim),
        max_bic_violation: bic.max_violation,
        worst_bic_pair: bic.worst,
        objective: interim.objective,
        objective_half_width: interim.objective_half_width,
        violations: interim.violations,
        outcomes_checked: interim.outcomes_checked,
        brute_force_opt: opt,
        pass,
    })
}

//! Mechanism synthesis: sampled coupling rows, the MWU engine with the
//! decoupled oracle, a search over the revenue target, and the wrappers for
//! private budgets and inequality mode.

mod round;
mod wrappers;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Instance, Prior, Setting, TypeVector};
use crate::mwu::{run_generalized_ahk, EarlyStop, MwuParams, MwuStatus};
use crate::oracles::{coupled, feature_range, has_global_row, utility_coefficients, Layout, ScenarioWeights};

pub(crate) use round::global_bounds;
pub use round::{
    aggregate, conditional_ratios, snapshot_weights, Aggregate, ConstraintSystem, DualSnapshot, Problem, RoundSolution,
    ScenarioSource,
};
pub use wrappers::{apply_scaling_fix, wrap_private_budgets, ScalingFix};

pub const MECHANISM_VERSION: u32 = 1;

/// Upper limit on the default samples per round.
const MAX_DEFAULT_SAMPLES: u64 = 10_000_000;

/// User-facing synthesis options. `None` fields take instance-derived defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisConfig {
    /// Additive BIC and revenue slack.
    pub epsilon: f64,
    /// Slack on every coupling row; defaults to `epsilon` over the larger of
    /// `n m L` and `max(n, 2)` times the largest utility-coefficient l1 norm.
    pub delta: Option<f64>,
    /// Samples per round; defaults to a Hoeffding bound putting every cell
    /// average within `delta` with probability 0.99.
    pub samples: Option<u64>,
    /// Use the exact prior every round instead of sampling.
    pub exact: bool,
    /// Round cap.
    pub rounds: Option<usize>,
    pub learning_rate: Option<f64>,
    /// Early-stop residual target, in units of each row's width.
    pub residual_target: Option<f64>,
    pub early_stop: bool,
    /// Trailing window the early stop averages over.
    pub window: Option<usize>,
    pub check_every: usize,
    /// Correlated-prior formulation; defaults to on for joint priors.
    pub correlated: Option<bool>,
    /// Giveaway probability for private budgets; defaults to `epsilon / (4 L n)`.
    pub giveaway: Option<f64>,
    /// Rerun once with fresh samples before declaring a target infeasible.
    pub retry: bool,
    pub seed: u64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            epsilon: 1.0,
            delta: None,
            samples: None,
            exact: false,
            rounds: None,
            learning_rate: None,
            residual_target: None,
            early_stop: true,
            window: None,
            check_every: 20,
            correlated: None,
            giveaway: None,
            retry: false,
            seed: 0,
        }
    }
}

/// A configuration with every default filled in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub epsilon: f64,
    pub delta: f64,
    pub samples: u64,
    pub exact: bool,
    pub rounds: usize,
    pub learning_rate: f64,
    pub residual_target: Option<f64>,
    pub window: Option<usize>,
    pub check_every: usize,
    pub correlated: bool,
    pub giveaway: f64,
    pub retry: bool,
    pub seed: u64,
}

impl SynthesisConfig {
    pub fn with_epsilon(epsilon: f64) -> Self {
        SynthesisConfig {
            epsilon,
            ..Default::default()
        }
    }

    pub fn resolve(&self, inst: &Instance) -> Result<Params> {
        let eps = self.epsilon;
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidConfig(format!("epsilon must be positive, got {eps}")));
        }
        let n = inst.num_buyers().max(1) as f64;
        let m = inst.items.max(1) as f64;
        let l = inst.scale.max(1.0);
        // The nmL default, tightened so that a misreport's utility, an
        // l1-weighted sum of interim cells, moves by at most about epsilon.
        let delta = self.delta.unwrap_or_else(|| {
            let norm = (0..inst.num_buyers())
                .flat_map(|i| (0..inst.buyers[i].num_types()).map(move |t| (i, t)))
                .map(|(i, t)| utility_coefficients(inst, i, t).iter().map(|c| c.abs()).sum::<f64>())
                .fold(1.0, f64::max);
            eps / (n * m * l).max(n.max(2.0) * norm)
        });
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidConfig(format!("delta must be positive, got {delta}")));
        }
        let correlated = self.correlated.unwrap_or(inst.prior.is_joint());
        let layout = Layout::new(inst, correlated);
        let max_width = (0..layout.len())
            .map(|k| {
                let c = layout.decode(k);
                let (lo, hi) = feature_range(inst, c.buyer, c.t_rep, c.feature);
                hi - lo + delta
            })
            .fold(delta, f64::max);
        // The global row's width never exceeds its full range plus delta.
        let max_width = if has_global_row(inst) {
            let (lo, hi) = global_bounds(inst);
            max_width.max(hi - lo + delta)
        } else {
            max_width
        };
        let residual_target = if self.early_stop {
            Some(self.residual_target.unwrap_or(delta / max_width))
        } else {
            None
        };
        let learning_rate = self
            .learning_rate
            .unwrap_or_else(|| residual_target.unwrap_or(delta / max_width).clamp(1e-4, 0.25));
        let rows = 2 * layout.len() + 1;
        let rounds = match self.rounds {
            Some(k) => k,
            None if residual_target.is_some() => 20_000,
            None => MwuParams::theoretical_rounds(rows, 1.0, learning_rate).min(1_000_000),
        };
        if rounds == 0 {
            return Err(Error::InvalidConfig("rounds must be positive".into()));
        }
        let samples = match self.samples {
            Some(c) => c,
            None => default_samples(inst, &layout, delta),
        };
        let giveaway = self.giveaway.unwrap_or(if inst.has_private_budgets() {
            eps / (4.0 * l * n)
        } else {
            0.0
        });
        if inst.has_private_budgets() && !(0.0..=eps / (2.0 * l * n)).contains(&giveaway) {
            return Err(Error::InvalidConfig(format!(
                "giveaway probability {giveaway} outside [0, epsilon / (2 L n)]"
            )));
        }
        Ok(Params {
            epsilon: eps,
            delta,
            samples,
            exact: self.exact,
            rounds,
            learning_rate,
            residual_target,
            window: self.window,
            check_every: self.check_every.max(1),
            correlated,
            giveaway,
            retry: self.retry,
            seed: self.seed,
        })
    }
}

/// Samples per round so that, by Hoeffding and a union bound over cells,
/// every cell average is within `delta` of its mean with probability 0.99.
fn default_samples(inst: &Instance, layout: &Layout, delta: f64) -> u64 {
    let marginals = inst.prior.marginals(&layout.types);
    let cells = layout.len().max(1) as f64;
    let log_term = (2.0 * cells / 0.01).ln();
    let mut need: f64 = 1.0;
    for k in 0..layout.len() {
        let c = layout.decode(k);
        let f = marginals[c.buyer][c.t_rep];
        if f <= 0.0 || !coupled(inst, c.buyer, c.feature) {
            continue;
        }
        let (lo, hi) = feature_range(inst, c.buyer, c.t_rep, c.feature);
        let range = hi - lo;
        // The cell sees about `C f` samples; 1.25 covers that count's own noise.
        need = need.max(1.25 * range * range * log_term / (2.0 * delta * delta * f));
    }
    (need.ceil() as u64).clamp(1, MAX_DEFAULT_SAMPLES)
}

/// A synthesized mechanism: pick a snapshot uniformly, solve the scenario
/// oracle under its duals, then apply the mode wrappers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mechanism {
    pub version: u32,
    pub setting: Setting,
    pub instance: Instance,
    pub correlated: bool,
    /// Revenue target (seller utility or procured value for those settings).
    pub target_revenue: f64,
    pub snapshots: Vec<DualSnapshot>,
    /// Probability of handing every unit to the first buyer for free.
    pub giveaway: f64,
    pub scaling: Option<ScalingFix>,
    /// Average holistic point over the kept rounds.
    pub holistic: Vec<f64>,
    pub params: Params,
}

impl Mechanism {
    pub fn layout(&self) -> Layout {
        Layout::new(&self.instance, self.correlated)
    }

    pub fn num_snapshots(&self) -> usize {
        self.snapshots.len()
    }

    /// Oracle weights for snapshot `round` at reported types `t`.
    pub fn scenario_weights(&self, layout: &Layout, round: usize, t: &TypeVector) -> Result<ScenarioWeights> {
        let ratios = if self.correlated {
            Some(conditional_ratios(&self.instance, t)?)
        } else {
            None
        };
        Ok(snapshot_weights(layout, &self.snapshots[round], t, ratios.as_deref()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("mechanism serializes")
    }

    /// Parse a mechanism document, checking the version first.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::MalformedDocument(e.to_string()))?;
        let found = value
            .get("version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::MalformedDocument("missing version".into()))?;
        if found != MECHANISM_VERSION as u64 {
            return Err(Error::VersionMismatch {
                found: found.min(u32::MAX as u64) as u32,
                expected: MECHANISM_VERSION,
            });
        }
        let mech: Mechanism = serde_json::from_value(value).map_err(|e| Error::MalformedDocument(e.to_string()))?;
        if mech.snapshots.is_empty() {
            return Err(Error::MalformedDocument("no snapshots".into()));
        }
        let layout = mech.layout();
        if mech.snapshots.iter().any(|s| s.weights.len() != layout.len()) || mech.holistic.len() != layout.len() {
            return Err(Error::MalformedDocument(
                "snapshot length does not match the instance".into(),
            ));
        }
        if mech.setting != mech.instance.setting {
            return Err(Error::MalformedDocument(
                "setting does not match the embedded instance".into(),
            ));
        }
        Ok(mech)
    }
}

/// One row of the per-round residual log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    /// Largest `b_i - a_i x` over rows (zero if none is violated), in row-width units.
    pub max_violation: f64,
    /// The same for the average of rounds `0..=round`.
    pub mean_violation: f64,
    pub c_value: f64,
}

#[derive(Clone, Debug)]
pub enum Synthesis {
    Feasible {
        mechanism: Box<Mechanism>,
        log: Vec<RoundLog>,
    },
    /// `round` is where infeasibility was declared, `None` if the round cap
    /// ran out before the residuals reached the target.
    InfeasibleAt {
        target: f64,
        round: Option<usize>,
        log: Vec<RoundLog>,
    },
}

impl Synthesis {
    pub fn mechanism(&self) -> Option<&Mechanism> {
        match self {
            Synthesis::Feasible { mechanism, .. } => Some(mechanism),
            Synthesis::InfeasibleAt { .. } => None,
        }
    }

    pub fn log(&self) -> &[RoundLog] {
        match self {
            Synthesis::Feasible { log, .. } | Synthesis::InfeasibleAt { log, .. } => log,
        }
    }
}

fn check_supported(inst: &Instance, params: &Params) -> Result<()> {
    let problems = crate::model::validate_instance(inst);
    if !problems.is_empty() {
        return Err(Error::InvalidInstance(problems));
    }
    if params.correlated {
        if inst.inequality_mode {
            return Err(Error::Unsupported("correlated mode with inequality mode".into()));
        }
        // Every report must be reachable from every true type: the support
        // has to be closed under changing one buyer's type.
        let counts = inst.type_counts();
        let support = inst.prior.enumerate(&counts, crate::model::DEFAULT_ENUMERATION_CAP)?;
        if let Prior::Joint(_) = inst.prior {
            for (t, _) in &support {
                for (i, &k) in counts.iter().enumerate() {
                    for tp in 0..k {
                        if inst.prior.prob(&t.with(i, tp)) <= 0.0 {
                            return Err(Error::Unsupported(format!(
                                "correlated mode needs the joint support closed under unilateral deviations; {:?} with buyer {i} at type {tp} has zero mass",
                                t.0
                            )));
                        }
                    }
                }
            }
        }
    }
    if inst.inequality_mode && !inst.polytope.is_empty() {
        return Err(Error::Unsupported("inequality mode with polytope rows".into()));
    }
    Ok(())
}

fn stream_for(target: f64, attempt: u64) -> u64 {
    target.to_bits().rotate_left(17) ^ attempt.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Run the engine at one revenue target.
pub fn synthesize(inst: &Instance, config: &SynthesisConfig, target: f64) -> Result<Synthesis> {
    let params = config.resolve(inst)?;
    synthesize_with(inst, &params, target, 0)
}

pub fn synthesize_with(inst: &Instance, params: &Params, target: f64, attempt: u64) -> Result<Synthesis> {
    check_supported(inst, params)?;
    let problem = Problem::new(inst, params.correlated, params.delta, target);
    let source = ScenarioSource::new(inst, params.samples, params.exact)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(stream_for(target, attempt));

    let mut mwu = MwuParams::new(problem.num_rows(), 1.0, params.learning_rate, params.rounds);
    mwu.early_stop = params.residual_target.map(|target| EarlyStop {
        target,
        window: params.window,
        min_rounds: params.check_every,
        check_every: params.check_every,
    });
    let transcript = run_generalized_ahk(
        &mwu,
        |_| problem.build_round_constraints(source.draw(&mut rng)),
        |system, y| problem.combined_oracle(system, y),
    )?;
    let mut sums = vec![0.0; problem.num_rows()];
    let log: Vec<RoundLog> = transcript
        .violations
        .iter()
        .zip(&transcript.solutions)
        .enumerate()
        .map(|(round, (m, s))| {
            for (acc, v) in sums.iter_mut().zip(m) {
                *acc += v;
            }
            let k = (round + 1) as f64;
            RoundLog {
                round,
                max_violation: m.iter().fold(0.0, |acc: f64, &v| acc.max(-v)),
                mean_violation: sums.iter().fold(0.0, |acc: f64, &v| acc.max(-v / k)),
                c_value: s.value,
            }
        })
        .collect();
    let infeasible = |round| Synthesis::InfeasibleAt {
        target,
        round,
        log: log.clone(),
    };
    let range = match transcript.status {
        MwuStatus::DeclaredInfeasible { round } => return Ok(infeasible(Some(round))),
        MwuStatus::Completed if params.residual_target.is_some() => return Ok(infeasible(None)),
        _ => transcript.averaged_rounds().expect("feasible transcript"),
    };
    let kept = &transcript.solutions[range];
    let dim = problem.layout.len();
    let mut holistic = vec![0.0; dim];
    for s in kept {
        for (h, x) in holistic.iter_mut().zip(&s.holistic) {
            *h += x / kept.len() as f64;
        }
    }
    // Averaging can drift past a box edge by an ulp.
    for (k, h) in holistic.iter_mut().enumerate() {
        let c = problem.layout.decode(k);
        let (lo, hi) = feature_range(inst, c.buyer, c.t_rep, c.feature);
        *h = h.clamp(lo, hi);
    }
    let mechanism = Mechanism {
        version: MECHANISM_VERSION,
        setting: inst.setting,
        instance: inst.clone(),
        correlated: params.correlated,
        target_revenue: target,
        snapshots: kept.iter().map(|s| s.snapshot.clone()).collect(),
        giveaway: 0.0,
        scaling: None,
        holistic,
        params: params.clone(),
    };
    Ok(Synthesis::Feasible {
        mechanism: Box::new(mechanism),
        log,
    })
}

/// One probe of the revenue search.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchStep {
    pub target: f64,
    pub feasible: bool,
    pub rounds: usize,
}

#[derive(Clone, Debug)]
pub struct SearchResult {
    pub mechanism: Mechanism,
    pub revenue: f64,
    pub steps: Vec<SearchStep>,
    /// Round log of the kept run.
    pub log: Vec<RoundLog>,
}

/// Upper end of the revenue search.
pub fn revenue_upper_bound(inst: &Instance, params: &Params) -> Result<f64> {
    let n = inst.num_buyers() as f64;
    if has_global_row(inst) {
        return Ok(round::global_bounds(inst).1);
    }
    let layout = Layout::new(inst, params.correlated);
    let lp = crate::oracles::HolisticLp::new(inst, &layout);
    Ok(lp.max_revenue()?.unwrap_or(0.0).min(n * inst.scale).max(0.0))
}

fn attempt(inst: &Instance, params: &Params, target: f64, steps: &mut Vec<SearchStep>) -> Result<Synthesis> {
    let mut out = synthesize_with(inst, params, target, 0)?;
    if params.retry && out.mechanism().is_none() {
        out = synthesize_with(inst, params, target, 1)?;
    }
    steps.push(SearchStep {
        target,
        feasible: out.mechanism().is_some(),
        rounds: out.log().len(),
    });
    Ok(out)
}

/// Bisect the revenue target to granularity `epsilon / 2`, then apply the
/// private-budget and inequality-mode wrappers.
pub fn binary_search_revenue(inst: &Instance, config: &SynthesisConfig) -> Result<SearchResult> {
    let params = config.resolve(inst)?;
    let mut steps = Vec::new();
    // The empty mechanism reaches this target.
    let start = match inst.setting {
        Setting::SellerUtility => inst.seller_utility(0)?.min(0.0),
        _ => 0.0,
    };
    let mut best = match attempt(inst, &params, start, &mut steps)? {
        Synthesis::Feasible { mechanism, log } => (*mechanism, log),
        Synthesis::InfeasibleAt { .. } => {
            return Err(Error::InvalidConfig(format!(
                "no mechanism found at target {start}; raise the round cap or loosen the residual target"
            )))
        }
    };
    let mut lo = start;
    let hi_bound = revenue_upper_bound(inst, &params)?;
    let mut hi = hi_bound.max(lo);
    while hi - lo > params.epsilon / 2.0 {
        let mid = 0.5 * (lo + hi);
        match attempt(inst, &params, mid, &mut steps)? {
            Synthesis::Feasible { mechanism, log } => {
                lo = mid;
                best = (*mechanism, log);
            }
            Synthesis::InfeasibleAt { .. } => hi = mid,
        }
    }
    let (mut mechanism, log) = best;
    if inst.has_private_budgets() {
        mechanism = wrap_private_budgets(mechanism, params.giveaway)?;
    }
    if inst.inequality_mode {
        mechanism = apply_scaling_fix(mechanism, None)?;
    }
    Ok(SearchResult {
        mechanism,
        revenue: lo,
        steps,
        log,
    })
}

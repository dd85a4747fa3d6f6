//! Running a stored mechanism on reported types.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Instance, Setting, TypeVector};
use crate::oracles::{seller_objective, solve_scenario, Allocation, Layout, Outcome};
use crate::synthesis::Mechanism;

/// The record of one execution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    /// Snapshot used, `None` when the giveaway fired.
    pub round: Option<usize>,
    pub giveaway: bool,
    /// Scaling coins `[i][j]` (inequality mode only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaling_coins: Option<Vec<Vec<bool>>>,
    pub outcome: Outcome,
    /// Total payments collected.
    pub revenue: f64,
}

/// Rng for execution `id` under `seed`: one ChaCha stream per id.
pub fn keyed_rng(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// The oracle outcome of snapshot `round` at reports `t`.
pub fn base_outcome(mech: &Mechanism, layout: &Layout, round: usize, t: &TypeVector) -> Result<Outcome> {
    let w = mech.scenario_weights(layout, round, t)?;
    Ok(solve_scenario(&mech.instance, t, &w)?.0)
}

/// Every unit to the first buyer at price zero.
pub fn giveaway_outcome(inst: &Instance) -> Outcome {
    let mut out = Outcome::empty(inst);
    if let Allocation::Units(q) = &mut out.allocation {
        q[0] = inst.items;
    }
    out
}

/// Apply scaling coins and all-pay payments to a base outcome.
pub fn scaled_outcome(mech: &Mechanism, base: &Outcome, t: &TypeVector, coins: &[Vec<bool>]) -> Outcome {
    let fix = mech.scaling.as_ref().expect("mechanism has a scaling fix");
    let mut out = base.clone();
    if let Allocation::Items(x) = &mut out.allocation {
        for (i, row) in x.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                if !coins[i][j] {
                    *v = 0.0;
                }
            }
        }
    }
    out.payments = (0..mech.instance.num_buyers())
        .map(|i| fix.all_pay[i][t.get(i)])
        .collect();
    out
}

fn check_types(mech: &Mechanism, t: &TypeVector) -> Result<()> {
    mech.instance.validate_types(t)
}

/// Check that a mechanism was built for `inst`'s setting.
pub fn check_setting(mech: &Mechanism, setting: Setting) -> Result<()> {
    if mech.setting != setting {
        return Err(Error::SettingMismatch {
            mechanism: mech.setting,
            requested: setting,
        });
    }
    Ok(())
}

/// One execution: giveaway coin, uniform snapshot, oracle, scaling coins.
pub fn execute<R: Rng + ?Sized>(mech: &Mechanism, t: &TypeVector, rng: &mut R) -> Result<ExecutionTrace> {
    check_types(mech, t)?;
    let inst = &mech.instance;
    if mech.giveaway > 0.0 && rng.random::<f64>() < mech.giveaway {
        let outcome = giveaway_outcome(inst);
        return Ok(ExecutionTrace {
            round: None,
            giveaway: true,
            scaling_coins: None,
            revenue: outcome.revenue(),
            outcome,
        });
    }
    let round = rng.random_range(0..mech.snapshots.len());
    let layout = mech.layout();
    let base = base_outcome(mech, &layout, round, t)?;
    let (outcome, coins) = match &mech.scaling {
        Some(fix) => {
            let coins: Vec<Vec<bool>> = (0..inst.num_buyers())
                .map(|i| {
                    fix.factors[i][t.get(i)]
                        .iter()
                        .map(|&f| rng.random::<f64>() < f)
                        .collect()
                })
                .collect();
            (scaled_outcome(mech, &base, t, &coins), Some(coins))
        }
        None => (base, None),
    };
    Ok(ExecutionTrace {
        round: Some(round),
        giveaway: false,
        scaling_coins: coins,
        revenue: outcome.revenue(),
        outcome,
    })
}

/// [`execute`] with the rng keyed by `(seed, id)`.
pub fn execute_keyed(mech: &Mechanism, t: &TypeVector, seed: u64, id: u64) -> Result<ExecutionTrace> {
    execute(mech, t, &mut keyed_rng(seed, id))
}

/// [`execute`] after checking the mechanism against an instance's setting.
pub fn execute_on<R: Rng + ?Sized>(
    mech: &Mechanism,
    inst: &Instance,
    t: &TypeVector,
    rng: &mut R,
) -> Result<ExecutionTrace> {
    check_setting(mech, inst.setting)?;
    execute(mech, t, rng)
}

/// The seller's objective value of a trace.
pub fn trace_objective(mech: &Mechanism, trace: &ExecutionTrace) -> Result<f64> {
    seller_objective(&mech.instance, &trace.outcome)
}

pub fn serialize(mech: &Mechanism) -> String {
    mech.to_json()
}

pub fn deserialize(doc: &str) -> Result<Mechanism> {
    Mechanism::from_json(doc)
}

/// One JSON line for a trace.
pub fn trace_line(trace: &ExecutionTrace) -> String {
    serde_json::to_string(trace).expect("trace serializes")
}

//! Post-synthesis wrappers: the private-budget giveaway and the
//! inequality-mode scaling fix.

use serde::{Deserialize, Serialize};

use super::Mechanism;
use crate::error::{Error, Result};
use crate::model::Setting;
use crate::oracles::payment_feature;
use crate::verify::{exact_interim, mc_interim, Interim};

/// Inequality-mode scaling: every allocated item survives a coin with
/// probability `factors[i][t][j]`, and buyer `i` pays `all_pay[i][t]`
/// whatever happens.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFix {
    pub c: f64,
    pub factors: Vec<Vec<Vec<f64>>>,
    pub all_pay: Vec<Vec<f64>>,
}

/// With probability `eta`, hand every unit to the first buyer for free.
pub fn wrap_private_budgets(mut mech: Mechanism, eta: f64) -> Result<Mechanism> {
    if !mech.setting.is_multi_unit_family() {
        return Err(Error::Unsupported(format!(
            "the giveaway wrapper needs a multi-unit setting, not {}",
            mech.setting.name()
        )));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidConfig(format!(
            "giveaway probability {eta} outside [0, 1]"
        )));
    }
    mech.giveaway = eta;
    Ok(mech)
}

/// Samples used when the type space is too large for exact interim values.
const SCALING_MC_SAMPLES: usize = 200_000;

/// Scale allocations so the interim allocation is exactly `X / c`, and
/// switch payments to all-pay `P / c`.
///
/// `realized` is the interim allocation `[i][t][j]` of the unscaled
/// mechanism; when `None` it is computed exactly, or by Monte Carlo if the
/// type space is too large.
pub fn apply_scaling_fix(mut mech: Mechanism, realized: Option<&[Vec<Vec<f64>>]>) -> Result<Mechanism> {
    let inst = mech.instance.clone();
    if inst.setting != Setting::MultiItem || !inst.inequality_mode {
        return Err(Error::Unsupported(
            "the scaling fix applies to inequality-mode multi-item mechanisms".into(),
        ));
    }
    if mech.correlated {
        return Err(Error::Unsupported("the scaling fix with correlated mode".into()));
    }
    mech.scaling = None;
    let owned;
    let realized = match realized {
        Some(r) => r,
        None => {
            let interim = match exact_interim(&mech) {
                Ok(i) => i,
                Err(Error::CapExceeded { .. }) => mc_interim(&mech, SCALING_MC_SAMPLES, mech.params.seed)?,
                Err(e) => return Err(e),
            };
            owned = allocation_table(&mech, &interim);
            &owned
        }
    };
    let layout = mech.layout();
    let m = inst.items;
    let delta = mech.params.delta;
    let mut c: f64 = 1.0;
    for i in 0..inst.num_buyers() {
        for t in 0..layout.types[i] {
            for j in 0..m {
                let x = mech.holistic[layout.cell(i, t, t, j)];
                let r = realized[i][t][j];
                if r > 0.0 {
                    c = c.max(x / r);
                } else if x > delta {
                    return Err(Error::DegenerateRatio {
                        buyer: i,
                        item: j,
                        ty: t,
                        target: x,
                    });
                }
            }
        }
    }
    let mut factors = Vec::with_capacity(inst.num_buyers());
    let mut all_pay = Vec::with_capacity(inst.num_buyers());
    for i in 0..inst.num_buyers() {
        let pf = payment_feature(&inst, i).expect("multi-item has a payment feature");
        let mut fi = Vec::new();
        let mut pi = Vec::new();
        for t in 0..layout.types[i] {
            let row: Vec<f64> = (0..m)
                .map(|j| {
                    let x = mech.holistic[layout.cell(i, t, t, j)];
                    let r = realized[i][t][j];
                    if r > 0.0 {
                        (x / c / r).clamp(0.0, 1.0)
                    } else {
                        0.0
                    }
                })
                .collect();
            fi.push(row);
            pi.push(mech.holistic[layout.cell(i, t, t, pf)] / c);
        }
        factors.push(fi);
        all_pay.push(pi);
    }
    mech.scaling = Some(ScalingFix { c, factors, all_pay });
    Ok(mech)
}

/// `[i][t][j]` interim allocation on truthful reports.
pub(crate) fn allocation_table(mech: &Mechanism, interim: &Interim) -> Vec<Vec<Vec<f64>>> {
    let inst = &mech.instance;
    (0..inst.num_buyers())
        .map(|i| {
            (0..inst.buyers[i].num_types())
                .map(|t| (0..inst.items).map(|j| interim.get(i, t, t, j)).collect())
                .collect()
        })
        .collect()
}

//! JSON document form of [`Instance`]. Joint prior entries name types by
//! label; everything else mirrors the in-memory layout.

use serde::{Deserialize, Serialize};

use super::{Budget, Buyer, Instance, PolytopeRow, Prior, SellerUtility, Setting, SoftCost, TypeVector};

pub const INSTANCE_VERSION: u32 = 1;

fn version_one() -> u32 {
    INSTANCE_VERSION
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceDoc {
    #[serde(default = "version_one")]
    version: u32,
    setting: Setting,
    items: usize,
    scale: f64,
    buyers: Vec<BuyerDoc>,
    prior: PriorDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seller_utility: Option<SellerUtility>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    procurement_budget: Option<i64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    supply: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    polytope: Vec<PolytopeRow>,
    #[serde(default, skip_serializing_if = "is_false")]
    envy_free: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    inequality_mode: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BuyerDoc {
    types: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    values: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    budget: Option<BudgetDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    soft_cost: Option<SoftCost>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    utility: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    cost: Vec<i64>,
    #[serde(default, skip_serializing_if = "is_zero")]
    item_value: f64,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum BudgetDoc {
    Public(f64),
    Private { private: Vec<f64> },
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum PriorDoc {
    Independent(Vec<Vec<f64>>),
    Joint(Vec<JointEntryDoc>),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JointEntryDoc {
    types: Vec<String>,
    p: f64,
}

impl TryFrom<InstanceDoc> for Instance {
    type Error = String;

    fn try_from(doc: InstanceDoc) -> Result<Self, String> {
        if doc.version != INSTANCE_VERSION {
            return Err(format!(
                "instance version {} is not supported (expected {INSTANCE_VERSION})",
                doc.version
            ));
        }
        let scale = doc.scale;
        let buyers: Vec<Buyer> = doc
            .buyers
            .into_iter()
            .map(|b| Buyer {
                types: b.types,
                values: b.values,
                budget: match b.budget {
                    None => Budget::Public(scale),
                    Some(BudgetDoc::Public(x)) => Budget::Public(x),
                    Some(BudgetDoc::Private { private }) => Budget::Private(private),
                },
                soft_cost: b.soft_cost,
                utility: b.utility,
                cost: b.cost,
                item_value: b.item_value,
            })
            .collect();
        let prior = match doc.prior {
            PriorDoc::Independent(p) => Prior::Independent(p),
            PriorDoc::Joint(entries) => {
                let mut out = Vec::with_capacity(entries.len());
                for e in entries {
                    if e.types.len() != buyers.len() {
                        return Err(format!(
                            "joint prior entry {:?} does not name one type per buyer",
                            e.types
                        ));
                    }
                    let mut idx = Vec::with_capacity(e.types.len());
                    for (i, label) in e.types.iter().enumerate() {
                        idx.push(
                            buyers[i]
                                .type_index(label)
                                .ok_or_else(|| format!("buyer {i} has no type {label:?}"))?,
                        );
                    }
                    out.push((TypeVector(idx), e.p));
                }
                Prior::joint(out)
            }
        };
        Ok(Instance {
            setting: doc.setting,
            items: doc.items,
            scale,
            buyers,
            prior,
            seller_utility: doc.seller_utility,
            procurement_budget: doc.procurement_budget,
            supply: doc.supply,
            polytope: doc.polytope,
            envy_free: doc.envy_free,
            inequality_mode: doc.inequality_mode,
        })
    }
}

impl From<&Instance> for InstanceDoc {
    fn from(inst: &Instance) -> Self {
        let prior = match &inst.prior {
            Prior::Independent(p) => PriorDoc::Independent(p.clone()),
            Prior::Joint(j) => PriorDoc::Joint(
                j.entries()
                    .iter()
                    .map(|(t, p)| JointEntryDoc {
                        types: t
                            .0
                            .iter()
                            .enumerate()
                            .map(|(i, &k)| inst.buyers[i].types[k].clone())
                            .collect(),
                        p: *p,
                    })
                    .collect(),
            ),
        };
        InstanceDoc {
            version: INSTANCE_VERSION,
            setting: inst.setting,
            items: inst.items,
            scale: inst.scale,
            buyers: inst
                .buyers
                .iter()
                .map(|b| BuyerDoc {
                    types: b.types.clone(),
                    values: b.values.clone(),
                    budget: Some(match &b.budget {
                        Budget::Public(x) => BudgetDoc::Public(*x),
                        Budget::Private(v) => BudgetDoc::Private { private: v.clone() },
                    }),
                    soft_cost: b.soft_cost.clone(),
                    utility: b.utility.clone(),
                    cost: b.cost.clone(),
                    item_value: b.item_value,
                })
                .collect(),
            prior,
            seller_utility: inst.seller_utility.clone(),
            procurement_budget: inst.procurement_budget,
            supply: inst.supply.clone(),
            polytope: inst.polytope.clone(),
            envy_free: inst.envy_free,
            inequality_mode: inst.inequality_mode,
        }
    }
}

impl Serialize for Instance {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        InstanceDoc::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Instance {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let doc = InstanceDoc::deserialize(d)?;
        Instance::try_from(doc).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DEMO: &str = r#"{
        "setting": "multi_unit",
        "items": 1,
        "scale": 4,
        "buyers": [{"types": ["lo", "hi"], "values": [[0, 1], [0, 2]], "budget": 4}],
        "prior": {"independent": [[0.5, 0.5]]}
    }"#;

    #[test]
    fn parse_and_round_trip() {
        let inst = Instance::from_json(DEMO).unwrap();
        assert_eq!(inst.buyers[0].types, vec!["lo", "hi"]);
        assert_eq!(inst.budget(0, 1), 4.0);
        let back = Instance::from_json(&inst.to_json()).unwrap();
        assert_eq!(inst, back);
    }

    #[test]
    fn joint_prior_labels() {
        let text = r#"{
            "setting": "multi_unit", "items": 1, "scale": 4,
            "buyers": [
                {"types": ["a", "b"], "values": [[0, 1], [0, 2]], "budget": {"private": [1, 2]}},
                {"types": ["x", "y"], "values": [[0, 1], [0, 2]]}
            ],
            "prior": {"joint": [
                {"types": ["a", "x"], "p": 0.2}, {"types": ["b", "x"], "p": 0.4},
                {"types": ["a", "y"], "p": 0.2}, {"types": ["b", "y"], "p": 0.2}
            ]}
        }"#;
        let inst = Instance::from_json(text).unwrap();
        assert!(inst.has_private_budgets());
        assert_eq!(inst.prior.prob(&TypeVector(vec![1, 0])), 0.4);
        assert_eq!(Instance::from_json(&inst.to_json()).unwrap(), inst);

        let bad = text.replace("\"b\", \"x\"", "\"c\", \"x\"");
        assert!(Instance::from_json(&bad).is_err());
    }
}

//! Auction instances: buyers, type spaces, priors, valuations and budgets.
//!
//! Type labels are opaque strings resolved to dense indices when an
//! instance is loaded; everything downstream works with indices.

mod doc;
mod prior;

use serde::{Deserialize, Serialize};

pub use prior::{product_space, Prior, PriorSampler, DEFAULT_ENUMERATION_CAP};

use crate::error::{Error, Result};

/// Tolerance on input pmfs summing to one.
pub const PMF_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    MultiUnit,
    QuittingRights,
    SoftBudget,
    SellerUtility,
    MultiItem,
    Procurement,
}

impl Setting {
    pub const ALL: [Setting; 6] = [
        Setting::MultiUnit,
        Setting::QuittingRights,
        Setting::SoftBudget,
        Setting::SellerUtility,
        Setting::MultiItem,
        Setting::Procurement,
    ];

    /// Settings whose valuations are `v_i(q, t_i)` over item counts.
    pub fn is_multi_unit_family(self) -> bool {
        matches!(self, Setting::MultiUnit | Setting::QuittingRights | Setting::SoftBudget)
    }

    pub fn name(self) -> &'static str {
        match self {
            Setting::MultiUnit => "multi_unit",
            Setting::QuittingRights => "quitting_rights",
            Setting::SoftBudget => "soft_budget",
            Setting::SellerUtility => "seller_utility",
            Setting::MultiItem => "multi_item",
            Setting::Procurement => "procurement",
        }
    }
}

/// A reported (or true) type for every buyer, as dense indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TypeVector(pub Vec<usize>);

impl TypeVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, buyer: usize) -> usize {
        self.0[buyer]
    }

    /// Copy with buyer `i`'s entry replaced.
    pub fn with(&self, buyer: usize, ty: usize) -> TypeVector {
        let mut v = self.0.clone();
        v[buyer] = ty;
        TypeVector(v)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Budget {
    Public(f64),
    /// Budget as a function of the reported type.
    Private(Vec<f64>),
}

impl Budget {
    pub fn resolve(&self, ty: usize) -> f64 {
        match self {
            Budget::Public(b) => *b,
            Budget::Private(per_type) => per_type[ty],
        }
    }

    pub fn is_private(&self) -> bool {
        matches!(self, Budget::Private(_))
    }
}

/// Continuous piecewise-linear borrowing cost `c(p)` with `c(0) = 0`.
///
/// `slopes[k]` applies on `[knots[k], knots[k + 1])`; the last slope extends
/// to infinity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftCost {
    pub knots: Vec<f64>,
    pub slopes: Vec<f64>,
}

impl SoftCost {
    pub fn linear() -> Self {
        SoftCost {
            knots: vec![0.0],
            slopes: vec![1.0],
        }
    }

    pub fn cost(&self, p: f64) -> f64 {
        let mut acc = 0.0;
        for k in 0..self.knots.len() {
            let start = self.knots[k];
            if p <= start {
                break;
            }
            let end = self.knots.get(k + 1).copied().unwrap_or(f64::INFINITY);
            acc += self.slopes[k] * (p.min(end) - start);
        }
        acc
    }

    /// Largest payment whose cost does not exceed `budget` (slopes are positive).
    pub fn inverse(&self, budget: f64) -> f64 {
        if budget <= 0.0 {
            return 0.0;
        }
        let mut acc = 0.0;
        for k in 0..self.knots.len() {
            let start = self.knots[k];
            let end = self.knots.get(k + 1).copied().unwrap_or(f64::INFINITY);
            let seg = self.slopes[k] * (end - start);
            if acc + seg >= budget {
                return start + (budget - acc) / self.slopes[k];
            }
            acc += seg;
        }
        f64::INFINITY
    }
}

/// Seller utility `U(z)` tabulated on integer revenues.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SellerUtility {
    /// `(revenue, utility)` pairs sorted by revenue.
    pub points: Vec<(i64, f64)>,
    #[serde(default)]
    pub interpolate: bool,
}

impl SellerUtility {
    /// Risk-neutral seller: `U(z) = z` on `[lo, hi]`.
    pub fn linear(lo: i64, hi: i64) -> Self {
        SellerUtility {
            points: (lo..=hi).map(|z| (z, z as f64)).collect(),
            interpolate: false,
        }
    }

    pub fn eval(&self, z: i64) -> Result<f64> {
        match self.points.binary_search_by_key(&z, |&(r, _)| r) {
            Ok(k) => Ok(self.points[k].1),
            Err(k) if self.interpolate && k > 0 && k < self.points.len() => {
                let (z0, u0) = self.points[k - 1];
                let (z1, u1) = self.points[k];
                Ok(u0 + (u1 - u0) * (z - z0) as f64 / (z1 - z0) as f64)
            }
            Err(_) => Err(Error::MissingUtility(z)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Buyer {
    pub types: Vec<String>,
    /// `values[t][q]` for the multi-unit family, `values[t][j]` for multi-item.
    pub values: Vec<Vec<f64>>,
    pub budget: Budget,
    pub soft_cost: Option<SoftCost>,
    /// Seller-utility setting: `utility[t][q][p + L]`. Absent means `v(q, t) - p`.
    pub utility: Option<Vec<Vec<Vec<f64>>>>,
    /// Procurement: integer production cost per type.
    pub cost: Vec<i64>,
    /// Procurement: auctioneer's value for this agent's item.
    pub item_value: f64,
}

impl Buyer {
    pub fn new(types: Vec<String>, values: Vec<Vec<f64>>, budget: Budget) -> Self {
        Buyer {
            types,
            values,
            budget,
            soft_cost: None,
            utility: None,
            cost: Vec::new(),
            item_value: 0.0,
        }
    }

    pub fn num_types(&self) -> usize {
        self.types.len()
    }

    pub fn type_index(&self, label: &str) -> Option<usize> {
        self.types.iter().position(|t| t == label)
    }
}

/// Extra linear `<=` row over one scenario's `(x_ij..., p_i...)` (multi-item).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolytopeRow {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub setting: Setting,
    pub items: usize,
    /// The scale bound `L`.
    pub scale: f64,
    pub buyers: Vec<Buyer>,
    pub prior: Prior,
    pub seller_utility: Option<SellerUtility>,
    pub procurement_budget: Option<i64>,
    /// Multi-item supply per item; defaults to 1.
    pub supply: Vec<f64>,
    pub polytope: Vec<PolytopeRow>,
    pub envy_free: bool,
    /// Multi-item without ex-post payment constraints (welfare oracle, all-pay).
    pub inequality_mode: bool,
}

/// Output of [`compute_width_params`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WidthParams {
    /// Largest magnitude of any valuation, budget, cost or utility.
    pub l_effective: f64,
    /// Largest conditional probability ratio over the joint support.
    pub z_max: f64,
}

impl Instance {
    pub fn num_buyers(&self) -> usize {
        self.buyers.len()
    }

    pub fn type_counts(&self) -> Vec<usize> {
        self.buyers.iter().map(Buyer::num_types).collect()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::MalformedDocument(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }

    /// Integer `L` for the seller-utility payment grid.
    pub fn int_scale(&self) -> i64 {
        self.scale.round() as i64
    }

    pub fn budget(&self, buyer: usize, ty: usize) -> f64 {
        self.buyers[buyer].budget.resolve(ty)
    }

    pub fn has_private_budgets(&self) -> bool {
        self.buyers.iter().any(|b| b.budget.is_private())
    }

    /// `v_i(q, t)` for the multi-unit family.
    pub fn value(&self, buyer: usize, q: usize, ty: usize) -> f64 {
        self.buyers[buyer].values[ty][q]
    }

    /// Buyer utility `u_i(p, q, t)` in the seller-utility setting.
    pub fn buyer_utility(&self, buyer: usize, p: i64, q: usize, ty: usize) -> f64 {
        let b = &self.buyers[buyer];
        match &b.utility {
            Some(table) => table[ty][q][(p + self.int_scale()) as usize],
            None => b.values[ty][q] - p as f64,
        }
    }

    pub fn seller_utility(&self, revenue: i64) -> Result<f64> {
        match &self.seller_utility {
            Some(u) => u.eval(revenue),
            None => Ok(revenue as f64),
        }
    }

    pub fn soft_cost(&self, buyer: usize) -> SoftCost {
        self.buyers[buyer].soft_cost.clone().unwrap_or_else(SoftCost::linear)
    }

    pub fn supply(&self, item: usize) -> f64 {
        self.supply.get(item).copied().unwrap_or(1.0)
    }

    pub fn validate_types(&self, t: &TypeVector) -> Result<()> {
        if t.len() != self.num_buyers() {
            return Err(Error::InvalidTypes(format!(
                "expected {} entries, got {}",
                self.num_buyers(),
                t.len()
            )));
        }
        for (i, (&ty, b)) in t.0.iter().zip(&self.buyers).enumerate() {
            if ty >= b.num_types() {
                return Err(Error::InvalidTypes(format!(
                    "buyer {i} has {} types, got index {ty}",
                    b.num_types()
                )));
            }
        }
        Ok(())
    }

    /// Resolve comma-separated type labels (or indices) into a type vector.
    pub fn parse_types(&self, spec: &str) -> Result<TypeVector> {
        let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
        if parts.len() != self.num_buyers() {
            return Err(Error::InvalidTypes(format!(
                "expected {} types, got {}",
                self.num_buyers(),
                parts.len()
            )));
        }
        let mut out = Vec::with_capacity(parts.len());
        for (i, part) in parts.iter().enumerate() {
            let b = &self.buyers[i];
            let idx = b
                .type_index(part)
                .or_else(|| part.parse::<usize>().ok().filter(|&k| k < b.num_types()))
                .ok_or_else(|| Error::InvalidTypes(format!("buyer {i} has no type {part:?}")))?;
            out.push(idx);
        }
        Ok(TypeVector(out))
    }
}

/// Every violated instance invariant, in a human-readable form. Empty means valid.
pub fn validate_instance(inst: &Instance) -> Vec<String> {
    let mut out = Vec::new();
    let l = inst.scale;
    let n = inst.num_buyers();
    let m = inst.items;
    if n == 0 {
        out.push("instance has no buyers".to_string());
        return out;
    }
    if !(l > 0.0) || !l.is_finite() {
        out.push(format!("scale L must be positive and finite, got {l}"));
        return out;
    }
    for (i, b) in inst.buyers.iter().enumerate() {
        if b.types.is_empty() {
            out.push(format!("buyer {i} has an empty type space"));
        }
    }
    if !out.is_empty() {
        return out;
    }
    out.extend(inst.prior.violations(&inst.type_counts(), l));

    for (i, b) in inst.buyers.iter().enumerate() {
        let nt = b.num_types();
        match &b.budget {
            Budget::Public(x) => check_budget(&mut out, i, None, *x, l),
            Budget::Private(v) => {
                if v.len() != nt {
                    out.push(format!(
                        "buyer {i}: private budget has {} entries for {nt} types",
                        v.len()
                    ));
                }
                for (t, x) in v.iter().enumerate() {
                    check_budget(&mut out, i, Some(t), *x, l);
                }
                if inst.setting != Setting::MultiUnit {
                    out.push(format!(
                        "buyer {i}: private budgets are only supported in the multi_unit setting"
                    ));
                }
            }
        }
    }

    match inst.setting {
        Setting::MultiUnit | Setting::QuittingRights | Setting::SoftBudget => {
            check_unit_values(&mut out, inst);
            if inst.setting == Setting::SoftBudget {
                for (i, b) in inst.buyers.iter().enumerate() {
                    match &b.soft_cost {
                        None => out.push(format!("buyer {i}: soft_budget setting needs soft_cost")),
                        Some(c) => check_soft_cost(&mut out, i, c),
                    }
                }
            }
        }
        Setting::SellerUtility => check_seller_utility(&mut out, inst),
        Setting::Procurement => {
            match inst.procurement_budget {
                None => out.push("procurement setting needs procurement_budget".to_string()),
                Some(bud) if bud < 0 || bud as f64 > l => out.push(format!("procurement budget {bud} outside [0, L]")),
                _ => {}
            }
            for (i, b) in inst.buyers.iter().enumerate() {
                if b.cost.len() != b.num_types() {
                    out.push(format!("agent {i}: {} costs for {} types", b.cost.len(), b.num_types()));
                }
                for (t, &c) in b.cost.iter().enumerate() {
                    if c < 0 || c as f64 > l {
                        out.push(format!("agent {i}, type {t}: cost {c} outside {{0..L}}"));
                    }
                }
                if !(b.item_value >= 0.0 && b.item_value <= l) {
                    out.push(format!("agent {i}: item value {} outside [0, L]", b.item_value));
                }
            }
        }
        Setting::MultiItem => {
            for (i, b) in inst.buyers.iter().enumerate() {
                if b.values.len() != b.num_types() {
                    out.push(format!("buyer {i}: values need one row per type"));
                    continue;
                }
                for (t, row) in b.values.iter().enumerate() {
                    if row.len() != m {
                        out.push(format!("buyer {i}, type {t}: {} item values for {m} items", row.len()));
                    }
                    for &v in row {
                        if !(v >= 0.0 && v <= l) {
                            out.push(format!("buyer {i}, type {t}: value {v} outside [0, L]"));
                        }
                    }
                }
            }
            if !inst.supply.is_empty() && inst.supply.len() != m {
                out.push(format!("supply has {} entries for {m} items", inst.supply.len()));
            }
            if inst.supply.iter().any(|&s| !(s >= 0.0)) {
                out.push("supply entries must be non-negative".to_string());
            }
            for (k, row) in inst.polytope.iter().enumerate() {
                if row.coeffs.len() != n * m + n {
                    out.push(format!(
                        "polytope row {k} has {} coefficients, expected {}",
                        row.coeffs.len(),
                        n * m + n
                    ));
                }
                if row.rhs < 0.0 {
                    out.push(format!("polytope row {k} excludes the zero outcome (rhs < 0)"));
                }
            }
            if inst.envy_free && inst.inequality_mode {
                out.push("envy_free needs ex-post payments and cannot combine with inequality_mode".to_string());
            }
        }
    }
    if inst.setting != Setting::MultiItem && (inst.envy_free || inst.inequality_mode) {
        out.push("envy_free and inequality_mode only apply to multi_item".to_string());
    }
    out
}

fn check_budget(out: &mut Vec<String>, i: usize, t: Option<usize>, b: f64, l: f64) {
    if !(b >= 0.0 && b <= l) {
        match t {
            Some(t) => out.push(format!("buyer {i}, type {t}: budget {b} outside [0, L]")),
            None => out.push(format!("buyer {i}: budget {b} outside [0, L]")),
        }
    }
}

fn check_unit_values(out: &mut Vec<String>, inst: &Instance) {
    let m = inst.items;
    for (i, b) in inst.buyers.iter().enumerate() {
        if b.values.len() != b.num_types() {
            out.push(format!(
                "buyer {i}: {} value rows for {} types",
                b.values.len(),
                b.num_types()
            ));
            continue;
        }
        for (t, row) in b.values.iter().enumerate() {
            if row.len() != m + 1 {
                out.push(format!(
                    "buyer {i}, type {t}: values need {} entries (q = 0..={m}), got {}",
                    m + 1,
                    row.len()
                ));
                continue;
            }
            if row[0] != 0.0 {
                out.push(format!("buyer {i}, type {t}: v(0) = {} but must be 0", row[0]));
            }
            for (q, &v) in row.iter().enumerate() {
                if !(v >= 0.0 && v <= inst.scale) {
                    out.push(format!("buyer {i}, type {t}: v({q}) = {v} outside [0, L]"));
                }
            }
        }
    }
}

fn check_soft_cost(out: &mut Vec<String>, i: usize, c: &SoftCost) {
    if c.knots.is_empty() || c.knots.len() != c.slopes.len() {
        out.push(format!(
            "buyer {i}: soft_cost needs matching non-empty knots and slopes"
        ));
        return;
    }
    if c.knots[0] != 0.0 {
        out.push(format!("buyer {i}: soft_cost knots must start at 0"));
    }
    if c.knots.windows(2).any(|w| !(w[1] > w[0])) {
        out.push(format!("buyer {i}: soft_cost knots must be strictly increasing"));
    }
    if c.slopes.iter().any(|&s| !(s >= 1.0)) {
        out.push(format!("buyer {i}: soft_cost slopes below 1 make c(p) - p decreasing"));
    }
}

fn check_seller_utility(out: &mut Vec<String>, inst: &Instance) {
    let l = inst.scale;
    if l.fract() != 0.0 {
        out.push(format!("seller_utility setting needs an integer L, got {l}"));
        return;
    }
    let li = inst.int_scale();
    let m = inst.items;
    for (i, b) in inst.buyers.iter().enumerate() {
        match &b.utility {
            Some(table) => {
                if table.len() != b.num_types() {
                    out.push(format!("buyer {i}: utility table needs one block per type"));
                    continue;
                }
                for (t, block) in table.iter().enumerate() {
                    if block.len() != m + 1 || block.iter().any(|r| r.len() != (2 * li + 1) as usize) {
                        out.push(format!(
                            "buyer {i}, type {t}: utility block must be {} x {}",
                            m + 1,
                            2 * li + 1
                        ));
                        continue;
                    }
                    if block.iter().flatten().any(|u| !(u.abs() <= l)) {
                        out.push(format!("buyer {i}, type {t}: |u(p, q, t)| exceeds L"));
                    }
                }
            }
            None => check_unit_values(out, inst),
        }
        for t in 0..b.num_types() {
            let ok = b
                .utility
                .as_ref()
                .map_or(b.values.get(t).is_some_and(|r| !r.is_empty()), |tb| {
                    tb.get(t).is_some_and(|blk| blk.len() == m + 1)
                });
            if ok && inst.buyer_utility(i, 0, 0, t) < 0.0 {
                out.push(format!(
                    "buyer {i}, type {t}: u(0, 0, t) < 0 leaves no feasible outcome"
                ));
            }
        }
    }
    let span = inst.num_buyers() as i64 * li;
    match &inst.seller_utility {
        None => {}
        Some(u) => {
            if u.points.windows(2).any(|w| w[1].0 <= w[0].0) {
                out.push("seller utility points must have strictly increasing revenues".to_string());
                return;
            }
            match u.eval(0) {
                Ok(0.0) => {}
                Ok(v) => out.push(format!("seller utility U(0) = {v}, must be 0")),
                Err(_) => out.push("seller utility undefined at 0".to_string()),
            }
            let mut prev = f64::NEG_INFINITY;
            for z in -span..=span {
                match u.eval(z) {
                    Ok(v) => {
                        if v < prev {
                            out.push(format!("seller utility decreases at revenue {z}"));
                            break;
                        }
                        prev = v;
                    }
                    Err(_) => {
                        out.push(format!("seller utility undefined at revenue {z} (range is [-nL, nL])"));
                        break;
                    }
                }
            }
        }
    }
}

/// Effective scale and the correlated-prior ratio bound.
pub fn compute_width_params(inst: &Instance) -> WidthParams {
    let mut l: f64 = 0.0;
    for (i, b) in inst.buyers.iter().enumerate() {
        for row in &b.values {
            for &v in row {
                l = l.max(v.abs());
            }
        }
        for t in 0..b.num_types() {
            l = l.max(inst.budget(i, t).abs());
        }
        for &c in &b.cost {
            l = l.max(c.abs() as f64);
        }
        l = l.max(b.item_value.abs());
        if let Some(table) = &b.utility {
            for u in table.iter().flatten().flatten() {
                l = l.max(u.abs());
            }
        }
    }
    if let Some(bud) = inst.procurement_budget {
        l = l.max(bud.abs() as f64);
    }
    WidthParams {
        l_effective: l,
        z_max: inst.prior.z_max(&inst.type_counts()),
    }
}

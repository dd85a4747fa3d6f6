//! Dense two-phase tableau simplex.
//!
//! Dantzig pricing, falling back to Bland's rule while the solver is stalled
//! on a degenerate vertex, which rules out cycling. Problems here are small
//! (at most a few thousand columns), so a dense tableau is fine.

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<f64>, relation: Relation, rhs: f64) -> Self {
        Constraint { coeffs, relation, rhs }
    }

    pub fn le(coeffs: Vec<f64>, rhs: f64) -> Self {
        Self::new(coeffs, Relation::Le, rhs)
    }

    pub fn ge(coeffs: Vec<f64>, rhs: f64) -> Self {
        Self::new(coeffs, Relation::Ge, rhs)
    }

    pub fn eq(coeffs: Vec<f64>, rhs: f64) -> Self {
        Self::new(coeffs, Relation::Eq, rhs)
    }

    fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn is_satisfied(&self, x: &[f64], tol: f64) -> bool {
        let lhs = self.activity(x);
        match self.relation {
            Relation::Le => lhs <= self.rhs + tol,
            Relation::Ge => lhs >= self.rhs - tol,
            Relation::Eq => (lhs - self.rhs).abs() <= tol,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearProgram {
    pub sense: Sense,
    pub objective: Vec<f64>,
    pub rows: Vec<Constraint>,
    /// Per-variable `[lo, hi]`; infinite ends allowed.
    pub bounds: Vec<(f64, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub values: Vec<f64>,
    pub objective_value: f64,
    /// Row multipliers certifying optimality (empty unless optimal). For a
    /// maximization, `<=` rows carry non-negative duals and `>=` rows
    /// non-positive ones; signs flip for a minimization.
    pub duals: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Feasibility {
    Feasible(Vec<f64>),
    Infeasible,
}

impl LinearProgram {
    /// Non-negative variables with no upper bound.
    pub fn new(sense: Sense, objective: Vec<f64>) -> Self {
        let n = objective.len();
        LinearProgram {
            sense,
            objective,
            rows: Vec::new(),
            bounds: vec![(0.0, f64::INFINITY); n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn push(&mut self, row: Constraint) {
        self.rows.push(row);
    }

    fn check_dims(&self) -> Result<()> {
        let n = self.objective.len();
        if self.bounds.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} bounds for {n} variables",
                self.bounds.len()
            )));
        }
        for (k, r) in self.rows.iter().enumerate() {
            if r.coeffs.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "row {k} has {} coefficients for {n} variables",
                    r.coeffs.len()
                )));
            }
        }
        for (j, &(lo, hi)) in self.bounds.iter().enumerate() {
            if lo > hi || lo.is_nan() || hi.is_nan() {
                return Err(Error::DimensionMismatch(format!(
                    "variable {j} has bounds [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    /// Value of the Lagrangian dual at `duals`, or `None` when it is unbounded
    /// (a sign violation or a reduced cost pointing at an infinite bound).
    /// Weak duality makes this an upper bound on a maximization (lower bound
    /// on a minimization).
    pub fn dual_objective(&self, duals: &[f64]) -> Option<f64> {
        let n = self.num_vars();
        let flip = if self.sense == Sense::Maximize { 1.0 } else { -1.0 };
        let mut value = 0.0;
        let mut reduced: Vec<f64> = self.objective.iter().map(|c| flip * c).collect();
        for (row, &y) in self.rows.iter().zip(duals) {
            let y = flip * y;
            let ok = match row.relation {
                Relation::Le => y >= -1e-9,
                Relation::Ge => y <= 1e-9,
                Relation::Eq => true,
            };
            if !ok {
                return None;
            }
            value += y * row.rhs;
            for j in 0..n {
                reduced[j] -= y * row.coeffs[j];
            }
        }
        for j in 0..n {
            let (lo, hi) = self.bounds[j];
            let r = reduced[j];
            if r > 1e-9 {
                if hi.is_infinite() {
                    return None;
                }
                value += r * hi;
            } else if r < -1e-9 {
                if lo.is_infinite() {
                    return None;
                }
                value += r * lo;
            } else if lo.is_finite() || hi.is_finite() {
                let pick = if lo.is_finite() { lo } else { hi };
                value += r * pick;
            }
        }
        Some(flip * value)
    }
}

/// How an original variable maps onto non-negative standard-form columns.
#[derive(Clone, Copy)]
enum VarMap {
    /// `x = lo + col`
    Shift { col: usize, lo: f64 },
    /// `x = hi - col`
    Mirror { col: usize, hi: f64 },
    /// `x = pos - neg`
    Split { pos: usize, neg: usize },
}

struct Tableau {
    rows: usize,
    cols: usize,
    /// `(rows + 1) x (cols + 1)`; the last row is the objective, the last column the rhs.
    data: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * (self.cols + 1) + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.cols)
    }

    fn obj(&self, c: usize) -> f64 {
        self.at(self.rows, c)
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.cols + 1;
        let inv = 1.0 / self.data[pr * w + pc];
        for c in 0..w {
            self.data[pr * w + c] *= inv;
        }
        self.data[pr * w + pc] = 1.0;
        let (before, rest) = self.data.split_at_mut(pr * w);
        let (prow, after) = rest.split_at_mut(w);
        for chunk in before.chunks_exact_mut(w).chain(after.chunks_exact_mut(w)) {
            let f = chunk[pc];
            if f != 0.0 {
                for (x, &p) in chunk.iter_mut().zip(prow.iter()) {
                    *x -= f * p;
                }
                chunk[pc] = 0.0;
            }
        }
        self.basis[pr] = pc;
    }

    /// Run simplex iterations on the current objective row (maximization,
    /// entering columns have negative reduced cost). Returns false if unbounded.
    fn optimize(&mut self, allowed: &[bool]) -> bool {
        let mut bland = false;
        let mut iters = 0usize;
        let limit = 200 * (self.rows + self.cols) + 10_000;
        loop {
            iters += 1;
            if iters > limit {
                // Bland's rule terminates; stay on it from here on.
                bland = true;
            }
            let entering = if bland {
                (0..self.cols).find(|&c| allowed[c] && self.obj(c) < -PIVOT_TOL)
            } else {
                let mut best = None;
                let mut best_val = -PIVOT_TOL;
                for c in 0..self.cols {
                    let d = self.obj(c);
                    if allowed[c] && d < best_val {
                        best_val = d;
                        best = Some(c);
                    }
                }
                best
            };
            let Some(pc) = entering else {
                return true;
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(r) / a;
                    match leave {
                        None => leave = Some((r, ratio)),
                        Some((lr, lratio)) => {
                            if ratio < lratio - 1e-12 || (ratio <= lratio + 1e-12 && self.basis[r] < self.basis[lr]) {
                                leave = Some((r, ratio));
                            }
                        }
                    }
                }
            }
            let Some((pr, ratio)) = leave else {
                return false;
            };
            bland = ratio <= 1e-12 || iters > limit;
            self.pivot(pr, pc);
        }
    }
}

struct Standard {
    tableau: Tableau,
    maps: Vec<VarMap>,
    /// Per standard row: identity column and the sign applied to the row.
    identity: Vec<(usize, f64)>,
    n_user_rows: usize,
    artificial_start: usize,
    /// Objective of the standard columns, as a maximization.
    cost: Vec<f64>,
}

fn standardize(lp: &LinearProgram, objective_sign: f64) -> Standard {
    let n = lp.num_vars();
    let mut maps = Vec::with_capacity(n);
    let mut ncols = 0usize;
    let mut extra_rows: Vec<(usize, f64)> = Vec::new();
    for &(lo, hi) in &lp.bounds {
        if lo.is_finite() {
            maps.push(VarMap::Shift { col: ncols, lo });
            if hi.is_finite() {
                extra_rows.push((ncols, hi - lo));
            }
            ncols += 1;
        } else if hi.is_finite() {
            maps.push(VarMap::Mirror { col: ncols, hi });
            ncols += 1;
        } else {
            maps.push(VarMap::Split {
                pos: ncols,
                neg: ncols + 1,
            });
            ncols += 2;
        }
    }
    let n_struct = ncols;

    // Rows in structural columns: (coeffs, relation, rhs).
    let mut rows: Vec<(Vec<f64>, Relation, f64)> = Vec::with_capacity(lp.rows.len() + extra_rows.len());
    for r in &lp.rows {
        let mut coeffs = vec![0.0; n_struct];
        let mut rhs = r.rhs;
        for (j, &a) in r.coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            match maps[j] {
                VarMap::Shift { col, lo } => {
                    coeffs[col] += a;
                    rhs -= a * lo;
                }
                VarMap::Mirror { col, hi } => {
                    coeffs[col] -= a;
                    rhs -= a * hi;
                }
                VarMap::Split { pos, neg } => {
                    coeffs[pos] += a;
                    coeffs[neg] -= a;
                }
            }
        }
        rows.push((coeffs, r.relation, rhs));
    }
    for &(col, ub) in &extra_rows {
        let mut coeffs = vec![0.0; n_struct];
        coeffs[col] = 1.0;
        rows.push((coeffs, Relation::Le, ub));
    }

    let m = rows.len();
    let n_slack = rows.iter().filter(|r| r.1 != Relation::Eq).count();
    // Decide identity columns: a slack with +1 after sign normalization, else an artificial.
    let mut needs_art = Vec::with_capacity(m);
    for (_, rel, rhs) in &rows {
        let sign = if *rhs < 0.0 { -1.0 } else { 1.0 };
        let slack_coef = match rel {
            Relation::Le => sign,
            Relation::Ge => -sign,
            Relation::Eq => 0.0,
        };
        needs_art.push(slack_coef != 1.0);
    }
    let n_art = needs_art.iter().filter(|&&b| b).count();
    let cols = n_struct + n_slack + n_art;
    let w = cols + 1;
    let mut data = vec![0.0; (m + 1) * w];
    let mut basis = vec![0; m];
    let mut identity = Vec::with_capacity(m);
    let mut slack = n_struct;
    let mut art = n_struct + n_slack;
    for (r, (coeffs, rel, rhs)) in rows.iter().enumerate() {
        let sign = if *rhs < 0.0 { -1.0 } else { 1.0 };
        for (j, &a) in coeffs.iter().enumerate() {
            data[r * w + j] = sign * a;
        }
        data[r * w + cols] = sign * rhs;
        let mut slack_col = None;
        match rel {
            Relation::Le => {
                data[r * w + slack] = sign;
                slack_col = Some(slack);
                slack += 1;
            }
            Relation::Ge => {
                data[r * w + slack] = -sign;
                slack_col = Some(slack);
                slack += 1;
            }
            Relation::Eq => {}
        }
        if needs_art[r] {
            data[r * w + art] = 1.0;
            basis[r] = art;
            identity.push((art, sign));
            art += 1;
        } else {
            let c = slack_col.expect("slack exists when no artificial is needed");
            basis[r] = c;
            identity.push((c, sign));
        }
    }

    let mut cost = vec![0.0; cols];
    for (j, &c) in lp.objective.iter().enumerate() {
        let c = objective_sign * c;
        match maps[j] {
            VarMap::Shift { col, .. } => cost[col] += c,
            VarMap::Mirror { col, .. } => cost[col] -= c,
            VarMap::Split { pos, neg } => {
                cost[pos] += c;
                cost[neg] -= c;
            }
        }
    }

    Standard {
        tableau: Tableau {
            rows: m,
            cols,
            data,
            basis,
        },
        maps,
        identity,
        n_user_rows: lp.rows.len(),
        artificial_start: n_struct + n_slack,
        cost,
    }
}

impl Standard {
    fn set_objective(&mut self, cost: &[f64]) {
        let t = &mut self.tableau;
        let w = t.cols + 1;
        let base = t.rows * w;
        for c in 0..w {
            t.data[base + c] = 0.0;
        }
        for c in 0..t.cols {
            t.data[base + c] = -cost[c];
        }
        for r in 0..t.rows {
            let cb = cost[t.basis[r]];
            if cb != 0.0 {
                for c in 0..w {
                    t.data[base + c] += cb * t.data[r * w + c];
                }
            }
        }
    }

    /// Phase one. Returns false when the system is infeasible.
    fn phase_one(&mut self) -> bool {
        let cols = self.tableau.cols;
        if self.artificial_start == cols {
            return true;
        }
        let mut cost = vec![0.0; cols];
        for c in cost.iter_mut().skip(self.artificial_start) {
            *c = -1.0;
        }
        self.set_objective(&cost);
        let allowed = vec![true; cols];
        self.tableau.optimize(&allowed);
        let scale = 1.0
            + (0..self.tableau.rows)
                .map(|r| self.tableau.rhs(r).abs())
                .fold(0.0, f64::max);
        let infeasibility = -self.tableau.at(self.tableau.rows, cols);
        if infeasibility > FEAS_TOL * scale {
            return false;
        }
        // Drive zero-level artificials out of the basis where possible.
        for r in 0..self.tableau.rows {
            if self.tableau.basis[r] >= self.artificial_start {
                if let Some(c) = (0..self.artificial_start).find(|&c| self.tableau.at(r, c).abs() > PIVOT_TOL) {
                    self.tableau.pivot(r, c);
                }
            }
        }
        true
    }

    fn column_values(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.tableau.cols];
        for r in 0..self.tableau.rows {
            v[self.tableau.basis[r]] = self.tableau.rhs(r).max(0.0);
        }
        v
    }

    fn original_values(&self) -> Vec<f64> {
        let cv = self.column_values();
        self.maps
            .iter()
            .map(|m| match *m {
                VarMap::Shift { col, lo } => lo + cv[col],
                VarMap::Mirror { col, hi } => hi - cv[col],
                VarMap::Split { pos, neg } => cv[pos] - cv[neg],
            })
            .collect()
    }
}

pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    lp.check_dims()?;
    let objective_sign = if lp.sense == Sense::Maximize { 1.0 } else { -1.0 };
    let mut st = standardize(lp, objective_sign);
    if !st.phase_one() {
        return Ok(LpSolution {
            status: LpStatus::Infeasible,
            values: Vec::new(),
            objective_value: f64::NAN,
            duals: Vec::new(),
        });
    }
    let cost = st.cost.clone();
    st.set_objective(&cost);
    let allowed: Vec<bool> = (0..st.tableau.cols).map(|c| c < st.artificial_start).collect();
    if !st.tableau.optimize(&allowed) {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            values: Vec::new(),
            objective_value: objective_sign * f64::INFINITY,
            duals: Vec::new(),
        });
    }
    let values = st.original_values();
    let objective_value = lp.objective.iter().zip(&values).map(|(c, x)| c * x).sum();
    // Reduced cost of a row's identity column is that row's multiplier in
    // the sign-normalized maximization.
    let duals = (0..st.n_user_rows)
        .map(|r| {
            let (col, sign) = st.identity[r];
            objective_sign * st.tableau.obj(col) * sign
        })
        .collect();
    Ok(LpSolution {
        status: LpStatus::Optimal,
        values,
        objective_value,
        duals,
    })
}

/// Phase one only: a point satisfying every row and bound, if one exists.
pub fn check_feasible_lp(num_vars: usize, rows: &[Constraint], bounds: &[(f64, f64)]) -> Result<Feasibility> {
    let lp = LinearProgram {
        sense: Sense::Maximize,
        objective: vec![0.0; num_vars],
        rows: rows.to_vec(),
        bounds: bounds.to_vec(),
    };
    lp.check_dims()?;
    let mut st = standardize(&lp, 1.0);
    if st.phase_one() {
        Ok(Feasibility::Feasible(st.original_values()))
    } else {
        Ok(Feasibility::Infeasible)
    }
}

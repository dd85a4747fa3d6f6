//! Exhaustive vertex enumeration for tiny bounded LPs.

use crate::lp::{Constraint, Relation};

const TOL: f64 = 1e-9;

/// Solve `a x = b` by Gaussian elimination with partial pivoting.
fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col {
                let factor = a[r][col] / a[col][col];
                if factor != 0.0 {
                    for c in col..n {
                        a[r][c] -= factor * a[col][c];
                    }
                    b[r] -= factor * b[col];
                }
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    for i in (0..k).rev() {
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Maximize `objective . x` over `rows` and finite `bounds` by trying every
/// basis of tight constraints. Returns `None` if no vertex is feasible.
pub fn vertex_maximize(objective: &[f64], rows: &[Constraint], bounds: &[(f64, f64)]) -> Option<(Vec<f64>, f64)> {
    let n = objective.len();
    let mut eq: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut ineq: Vec<(Vec<f64>, f64)> = Vec::new(); // a x <= b
    for r in rows {
        match r.relation {
            Relation::Eq => eq.push((r.coeffs.clone(), r.rhs)),
            Relation::Le => ineq.push((r.coeffs.clone(), r.rhs)),
            Relation::Ge => ineq.push((r.coeffs.iter().map(|c| -c).collect(), -r.rhs)),
        }
    }
    for (j, &(lo, hi)) in bounds.iter().enumerate() {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        ineq.push((e.clone(), hi));
        e[j] = -1.0;
        ineq.push((e, -lo));
    }
    if eq.len() > n {
        return None;
    }
    let feasible = |x: &[f64]| {
        let dot = |a: &[f64]| a.iter().zip(x).map(|(p, q)| p * q).sum::<f64>();
        eq.iter().all(|(a, b)| (dot(a) - b).abs() <= TOL * (1.0 + b.abs()))
            && ineq.iter().all(|(a, b)| dot(a) <= b + TOL * (1.0 + b.abs()))
    };
    let need = n - eq.len();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut consider = |chosen: &[usize]| {
        let mut a: Vec<Vec<f64>> = eq.iter().map(|e| e.0.clone()).collect();
        let mut b: Vec<f64> = eq.iter().map(|e| e.1).collect();
        for &c in chosen {
            a.push(ineq[c].0.clone());
            b.push(ineq[c].1);
        }
        if let Some(x) = solve_square(a, b) {
            if feasible(&x) {
                let v: f64 = objective.iter().zip(&x).map(|(p, q)| p * q).sum();
                if best.as_ref().is_none_or(|(_, bv)| v > *bv) {
                    best = Some((x, v));
                }
            }
        }
    };
    if need == 0 {
        consider(&[]);
        return best;
    }
    if need > ineq.len() {
        return None;
    }
    let mut idx: Vec<usize> = (0..need).collect();
    loop {
        consider(&idx);
        if !next_combination(&mut idx, ineq.len()) {
            break;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_corner() {
        let (x, v) = vertex_maximize(&[1.0, 2.0], &[], &[(0.0, 1.0), (0.0, 3.0)]).unwrap();
        assert_eq!(x, vec![1.0, 3.0]);
        assert_eq!(v, 7.0);
    }

    #[test]
    fn simplex_row() {
        let rows = [Constraint::le(vec![1.0, 1.0], 1.0)];
        let (_, v) = vertex_maximize(&[3.0, 2.0], &rows, &[(0.0, 5.0), (0.0, 5.0)]).unwrap();
        assert_eq!(v, 3.0);
    }

    #[test]
    fn empty_region() {
        let rows = [Constraint::ge(vec![1.0], 2.0)];
        assert!(vertex_maximize(&[1.0], &rows, &[(0.0, 1.0)]).is_none());
    }
}

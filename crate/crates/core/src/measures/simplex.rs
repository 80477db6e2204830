//! Dense tableau simplex for small LPs whose origin is feasible.
//!
//! Solves `max cᵀx  s.t.  A x ≤ b, x ≥ 0` with `b ≥ 0`, so the slack basis
//! is a feasible start and no phase one is needed. Pivoting follows Bland's
//! rule (lowest-index entering and leaving variables), which cannot cycle.

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-11;

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub objective: f64,
    pub x: Vec<f64>,
    pub pivots: usize,
}

pub fn maximize(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Result<LpSolution> {
    let n = c.len();
    let m = a.len();
    if b.len() != m {
        return Err(Error::InvalidArgument("row count mismatch between A and b".into()));
    }
    if a.iter().any(|row| row.len() != n) {
        return Err(Error::InvalidArgument("ragged constraint matrix".into()));
    }
    if b.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidArgument("right-hand side must be finite and non-negative".into()));
    }

    let width = n + m + 1;
    // rows 0..m are constraints, row m is the objective (reduced costs)
    let mut t = vec![0.0; (m + 1) * width];
    for (i, row) in a.iter().enumerate() {
        t[i * width..i * width + n].copy_from_slice(row);
        t[i * width + n + i] = 1.0;
        t[i * width + width - 1] = b[i];
    }
    for (j, &cj) in c.iter().enumerate() {
        t[m * width + j] = -cj;
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    let max_pivots = 50 * (n + m) + 1000;
    let mut pivots = 0;
    loop {
        let Some(enter) = (0..n + m).find(|&j| t[m * width + j] < -PIVOT_TOL) else {
            break;
        };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            let aij = t[i * width + enter];
            if aij > PIVOT_TOL {
                let ratio = t[i * width + width - 1] / aij;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((k, best)) => {
                        if ratio < best - 1e-14 * best.abs().max(1.0)
                            || (ratio <= best + 1e-14 * best.abs().max(1.0) && basis[i] < basis[k])
                        {
                            Some((i, ratio))
                        } else {
                            Some((k, best))
                        }
                    }
                };
            }
        }
        let Some((row, _)) = leave else {
            return Err(Error::LpFailure(format!("objective unbounded along column {enter}")));
        };
        pivot(&mut t, width, m, row, enter);
        basis[row] = enter;
        pivots += 1;
        if pivots > max_pivots {
            return Err(Error::LpFailure(format!("no convergence after {pivots} pivots")));
        }
    }

    let mut x = vec![0.0; n];
    for (i, &bv) in basis.iter().enumerate() {
        if bv < n {
            x[bv] = t[i * width + width - 1];
        }
    }
    let objective = t[m * width + width - 1];
    if !objective.is_finite() {
        return Err(Error::LpFailure("non-finite objective".into()));
    }
    Ok(LpSolution { objective, x, pivots })
}

fn pivot(t: &mut [f64], width: usize, m: usize, row: usize, col: usize) {
    let p = t[row * width + col];
    for v in &mut t[row * width..(row + 1) * width] {
        *v /= p;
    }
    let pivot_row: Vec<f64> = t[row * width..(row + 1) * width].to_vec();
    for i in 0..=m {
        if i == row {
            continue;
        }
        let factor = t[i * width + col];
        if factor != 0.0 {
            let r = &mut t[i * width..(i + 1) * width];
            for (v, pv) in r.iter_mut().zip(&pivot_row) {
                *v -= factor * pv;
            }
            r[col] = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_problem() {
        // max 3x + 5y, x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → 36 at (2, 6)
        let sol = maximize(
            &[3.0, 5.0],
            &[vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 2.0]],
            &[4.0, 12.0, 18.0],
        )
        .unwrap();
        assert!((sol.objective - 36.0).abs() < 1e-12);
        assert!((sol.x[0] - 2.0).abs() < 1e-12 && (sol.x[1] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn unbounded_is_reported() {
        let err = maximize(&[1.0, 0.0], &[vec![-1.0, 1.0]], &[1.0]).unwrap_err();
        assert!(matches!(err, Error::LpFailure(_)));
    }

    #[test]
    fn degenerate_cycling_example_terminates() {
        // Beale's classic cycling instance; Bland's rule must terminate at 1/20.
        let c = [0.75, -150.0, 0.02, -6.0];
        let a = vec![
            vec![0.25, -60.0, -0.04, 9.0],
            vec![0.5, -90.0, -0.02, 3.0],
            vec![0.0, 0.0, 1.0, 0.0],
        ];
        let sol = maximize(&c, &a, &[0.0, 0.0, 1.0]).unwrap();
        assert!((sol.objective - 0.05).abs() < 1e-12, "{sol:?}");
    }

    #[test]
    fn negative_rhs_rejected() {
        assert!(maximize(&[1.0], &[vec![1.0]], &[-1.0]).is_err());
    }
}

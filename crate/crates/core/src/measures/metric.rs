//! Bounded-Lipschitz (Dudley) distance between atomic measures.
//!
//! `d_w(μ, ν) = sup { |μ(f) − ν(f)| : ‖f‖_∞ + L_f ≤ 1 }`.
//!
//! For atomic measures only the values of `f` on the union of atoms matter:
//! any admissible assignment extends piecewise linearly (and constantly
//! beyond the extreme atoms) without increasing either norm. On the line,
//! Lipschitz constraints between consecutive atoms imply all the others.

use super::simplex;
use super::Measure;
use crate::error::{Error, Result};

/// Union of atom locations with signed weight differences `μ − ν`.
fn signed_difference(mu: &Measure, nu: &Measure) -> (Vec<f64>, Vec<f64>) {
    let mut pts: Vec<(f64, f64)> = mu
        .atoms()
        .chain(nu.atoms().map(|(x, w)| (x, -w)))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut xs: Vec<f64> = Vec::with_capacity(pts.len());
    let mut cs: Vec<f64> = Vec::with_capacity(pts.len());
    for (x, c) in pts {
        if xs.last() == Some(&x) {
            *cs.last_mut().unwrap() += c;
        } else {
            xs.push(x);
            cs.push(c);
        }
    }
    (xs, cs)
}

/// Exact `d_w` of two atomic measures by linear programming.
///
/// Variables are `y_i = f(x_i)` (split as `y⁺ − y⁻`) and the sup-norm budget
/// `u ∈ [0, 1]`; the Lipschitz budget is `1 − u`.
pub fn bl_distance(mu: &Measure, nu: &Measure) -> Result<f64> {
    let (xs, cs) = signed_difference(mu, nu);
    if cs.iter().all(|&c| c == 0.0) {
        return Ok(0.0);
    }
    let n = xs.len();
    let nvar = 2 * n + 1;
    let u = 2 * n;
    let mut a: Vec<Vec<f64>> = Vec::with_capacity(4 * n);
    let mut b: Vec<f64> = Vec::with_capacity(4 * n);

    let push_diff = |i: usize, j: usize, d: f64, a: &mut Vec<Vec<f64>>, b: &mut Vec<f64>| {
        // (y_i − y_j) + d·u ≤ d, rows rescaled so the largest entry is 1
        let s = 1.0 / d.max(1.0);
        let mut row = vec![0.0; nvar];
        row[i] = s;
        row[n + i] = -s;
        row[j] = -s;
        row[n + j] = s;
        row[u] = d * s;
        a.push(row);
        b.push(d * s);
    };
    for k in 0..n.saturating_sub(1) {
        let d = xs[k + 1] - xs[k];
        push_diff(k, k + 1, d, &mut a, &mut b);
        push_diff(k + 1, k, d, &mut a, &mut b);
    }
    for i in 0..n {
        for sign in [1.0, -1.0] {
            let mut row = vec![0.0; nvar];
            row[i] = sign;
            row[n + i] = -sign;
            row[u] = -1.0;
            a.push(row);
            b.push(0.0);
        }
    }
    let mut row = vec![0.0; nvar];
    row[u] = 1.0;
    a.push(row);
    b.push(1.0);

    let mut c = vec![0.0; nvar];
    for i in 0..n {
        c[i] = cs[i];
        c[n + i] = -cs[i];
    }
    let sol = simplex::maximize(&c, &a, &b)?;
    if !(sol.objective > -1e-9 && sol.objective < 2.0 + 1e-9) {
        return Err(Error::LpFailure(format!(
            "optimum {} outside the admissible range [0, 2]",
            sol.objective
        )));
    }
    Ok(sol.objective.clamp(0.0, 2.0))
}

/// Independent lower bound on `d_w` by dynamic programming.
///
/// Test functions are piecewise linear on a grid made of `grid_size`
/// uniform points over the atom range plus the atoms themselves. For a fixed
/// split of the budget into sup norm `a` and slope `1 − a`, the best grid
/// function is found exactly by a chain DP whose value functions are concave
/// and piecewise linear. The optimal value is concave in `a`, which is then
/// located by golden-section search. Every candidate is admissible, so the
/// result never exceeds the true distance.
pub fn bl_distance_oracle(mu: &Measure, nu: &Measure, grid_size: usize) -> Result<f64> {
    if grid_size < 2 {
        return Err(Error::InvalidArgument("grid_size must be at least 2".into()));
    }
    let (atoms, cs) = signed_difference(mu, nu);
    if cs.iter().all(|&c| c == 0.0) || atoms.len() < 2 {
        return Ok(0.0);
    }
    let lo = atoms[0];
    let hi = *atoms.last().unwrap();
    let mut grid: Vec<(f64, f64)> = (0..grid_size)
        .map(|k| (lo + (hi - lo) * k as f64 / (grid_size - 1) as f64, 0.0))
        .collect();
    grid.extend(atoms.iter().copied().zip(cs.iter().copied()));
    grid.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut xs: Vec<f64> = Vec::new();
    let mut ws: Vec<f64> = Vec::new();
    for (x, w) in grid {
        if xs.last() == Some(&x) {
            *ws.last_mut().unwrap() += w;
        } else {
            xs.push(x);
            ws.push(w);
        }
    }

    let value = |a: f64| chain_dp(&xs, &ws, a, 1.0 - a);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut l, mut r) = (0.0f64, 1.0f64);
    let mut best = value(0.0).max(value(1.0));
    let mut m1 = r - phi * (r - l);
    let mut m2 = l + phi * (r - l);
    let mut v1 = value(m1);
    let mut v2 = value(m2);
    for _ in 0..80 {
        best = best.max(v1).max(v2);
        if v1 < v2 {
            l = m1;
            m1 = m2;
            v1 = v2;
            m2 = l + phi * (r - l);
            v2 = value(m2);
        } else {
            r = m2;
            m2 = m1;
            v2 = v1;
            m1 = r - phi * (r - l);
            v1 = value(m1);
        }
        if r - l < 1e-13 {
            break;
        }
    }
    Ok(best.max(v1).max(v2).clamp(0.0, 2.0))
}

/// `max Σ w_k g_k` over `|g_k| ≤ a`, `|g_{k+1} − g_k| ≤ slope·(x_{k+1} − x_k)`.
///
/// The running value function `V_k(g)` is concave piecewise linear, stored
/// as vertices. Moving to the next grid point is a windowed maximum, which
/// for a concave function splits it at its peak and pushes the two halves
/// apart by the window half-width.
fn chain_dp(xs: &[f64], ws: &[f64], a: f64, slope: f64) -> f64 {
    if a <= 0.0 {
        return 0.0;
    }
    let mut px = vec![-a, a];
    let mut pv = vec![-a * ws[0], a * ws[0]];
    for k in 1..xs.len() {
        let s = slope.max(0.0) * (xs[k] - xs[k - 1]);
        if s > 0.0 {
            let peak = argmax(&pv);
            let mut nx = Vec::with_capacity(px.len() + 1);
            let mut nv = Vec::with_capacity(px.len() + 1);
            for i in 0..=peak {
                nx.push(px[i] - s);
                nv.push(pv[i]);
            }
            for i in peak..px.len() {
                nx.push(px[i] + s);
                nv.push(pv[i]);
            }
            clip(&mut nx, &mut nv, -a, a);
            px = nx;
            pv = nv;
        }
        for (v, x) in pv.iter_mut().zip(&px) {
            *v += ws[k] * x;
        }
    }
    pv.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

fn interpolate(px: &[f64], pv: &[f64], x: f64) -> f64 {
    let i = px.partition_point(|&p| p < x).clamp(1, px.len() - 1);
    let (x0, x1) = (px[i - 1], px[i]);
    if x1 == x0 {
        return pv[i].max(pv[i - 1]);
    }
    let t = (x - x0) / (x1 - x0);
    pv[i - 1] + t * (pv[i] - pv[i - 1])
}

fn clip(px: &mut Vec<f64>, pv: &mut Vec<f64>, lo: f64, hi: f64) {
    let vlo = interpolate(px, pv, lo);
    let vhi = interpolate(px, pv, hi);
    let mut nx = vec![lo];
    let mut nv = vec![vlo];
    for (x, v) in px.iter().zip(pv.iter()) {
        if *x > lo && *x < hi {
            nx.push(*x);
            nv.push(*v);
        }
    }
    nx.push(hi);
    nv.push(vhi);
    *px = nx;
    *pv = nv;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn closed_form(t: f64) -> f64 {
        2.0 * t / (2.0 + t)
    }

    #[test]
    fn identical_measures() {
        let m = Measure::from_atoms([(0.0, 0.3), (1.5, 0.7)]).unwrap();
        assert_eq!(bl_distance(&m, &m).unwrap(), 0.0);
        assert_eq!(bl_distance_oracle(&m, &m, 16).unwrap(), 0.0);
    }

    #[test]
    fn point_masses() {
        for t in [0.01, 0.1, 0.5, 1.0, 3.0] {
            let d = bl_distance(&Measure::dirac(0.0), &Measure::dirac(t)).unwrap();
            assert!((d - closed_form(t)).abs() < 1e-12, "t = {t}: {d}");
        }
        let far = bl_distance(&Measure::dirac(0.0), &Measure::dirac(1e6)).unwrap();
        assert!((1.99..=2.0).contains(&far));
    }

    #[test]
    fn oracle_closed_form() {
        let d = bl_distance_oracle(&Measure::dirac(0.0), &Measure::dirac(1.0), 64).unwrap();
        assert!((d - 2.0 / 3.0).abs() < 1e-3);
        let far = bl_distance_oracle(&Measure::dirac(0.0), &Measure::dirac(1e6), 64).unwrap();
        assert!((1.99..=2.0).contains(&far));
    }

    #[test]
    fn backends_agree_on_bernoulli() {
        let a = Measure::bernoulli(0.5, 0.0, 1.0).unwrap();
        let b = Measure::bernoulli(0.6, 0.0, 1.0).unwrap();
        let lp = bl_distance(&a, &b).unwrap();
        let dp = bl_distance_oracle(&a, &b, 64).unwrap();
        assert!((lp - dp).abs() < 1e-3);
        // sup over f of 0.1·(f(0) − f(1)) with the tent optimizer → 0.1·2/3
        assert!((lp - 0.1 * 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn oracle_rejects_tiny_grid() {
        assert!(bl_distance_oracle(&Measure::dirac(0.0), &Measure::dirac(1.0), 1).is_err());
    }
}

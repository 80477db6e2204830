//! Traces `Tr(P₀ f(H) P₀)` by spectral decomposition and by the
//! Helffer-Sjöstrand formula, plus block resolvent traces.

use std::f64::consts::PI;

use nalgebra::SymmetricEigen;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::LatticeOperator;
use crate::linalg::{ShiftedSolver, SolverKind};
use crate::quadrature::Rule;
use crate::test_functions::TestFunction;

/// Eigenvalues of `H` with the weights `‖P₀ v_k‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSpectrum {
    pub eigenvalues: Vec<f64>,
    pub weights: Vec<f64>,
    pub rank: usize,
}

impl BlockSpectrum {
    pub fn compute(op: &LatticeOperator) -> Result<Self> {
        let n = op.n_sites();
        let eig = SymmetricEigen::try_new(op.dense(), 1e-15, 100 * n.max(10))
            .ok_or_else(|| Error::EigenFailure(format!("{n}×{n} symmetric eigenproblem")))?;
        let sites = op.origin_sites();
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|k| {
                let v = eig.eigenvectors.column(k);
                (eig.eigenvalues[k], sites.iter().map(|&s| v[s] * v[s]).sum())
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self {
            eigenvalues: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
            rank: sites.len(),
        })
    }

    /// `Σ_k g(λ_k)‖P₀v_k‖²`.
    pub fn trace_with(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.eigenvalues.iter().zip(&self.weights).map(|(&l, &w)| g(l) * w).sum()
    }

    pub fn trace(&self, f: &TestFunction) -> f64 {
        self.trace_with(|x| f.value(x))
    }

    /// `(1/N) Σ_{λ_k ≤ E} ‖P₀v_k‖²`, clamped to `[0, 1]`.
    pub fn ids(&self, energy: f64) -> f64 {
        let end = self.eigenvalues.partition_point(|&l| l <= energy);
        if end == self.eigenvalues.len() {
            return 1.0;
        }
        if end == 0 {
            return 0.0;
        }
        let s: f64 = self.weights[..end].iter().sum();
        (s / self.rank as f64).clamp(0.0, 1.0)
    }

    /// `Σ_k ‖P₀v_k‖²`, equal to `N` in exact arithmetic.
    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }
}

pub fn eig_trace(op: &LatticeOperator, f: &TestFunction) -> Result<f64> {
    Ok(BlockSpectrum::compute(op)?.trace(f))
}

fn h(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

fn h_prime(t: f64) -> f64 {
    if t > 0.0 {
        h(t) / (t * t)
    } else {
        0.0
    }
}

/// Cutoff `τ`, equal to 1 on `[−1, 1]` and 0 outside `(−2, 2)`.
pub fn tau(y: f64) -> f64 {
    let s = y.abs();
    if s <= 1.0 {
        1.0
    } else if s >= 2.0 {
        0.0
    } else {
        let a = h(2.0 - s);
        a / (a + h(s - 1.0))
    }
}

pub fn tau_prime(y: f64) -> f64 {
    let s = y.abs();
    if s <= 1.0 || s >= 2.0 {
        return 0.0;
    }
    let (a, b) = (h(2.0 - s), h(s - 1.0));
    let d = a + b;
    let g = (-h_prime(2.0 - s) * b - a * h_prime(s - 1.0)) / (d * d);
    g * y.signum()
}

/// `f̃(x, y) = Σ_{n≤P} f^(n)(x)(iy)^n/n! · τ(y/⟨x⟩)`.
#[derive(Debug, Clone)]
pub struct AlmostAnalyticExtension {
    f: TestFunction,
    degree: usize,
}

impl AlmostAnalyticExtension {
    pub fn new(f: TestFunction, degree: usize) -> Result<Self> {
        if degree < 1 {
            return Err(Error::InvalidQuadrature("degree must be at least 1".into()));
        }
        if f.order() < degree + 1 {
            return Err(Error::OrderExceeded {
                requested: degree + 1,
                available: f.order(),
            });
        }
        Ok(Self { f, degree })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn base(&self) -> &TestFunction {
        &self.f
    }

    fn taylor(&self, x: f64, y: f64) -> Complex64 {
        let iy = Complex64::new(0.0, y);
        let mut term = Complex64::new(1.0, 0.0);
        let mut acc = Complex64::new(0.0, 0.0);
        for n in 0..=self.degree {
            if n > 0 {
                term = term * iy / n as f64;
            }
            acc += term * self.f.eval(n, x);
        }
        acc
    }

    pub fn value(&self, x: f64, y: f64) -> Complex64 {
        let bracket = (1.0 + x * x).sqrt();
        self.taylor(x, y) * tau(y / bracket)
    }

    /// `∂z̄f̃ = ½(∂x + i∂y)f̃`.
    pub fn dbar(&self, x: f64, y: f64) -> Complex64 {
        let bracket = (1.0 + x * x).sqrt();
        let s = y / bracket;
        let sigma = tau(s);
        let p = self.degree;
        let mut top = Complex64::new(0.0, y).powu(p as u32);
        for n in 1..=p {
            top /= n as f64;
        }
        let mut out = top * self.f.eval(p + 1, x) * sigma;
        let tp = tau_prime(s);
        if tp != 0.0 {
            let sigma_x = -tp * y * x / bracket.powi(3);
            let sigma_y = tp / bracket;
            out += Complex64::new(sigma_x, sigma_y) * self.taylor(x, y);
        }
        out * 0.5
    }
}

/// Discretization of the Helffer-Sjöstrand integral.
///
/// `nx` Gauss nodes span each analytic piece of `f`; at each `x` there are `ny/2`
/// nodes on `[y_min, ⟨x⟩]` and `ny/2` on `[⟨x⟩, 2⟨x⟩]`, where the cutoff
/// switches off. `degree` defaults to `2 + d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSpec {
    #[serde(default = "default_nx")]
    pub nx: usize,
    #[serde(default = "default_ny")]
    pub ny: usize,
    #[serde(default = "default_y_min")]
    pub y_min: f64,
    #[serde(default)]
    pub degree: Option<usize>,
    #[serde(default)]
    pub solver: SolverKind,
}

fn default_nx() -> usize {
    256
}

fn default_ny() -> usize {
    64
}

fn default_y_min() -> f64 {
    1e-3
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            nx: default_nx(),
            ny: default_ny(),
            y_min: default_y_min(),
            degree: None,
            solver: SolverKind::Lu,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidQuadrature(m.to_string()));
        if self.nx < 2 || self.nx % 2 != 0 || self.ny < 4 || self.ny % 4 != 0 {
            return bad("nx must be even and ≥ 2, ny a multiple of 4");
        }
        if !(self.y_min > 0.0 && self.y_min < 1.0) {
            return bad("y_min must lie in (0, 1)");
        }
        Ok(())
    }

    pub fn degree_for(&self, d: usize) -> usize {
        self.degree.unwrap_or(2 + d)
    }

    fn coarse(&self) -> Self {
        Self {
            nx: self.nx / 2,
            ny: (self.ny / 2).max(4) / 4 * 4,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HsTrace {
    pub value: f64,
    /// strip bound plus the change against a half-resolution rule
    pub error_estimate: f64,
    pub strip_bound: f64,
    pub degree: usize,
    /// derivative order of `f` consumed (`degree + 1`)
    pub order_used: usize,
    pub nodes: usize,
}

/// Tr(P₀ f(H) P₀) via `(2/π) ∫∫_{y>0} Re(∂z̄f̃ · Tr(P₀(H−z)^{-1}P₀)) dx dy`.
pub fn hs_trace(op: &LatticeOperator, f: &TestFunction, quad: &QuadratureSpec) -> Result<HsTrace> {
    quad.validate()?;
    let degree = quad.degree_for(op.lattice().dim());
    let ext = AlmostAnalyticExtension::new(f.clone(), degree)?;
    let solver = ShiftedSolver::new(op.matrix(), quad.solver);
    let sites = op.origin_sites();
    let pairs: Vec<(usize, usize)> = sites.iter().map(|&s| (s, s)).collect();

    let fine = hs_sum(&ext, &solver, &pairs, quad)?;
    let coarse = hs_sum(&ext, &solver, &pairs, &quad.coarse())?;

    let (a, b) = f.support();
    let p = degree as f64;
    let top = f.sup_norm(degree + 1)?;
    let factorial: f64 = (1..=degree).map(|k| k as f64).product();
    // |∂z̄f̃| ≤ ½‖f^(P+1)‖ y^P/P! and |Tr P₀(H−z)^{-1}P₀| ≤ N/y below y_min ≤ ⟨x⟩
    let strip_bound =
        (2.0 / PI) * 0.5 * top / factorial * (b - a) * sites.len() as f64 * quad.y_min.powf(p) / p;

    Ok(HsTrace {
        value: fine,
        error_estimate: strip_bound + (fine - coarse).abs(),
        strip_bound,
        degree,
        order_used: degree + 1,
        nodes: f.analytic_pieces().len() * quad.nx * quad.ny,
    })
}

fn hs_sum(
    ext: &AlmostAnalyticExtension,
    solver: &ShiftedSolver,
    pairs: &[(usize, usize)],
    quad: &QuadratureSpec,
) -> Result<f64> {
    let xs = x_rule(ext.base(), quad.nx);
    let half = quad.ny / 2;
    let (ty, wy) = crate::quadrature::gauss_legendre(half);
    let columns: Vec<Result<f64>> = xs
        .nodes
        .par_iter()
        .zip(xs.weights.par_iter())
        .map(|(&x, &wx)| {
            let bracket = (1.0 + x * x).sqrt();
            let mut acc = 0.0;
            for (lo, hi) in [(quad.y_min, bracket), (bracket, 2.0 * bracket)] {
                let (m, r) = (0.5 * (lo + hi), 0.5 * (hi - lo));
                for (t, w) in ty.iter().zip(&wy) {
                    let y = m + r * t;
                    let db = ext.dbar(x, y);
                    if db == Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    let z = Complex64::new(x, y);
                    let trace: Complex64 = solver.entries(z, pairs)?.into_iter().sum();
                    acc += w * r * (db * trace).re;
                }
            }
            Ok(wx * acc)
        })
        .collect();
    let mut total = 0.0;
    for c in columns {
        total += c?;
    }
    Ok(2.0 / PI * total)
}

/// Gauss rule with `nx` nodes on each analytic piece of `f`. Interior
/// points where `f` is smooth but not analytic would otherwise stall the
/// convergence of a single rule.
fn x_rule(f: &TestFunction, nx: usize) -> Rule {
    let mut rule = Rule { nodes: Vec::new(), weights: Vec::new() };
    for (a, b) in f.analytic_pieces() {
        let r = Rule::gauss(nx, a, b);
        rule.nodes.extend(r.nodes);
        rule.weights.extend(r.weights);
    }
    rule
}

/// `Σ_s G(z)[i + s, j + s]` over offsets `s ∈ [0, K−1]^d`: the trace of
/// `P_i (H−z)^{-1} P_j` after identifying both ranges by translation. For
/// `i = j` this is `Tr(P_i (H−z)^{-1} P_i)`.
pub fn resolvent_block_trace(
    op: &LatticeOperator,
    solver: &ShiftedSolver,
    z: Complex64,
    i: usize,
    j: usize,
) -> Result<Complex64> {
    if z.im == 0.0 {
        return Err(Error::InvalidArgument("Im z must be non-zero".into()));
    }
    let rows = op.lattice().block_sites(i);
    let cols = op.lattice().block_sites(j);
    let pairs: Vec<(usize, usize)> = rows.into_iter().zip(cols).collect();
    Ok(solver.entries(z, &pairs)?.into_iter().sum())
}

pub fn default_solver(op: &LatticeOperator) -> ShiftedSolver {
    ShiftedSolver::new(op.matrix(), SolverKind::Lu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Boundary, BoxConfig};
    use crate::measures::Measure;
    use crate::rng::SeedTree;

    fn random_op(d: usize, r: i64, bc: Boundary, seed: u64) -> LatticeOperator {
        let lat = BoxConfig::new(d, r, bc, 1).build().unwrap();
        let nu = Measure::bernoulli(0.5, 0.0, 1.0).unwrap();
        let dis = lat.sample_disorder(&nu, &mut SeedTree::new(seed).stream(0));
        lat.operator(&dis).unwrap()
    }

    #[test]
    fn tau_shape() {
        assert_eq!(tau(0.5), 1.0);
        assert_eq!(tau(-1.0), 1.0);
        assert_eq!(tau(2.0), 0.0);
        assert!((tau(1.5) - 0.5).abs() < 1e-15);
        for k in 1..40 {
            let s = 1.0 + k as f64 / 40.0;
            let fd = (tau(s + 1e-6) - tau(s - 1e-6)) / 2e-6;
            assert!((fd - tau_prime(s)).abs() < 1e-6, "{s}");
            assert!((tau_prime(-s) + tau_prime(s)).abs() < 1e-15);
        }
    }

    #[test]
    fn extension_reproduces_f_and_is_almost_analytic() {
        let f = TestFunction::bump(0.2, 2.0, 6).unwrap();
        for p in 2..=4 {
            let ext = AlmostAnalyticExtension::new(f.clone(), p).unwrap();
            let top = f.sup_norm(p + 1).unwrap();
            for i in 0..50 {
                let x = -2.0 + 4.4 * i as f64 / 49.0;
                assert_eq!(ext.value(x, 0.0), Complex64::new(f.value(x), 0.0));
                let bracket = (1.0 + x * x).sqrt();
                for j in 1..50 {
                    let y = bracket * j as f64 / 49.0;
                    assert!(ext.dbar(x, y).norm() <= top * y.powi(p as i32));
                }
                assert_eq!(ext.value(x, 2.0 * bracket), Complex64::new(0.0, 0.0));
            }
        }
    }

    #[test]
    fn dbar_matches_finite_differences() {
        let f = TestFunction::bump(0.0, 1.5, 5).unwrap();
        let ext = AlmostAnalyticExtension::new(f, 3).unwrap();
        for (x, y) in [(0.3, 0.2), (-0.7, 1.5), (0.9, 1.9), (0.1, 2.5)] {
            let h = 1e-5;
            let dx = (ext.value(x + h, y) - ext.value(x - h, y)) / (2.0 * h);
            let dy = (ext.value(x, y + h) - ext.value(x, y - h)) / (2.0 * h);
            let fd = (dx + Complex64::new(0.0, 1.0) * dy) * 0.5;
            assert!((fd - ext.dbar(x, y)).norm() < 1e-7, "({x},{y})");
        }
    }

    #[test]
    fn three_site_unit_trace() {
        // f ≡ 1 on [−2, 2] (plateau) sums |v_k(0)|² over all eigenvectors
        let lat = BoxConfig::new(1, 1, Boundary::Dirichlet, 1).build().unwrap();
        let op = lat.operator(&lat.constant_disorder(0.0)).unwrap();
        let f = TestFunction::plateau(-2.0, 2.0, 0.5, 6).unwrap();
        assert!((eig_trace(&op, &f).unwrap() - 1.0).abs() < 1e-8);
        let spectrum = BlockSpectrum::compute(&op).unwrap();
        // v = (1, ∓√2, 1)/2 for λ = ±√2 and (1, 0, −1)/√2 for λ = 0
        for (l, w) in spectrum.eigenvalues.iter().zip(&spectrum.weights) {
            let expected = if l.abs() < 1e-9 { 0.0 } else { 0.5 };
            assert!((w - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn eig_trace_support_separation_and_linearity() {
        let lat = BoxConfig::new(1, 5, Boundary::Periodic, 1).build().unwrap();
        let op = lat.operator(&lat.constant_disorder(10.0)).unwrap();
        let f = TestFunction::bump(0.0, 3.0, 4).unwrap();
        assert_eq!(eig_trace(&op, &f).unwrap(), 0.0);
        let op = random_op(1, 8, Boundary::Periodic, 3);
        let g = TestFunction::bump(0.5, 1.0, 4).unwrap();
        let spectrum = BlockSpectrum::compute(&op).unwrap();
        let combo = spectrum.trace_with(|x| 2.0 * f.value(x) - 0.5 * g.value(x));
        assert!((combo - (2.0 * spectrum.trace(&f) - 0.5 * spectrum.trace(&g))).abs() < 1e-10);
    }

    #[test]
    fn hs_matches_eig_small_box() {
        let op = random_op(1, 20, Boundary::Periodic, 7);
        let f = TestFunction::bump(0.0, 3.0, 6).unwrap();
        let quad = QuadratureSpec {
            nx: 128,
            ny: 64,
            degree: Some(3),
            ..Default::default()
        };
        let hs = hs_trace(&op, &f, &quad).unwrap();
        let eig = eig_trace(&op, &f).unwrap();
        assert!((hs.value - eig).abs() <= 1e-6 * (1.0 + eig.abs()), "{} vs {eig}", hs.value);
        assert_eq!(hs.order_used, 4);
        let q4 = QuadratureSpec { degree: Some(4), ..Default::default() };
        let hs4 = hs_trace(&op, &f, &q4).unwrap();
        let hs3 = hs_trace(&op, &f, &QuadratureSpec { degree: Some(3), ..Default::default() }).unwrap();
        assert!((hs4.value - hs3.value).abs() <= hs4.error_estimate + hs3.error_estimate);
    }

    #[test]
    fn hs_handles_plateau_edges() {
        let op = random_op(1, 20, Boundary::Periodic, 8);
        for f in [
            TestFunction::plateau(-1.0, 1.0, 0.5, 6).unwrap(),
            TestFunction::plateau(-3.0, 3.0, 0.5, 6).unwrap(),
        ] {
            let hs = hs_trace(&op, &f, &QuadratureSpec::default()).unwrap();
            let eig = eig_trace(&op, &f).unwrap();
            assert!((hs.value - eig).abs() <= 1e-6 * (1.0 + eig.abs()), "{} vs {eig}", hs.value);
            assert!((hs.value - eig).abs() <= hs.error_estimate);
        }
    }

    #[test]
    fn hs_support_separation() {
        let op = random_op(1, 6, Boundary::Periodic, 1);
        let f = TestFunction::bump(6.0, 1.5, 5).unwrap();
        let hs = hs_trace(&op, &f, &QuadratureSpec::default()).unwrap();
        assert!(hs.value.abs() <= hs.error_estimate, "{hs:?}");
    }

    #[test]
    fn hs_rejects_low_order() {
        let op = random_op(1, 3, Boundary::Periodic, 1);
        let f = TestFunction::bump(0.0, 2.0, 3).unwrap();
        assert!(matches!(
            hs_trace(&op, &f, &QuadratureSpec::default()),
            Err(Error::OrderExceeded { .. })
        ));
        let bad = QuadratureSpec { y_min: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn resolvent_block_trace_properties() {
        let lat = BoxConfig::new(2, 3, Boundary::Periodic, 1).build().unwrap();
        let op = lat.operator(&lat.constant_disorder(0.0)).unwrap();
        let solver = default_solver(&op);
        let o = lat.origin_block();
        let eta = 40.0;
        let n = 1.0;
        let g = resolvent_block_trace(&op, &solver, Complex64::new(0.0, eta), o, o).unwrap();
        assert!((g - Complex64::new(0.0, n / eta)).norm() <= 4.0 * 2.0 * n / (eta * eta));

        let op = random_op(2, 3, Boundary::Periodic, 4);
        let solver = default_solver(&op);
        let lat = op.lattice().clone();
        let j = lat.block_index(&[1, 2]).unwrap();
        for z in [Complex64::new(0.3, 0.4), Complex64::new(-1.0, 2.0)] {
            let a = resolvent_block_trace(&op, &solver, z, o, j).unwrap();
            let b = resolvent_block_trace(&op, &solver, z.conj(), o, j).unwrap();
            assert!((a.conj() - b).norm() < 1e-12);
            assert!(a.norm() <= 1.0 / z.im.abs());
        }
        assert!(resolvent_block_trace(&op, &solver, Complex64::new(1.0, 0.0), o, o).is_err());
    }

    #[test]
    fn first_resolvent_identity() {
        let op = random_op(1, 10, Boundary::Periodic, 9);
        let solver = default_solver(&op);
        let o = op.lattice().origin_block();
        let s = op.origin_sites()[0];
        let (z1, z2) = (Complex64::new(0.2, 0.5), Complex64::new(-0.4, 1.1));
        let g1 = solver.solve_unit(z1, s).unwrap();
        let g2 = solver.solve_unit(z2, s).unwrap();
        // ⟨e, (R1 − R2) e⟩ = (z1 − z2)⟨R1ᵀ e, R2 e⟩ with R1 symmetric
        let lhs = resolvent_block_trace(&op, &solver, z1, o, o).unwrap()
            - resolvent_block_trace(&op, &solver, z2, o, o).unwrap();
        let rhs: Complex64 = (z1 - z2) * g1.iter().zip(&g2).map(|(a, b)| a * b).sum::<Complex64>();
        assert!((lhs - rhs).norm() < 1e-12);
    }
}

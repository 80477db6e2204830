//! Compactly supported test functions with analytic derivatives.
//!
//! Two shapes are built in:
//!
//! * `Bump`: `p(u)·exp(−1/(1−u²))` with `u = (x − center)/r`, derivatives
//!   from the recurrence `φ^(k) = p_k(u)·(1−u²)^(−2k)·φ`, where
//!   `p_{k+1} = p_k'·q² + 4k·u·q·p_k − 2u·p_k` and `q = 1 − u²`.
//! * `Plateau`: a product of a rising and a falling smooth step, equal to
//!   one on `[lo, hi]` with transitions of half-width `eps`. With `lo` far
//!   below the spectrum this is the smoothed indicator `s_{E,ε}` of
//!   `(−∞, E]` (value 1/2 at `E`).
//!
//! Smooth steps use the degree `2m+1` polynomial spline when `order ≤ 3`
//! and the normalized integral of a bump otherwise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::Rule;

#[derive(Debug, Clone, PartialEq)]
struct Poly(Vec<f64>);

impl Poly {
    fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    fn derivative(&self) -> Poly {
        Poly(
            self.0
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| i as f64 * c)
                .collect(),
        )
    }

    fn mul(&self, other: &Poly) -> Poly {
        if self.0.is_empty() || other.0.is_empty() {
            return Poly(Vec::new());
        }
        let mut out = vec![0.0; self.0.len() + other.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly(out)
    }

    fn add(&self, other: &Poly) -> Poly {
        let n = self.0.len().max(other.0.len());
        Poly(
            (0..n)
                .map(|i| self.0.get(i).unwrap_or(&0.0) + other.0.get(i).unwrap_or(&0.0))
                .collect(),
        )
    }
}

/// The standard bump `φ(u) = exp(−1/(1−u²))` on `(−1, 1)` and its
/// derivatives up to a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct StandardBump {
    prefactors: Vec<Poly>,
}

impl StandardBump {
    pub(crate) fn new(order: usize) -> Self {
        let q = Poly(vec![1.0, 0.0, -1.0]);
        let q2 = q.mul(&q);
        let u = Poly(vec![0.0, 1.0]);
        let mut prefactors = vec![Poly(vec![1.0])];
        for k in 0..order {
            let p = &prefactors[k];
            let t1 = p.derivative().mul(&q2);
            let t2 = u.mul(&q).mul(p);
            let t2 = Poly(t2.0.iter().map(|c| 4.0 * k as f64 * c).collect());
            let t3 = Poly(u.mul(p).0.iter().map(|c| -2.0 * c).collect());
            prefactors.push(t1.add(&t2).add(&t3));
        }
        Self { prefactors }
    }

    pub(crate) fn eval(&self, k: usize, u: f64) -> f64 {
        if u.abs() >= 1.0 {
            return 0.0;
        }
        let q = 1.0 - u * u;
        let log_scale = -1.0 / q - 2.0 * k as f64 * q.ln();
        self.prefactors[k].eval(u) * log_scale.exp()
    }
}

/// Reference smooth step `S: ℝ → [0, 1]`, zero below 0 and one above 1.
#[derive(Debug, Clone, PartialEq)]
enum Mollifier {
    /// `t^{m+1} Σ_{i≤m} C(m+i, i)(1−t)^i`, of class `C^m`.
    Spline { derivs: Vec<Poly> },
    /// `(1/Z) ∫_0^t exp(−1/(4s(1−s))) ds`, smooth.
    BumpIntegral { bump: StandardBump, norm: f64 },
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

impl Mollifier {
    fn new(order: usize) -> Self {
        if order <= 3 {
            let m = order;
            let one_minus_t = Poly(vec![1.0, -1.0]);
            let mut power = Poly(vec![1.0]);
            let mut sum = Poly(vec![0.0]);
            for i in 0..=m {
                sum = sum.add(&Poly(power.0.iter().map(|c| c * binomial(m + i, i)).collect()));
                power = power.mul(&one_minus_t);
            }
            let mut lead = vec![0.0; m + 2];
            lead[m + 1] = 1.0;
            let s = Poly(lead).mul(&sum);
            let mut derivs = vec![s];
            for k in 0..=m {
                let d = derivs[k].derivative();
                derivs.push(d);
            }
            Mollifier::Spline { derivs }
        } else {
            let bump = StandardBump::new(order);
            let norm = 2.0 * half_integral(&bump, 0.5);
            Mollifier::BumpIntegral { bump, norm }
        }
    }

    fn eval(&self, k: usize, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if t >= 1.0 {
            return if k == 0 { 1.0 } else { 0.0 };
        }
        match self {
            Mollifier::Spline { derivs } => derivs.get(k).map_or(0.0, |p| p.eval(t)),
            Mollifier::BumpIntegral { bump, norm } => {
                if k == 0 {
                    if t <= 0.5 {
                        half_integral(bump, t) / norm
                    } else {
                        1.0 - half_integral(bump, 1.0 - t) / norm
                    }
                } else {
                    // ψ(s) = φ(2s − 1), so ψ^(j) = 2^j φ^(j)(2s − 1)
                    2f64.powi(k as i32 - 1) * bump.eval(k - 1, 2.0 * t - 1.0) / norm
                }
            }
        }
    }
}

/// `∫_0^t φ(2s − 1) ds` for `t ≤ 1/2`.
fn half_integral(bump: &StandardBump, t: f64) -> f64 {
    Rule::composite(4, 20, 0.0, t).integrate(|s| bump.eval(0, 2.0 * s - 1.0))
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    Bump {
        center: f64,
        r: f64,
        poly: Vec<Poly>,
        bump: StandardBump,
    },
    Plateau {
        lo: f64,
        hi: f64,
        eps: f64,
        step: Mollifier,
    },
}

/// A compactly supported function with derivatives up to `order`.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    shape: Shape,
    amplitude: f64,
    order: usize,
    config: TestFunctionConfig,
}

impl TestFunction {
    /// `scale·p((x−center)/r)·exp(−1/(1−((x−center)/r)²))`; `poly` lists the
    /// coefficients of `p` from the constant term up.
    pub fn bump_with(center: f64, r: f64, scale: f64, poly: Vec<f64>, order: usize) -> Result<Self> {
        TestFunctionConfig::Bump {
            r,
            center,
            scale,
            order,
            poly,
        }
        .build()
    }

    /// Standard bump of half-width `r` centred at `center`.
    pub fn bump(center: f64, r: f64, order: usize) -> Result<Self> {
        Self::bump_with(center, r, 1.0, vec![1.0], order)
    }

    pub fn plateau(lo: f64, hi: f64, eps: f64, order: usize) -> Result<Self> {
        TestFunctionConfig::Plateau {
            lo,
            hi,
            eps,
            scale: 1.0,
            order,
        }
        .build()
    }

    /// Smoothed `χ_(−∞, edge]`, cut off smoothly below `floor`.
    pub fn smooth_step(edge: f64, eps: f64, floor: f64, order: usize) -> Result<Self> {
        TestFunctionConfig::Smoothstep {
            edge,
            eps,
            floor,
            scale: 1.0,
            order,
        }
        .build()
    }

    /// The identically zero function (a bump with zero amplitude).
    pub fn zero(order: usize) -> Self {
        Self::bump_with(0.0, 1.0, 0.0, vec![1.0], order).expect("zero function is valid")
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn config(&self) -> &TestFunctionConfig {
        &self.config
    }

    /// Closed support interval `[a, b]`.
    pub fn support(&self) -> (f64, f64) {
        match &self.shape {
            Shape::Bump { center, r, .. } => (center - r, center + r),
            Shape::Plateau { lo, hi, eps, .. } => (lo - eps, hi + eps),
        }
    }

    /// Smallest `r ≥ 1` with `supp f ⊆ [−r, r]`.
    pub fn support_radius(&self) -> f64 {
        let (a, b) = self.support();
        a.abs().max(b.abs()).max(1.0)
    }

    /// Consecutive intervals covering the support on each of which `f` is
    /// analytic. Plateaus and steps break where their edges meet the flat part.
    pub fn analytic_pieces(&self) -> Vec<(f64, f64)> {
        let (a, b) = self.support();
        let mut cuts = vec![a, b];
        if let Shape::Plateau { lo, hi, eps, .. } = &self.shape {
            cuts.extend([lo + eps, hi - eps].into_iter().filter(|&c| c > a && c < b));
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        cuts.windows(2).map(|w| (w[0], w[1])).collect()
    }

    /// `f^(k)(x)`. Panics when `k` exceeds `order`.
    pub fn eval(&self, k: usize, x: f64) -> f64 {
        assert!(k <= self.order, "derivative {k} exceeds order {}", self.order);
        if self.amplitude == 0.0 {
            return 0.0;
        }
        self.amplitude * self.shape_eval(k, x)
    }

    pub fn derivative(&self, k: usize, x: f64) -> Result<f64> {
        if k > self.order {
            return Err(Error::OrderExceeded {
                requested: k,
                available: self.order,
            });
        }
        Ok(self.eval(k, x))
    }

    pub fn value(&self, x: f64) -> f64 {
        self.eval(0, x)
    }

    fn shape_eval(&self, k: usize, x: f64) -> f64 {
        match &self.shape {
            Shape::Bump { center, r, poly, bump } => {
                let u = (x - center) / r;
                if u.abs() >= 1.0 {
                    return 0.0;
                }
                let mut acc = 0.0;
                for i in 0..=k {
                    let pi = poly.get(i).map_or(0.0, |p| p.eval(u));
                    if pi != 0.0 {
                        acc += binomial(k, i) * pi * bump.eval(k - i, u);
                    }
                }
                acc / r.powi(k as i32)
            }
            Shape::Plateau { lo, hi, eps, step } => {
                let w = 2.0 * eps;
                let t_up = (x - (lo - eps)) / w;
                let t_down = ((hi + eps) - x) / w;
                if t_up <= 0.0 || t_down <= 0.0 {
                    return 0.0;
                }
                let mut acc = 0.0;
                for i in 0..=k {
                    let up = step.eval(i, t_up);
                    if up == 0.0 {
                        continue;
                    }
                    let down = step.eval(k - i, t_down);
                    let sign = if (k - i) % 2 == 0 { 1.0 } else { -1.0 };
                    acc += binomial(k, i) * up * sign * down;
                }
                acc / w.powi(k as i32)
            }
        }
    }

    /// `x ↦ f(x − delta)`.
    pub fn shifted(&self, delta: f64) -> Self {
        let config = match self.config.clone() {
            TestFunctionConfig::Bump {
                r,
                center,
                scale,
                order,
                poly,
            } => TestFunctionConfig::Bump {
                r,
                center: center + delta,
                scale,
                order,
                poly,
            },
            TestFunctionConfig::Plateau {
                lo,
                hi,
                eps,
                scale,
                order,
            } => TestFunctionConfig::Plateau {
                lo: lo + delta,
                hi: hi + delta,
                eps,
                scale,
                order,
            },
            TestFunctionConfig::Smoothstep {
                edge,
                eps,
                floor,
                scale,
                order,
            } => TestFunctionConfig::Smoothstep {
                edge: edge + delta,
                eps,
                floor: floor + delta,
                scale,
                order,
            },
        };
        config.build().expect("shift of a valid function is valid")
    }

    /// `x ↦ factor·f(x)`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.amplitude *= factor;
        match &mut out.config {
            TestFunctionConfig::Bump { scale, .. }
            | TestFunctionConfig::Plateau { scale, .. }
            | TestFunctionConfig::Smoothstep { scale, .. } => *scale *= factor,
        }
        out
    }

    /// `sup |f^(k)|` by an adaptive grid search.
    ///
    /// The support is sampled at 4096 points; the largest local maxima are
    /// then refined by repeatedly sampling a shrinking bracket around the
    /// running maximum until it moves by less than 1e-10 (relative).
    pub fn sup_norm(&self, k: usize) -> Result<f64> {
        if k > self.order {
            return Err(Error::OrderExceeded {
                requested: k,
                available: self.order,
            });
        }
        let (a, b) = self.support();
        let n = 4096;
        let h = (b - a) / (n - 1) as f64;
        let g = |x: f64| self.eval(k, x).abs();
        let vals: Vec<f64> = (0..n).map(|i| g(a + h * i as f64)).collect();
        let mut peaks: Vec<usize> = (0..n)
            .filter(|&i| {
                let left = if i > 0 { vals[i - 1] } else { f64::NEG_INFINITY };
                let right = if i + 1 < n { vals[i + 1] } else { f64::NEG_INFINITY };
                vals[i] >= left && vals[i] >= right && vals[i] > 0.0
            })
            .collect();
        peaks.sort_by(|&i, &j| vals[j].total_cmp(&vals[i]));
        peaks.truncate(6);

        let mut best = vals.iter().copied().fold(0.0, f64::max);
        for &i in &peaks {
            let mut center = a + h * i as f64;
            let mut half = h;
            let mut current = vals[i];
            for _ in 0..200 {
                let lo = (center - half).max(a);
                let hi = (center + half).min(b);
                let m = 12;
                let mut arg = center;
                let mut top = current;
                for s in 0..=m {
                    let x = lo + (hi - lo) * s as f64 / m as f64;
                    let v = g(x);
                    if v > top {
                        top = v;
                        arg = x;
                    }
                }
                let moved = (top - current).abs();
                center = arg;
                current = top;
                half /= 3.0;
                if moved <= 1e-10 * current.max(f64::MIN_POSITIVE) && half < 1e-9 * (b - a) {
                    break;
                }
            }
            best = best.max(current);
        }
        Ok(best)
    }

    /// `‖f‖_{C^β} = Σ_{k≤β} ‖f^(k)‖_∞`.
    pub fn c_norm(&self, beta: usize) -> Result<f64> {
        (0..=beta).map(|k| self.sup_norm(k)).sum()
    }

    /// `L_f = ‖f'‖_∞`.
    pub fn lipschitz_seminorm(&self) -> Result<f64> {
        self.sup_norm(1)
    }

    /// `‖f‖_Lip = ‖f‖_∞ + L_f`.
    pub fn lip_norm(&self) -> Result<f64> {
        Ok(self.sup_norm(0)? + self.lipschitz_seminorm()?)
    }

    /// `‖f‖_β = Σ_{j≤β} ∫ |f^(j)(x)| ⟨x⟩^{j−1} dx`.
    ///
    /// Each term is split at the sign changes of `f^(j)` and integrated by
    /// composite Simpson with 2^14 panels; the result is accepted once it
    /// agrees with the 2^13-panel value to 1e-8 (relative), otherwise the
    /// panel count is doubled.
    pub fn weighted_norm(&self, beta: usize) -> Result<f64> {
        if beta > self.order {
            return Err(Error::OrderExceeded {
                requested: beta,
                available: self.order,
            });
        }
        let mut total = 0.0;
        for j in 0..=beta {
            let weight = |x: f64| (1.0 + x * x).powf(0.5 * (j as f64 - 1.0));
            let pieces = self.sign_pieces(j);
            let mut panels = 1usize << 14;
            let term = loop {
                let fine = self.piecewise_simpson(j, &pieces, panels, &weight);
                let coarse = self.piecewise_simpson(j, &pieces, panels / 2, &weight);
                if (fine - coarse).abs() <= 1e-8 * fine.abs().max(1e-300) || fine == 0.0 {
                    break fine;
                }
                if panels >= 1 << 20 {
                    return Err(Error::InvalidTestFunction(format!(
                        "weighted norm term {j} did not converge ({fine} vs {coarse})"
                    )));
                }
                panels *= 2;
            };
            total += term;
        }
        Ok(total)
    }

    /// Sub-intervals of the support on which `f^(j)` has constant sign.
    fn sign_pieces(&self, j: usize) -> Vec<(f64, f64)> {
        let (a, b) = self.support();
        let n = 1 << 14;
        let h = (b - a) / n as f64;
        let mut cuts = vec![a];
        let mut prev = self.eval(j, a);
        for i in 1..=n {
            let x = a + h * i as f64;
            let v = self.eval(j, x);
            if prev != 0.0 && v != 0.0 && prev.signum() != v.signum() {
                let (mut lo, mut hi) = (x - h, x);
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if self.eval(j, mid).signum() == prev.signum() {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                cuts.push(0.5 * (lo + hi));
            }
            if v != 0.0 {
                prev = v;
            }
        }
        cuts.push(b);
        cuts.windows(2).map(|w| (w[0], w[1])).collect()
    }

    fn piecewise_simpson(
        &self,
        j: usize,
        pieces: &[(f64, f64)],
        panels: usize,
        weight: &dyn Fn(f64) -> f64,
    ) -> f64 {
        let (a, b) = self.support();
        let span = b - a;
        pieces
            .iter()
            .map(|&(lo, hi)| {
                let m = (((hi - lo) / span * panels as f64).ceil() as usize).max(2);
                let m = m + m % 2;
                let h = (hi - lo) / m as f64;
                let g = |x: f64| self.eval(j, x).abs() * weight(x);
                let mut s = g(lo) + g(hi);
                for i in 1..m {
                    let c = if i % 2 == 1 { 4.0 } else { 2.0 };
                    s += c * g(lo + h * i as f64);
                }
                s * h / 3.0
            })
            .sum()
    }
}

/// Test-function declaration in run configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TestFunctionConfig {
    Bump {
        r: f64,
        #[serde(default)]
        center: f64,
        #[serde(default = "unit")]
        scale: f64,
        order: usize,
        #[serde(default = "unit_poly")]
        poly: Vec<f64>,
    },
    Smoothstep {
        edge: f64,
        eps: f64,
        floor: f64,
        #[serde(default = "unit")]
        scale: f64,
        order: usize,
    },
    Plateau {
        lo: f64,
        hi: f64,
        eps: f64,
        #[serde(default = "unit")]
        scale: f64,
        order: usize,
    },
}

fn unit() -> f64 {
    1.0
}

fn unit_poly() -> Vec<f64> {
    vec![1.0]
}

impl TestFunctionConfig {
    pub fn build(&self) -> Result<TestFunction> {
        let bad = |m: String| Err(Error::InvalidTestFunction(m));
        let (shape, amplitude, order) = match self {
            TestFunctionConfig::Bump {
                r,
                center,
                scale,
                order,
                poly,
            } => {
                if !(*r > 0.0) || !center.is_finite() {
                    return bad(format!("bump needs r > 0 and a finite center (r = {r})"));
                }
                let mut derivs = vec![Poly(poly.clone())];
                for k in 0..*order {
                    let d = derivs[k].derivative();
                    derivs.push(d);
                }
                (
                    Shape::Bump {
                        center: *center,
                        r: *r,
                        poly: derivs,
                        bump: StandardBump::new(*order),
                    },
                    *scale,
                    *order,
                )
            }
            TestFunctionConfig::Smoothstep {
                edge,
                eps,
                floor,
                scale,
                order,
            } => {
                if !(*eps > 0.0) || !(floor < edge) {
                    return bad(format!(
                        "smoothstep needs eps > 0 and floor < edge (eps = {eps}, floor = {floor}, edge = {edge})"
                    ));
                }
                (
                    Shape::Plateau {
                        lo: *floor,
                        hi: *edge,
                        eps: *eps,
                        step: Mollifier::new(*order),
                    },
                    *scale,
                    *order,
                )
            }
            TestFunctionConfig::Plateau {
                lo,
                hi,
                eps,
                scale,
                order,
            } => {
                if !(*eps > 0.0) || !(lo <= hi) {
                    return bad(format!("plateau needs eps > 0 and lo <= hi (lo = {lo}, hi = {hi})"));
                }
                (
                    Shape::Plateau {
                        lo: *lo,
                        hi: *hi,
                        eps: *eps,
                        step: Mollifier::new(*order),
                    },
                    *scale,
                    *order,
                )
            }
        };
        if !amplitude.is_finite() {
            return bad("scale must be finite".into());
        }
        Ok(TestFunction {
            shape,
            amplitude,
            order,
            config: self.clone(),
        })
    }

    pub fn describe(&self) -> String {
        serde_json::to_string(self).unwrap_or_default()
    }
}

//! Single-site probability measures.
//!
//! Every measure is finite atomic. Continuous families are projected to
//! atomic form by quantile quantization (`quantize`), which is all the
//! estimators need: sampling and the bounded-Lipschitz distance.

mod metric;
pub mod simplex;

pub use metric::{bl_distance, bl_distance_oracle};

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Default central mass kept when truncating unbounded families.
pub const DEFAULT_TRUNCATION_MASS: f64 = 1.0 - 1e-10;

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Finite atomic probability measure on ℝ.
#[derive(Debug, Clone, PartialEq)]
pub struct Measure {
    locations: Vec<f64>,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
}

impl Measure {
    /// Builds a measure from `(location, weight)` pairs. Equal locations are
    /// merged; weights must be positive and sum to one within 1e-12.
    pub fn from_atoms(atoms: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut atoms: Vec<(f64, f64)> = atoms.into_iter().collect();
        if atoms.is_empty() {
            return Err(Error::InvalidMeasure("no atoms".into()));
        }
        for &(x, w) in &atoms {
            if !x.is_finite() {
                return Err(Error::InvalidMeasure(format!("non-finite location {x}")));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::InvalidMeasure(format!(
                    "weight {w} at {x} is not strictly positive"
                )));
            }
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut locations: Vec<f64> = Vec::with_capacity(atoms.len());
        let mut weights: Vec<f64> = Vec::with_capacity(atoms.len());
        for (x, w) in atoms {
            match locations.last() {
                Some(&last) if last == x => *weights.last_mut().unwrap() += w,
                _ => {
                    locations.push(x);
                    weights.push(w);
                }
            }
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidMeasure(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Ok(Self {
            locations,
            weights,
            cumulative,
        })
    }

    pub fn dirac(at: f64) -> Self {
        Self::from_atoms([(at, 1.0)]).expect("point mass is valid")
    }

    pub fn bernoulli(p: f64, low: f64, high: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidMeasure(format!("bernoulli p = {p} outside [0,1]")));
        }
        let atoms = [(low, 1.0 - p), (high, p)]
            .into_iter()
            .filter(|&(_, w)| w > 0.0);
        Self::from_atoms(atoms)
    }

    pub fn locations(&self) -> &[f64] {
        &self.locations
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.locations.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn is_point_mass(&self) -> bool {
        self.locations.len() == 1
    }

    pub fn min_location(&self) -> f64 {
        self.locations[0]
    }

    pub fn max_location(&self) -> f64 {
        *self.locations.last().unwrap()
    }

    /// Pushforward under `x ↦ factor·x + shift`.
    pub fn affine(&self, factor: f64, shift: f64) -> Result<Self> {
        Self::from_atoms(self.atoms().map(|(x, w)| (factor * x + shift, w)))
    }

    /// Absolute moment `Σ wᵢ |xᵢ|^l`.
    pub fn moment(&self, l: u32) -> f64 {
        self.atoms().map(|(x, w)| w * x.abs().powi(l as i32)).sum()
    }

    /// Expectation `Σ wᵢ f(xᵢ)`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.atoms().map(|(x, w)| w * f(x)).sum()
    }

    /// One draw by inverse CDF.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let idx = self.cumulative.partition_point(|&c| c <= u);
        self.locations[idx.min(self.locations.len() - 1)]
    }

    /// `count` iid draws.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<f64> {
        (0..count).map(|_| self.draw(rng)).collect()
    }

    /// Two-column CSV `location,weight` with round-trip exact floats.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["location", "weight"])
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        for (x, p) in self.atoms() {
            w.write_record([x.to_string(), p.to_string()])
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let mut atoms = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::InvalidMeasure(e.to_string()))?;
            let parse = |i: usize| -> Result<f64> {
                record
                    .get(i)
                    .ok_or_else(|| Error::InvalidMeasure(format!("row {}: missing column", line + 1)))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidMeasure(format!("row {}: {e}", line + 1)))
            };
            atoms.push((parse(0)?, parse(1)?));
        }
        Self::from_atoms(atoms)
    }
}

/// The moment class `P_{p;C}(A)`: all measures with `max_{1≤l≤p} μ_l ≤ C`,
/// optionally supported on `[A, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentClass {
    pub p: u32,
    pub bound: f64,
    pub support_lower: Option<f64>,
}

impl MomentClass {
    pub fn new(p: u32, bound: f64, support_lower: Option<f64>) -> Result<Self> {
        if p < 1 || !(bound > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "moment class needs p >= 1 and C > 0 (got p = {p}, C = {bound})"
            )));
        }
        Ok(Self {
            p,
            bound,
            support_lower,
        })
    }

    pub fn contains(&self, nu: &Measure) -> bool {
        let moments_ok = (1..=self.p).all(|l| nu.moment(l) <= self.bound);
        let support_ok = self.support_lower.is_none_or(|a| nu.min_location() >= a);
        moments_ok && support_ok
    }
}

/// Families accepted by [`quantize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Family {
    Dirac {
        at: f64,
    },
    Bernoulli {
        p: f64,
        #[serde(default)]
        low: f64,
        #[serde(default = "one")]
        high: f64,
    },
    Uniform {
        a: f64,
        b: f64,
    },
    /// Normal law truncated to `[mean − 5 sd, mean + 5 sd]`.
    Gaussian {
        mean: f64,
        sd: f64,
    },
    /// Laplace law `rate/2 · exp(−rate |x − center|)`.
    TwoSidedExponential {
        rate: f64,
        #[serde(default)]
        center: f64,
    },
    Cauchy {
        #[serde(default)]
        location: f64,
        scale: f64,
    },
    FiniteAtomic {
        locations: Vec<f64>,
        weights: Vec<f64>,
    },
}

fn one() -> f64 {
    1.0
}

impl Family {
    /// Parses a family name plus a parameter object.
    pub fn from_parts(name: &str, params: &serde_json::Map<String, serde_json::Value>) -> Result<Self> {
        const KNOWN: [&str; 7] = [
            "dirac",
            "bernoulli",
            "uniform",
            "gaussian",
            "two-sided-exponential",
            "cauchy",
            "finite-atomic",
        ];
        if !KNOWN.contains(&name) {
            return Err(Error::UnknownFamily(name.to_string()));
        }
        let mut obj = params.clone();
        obj.insert("family".into(), serde_json::Value::String(name.into()));
        serde_json::from_value(serde_json::Value::Object(obj))
            .map_err(|e| Error::InvalidMeasure(format!("{name}: {e}")))
    }

    /// Exact families ignore the atom count.
    pub fn is_exact(&self) -> bool {
        matches!(
            self,
            Family::Dirac { .. } | Family::Bernoulli { .. } | Family::FiniteAtomic { .. }
        )
    }
}

/// Projects `family` onto `n_atoms` equally weighted atoms at the quantiles
/// `(k − 1/2)/n`. Unbounded families (two-sided exponential, Cauchy) are
/// first truncated to central mass `truncation_mass`.
pub fn quantize_with(family: &Family, n_atoms: usize, truncation_mass: f64) -> Result<Measure> {
    if n_atoms < 1 {
        return Err(Error::InvalidArgument("n_atoms must be at least 1".into()));
    }
    if !(truncation_mass > 0.0 && truncation_mass <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "truncation mass {truncation_mass} outside (0,1]"
        )));
    }
    let quantiles = |inv: &dyn Fn(f64) -> f64| -> Result<Measure> {
        let w = 1.0 / n_atoms as f64;
        Measure::from_atoms((1..=n_atoms).map(|k| (inv((k as f64 - 0.5) * w), w)))
    };
    let tail = 0.5 * (1.0 - truncation_mass);
    match family {
        Family::Dirac { at } => Ok(Measure::dirac(*at)),
        Family::Bernoulli { p, low, high } => Measure::bernoulli(*p, *low, *high),
        Family::FiniteAtomic { locations, weights } => {
            if locations.len() != weights.len() {
                return Err(Error::InvalidMeasure(
                    "locations and weights differ in length".into(),
                ));
            }
            Measure::from_atoms(locations.iter().copied().zip(weights.iter().copied()))
        }
        Family::Uniform { a, b } => {
            if !(b > a) {
                return Err(Error::InvalidMeasure(format!("uniform needs b > a (got [{a}, {b}])")));
            }
            quantiles(&|q| a + q * (b - a))
        }
        Family::Gaussian { mean, sd } => {
            if !(*sd > 0.0) {
                return Err(Error::InvalidMeasure(format!("gaussian needs sd > 0 (got {sd})")));
            }
            let std = Normal::standard();
            let lo = std.cdf(-5.0);
            let hi = std.cdf(5.0);
            quantiles(&|q| mean + sd * std.inverse_cdf(lo + q * (hi - lo)))
        }
        Family::TwoSidedExponential { rate, center } => {
            if !(*rate > 0.0) {
                return Err(Error::InvalidMeasure(format!("rate must be positive (got {rate})")));
            }
            quantiles(&|q| {
                let p = tail + q * (1.0 - 2.0 * tail);
                if p < 0.5 {
                    center + (2.0 * p).ln() / rate
                } else {
                    center - (2.0 * (1.0 - p)).ln() / rate
                }
            })
        }
        Family::Cauchy { location, scale } => {
            if !(*scale > 0.0) {
                return Err(Error::InvalidMeasure(format!("scale must be positive (got {scale})")));
            }
            quantiles(&|q| {
                let p = tail + q * (1.0 - 2.0 * tail);
                location + scale * (std::f64::consts::PI * (p - 0.5)).tan()
            })
        }
    }
}

pub fn quantize(family: &Family, n_atoms: usize) -> Result<Measure> {
    quantize_with(family, n_atoms, DEFAULT_TRUNCATION_MASS)
}

/// Measure declaration as it appears in run configs:
/// `{"family": "...", "params": {...}, "atoms": n}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureConfig {
    pub family: String,
    #[serde(default)]
    pub params: serde_json::Map<String, serde_json::Value>,
    #[serde(default = "default_atoms")]
    pub atoms: usize,
    #[serde(default = "default_truncation")]
    pub truncation_mass: f64,
}

fn default_atoms() -> usize {
    64
}

fn default_truncation() -> f64 {
    DEFAULT_TRUNCATION_MASS
}

impl MeasureConfig {
    pub fn build(&self) -> Result<Measure> {
        let family = Family::from_parts(&self.family, &self.params)?;
        quantize_with(&family, self.atoms, self.truncation_mass)
    }

    /// Short descriptor used in reports.
    pub fn describe(&self) -> String {
        let params = serde_json::Value::Object(self.params.clone());
        format!("{}{}", self.family, params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedTree;

    #[test]
    fn dirac_and_bernoulli_are_exact() {
        let d = quantize(&Family::Dirac { at: 0.0 }, 17).unwrap();
        assert_eq!(d.locations(), &[0.0]);
        assert_eq!(d.weights(), &[1.0]);
        let b = quantize(
            &Family::Bernoulli {
                p: 0.5,
                low: 0.0,
                high: 1.0,
            },
            3,
        )
        .unwrap();
        assert_eq!(b.locations(), &[0.0, 1.0]);
        assert_eq!(b.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn uniform_quantiles() {
        let u = quantize(&Family::Uniform { a: 0.0, b: 1.0 }, 4).unwrap();
        assert_eq!(u.locations(), &[0.125, 0.375, 0.625, 0.875]);
        assert!(u.weights().iter().all(|&w| w == 0.25));
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(quantize(&Family::Uniform { a: 1.0, b: 1.0 }, 4).is_err());
        assert!(quantize(&Family::Gaussian { mean: 0.0, sd: 0.0 }, 4).is_err());
        assert!(quantize(&Family::Uniform { a: 0.0, b: 1.0 }, 0).is_err());
        let unknown = MeasureConfig {
            family: "levy".into(),
            params: Default::default(),
            atoms: 4,
            truncation_mass: DEFAULT_TRUNCATION_MASS,
        };
        assert!(matches!(unknown.build(), Err(Error::UnknownFamily(_))));
    }

    #[test]
    fn duplicates_are_merged_and_bad_weights_rejected() {
        let m = Measure::from_atoms([(1.0, 0.25), (0.0, 0.5), (1.0, 0.25)]).unwrap();
        assert_eq!(m.locations(), &[0.0, 1.0]);
        assert_eq!(m.weights(), &[0.5, 0.5]);
        assert!(Measure::from_atoms([(0.0, 0.5), (1.0, 0.4)]).is_err());
        assert!(Measure::from_atoms([(0.0, 1.5), (1.0, -0.5)]).is_err());
    }

    #[test]
    fn moments() {
        assert_eq!(Measure::dirac(0.0).moment(1), 0.0);
        let m = Measure::from_atoms([(-2.0, 0.5), (2.0, 0.5)]).unwrap();
        assert_eq!(m.moment(1), 2.0);
        assert_eq!(m.moment(2), 4.0);
        let doubled = m.affine(2.0, 0.0).unwrap();
        assert_eq!(doubled.moment(1), 2.0 * m.moment(1));
        assert_eq!(doubled.moment(2), 4.0 * m.moment(2));
    }

    #[test]
    fn moment_class_membership() {
        let m = Measure::from_atoms([(-2.0, 0.5), (2.0, 0.5)]).unwrap();
        assert!(MomentClass::new(2, 4.0, None).unwrap().contains(&m));
        assert!(!MomentClass::new(2, 3.0, None).unwrap().contains(&m));
        assert!(!MomentClass::new(1, 3.0, Some(-1.0)).unwrap().contains(&m));
        assert!(MomentClass::new(0, 3.0, None).is_err());
    }

    #[test]
    fn sampling() {
        let tree = SeedTree::new(11);
        assert_eq!(Measure::dirac(3.0).sample(&mut tree.stream(0), 5), vec![3.0; 5]);
        assert!(Measure::dirac(3.0).sample(&mut tree.stream(0), 0).is_empty());
        let b = Measure::bernoulli(0.5, 0.0, 1.0).unwrap();
        let n = 100_000;
        let draws = b.sample(&mut tree.stream(1), n);
        let mean = draws.iter().sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() <= 3.0 * 0.5 / (n as f64).sqrt());
        assert_eq!(draws, b.sample(&mut tree.stream(1), n));
    }

    #[test]
    fn truncated_families_are_finite_and_symmetric() {
        for fam in [
            Family::TwoSidedExponential { rate: 2.0, center: 0.0 },
            Family::Cauchy { location: 0.0, scale: 1.0 },
            Family::Gaussian { mean: 0.0, sd: 1.0 },
        ] {
            let m = quantize(&fam, 40).unwrap();
            assert_eq!(m.len(), 40);
            assert!(m.moment(1).is_finite());
            assert!((m.min_location() + m.max_location()).abs() < 1e-9);
        }
        // truncation knob bounds the extreme atom of a single-atom Cauchy
        let c = quantize_with(&Family::Cauchy { location: 0.0, scale: 1.0 }, 1, 0.5).unwrap();
        assert!(c.min_location().abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let m = quantize(&Family::Gaussian { mean: 0.3, sd: 0.7 }, 9).unwrap();
        let back = Measure::from_csv(&m.to_csv().unwrap()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn config_parsing() {
        let cfg: MeasureConfig = serde_json::from_str(
            r#"{"family": "uniform", "params": {"a": -1, "b": 1}, "atoms": 2}"#,
        )
        .unwrap();
        assert_eq!(cfg.build().unwrap().locations(), &[-0.5, 0.5]);
        let bad: MeasureConfig = serde_json::from_str(
            r#"{"family": "uniform", "params": {"a": -1, "b": 1, "c": 0}}"#,
        )
        .unwrap();
        assert!(bad.build().is_err());
    }
}

//! Run configurations and the experiment registry.
//!
//! A run config is one JSON object. `experiment` selects the driver, `seed`
//! and `output` are shared by every experiment, and all remaining keys are
//! validated against the experiment's own schema. Unknown keys are errors.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::funcalc::QuadratureSpec;
use crate::lattice::BoxConfig;
use crate::measures::MeasureConfig;
use crate::test_functions::TestFunctionConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MethodChoice {
    #[default]
    Eig,
    Hs,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DosmRun {
    pub measure: MeasureConfig,
    #[serde(rename = "box")]
    pub lattice: BoxConfig,
    pub f: TestFunctionConfig,
    pub samples: usize,
    #[serde(default)]
    pub method: MethodChoice,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdsRun {
    pub measure: MeasureConfig,
    #[serde(rename = "box")]
    pub lattice: BoxConfig,
    pub energies: Vec<f64>,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurePair {
    pub a: MeasureConfig,
    pub b: MeasureConfig,
    /// known distance, checked alongside the oracle
    #[serde(default)]
    pub exact: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricRun {
    #[serde(default)]
    pub pairs: Vec<MeasurePair>,
    #[serde(default)]
    pub random_pairs: usize,
    #[serde(default = "default_max_atoms")]
    pub max_atoms: usize,
    #[serde(default = "default_oracle_grid")]
    pub oracle_grid: usize,
    #[serde(default = "default_metric_tol")]
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CtRun {
    pub measure: MeasureConfig,
    #[serde(rename = "box")]
    pub lattice: BoxConfig,
    pub im_z: Vec<f64>,
    #[serde(default)]
    pub re_z: f64,
    pub j_max: i64,
    #[serde(default)]
    pub axis: usize,
    #[serde(default = "default_residual")]
    pub residual_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Grid {
    pub fn values(&self) -> Result<Vec<f64>> {
        if self.points < 2 || !(self.max > self.min) {
            return Err(Error::InvalidArgument(format!(
                "grid needs max > min and at least 2 points, got [{}, {}] with {}",
                self.min, self.max, self.points
            )));
        }
        let h = (self.max - self.min) / (self.points - 1) as f64;
        Ok((0..self.points).map(|i| self.min + h * i as f64).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LipschitzRun {
    pub measure: MeasureConfig,
    #[serde(rename = "box")]
    pub lattice: BoxConfig,
    pub f: TestFunctionConfig,
    /// block corner; the origin block when absent
    #[serde(default)]
    pub j0: Option<Vec<i64>>,
    pub lambda: Grid,
    #[serde(default = "default_lipschitz_tol")]
    pub tolerance: f64,
}

/// Measure pairs for the modulus sweeps: explicit pairs, `δ₀` against `δ_t`
/// for each listed shift, or both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HolderRun {
    #[serde(default)]
    pub pairs: Vec<MeasurePair>,
    #[serde(default)]
    pub dirac_shifts: Vec<f64>,
    #[serde(rename = "box")]
    pub lattice: BoxConfig,
    pub f: TestFunctionConfig,
    pub samples: usize,
    #[serde(default)]
    pub pilot: Option<usize>,
    #[serde(default)]
    pub method: crate::dosm::Method,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdsModulusRun {
    #[serde(default)]
    pub pairs: Vec<MeasurePair>,
    #[serde(default)]
    pub dirac_shifts: Vec<f64>,
    #[serde(rename = "box")]
    pub lattice: BoxConfig,
    pub energy: f64,
    pub samples: usize,
    #[serde(default)]
    pub pilot: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiniteRangeRun {
    pub measure: MeasureConfig,
    #[serde(rename = "box")]
    pub lattice: BoxConfig,
    pub f: TestFunctionConfig,
    #[serde(rename = "L")]
    pub ls: Vec<i64>,
    pub samples: usize,
    /// the measure is pushed forward by `x ↦ s·x` for each scale
    #[serde(default = "unit_scales")]
    pub scales: Vec<f64>,
    #[serde(default = "default_slope")]
    pub slope_tolerance: f64,
}

fn default_max_atoms() -> usize {
    4
}
fn default_oracle_grid() -> usize {
    2000
}
fn default_metric_tol() -> f64 {
    1e-3
}
fn default_residual() -> f64 {
    0.1
}
fn default_lipschitz_tol() -> f64 {
    1e-6
}
fn unit_scales() -> Vec<f64> {
    vec![1.0]
}
fn default_slope() -> f64 {
    -0.9
}

#[derive(Debug, Clone, PartialEq)]
pub enum Experiment {
    Dosm(DosmRun),
    Ids(IdsRun),
    Metric(MetricRun),
    CtDecay(CtRun),
    Lipschitz(LipschitzRun),
    HolderSweep(HolderRun),
    IdsModulus(IdsModulusRun),
    FiniteRange(FiniteRangeRun),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Dosm(_) => "dosm",
            Experiment::Ids(_) => "ids",
            Experiment::Metric(_) => "metric",
            Experiment::CtDecay(_) => "ct-decay",
            Experiment::Lipschitz(_) => "lipschitz",
            Experiment::HolderSweep(_) => "holder-sweep",
            Experiment::IdsModulus(_) => "ids-modulus",
            Experiment::FiniteRange(_) => "finite-range",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub output: Option<String>,
    pub experiment: Experiment,
    /// the config text exactly as read
    pub source: Box<RawValue>,
}

const SHARED_KEYS: [&str; 3] = ["experiment", "seed", "output"];

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Config {
            path: ".".into(),
            message: e.to_string(),
        })?;
        let Value::Object(mut obj) = value else {
            return Err(Error::Config { path: ".".into(), message: "expected a JSON object".into() });
        };
        let kind = match obj.get("experiment") {
            Some(Value::String(s)) => s.clone(),
            Some(_) => {
                return Err(Error::Config { path: "experiment".into(), message: "expected a string".into() })
            }
            None => {
                return Err(Error::Config { path: "experiment".into(), message: "missing field".into() })
            }
        };
        let seed = match obj.get("seed") {
            None => 0,
            Some(v) => v.as_u64().ok_or_else(|| Error::Config {
                path: "seed".into(),
                message: "expected a non-negative integer".into(),
            })?,
        };
        let output = match obj.get("output") {
            None => None,
            Some(Value::String(s)) => Some(s.clone()),
            Some(_) => return Err(Error::Config { path: "output".into(), message: "expected a string".into() }),
        };
        for key in SHARED_KEYS {
            obj.remove(key);
        }
        let rest = Value::Object(obj);
        let experiment = match kind.as_str() {
            "dosm" => Experiment::Dosm(strict(rest)?),
            "ids" => Experiment::Ids(strict(rest)?),
            "metric" => Experiment::Metric(strict(rest)?),
            "ct-decay" => Experiment::CtDecay(strict(rest)?),
            "lipschitz" => Experiment::Lipschitz(strict(rest)?),
            "holder-sweep" => Experiment::HolderSweep(strict(rest)?),
            "ids-modulus" => Experiment::IdsModulus(strict(rest)?),
            "finite-range" => Experiment::FiniteRange(strict(rest)?),
            other => {
                return Err(Error::Config {
                    path: "experiment".into(),
                    message: format!("unknown experiment `{other}`; see `list`"),
                })
            }
        };
        let config = Self {
            seed,
            output,
            experiment,
            source: RawValue::from_string(text.trim().to_string())?,
        };
        config.validate()?;
        Ok(config)
    }

    /// Checks that need more than the schema, before any computation.
    pub fn validate(&self) -> Result<()> {
        let bad = |path: &str, message: String| Err(Error::Config { path: path.into(), message });
        let positive_samples = |n: usize| if n >= 2 { Ok(()) } else { bad("samples", format!("need at least 2, got {n}")) };
        match &self.experiment {
            Experiment::Dosm(c) => {
                positive_samples(c.samples)?;
                c.measure.build().map_err(|e| at("measure", e))?;
                c.lattice.build().map_err(|e| at("box", e))?;
                c.f.build().map_err(|e| at("f", e))?;
                c.quadrature.validate().map_err(|e| at("quadrature", e))?;
            }
            Experiment::Ids(c) => {
                positive_samples(c.samples)?;
                c.measure.build().map_err(|e| at("measure", e))?;
                c.lattice.build().map_err(|e| at("box", e))?;
                if c.energies.is_empty() {
                    return bad("energies", "empty".into());
                }
            }
            Experiment::Metric(c) => {
                if c.pairs.is_empty() && c.random_pairs == 0 {
                    return bad("pairs", "give explicit pairs or random_pairs > 0".into());
                }
                for (i, p) in c.pairs.iter().enumerate() {
                    p.a.build().map_err(|e| at(&format!("pairs[{i}].a"), e))?;
                    p.b.build().map_err(|e| at(&format!("pairs[{i}].b"), e))?;
                }
            }
            Experiment::CtDecay(c) => {
                c.measure.build().map_err(|e| at("measure", e))?;
                c.lattice.build().map_err(|e| at("box", e))?;
                if c.im_z.is_empty() || c.im_z.iter().any(|&y| y == 0.0 || !y.is_finite()) {
                    return bad("im_z", "need non-zero finite values".into());
                }
                if c.j_max < 2 {
                    return bad("j_max", format!("need at least 2, got {}", c.j_max));
                }
            }
            Experiment::Lipschitz(c) => {
                c.measure.build().map_err(|e| at("measure", e))?;
                c.lattice.build().map_err(|e| at("box", e))?;
                c.f.build().map_err(|e| at("f", e))?;
                if c.lambda.points < 3 {
                    return bad("lambda.points", format!("need at least 3, got {}", c.lambda.points));
                }
                c.lambda.values().map_err(|e| at("lambda", e))?;
            }
            Experiment::HolderSweep(c) => {
                positive_samples(c.samples)?;
                c.lattice.build().map_err(|e| at("box", e))?;
                let f = c.f.build().map_err(|e| at("f", e))?;
                let need = c.lattice.d + 3;
                if f.order() < need {
                    return bad("f.order", format!("the Hölder bound uses {need} derivatives, order is {}", f.order()));
                }
                check_pairs(&c.pairs, &c.dirac_shifts)?;
            }
            Experiment::IdsModulus(c) => {
                positive_samples(c.samples)?;
                c.lattice.build().map_err(|e| at("box", e))?;
                check_pairs(&c.pairs, &c.dirac_shifts)?;
            }
            Experiment::FiniteRange(c) => {
                positive_samples(c.samples)?;
                c.measure.build().map_err(|e| at("measure", e))?;
                let lattice = c.lattice.build().map_err(|e| at("box", e))?;
                c.f.build().map_err(|e| at("f", e))?;
                if c.ls.is_empty() {
                    return bad("L", "empty".into());
                }
                if let Some(&l) = c.ls.iter().find(|&&l| l < 0 || l > lattice.block_radius()) {
                    return bad("L", format!("L = {l} outside 0..={}", lattice.block_radius()));
                }
                if c.scales.is_empty() || c.scales.iter().any(|&s| s <= 0.0 || !s.is_finite()) {
                    return bad("scales", "need positive finite scales".into());
                }
            }
        }
        Ok(())
    }
}

fn check_pairs(pairs: &[MeasurePair], shifts: &[f64]) -> Result<()> {
    if pairs.is_empty() && shifts.is_empty() {
        return Err(Error::Config { path: "pairs".into(), message: "give pairs or dirac_shifts".into() });
    }
    for (i, p) in pairs.iter().enumerate() {
        p.a.build().map_err(|e| at(&format!("pairs[{i}].a"), e))?;
        p.b.build().map_err(|e| at(&format!("pairs[{i}].b"), e))?;
    }
    Ok(())
}

fn at(path: &str, e: Error) -> Error {
    match e {
        // alignment errors keep their own wording
        Error::Misaligned { .. } => e,
        other => Error::Config { path: path.into(), message: other.to_string() },
    }
}

fn strict<T: DeserializeOwned>(value: Value) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        Error::Config { path, message: e.into_inner().to_string() }
    })
}

/// Loads a measure from a JSON declaration, or from a `location,weight`
/// CSV when the file name ends in `.csv`.
pub fn read_measure(path: &std::path::Path) -> Result<crate::measures::Measure> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).context(format!("reading {}", path.display())))?;
    let measure = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        crate::measures::Measure::from_csv(&text)
    } else {
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| Error::Config { path: ".".into(), message: e.to_string() })?;
        strict::<MeasureConfig>(value)?.build()
    };
    measure.map_err(|e| e.context(path.display().to_string()))
}

/// `%.{digits}g`-style formatting: `digits` significant digits, trailing
/// zeros trimmed, exponent form outside `[1e-5, 10^digits)`.
pub fn format_significant(v: f64, digits: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".into() } else { v.to_string() };
    }
    let sci = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: String| {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    };
    if exp < -5 || exp >= digits as i32 {
        format!("{}e{exp}", trim(mantissa.to_string()))
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim(format!("{v:.decimals$}"))
    }
}

pub struct RegistryEntry {
    pub name: &'static str,
    pub description: &'static str,
    pub required: &'static [&'static str],
    pub minimal: &'static str,
}

pub const REGISTRY: &[RegistryEntry] = &[
    RegistryEntry {
        name: "dosm",
        description: "Monte Carlo estimate of n_nu(f) by eigendecomposition, Helffer-Sjostrand quadrature, or both",
        required: &["measure", "box", "f", "samples"],
        minimal: r#"{"experiment": "dosm", "measure": {"family": "dirac", "params": {"at": 0}}, "box": {"d": 1, "half_side": 8}, "f": {"family": "bump", "r": 1.5, "order": 4}, "samples": 4}"#,
    },
    RegistryEntry {
        name: "ids",
        description: "integrated density of states N_nu(E) at listed energies",
        required: &["measure", "box", "energies", "samples"],
        minimal: r#"{"experiment": "ids", "measure": {"family": "bernoulli", "params": {"p": 0.5}}, "box": {"d": 1, "half_side": 16}, "energies": [-3.5, -1, 0, 1, 3.5], "samples": 8}"#,
    },
    RegistryEntry {
        name: "metric",
        description: "bounded-Lipschitz distance d_w by linear programming, checked against a grid oracle",
        required: &["pairs or random_pairs"],
        minimal: r#"{"experiment": "metric", "random_pairs": 4}"#,
    },
    RegistryEntry {
        name: "ct-decay",
        description: "Combes-Thomas decay of |Tr P_0 (H - z)^-1 P_j| along a lattice ray",
        required: &["measure", "box", "im_z", "j_max"],
        minimal: r#"{"experiment": "ct-decay", "measure": {"family": "bernoulli", "params": {"p": 0.5, "high": 0.5}}, "box": {"d": 1, "half_side": 64}, "im_z": [0.5, 1, 2], "j_max": 30}"#,
    },
    RegistryEntry {
        name: "lipschitz",
        description: "single-site map lambda -> Tr P_0 f(H + lambda P_j0) P_0 against N L_f",
        required: &["measure", "box", "f", "lambda"],
        minimal: r#"{"experiment": "lipschitz", "measure": {"family": "uniform", "params": {"a": 0, "b": 1}}, "box": {"d": 1, "half_side": 8}, "f": {"family": "bump", "r": 1.5, "order": 2}, "lambda": {"min": -2, "max": 2, "points": 41}}"#,
    },
    RegistryEntry {
        name: "holder-sweep",
        description: "|n_nu1(f) - n_nu2(f)| against C1 r^M1 |f|_C^M1 d_w^(1/(1+d)) over measure pairs",
        required: &["pairs or dirac_shifts", "box", "f", "samples"],
        minimal: r#"{"experiment": "holder-sweep", "dirac_shifts": [0.01, 0.02, 0.05, 0.1], "box": {"d": 1, "half_side": 40}, "f": {"family": "bump", "center": 0.3, "r": 1.5, "order": 4}, "samples": 4}"#,
    },
    RegistryEntry {
        name: "ids-modulus",
        description: "|N_nu1(E) - N_nu2(E)| against C2 / log(1/d_w) over measure pairs",
        required: &["pairs or dirac_shifts", "box", "energy", "samples"],
        minimal: r#"{"experiment": "ids-modulus", "dirac_shifts": [0.01, 0.02, 0.05, 0.1], "box": {"d": 1, "half_side": 40}, "energy": 0.5, "samples": 4}"#,
    },
    RegistryEntry {
        name: "finite-range",
        description: "common-random-number remainder n(f) - n^(L)(f) over L, fitted log-log slope",
        required: &["measure", "box", "f", "L", "samples"],
        minimal: r#"{"experiment": "finite-range", "measure": {"family": "bernoulli", "params": {"p": 0.5, "high": 0.005}}, "box": {"d": 1, "half_side": 16}, "f": {"family": "bump", "center": 0.5, "r": 1.5, "order": 4}, "L": [1, 2, 4, 8], "samples": 50}"#,
    },
];

pub fn lookup(name: &str) -> Option<&'static RegistryEntry> {
    REGISTRY.iter().find(|e| e.name == name)
}

/// Registry listing, one experiment per block.
pub fn list_experiments() -> String {
    let mut out = String::new();
    for e in REGISTRY {
        out.push_str(&format!("{}\n    {}\n    required: {}\n    minimal: {}\n", e.name, e.description, e.required.join(", "), e.minimal));
    }
    out
}

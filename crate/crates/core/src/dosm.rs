//! Monte Carlo estimators of the density of states measure
//! `n_ν(f) = (1/N)·E Tr(P₀ f(H_ω) P₀)` and of the integrated density of states.
//!
//! Sample `k` draws its disorder from stream `k` of the supplied seed tree,
//! so estimates do not depend on the thread count. Per-sample values are
//! computed in parallel and reduced in sample order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funcalc::{hs_trace, BlockSpectrum, QuadratureSpec};
use crate::lattice::{Disorder, Lattice};
use crate::measures::Measure;
use crate::rng::SeedTree;
use crate::stats::mean_stderr;
use crate::test_functions::TestFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Eig,
    Hs,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Eig => "eig",
            Method::Hs => "hs",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DosmEstimate {
    pub value: f64,
    /// sample standard deviation / √samples
    pub stderr: f64,
    pub samples: usize,
    pub method: Method,
    /// largest per-sample quadrature error estimate divided by `N` (hs only)
    pub quadrature_error: Option<f64>,
}

impl DosmEstimate {
    fn from_values(values: &[f64], method: Method, quadrature_error: Option<f64>) -> Self {
        let (value, stderr) = mean_stderr(values);
        Self {
            value,
            stderr,
            samples: values.len(),
            method,
            quadrature_error,
        }
    }
}

/// Disorder source shared by all estimators.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub lattice: Lattice,
    pub measure: Measure,
    pub samples: usize,
    pub seeds: SeedTree,
}

impl Ensemble {
    pub fn new(lattice: Lattice, measure: Measure, samples: usize, seeds: SeedTree) -> Result<Self> {
        if samples < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 samples, got {samples}")));
        }
        Ok(Self {
            lattice,
            measure,
            samples,
            seeds,
        })
    }

    pub fn disorder(&self, sample: usize) -> Disorder {
        let mut rng = self.seeds.stream(sample as u64);
        self.lattice.sample_disorder(&self.measure, &mut rng)
    }

    /// `g(ω_k)` for every sample `k`, in sample order. A point mass yields
    /// the same disorder for every sample, so `g` is evaluated once.
    pub fn map<T, G>(&self, g: G) -> Result<Vec<T>>
    where
        T: Send + Clone,
        G: Fn(usize, &Disorder) -> Result<T> + Sync,
    {
        if self.measure.is_point_mass() {
            let v = g(0, &self.disorder(0))?;
            return Ok(vec![v; self.samples]);
        }
        (0..self.samples)
            .into_par_iter()
            .map(|k| g(k, &self.disorder(k)))
            .collect::<Vec<_>>()
            .into_iter()
            .collect()
    }

    /// Spectra with `P₀` weights for every sample.
    pub fn spectra(&self, truncation: Option<i64>) -> Result<Vec<BlockSpectrum>> {
        self.map(|_, dis| {
            let dis = match truncation {
                Some(l) => self.lattice.truncate_disorder(dis, l),
                None => dis.clone(),
            };
            BlockSpectrum::compute(&self.lattice.operator(&dis)?)
        })
    }

    pub fn rank(&self) -> f64 {
        self.lattice.block_rank() as f64
    }
}

/// Per-sample values `(1/N)Tr(P₀ f(H) P₀)` on disorder truncated at `L`
/// (no truncation for `None`), with per-sample quadrature errors for `hs`.
pub fn sample_traces(
    ens: &Ensemble,
    f: &TestFunction,
    truncation: Option<i64>,
    method: Method,
    quad: &QuadratureSpec,
) -> Result<(Vec<f64>, Option<f64>)> {
    let n = ens.rank();
    match method {
        Method::Eig => {
            let vals = ens.map(|_, dis| {
                let dis = truncate(ens, dis, truncation);
                Ok(BlockSpectrum::compute(&ens.lattice.operator(&dis)?)?.trace(f) / n)
            })?;
            Ok((vals, None))
        }
        Method::Hs => {
            let pairs = ens.map(|_, dis| {
                let dis = truncate(ens, dis, truncation);
                let t = hs_trace(&ens.lattice.operator(&dis)?, f, quad)?;
                Ok((t.value / n, t.error_estimate / n))
            })?;
            let err = pairs.iter().map(|p| p.1).fold(0.0, f64::max);
            Ok((pairs.into_iter().map(|p| p.0).collect(), Some(err)))
        }
    }
}

fn truncate(ens: &Ensemble, dis: &Disorder, l: Option<i64>) -> Disorder {
    match l {
        Some(l) => ens.lattice.truncate_disorder(dis, l),
        None => dis.clone(),
    }
}

pub fn dosm_estimate(
    ens: &Ensemble,
    f: &TestFunction,
    method: Method,
    quad: &QuadratureSpec,
) -> Result<DosmEstimate> {
    let (vals, err) = sample_traces(ens, f, None, method, quad)?;
    Ok(DosmEstimate::from_values(&vals, method, err))
}

/// Estimate on disorder zeroed outside `‖j‖_∞ ≤ K·L`; the retained blocks
/// use the same draws as the untruncated estimator.
pub fn finite_range_dosm(
    ens: &Ensemble,
    f: &TestFunction,
    l: i64,
    method: Method,
    quad: &QuadratureSpec,
) -> Result<DosmEstimate> {
    check_range(ens, l)?;
    let (vals, err) = sample_traces(ens, f, Some(l), method, quad)?;
    Ok(DosmEstimate::from_values(&vals, method, err))
}

fn check_range(ens: &Ensemble, l: i64) -> Result<()> {
    let max = ens.lattice.block_radius();
    if l < 0 || l > max {
        return Err(Error::InvalidArgument(format!(
            "truncation radius L = {l} outside [0, {max}]"
        )));
    }
    Ok(())
}

/// Remainder `n(f) − n^(L)(f)` with common random numbers: both traces of
/// sample `k` use the same draw `ω_k`.
pub fn crn_remainder(
    ens: &Ensemble,
    f: &TestFunction,
    l: i64,
    method: Method,
    quad: &QuadratureSpec,
) -> Result<DosmEstimate> {
    check_range(ens, l)?;
    let n = ens.rank();
    let diffs = ens.map(|_, dis| {
        let full = ens.lattice.operator(dis)?;
        let cut = ens.lattice.operator(&ens.lattice.truncate_disorder(dis, l))?;
        Ok(match method {
            Method::Eig => {
                (BlockSpectrum::compute(&full)?.trace(f) - BlockSpectrum::compute(&cut)?.trace(f)) / n
            }
            Method::Hs => (hs_trace(&full, f, quad)?.value - hs_trace(&cut, f, quad)?.value) / n,
        })
    })?;
    Ok(DosmEstimate::from_values(&diffs, method, None))
}

/// Per-sample CRN remainders for several `L` at once (eig path); one
/// untruncated spectrum per sample is shared by every `L`.
pub fn crn_remainders(ens: &Ensemble, f: &TestFunction, ls: &[i64]) -> Result<Vec<DosmEstimate>> {
    for &l in ls {
        check_range(ens, l)?;
    }
    let n = ens.rank();
    let rows = ens.map(|_, dis| {
        let full = BlockSpectrum::compute(&ens.lattice.operator(dis)?)?.trace(f);
        ls.iter()
            .map(|&l| {
                let cut = ens.lattice.operator(&ens.lattice.truncate_disorder(dis, l))?;
                Ok((full - BlockSpectrum::compute(&cut)?.trace(f)) / n)
            })
            .collect::<Result<Vec<f64>>>()
    })?;
    Ok((0..ls.len())
        .map(|i| {
            let col: Vec<f64> = rows.iter().map(|r| r[i]).collect();
            DosmEstimate::from_values(&col, Method::Eig, None)
        })
        .collect())
}

/// `N_ν(E) = (1/N) E Σ_{λ_k ≤ E} ‖P₀v_k‖²`.
pub fn ids_estimate(ens: &Ensemble, energy: f64) -> Result<DosmEstimate> {
    Ok(ids_curve(ens, &[energy])?.remove(0))
}

/// IDS at several energies from one set of spectra; monotone in `E`.
pub fn ids_curve(ens: &Ensemble, energies: &[f64]) -> Result<Vec<DosmEstimate>> {
    let spectra = ens.spectra(None)?;
    Ok(energies
        .iter()
        .map(|&e| {
            let vals: Vec<f64> = spectra.iter().map(|s| s.ids(e)).collect();
            DosmEstimate::from_values(&vals, Method::Eig, None)
        })
        .collect())
}

/// Smoothed IDS `n_ν(s_{E,ε})`, with the step cut off below the spectrum.
pub fn smoothed_ids_estimate(ens: &Ensemble, energy: f64, eps: f64, order: usize) -> Result<DosmEstimate> {
    let d = ens.lattice.dim() as f64;
    let floor = (-2.0 * d + ens.measure.min_location()).min(energy) - 1.0 - 2.0 * eps;
    let s = TestFunction::smooth_step(energy, eps, floor, order)?;
    dosm_estimate(ens, &s, Method::Eig, &QuadratureSpec::default())
}

/// `c₁·μ₁[ν]/(N·L)·‖f‖_{3+d}`.
pub fn remainder_bound(measure: &Measure, l: i64, f: &TestFunction, d: usize, n: usize, c1: f64) -> Result<f64> {
    if l < 1 {
        return Err(Error::InvalidArgument(format!("L must be at least 1, got {l}")));
    }
    if !(c1 > 0.0) {
        return Err(Error::InvalidArgument(format!("c1 must be positive, got {c1}")));
    }
    let norm = f.weighted_norm(3 + d)?;
    Ok(c1 * measure.moment(1) / (n as f64 * l as f64) * norm)
}

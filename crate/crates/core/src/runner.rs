//! Dispatch from run configs to experiment drivers, and report files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::value::RawValue;

use crate::config::{Experiment, MeasurePair, MethodChoice, RunConfig};
use crate::dosm::{Ensemble, Method};
use crate::error::{Error, Result};
use crate::experiments::{self, ExperimentReport, PairSweep};
use crate::measures::Measure;
use crate::rng::SeedTree;

/// Runs the experiment named in `config` with master seed `seed`.
pub fn execute(config: &RunConfig, seed: u64) -> Result<ExperimentReport> {
    let kind = config.experiment.kind();
    dispatch(&config.experiment, SeedTree::new(seed)).map_err(|e| e.context(format!("{kind} experiment")))
}

fn dispatch(experiment: &Experiment, seeds: SeedTree) -> Result<ExperimentReport> {
    match experiment {
        Experiment::Dosm(c) => {
            let measure = c.measure.build()?;
            let ens = Ensemble::new(c.lattice.build()?, measure, c.samples, seeds)?;
            let methods: &[Method] = match c.method {
                MethodChoice::Eig => &[Method::Eig],
                MethodChoice::Hs => &[Method::Hs],
                MethodChoice::Both => &[Method::Eig, Method::Hs],
            };
            experiments::dosm_report(&ens, c.measure.describe(), &c.f.build()?, methods, &c.quadrature)
        }
        Experiment::Ids(c) => {
            let ens = Ensemble::new(c.lattice.build()?, c.measure.build()?, c.samples, seeds)?;
            experiments::ids_report(&ens, c.measure.describe(), &c.energies)
        }
        Experiment::Metric(c) => {
            let mut pairs = Vec::new();
            for p in &c.pairs {
                pairs.push((p.a.build()?, p.b.build()?, p.exact));
            }
            for (a, b) in experiments::random_measure_pairs(c.random_pairs, c.max_atoms, seeds)? {
                pairs.push((a, b, None));
            }
            experiments::metric_report(&pairs, c.oracle_grid, c.tolerance)
        }
        Experiment::CtDecay(c) => {
            let lattice = c.lattice.build()?;
            let disorder = lattice.sample_disorder(&c.measure.build()?, &mut seeds.stream(0));
            let op = lattice.operator(&disorder)?;
            experiments::combes_thomas_scan(&op, c.re_z, &c.im_z, c.j_max, c.axis, c.residual_tolerance)
        }
        Experiment::Lipschitz(c) => {
            let lattice = c.lattice.build()?;
            let j0 = c.j0.clone().unwrap_or_else(|| vec![0; lattice.dim()]);
            experiments::lipschitz_scan(&lattice, &c.measure.build()?, &j0, &c.f.build()?, &c.lambda.values()?, seeds, c.tolerance)
        }
        Experiment::HolderSweep(c) => {
            let pairs = measure_pairs(&c.pairs, &c.dirac_shifts)?;
            let lattice = c.lattice.build()?;
            let sweep = PairSweep {
                pairs: &pairs,
                lattice: &lattice,
                samples: c.samples,
                seeds,
                pilot: c.pilot.unwrap_or(pairs.len().div_ceil(2)),
            };
            experiments::holder_sweep(&sweep, &c.f.build()?, c.method, &c.quadrature)
        }
        Experiment::IdsModulus(c) => {
            let pairs = measure_pairs(&c.pairs, &c.dirac_shifts)?;
            let lattice = c.lattice.build()?;
            let sweep = PairSweep {
                pairs: &pairs,
                lattice: &lattice,
                samples: c.samples,
                seeds,
                pilot: c.pilot.unwrap_or(pairs.len().div_ceil(2)),
            };
            experiments::ids_modulus_sweep(&sweep, c.energy)
        }
        Experiment::FiniteRange(c) => experiments::finite_range_convergence(
            &c.lattice.build()?,
            &c.measure.build()?,
            &c.scales,
            &c.f.build()?,
            &c.ls,
            c.samples,
            seeds,
            c.slope_tolerance,
        ),
    }
}

fn measure_pairs(pairs: &[MeasurePair], shifts: &[f64]) -> Result<Vec<(Measure, Measure)>> {
    let mut out = Vec::new();
    for p in pairs {
        out.push((p.a.build()?, p.b.build()?));
    }
    for &t in shifts {
        out.push((Measure::dirac(0.0), Measure::dirac(t)));
    }
    Ok(out)
}

#[derive(Serialize)]
struct ReportDocument<'a> {
    seed: u64,
    timestamp: &'a str,
    config: &'a RawValue,
    #[serde(flatten)]
    report: &'a ExperimentReport,
}

/// Paths of one written report.
#[derive(Debug, Clone)]
pub struct Written {
    pub json: PathBuf,
    pub csv: PathBuf,
}

/// Writes `{kind}-{seed}-{timestamp}.json` and `.csv` into `dir`.
pub fn write_report(report: &ExperimentReport, config: &RunConfig, seed: u64, dir: &Path) -> Result<Written> {
    fs::create_dir_all(dir).map_err(|e| Error::from(e).context(format!("creating {}", dir.display())))?;
    let timestamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%3fZ").to_string();
    let stem = unique_stem(dir, &format!("{}-{}-{}", report.kind, seed, timestamp));
    let doc = ReportDocument {
        seed,
        timestamp: &timestamp,
        config: &config.source,
        report,
    };
    let json = dir.join(format!("{stem}.json"));
    let csv = dir.join(format!("{stem}.csv"));
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    fs::write(&json, text).map_err(|e| Error::from(e).context(format!("writing {}", json.display())))?;
    fs::write(&csv, report.to_csv()?).map_err(|e| Error::from(e).context(format!("writing {}", csv.display())))?;
    Ok(Written { json, csv })
}

fn unique_stem(dir: &Path, stem: &str) -> String {
    let taken = |s: &str| dir.join(format!("{s}.json")).exists() || dir.join(format!("{s}.csv")).exists();
    if !taken(stem) {
        return stem.to_string();
    }
    (1..).map(|i| format!("{stem}-{i}")).find(|s| !taken(s)).expect("unbounded search")
}

/// Reads a report written by [`write_report`] back into its parts.
pub fn read_report(path: &Path) -> Result<(serde_json::Value, ExperimentReport)> {
    let text = fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let mut obj = value.as_object().cloned().unwrap_or_default();
    for key in ["seed", "timestamp", "config"] {
        obj.remove(key);
    }
    let report: ExperimentReport = serde_json::from_value(serde_json::Value::Object(obj))?;
    Ok((value, report))
}

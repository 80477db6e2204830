//! Acceptance battery. Prints one line per criterion and exits non-zero if
//! any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use dosmlab::config::Grid;
use dosmlab::dosm::{dosm_estimate, Ensemble, Method};
use dosmlab::experiments::{
    combes_thomas_scan, finite_range_convergence, holder_sweep, ids_report, lipschitz_scan, metric_report,
    random_measure_pairs, ExperimentReport, PairSweep, Verdict,
};
use dosmlab::funcalc::{eig_trace, hs_trace, AlmostAnalyticExtension, QuadratureSpec};
use dosmlab::lattice::{Boundary, BoxConfig, Laplacian};
use dosmlab::measures::{quantize, Family, Measure};
use dosmlab::rng::SeedTree;
use dosmlab::test_functions::TestFunction;
use dosmlab::Result;

const SEED: u64 = 20240229;

struct Outcome {
    passed: bool,
    detail: String,
    /// every number the criterion computed, for the thread-count comparison
    fingerprint: String,
}

fn fingerprint(reports: &[&ExperimentReport]) -> String {
    reports.iter().map(|r| serde_json::to_string(r).unwrap()).collect::<Vec<_>>().join("\n")
}

fn hs_pairs() -> Result<Vec<(String, BoxConfig, Measure, TestFunction)>> {
    let p = Boundary::Periodic;
    let dir = Boundary::Dirichlet;
    Ok(vec![
        ("d1 R20 bernoulli".into(), BoxConfig::new(1, 20, p, 1), Measure::bernoulli(0.5, 0.0, 1.0)?, TestFunction::bump(0.0, 1.5, 6)?),
        ("d1 R50 dirichlet uniform".into(), BoxConfig::new(1, 50, dir, 1), quantize(&Family::Uniform { a: 0.0, b: 1.0 }, 16)?, TestFunction::bump(0.5, 2.0, 6)?),
        ("d1 R200 gaussian".into(), BoxConfig::new(1, 200, p, 1), quantize(&Family::Gaussian { mean: 0.0, sd: 0.5 }, 16)?, TestFunction::bump(-1.0, 1.0, 6)?),
        ("d1 R100 K2 plateau".into(), BoxConfig::new(1, 100, p, 2).expanded(), Measure::bernoulli(0.3, -0.5, 0.5)?, TestFunction::plateau(-1.0, 1.0, 0.5, 6)?),
        ("d1 R30 free poly bump".into(), BoxConfig::new(1, 30, p, 1), Measure::dirac(0.0), TestFunction::bump_with(0.0, 2.5, 1.0, vec![1.0, 0.5, -0.2], 6)?),
        ("d1 R60 laplace wide".into(), BoxConfig::new(1, 60, dir, 1), quantize(&Family::TwoSidedExponential { rate: 2.0, center: 0.0 }, 16)?, TestFunction::bump(0.0, 3.0, 6)?),
        ("d2 R5 dirichlet bernoulli".into(), BoxConfig::new(2, 5, dir, 1), Measure::bernoulli(0.5, 0.0, 1.0)?, TestFunction::bump(0.0, 2.0, 6)?),
        ("d2 R7 uniform".into(), BoxConfig::new(2, 7, p, 1), quantize(&Family::Uniform { a: -1.0, b: 1.0 }, 16)?, TestFunction::bump(1.0, 1.5, 6)?),
        ("d2 R6 plateau".into(), BoxConfig::new(2, 6, p, 1), Measure::bernoulli(0.5, 0.0, 0.5)?, TestFunction::plateau(-2.0, 2.0, 1.0, 6)?),
        ("d2 R10 graph laplacian".into(), BoxConfig::new(2, 10, dir, 1).with_laplacian(Laplacian::Graph), Measure::dirac(0.0), TestFunction::bump(4.0, 2.0, 6)?),
    ])
}

fn criterion_1() -> Result<Outcome> {
    let quad = QuadratureSpec::default();
    let seeds = SeedTree::new(SEED).child(1);
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    let mut fp = String::new();
    for (k, (name, cfg, nu, f)) in hs_pairs()?.into_iter().enumerate() {
        let lattice = cfg.build()?;
        let op = lattice.operator(&lattice.sample_disorder(&nu, &mut seeds.stream(k as u64)))?;
        let exact = eig_trace(&op, &f)?;
        let hs = hs_trace(&op, &f, &quad)?;
        let rel = (hs.value - exact).abs() / (1.0 + exact.abs());
        worst = worst.max(rel);
        if rel > 1e-6 {
            failures.push(format!("{name}: {rel:.2e}"));
        }
        fp.push_str(&format!("{exact:?} {:?} {:?}\n", hs.value, hs.error_estimate));
    }
    Ok(Outcome {
        passed: failures.is_empty(),
        detail: format!("10 pairs, worst |hs - eig|/(1+|eig|) = {worst:.2e} (limit 1e-6){}", list(&failures)),
        fingerprint: fp,
    })
}

fn criterion_2() -> Result<Outcome> {
    let bumps = [
        TestFunction::bump(0.0, 1.0, 5)?,
        TestFunction::bump_with(0.5, 2.0, 1.0, vec![1.0, -0.3, 0.1], 5)?,
        TestFunction::bump(-1.0, 0.5, 5)?,
        TestFunction::bump_with(3.0, 4.0, 2.5, vec![1.0], 5)?,
    ];
    let mut checked = 0usize;
    let mut violations = 0usize;
    let mut tightest: f64 = 0.0;
    for f in &bumps {
        let (a, b) = f.support();
        for p in [2usize, 3, 4] {
            let ext = AlmostAnalyticExtension::new(f.clone(), p)?;
            let bound = f.sup_norm(p + 1)?;
            for i in 0..200 {
                let x = a + (b - a) * i as f64 / 199.0;
                let bracket = (1.0 + x * x).sqrt();
                for j in 0..200 {
                    let y = bracket * (-1.0 + 2.0 * j as f64 / 199.0);
                    let lhs = ext.dbar(x, y).norm();
                    let rhs = bound * y.abs().powi(p as i32);
                    checked += 1;
                    if lhs > rhs {
                        violations += 1;
                    }
                    if rhs > 0.0 {
                        tightest = tightest.max(lhs / rhs);
                    }
                }
            }
        }
    }
    Ok(Outcome {
        passed: violations == 0,
        detail: format!("{checked} grid points, {violations} violations, max ratio {tightest:.3}"),
        fingerprint: format!("{checked} {violations} {tightest:?}"),
    })
}

fn criterion_3() -> Result<Outcome> {
    let mut pairs: Vec<(Measure, Measure, Option<f64>)> = random_measure_pairs(25, 6, SeedTree::new(SEED).child(3))?
        .into_iter()
        .map(|(a, b)| (a, b, None))
        .collect();
    for t in [0.01, 0.1, 0.5, 1.0] {
        pairs.push((Measure::dirac(0.0), Measure::dirac(t), Some(2.0 * t / (2.0 + t))));
    }
    let rep = metric_report(&pairs, 2000, 1e-3)?;
    Ok(Outcome {
        passed: rep.verdict == Verdict::Pass,
        detail: format!(
            "25 random pairs + 4 closed forms, max |LP - oracle| = {:.2e}, max |LP - exact| = {:.2e}",
            rep.fits["max_lp_oracle_gap"], rep.fits["max_lp_exact_gap"]
        ),
        fingerprint: fingerprint(&[&rep]),
    })
}

fn criterion_4() -> Result<Outcome> {
    let lattice = BoxConfig::new(1, 64, Boundary::Periodic, 1).build()?;
    let nu = Measure::bernoulli(0.5, 0.0, 0.5)?;
    let op = lattice.operator(&lattice.sample_disorder(&nu, &mut SeedTree::new(SEED).child(4).stream(0)))?;
    let rep = combes_thomas_scan(&op, 0.0, &[0.5, 1.0, 2.0], 30, 0, 0.1)?;
    let rates: Vec<String> = ["0.5", "1", "2"]
        .iter()
        .map(|e| format!("{:.3}", rep.fits.get(&format!("rate@{e}")).copied().unwrap_or(f64::NAN)))
        .collect();
    let residual = ["0.5", "1", "2"]
        .iter()
        .filter_map(|e| rep.fits.get(&format!("residual@{e}")))
        .fold(0.0f64, |a, &b| a.max(b));
    Ok(Outcome {
        passed: rep.verdict == Verdict::Pass,
        detail: format!("rates at Im z = 0.5, 1, 2: {}; max residual {residual:.3} (limit 0.1)", rates.join(", ")),
        fingerprint: fingerprint(&[&rep]),
    })
}

fn criterion_5() -> Result<Outcome> {
    let p = Boundary::Periodic;
    let dir = Boundary::Dirichlet;
    let uniform = quantize(&Family::Uniform { a: 0.0, b: 1.0 }, 16)?;
    let gaussian = quantize(&Family::Gaussian { mean: 0.0, sd: 1.0 }, 16)?;
    let bern = Measure::bernoulli(0.5, 0.0, 1.0)?;
    let configs: Vec<(BoxConfig, Measure, Vec<i64>, TestFunction)> = vec![
        (BoxConfig::new(1, 8, p, 1), uniform.clone(), vec![0], TestFunction::bump(0.0, 1.5, 2)?),
        (BoxConfig::new(1, 8, dir, 1), bern.clone(), vec![1], TestFunction::bump(0.5, 1.0, 2)?),
        (BoxConfig::new(1, 12, p, 1), gaussian.clone(), vec![0], TestFunction::plateau(-1.0, 1.0, 0.5, 2)?),
        (BoxConfig::new(1, 8, p, 2).expanded(), bern.clone(), vec![0], TestFunction::bump(0.0, 2.0, 2)?),
        (BoxConfig::new(1, 10, dir, 2).expanded(), uniform.clone(), vec![2], TestFunction::bump(-0.5, 2.0, 2)?),
        (BoxConfig::new(2, 3, p, 1), uniform.clone(), vec![0, 0], TestFunction::bump(0.0, 2.0, 2)?),
        (BoxConfig::new(2, 4, dir, 1), bern.clone(), vec![1, 0], TestFunction::bump(1.0, 1.5, 2)?),
        (BoxConfig::new(2, 4, p, 2).expanded(), gaussian, vec![0, 0], TestFunction::bump(0.0, 2.0, 2)?),
        (BoxConfig::new(2, 3, dir, 2).expanded(), bern, vec![0, 0], TestFunction::plateau(-1.0, 1.0, 1.0, 2)?),
        (BoxConfig::new(1, 0, dir, 1), Measure::dirac(0.0), vec![0], TestFunction::bump(0.0, 1.5, 2)?),
    ];
    let grid = Grid { min: -3.0, max: 3.0, points: 50 }.values()?;
    let seeds = SeedTree::new(SEED).child(5);
    let mut reports = Vec::new();
    for (k, (cfg, nu, j0, f)) in configs.into_iter().enumerate() {
        reports.push(lipschitz_scan(&cfg.build()?, &nu, &j0, &f, &grid, seeds.child(k as u64), 1e-6)?);
    }
    let worst = reports.iter().map(|r| r.fits["ratio"]).fold(0.0f64, f64::max);
    let failed: Vec<String> =
        reports.iter().enumerate().filter(|(_, r)| r.verdict != Verdict::Pass).map(|(k, _)| k.to_string()).collect();
    let single = reports.last().expect("ten configurations").fits["ratio"];
    Ok(Outcome {
        passed: failed.is_empty(),
        detail: format!(
            "10 configurations, worst max-quotient / (N L_f) = {worst:.6}; single-site box reaches {single:.4}{}",
            list(&failed)
        ),
        fingerprint: fingerprint(&reports.iter().collect::<Vec<_>>()),
    })
}

fn criterion_6() -> Result<Outcome> {
    let lattice = BoxConfig::new(1, 32, Boundary::Periodic, 1).build()?;
    let nu = Measure::bernoulli(0.5, 0.0, 0.005)?;
    let f = TestFunction::bump(0.5, 1.5, 6)?;
    let rep = finite_range_convergence(&lattice, &nu, &[1.0, 2.0], &f, &[1, 2, 4, 8], 2000, SeedTree::new(SEED).child(6), -0.9)?;
    let get = |k: &str| rep.fits.get(k).copied().unwrap_or(f64::NAN);
    Ok(Outcome {
        passed: rep.verdict == Verdict::Pass,
        detail: format!(
            "bernoulli {{0, 0.005}}, M = 2000: slope {:.3} (limit -0.9), worst mu1-linearity deviation {:.2} stderr (limit 3)",
            get("slope"),
            get("max_linearity_deviation_sigmas")
        ),
        fingerprint: fingerprint(&[&rep]),
    })
}

fn criterion_7() -> Result<Outcome> {
    let lattice = BoxConfig::new(1, 200, Boundary::Periodic, 1).build()?;
    let pairs: Vec<(Measure, Measure)> =
        [0.01, 0.02, 0.05, 0.1].iter().map(|&t| (Measure::dirac(0.0), Measure::dirac(t))).collect();
    let sweep = PairSweep { pairs: &pairs, lattice: &lattice, samples: 5000, seeds: SeedTree::new(SEED).child(7), pilot: 2 };
    let f = TestFunction::bump(0.3, 1.5, 6)?;
    let rep = holder_sweep(&sweep, &f, Method::Eig, &QuadratureSpec::default())?;
    let exponent = rep.fits.get("exponent").copied().unwrap_or(f64::NAN);
    Ok(Outcome {
        passed: rep.verdict == Verdict::Pass && exponent >= 0.5,
        detail: format!(
            "delta_0 vs delta_t, R = 200: verdict {:?}, C1 = {:.4e}, fitted exponent {exponent:.3} (at least 0.5)",
            rep.verdict,
            rep.fits.get("constant").copied().unwrap_or(f64::NAN)
        ),
        fingerprint: fingerprint(&[&rep]),
    })
}

fn criterion_8() -> Result<Outcome> {
    let measures = vec![
        Measure::bernoulli(0.3, -1.0, 2.0)?,
        quantize(&Family::Uniform { a: -1.0, b: 1.0 }, 32)?,
        quantize(&Family::Gaussian { mean: 0.5, sd: 1.0 }, 32)?,
        quantize(&Family::TwoSidedExponential { rate: 2.0, center: 0.0 }, 32)?,
        Measure::from_atoms([(-0.7, 0.2), (0.1, 0.5), (1.9, 0.3)])?,
    ];
    let boxes = [
        BoxConfig::new(1, 20, Boundary::Periodic, 1),
        BoxConfig::new(1, 15, Boundary::Dirichlet, 1),
        BoxConfig::new(2, 4, Boundary::Periodic, 1),
        BoxConfig::new(1, 12, Boundary::Periodic, 2).expanded(),
        BoxConfig::new(2, 3, Boundary::Dirichlet, 1),
    ];
    let seeds = SeedTree::new(SEED).child(8);
    let mut worst_mass: f64 = 0.0;
    let mut reports = Vec::new();
    let mut fp = String::new();
    for (k, (nu, cfg)) in measures.iter().zip(&boxes).enumerate() {
        let lattice = cfg.build()?;
        let ens = Ensemble::new(lattice, nu.clone(), 50, seeds.child(k as u64))?;
        let d = cfg.d as f64;
        let (lo, hi) = (-2.0 * d + nu.min_location(), 2.0 * d + nu.max_location());
        let one = TestFunction::plateau(lo - 1.0, hi + 1.0, 0.5, 2)?;
        let mass = dosm_estimate(&ens, &one, Method::Eig, &QuadratureSpec::default())?;
        worst_mass = worst_mass.max((mass.value - 1.0).abs());
        fp.push_str(&format!("{:?}\n", mass.value));
        let mut energies: Vec<f64> = (0..=40).map(|i| lo + (hi - lo) * i as f64 / 40.0).collect();
        energies.extend([lo - 1.0, lo - 1e-9, hi + 1e-9, hi + 1.0]);
        reports.push(ids_report(&ens, format!("measure {k}"), &energies)?);
    }
    let ids_ok = reports.iter().all(|r| r.verdict == Verdict::Pass);
    fp.push_str(&fingerprint(&reports.iter().collect::<Vec<_>>()));
    Ok(Outcome {
        passed: worst_mass <= 1e-6 && ids_ok,
        detail: format!(
            "5 measures: worst |mass - 1| = {worst_mass:.2e} (limit 1e-6); IDS monotone with exact 0/1 outside Gershgorin: {}",
            if ids_ok { "yes" } else { "no" }
        ),
        fingerprint: fp,
    })
}

fn list(items: &[String]) -> String {
    if items.is_empty() {
        String::new()
    } else {
        format!("; failing: {}", items.join(", "))
    }
}

type Criterion = (usize, &'static str, fn() -> Result<Outcome>);

const CRITERIA: [Criterion; 8] = [
    (1, "functional-calculus equivalence", criterion_1),
    (2, "almost-analytic bound", criterion_2),
    (3, "d_w backends agree", criterion_3),
    (4, "Combes-Thomas decay", criterion_4),
    (5, "single-site Lipschitz property", criterion_5),
    (6, "finite-range remainder", criterion_6),
    (7, "Hölder modulus", criterion_7),
    (8, "DOSm is a probability measure", criterion_8),
];

fn run_all(threads: usize, verbose: bool) -> Vec<(usize, bool, String)> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool");
    pool.install(|| {
        CRITERIA
            .iter()
            .map(|&(id, name, run)| {
                let start = Instant::now();
                let (passed, detail, fp) = match run() {
                    Ok(o) => (o.passed, o.detail, o.fingerprint),
                    Err(e) => (false, format!("error: {e}"), String::new()),
                };
                if verbose {
                    let tag = if passed { "PASS" } else { "FAIL" };
                    println!("[{tag}] {id}. {name} ({:.1}s): {detail}", start.elapsed().as_secs_f64());
                }
                (id, passed, fp)
            })
            .collect()
    })
}

fn main() -> ExitCode {
    let first = run_all(4, true);
    let start = Instant::now();
    let second = run_all(1, false);
    let differing: Vec<String> = first
        .iter()
        .zip(&second)
        .filter(|(a, b)| a.2 != b.2 || a.2.is_empty())
        .map(|(a, _)| a.0.to_string())
        .collect();
    let deterministic = differing.is_empty();
    println!(
        "[{}] 9. determinism ({:.1}s): criteria 1-8 rerun on 1 thread vs 4 threads, {}",
        if deterministic { "PASS" } else { "FAIL" },
        start.elapsed().as_secs_f64(),
        if deterministic { "all numeric output identical".to_string() } else { format!("differing: {}", differing.join(", ")) }
    );
    let all = first.iter().all(|r| r.1) && deterministic;
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

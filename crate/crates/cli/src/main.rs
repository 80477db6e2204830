use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dosmlab::config::{format_significant, list_experiments, lookup, read_measure, RunConfig};
use dosmlab::measures::bl_distance;
use dosmlab::runner::{execute, write_report};
use dosmlab::Error;

#[derive(Parser)]
#[command(name = "dosmlab", version, about = "Density-of-states experiments for random lattice Schrödinger operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunOpts {
    /// master seed; overrides the config's `seed`
    #[arg(long)]
    seed: Option<u64>,
    /// worker threads (results do not depend on this)
    #[arg(long)]
    threads: Option<usize>,
    /// report directory; overrides the config's `output`
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config
    Run {
        config: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// List experiments, their required keys and minimal configs
    List,
    /// Print the bounded-Lipschitz distance between two measures
    Metric { a: PathBuf, b: PathBuf },
    /// Print the minimal config of a listed experiment
    Example { name: String },
    /// Run the minimal config of a listed experiment
    Canned {
        name: String,
        #[command(flatten)]
        opts: RunOpts,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(command: Command) -> Result<u8, Error> {
    match command {
        Command::Run { config, opts } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| Error::from(e).context(format!("reading {}", config.display())))?;
            let parsed = RunConfig::parse(&text).map_err(|e| e.context(config.display().to_string()))?;
            run(&parsed, &opts)
        }
        Command::Canned { name, opts } => {
            let entry = lookup(&name).ok_or_else(|| Error::UnknownExperiment(name.clone()))?;
            run(&RunConfig::parse(entry.minimal)?, &opts)
        }
        Command::Example { name } => {
            let entry = lookup(&name).ok_or_else(|| Error::UnknownExperiment(name.clone()))?;
            println!("{}", entry.minimal);
            Ok(0)
        }
        Command::List => {
            print!("{}", list_experiments());
            Ok(0)
        }
        Command::Metric { a, b } => {
            let d = bl_distance(&read_measure(&a)?, &read_measure(&b)?)?;
            println!("{}", format_significant(d, 12));
            Ok(0)
        }
    }
}

fn run(config: &RunConfig, opts: &RunOpts) -> Result<u8, Error> {
    let seed = opts.seed.unwrap_or(config.seed);
    let dir = opts
        .out
        .clone()
        .or_else(|| config.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let report = match opts.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
            pool.install(|| execute(config, seed))?
        }
        None => execute(config, seed)?,
    };
    let written = write_report(&report, config, seed, Path::new(&dir))?;
    println!("{}: {:?}", report.kind, report.verdict);
    for (k, v) in &report.fits {
        println!("  {k} = {v}");
    }
    for note in &report.notes {
        println!("  note: {note}");
    }
    println!("  {}", written.json.display());
    println!("  {}", written.csv.display());
    Ok(report.verdict.exit_code())
}

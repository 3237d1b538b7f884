use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use sdsim_core::report::{compare_reports, read_report, run_scenario, write_outputs, RunError, METRICS_FILE};
use sdsim_core::{parse_scenario, LayerKind, Scenario};

/// Simulate hierarchical service directories from a scenario file.
#[derive(Parser)]
#[command(name = "sdsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario file and print a short summary.
    Validate { scenario: PathBuf },
    /// Run a scenario and write trace.txt, metrics.json and summary.csv.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario's workload seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Run once per seed, e.g. `1-8` or `3,5,9`, each into out/seed-N.
        #[arg(long, conflicts_with = "seed")]
        sweep: Option<String>,
        /// Override the scenario's adaptive switching setting.
        #[arg(long, num_args = 0..=1, default_missing_value = "true")]
        adaptive: Option<bool>,
    },
    /// Print headline metrics of two runs side by side.
    Compare { a: PathBuf, b: PathBuf },
}

enum Failure {
    Invalid(anyhow::Error),
    Internal(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Invalid(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { scenario } => validate(&scenario),
        Command::Run {
            scenario,
            out,
            seed,
            sweep,
            adaptive,
        } => run(&scenario, &out, seed, sweep.as_deref(), adaptive),
        Command::Compare { a, b } => compare(&a, &b),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Internal(e)) => {
            eprintln!("internal error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load(path: &Path) -> anyhow::Result<Scenario> {
    parse_scenario(path).with_context(|| format!("invalid scenario {}", path.display()))
}

fn validate(path: &Path) -> Result<(), Failure> {
    let s = load(path)?;
    let counts = s.topology.layer_counts();
    let count = |l| counts.get(&l).copied().unwrap_or(0);
    let w = &s.file.workload;
    println!(
        "ok: {} nodes ({} TSD, {} NSD, {} LSD), {} registrations, {} deregistrations, {} lookups, {} generators",
        s.topology.len(),
        count(LayerKind::Tsd),
        count(LayerKind::Nsd),
        count(LayerKind::Lsd),
        w.registrations.len(),
        w.deregistrations.len(),
        w.lookups.len(),
        w.generators.len()
    );
    Ok(())
}

fn parse_seeds(spec: &str) -> anyhow::Result<Vec<u64>> {
    if let Some((a, b)) = spec.split_once('-') {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        if b < a {
            bail!("empty seed range {spec}");
        }
        return Ok((a..=b).collect());
    }
    spec.split(',')
        .map(|s| s.trim().parse().with_context(|| format!("bad seed {s:?}")))
        .collect()
}

fn run_one(s: &Scenario, out: &Path, adaptive: bool, seed: u64) -> Result<String, Failure> {
    let output = run_scenario(s, adaptive, seed).map_err(|e| match e {
        RunError::Sim(_) | RunError::Inconsistent(_) => Failure::Internal(e.into()),
        _ => Failure::Invalid(e.into()),
    })?;
    write_outputs(out, &output).map_err(|e| Failure::Invalid(e.into()))?;
    let r = &output.report;
    Ok(format!(
        "{}: seed {seed}, adaptive {adaptive}, {} lookups, {} served locally, {} requests reached a TSD, {} messages",
        out.display(),
        r.customer_lookups,
        r.served_locally,
        r.requests_to_tsd,
        r.total_sent()
    ))
}

fn run(path: &Path, out: &Path, seed: Option<u64>, sweep: Option<&str>, adaptive: Option<bool>) -> Result<(), Failure> {
    let s = load(path)?;
    let adaptive = adaptive.unwrap_or(s.file.run.adaptive);
    let Some(sweep) = sweep else {
        let line = run_one(&s, out, adaptive, seed.unwrap_or(s.file.params.seed))?;
        println!("{line}");
        return Ok(());
    };
    let seeds = parse_seeds(sweep)?;
    let results: Vec<Result<String, Failure>> = std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|seed| {
                let dir = out.join(format!("seed-{seed}"));
                let s = &s;
                scope.spawn(move || run_one(s, &dir, adaptive, *seed))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    for r in results {
        println!("{}", r?);
    }
    Ok(())
}

fn report_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(METRICS_FILE)
    } else {
        p.to_owned()
    }
}

fn compare(a: &Path, b: &Path) -> Result<(), Failure> {
    let ra = read_report(&report_path(a)).with_context(|| format!("reading {}", a.display()))?;
    let rb = read_report(&report_path(b)).with_context(|| format!("reading {}", b.display()))?;
    println!("{:<28} {:>12} {:>12} {:>10}", "metric", "a", "b", "b-a");
    for d in compare_reports(&ra, &rb) {
        println!("{:<28} {:>12} {:>12} {:>+10}", d.name, d.a, d.b, d.diff());
    }
    Ok(())
}

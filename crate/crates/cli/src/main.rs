//! `mibracket`: config-driven mutual-information bracket runs.
//!
//! Exit codes: 0 success, 2 usage, 3 config, 4 data, 5 training fault,
//! 6 validation failure.

mod config;
mod output;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use mi_bracket::data::{save_features, synth_generate, PairingPolicy, SyntheticFamily, SyntheticSpec};
use mi_bracket::fusion::TrainConfig;
use mi_bracket::ksg::{digamma, KsgConfig};
use mi_bracket::validation::{run_grid, GridSpec};
use serde::Serialize;

use config::RunConfig;

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Config(String),
    Data(String),
    Training(String),
    Validation(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Config(_) => 3,
            Failure::Data(_) => 4,
            Failure::Training(_) => 5,
            Failure::Validation(_) => 6,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Config(m) | Failure::Data(m) | Failure::Training(m) | Failure::Validation(m) => m,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "mibracket", version, about = "Bracketed mutual-information estimation between feature sets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_enum)]
    pairing: Option<Pairing>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Pairing {
    SameRows,
    Random,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Family {
    Gaussian,
    Uniform,
    Identity,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq)]
enum Fault {
    Digamma,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate every configured pair and write the report and tables.
    Estimate(RunArgs),
    /// Source/filter attribution tables only.
    Attribute(RunArgs),
    /// Write a synthetic pair with known mutual information.
    Synth {
        #[arg(long, value_enum, default_value = "gaussian")]
        family: Family,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        rho: f64,
        #[arg(long, default_value_t = 1)]
        dx: usize,
        #[arg(long, default_value_t = 1)]
        dy: usize,
        /// Coupled coordinate pairs; defaults to min(dx, dy).
        #[arg(long)]
        coupled: Option<usize>,
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "synth")]
        out: PathBuf,
    },
    /// Run the Gaussian-oracle acceptance grid.
    Validate {
        #[arg(long, default_value_t = 10)]
        seeds: usize,
        #[arg(long, default_value_t = 2000)]
        rows: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        k: Option<usize>,
        /// Override training epochs (smoke runs).
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        rho: Option<Vec<f64>>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, value_enum)]
        inject_fault: Option<Fault>,
    },
    /// Re-render the flat tables from saved reports.
    Report {
        /// One or more report.json files; each becomes a heatmap column.
        #[arg(long = "input", required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = "tables")]
        out: PathBuf,
    },
}

fn load_config(args: &RunArgs) -> Result<RunConfig, Failure> {
    let mut cfg = config::load(args.config.as_deref(), std::env::vars()).map_err(|e| Failure::Config(e.to_string()))?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    if let Some(p) = args.pairing {
        cfg.pairing = match p {
            Pairing::SameRows => PairingPolicy::SameRows,
            Pairing::Random => PairingPolicy::SeededRandom,
        };
    }
    cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
    Ok(cfg)
}

fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T, Failure> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Failure::Usage(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

#[derive(Serialize)]
struct Timing {
    wall_clock_seconds: f64,
}

fn estimate(args: &RunArgs, attribution_only: bool) -> Result<(), Failure> {
    let mut cfg = load_config(args)?;
    if attribution_only {
        if !cfg.attribution.configured() {
            return Err(Failure::Config("no [attribution] section: set source, filter and dimensions".into()));
        }
        cfg.pairs.clear();
        cfg.synthetic.clear();
    } else if cfg.pairs.is_empty() && cfg.synthetic.is_empty() {
        return Err(Failure::Config("nothing to estimate: configure [[pairs]] or [[synthetic]]".into()));
    }
    let started = Instant::now();
    let (report, meta) = with_workers(cfg.workers, || run::estimate(&cfg))??;
    run::self_consistency(&report)?;
    output::write_run(&args.out, &report, &meta)?;
    log::info!("wrote {}", args.out.display());
    output::write_json(
        &args.out.join(output::TIMING_FILE),
        &Timing { wall_clock_seconds: started.elapsed().as_secs_f64() },
    )?;
    for p in &report.pairs {
        let b = &p.bracket;
        println!(
            "{:<24} mine {:>8.4}  club {:>8.4}  delta {:>7.4}  ksg {:>8.4}  final {:>8.4}",
            p.name, b.mine, b.club, b.delta, b.ksg, b.final_estimate
        );
    }
    for a in &report.attribution {
        println!(
            "{:<24} source {:.3}  filter {:.3}  ci [{:.3}, {:.3}]",
            a.dimension, a.source_share, a.filter_share, a.ci_low, a.ci_high
        );
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

#[derive(Serialize)]
struct Truth<'a> {
    family: SyntheticFamily,
    rho: f64,
    dx: usize,
    dy: usize,
    coupled: usize,
    n: usize,
    seed: u64,
    /// A number, or the string "inf" for the deterministic map.
    true_mi: serde_json::Value,
    x: &'a str,
    y: &'a str,
}

fn synth(spec: SyntheticSpec, out: &Path) -> Result<(), Failure> {
    spec.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let pair = synth_generate(&spec).map_err(|e| Failure::Usage(e.to_string()))?;
    std::fs::create_dir_all(out).map_err(|e| Failure::Data(format!("{}: {e}", out.display())))?;
    let data = |e: mi_bracket::Error| Failure::Data(e.to_string());
    save_features(&pair.x, out.join("x.csv")).map_err(data)?;
    save_features(&pair.y, out.join("y.csv")).map_err(data)?;
    let true_mi = if pair.true_mi.is_finite() { serde_json::json!(pair.true_mi) } else { serde_json::json!("inf") };
    output::write_json(
        &out.join("truth.json"),
        &Truth {
            family: spec.family,
            rho: spec.rho,
            dx: spec.dx,
            dy: spec.dy,
            coupled: spec.coupled_pairs(),
            n: spec.n,
            seed: spec.seed,
            true_mi,
            x: "x.csv",
            y: "y.csv",
        },
    )?;
    println!("true_mi {}", if pair.true_mi.is_finite() { format!("{:.4}", pair.true_mi) } else { "inf".into() });
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn validate(
    seeds: usize,
    rows: usize,
    master_seed: u64,
    k: Option<usize>,
    epochs: Option<usize>,
    rhos: Option<Vec<f64>>,
    workers: Option<usize>,
    fault: Option<Fault>,
) -> Result<(), Failure> {
    let ksg = KsgConfig { k: k.unwrap_or(5), ..KsgConfig::default() };
    ksg.validate(rows).map_err(|e| Failure::Usage(e.to_string()))?;
    let mut spec = GridSpec { rows, seeds, master_seed, ..GridSpec::default() };
    if let Some(r) = rhos {
        if let Some(bad) = r.iter().find(|r| !(r.abs() < 1.0)) {
            return Err(Failure::Usage(format!("correlation {bad} is outside (-1, 1)")));
        }
        spec.rhos = r;
    }
    let train = TrainConfig { max_epochs: epochs.unwrap_or(100), ..TrainConfig::default() };
    if let Some(p) = train.problems().first() {
        return Err(Failure::Usage(p.clone()));
    }
    let faulty = |x: f64| digamma(x).map(|v| v + 0.1);
    let psi: &(dyn Fn(f64) -> mi_bracket::Result<f64> + Sync) =
        if fault == Some(Fault::Digamma) { &faulty } else { &digamma };
    let summary = with_workers(workers.unwrap_or(0), || {
        run_grid(&spec, &train, &ksg, &psi, |cell| {
            let margins: Vec<String> = cell
                .checks
                .iter()
                .map(|c| format!("{} {:.4} ({:+.4})", c.name, c.value, c.margin()))
                .collect();
            println!(
                "rho {:.2} seed {:>2} truth {:.4}: {}  {}",
                cell.rho,
                cell.seed,
                cell.truth,
                margins.join("  "),
                if cell.passed() { "ok" } else { "FAIL" }
            );
        })
    })?
    .map_err(|e| if e.is_training_fault() { Failure::Training(e.to_string()) } else { Failure::Data(e.to_string()) })?;
    for (rho, rate) in &summary.pass_rates {
        println!("rho {rho:.2}: pass rate {:.0}% (need {:.0}%)", rate * 100.0, summary.min_pass_rate * 100.0);
    }
    if summary.passed() {
        println!("all checks pass");
        Ok(())
    } else {
        let failures: Vec<String> = summary
            .failures()
            .map(|(cell, c)| {
                format!(
                    "rho {:.2} seed {} {}: {:.4} outside [{:.4}, {:.4}] (margin {:+.4})",
                    cell.rho,
                    cell.seed,
                    c.name,
                    c.value,
                    c.low,
                    c.high,
                    c.margin()
                )
            })
            .collect();
        Err(Failure::Validation(format!("{} failed checks:\n  {}", failures.len(), failures.join("\n  "))))
    }
}

fn report(inputs: &[PathBuf], out: &Path) -> Result<(), Failure> {
    let reports = inputs.iter().map(|p| output::read_report(p)).collect::<Result<Vec<_>, _>>()?;
    for r in &reports {
        run::self_consistency(r)?;
    }
    std::fs::create_dir_all(out).map_err(|e| Failure::Data(format!("{}: {e}", out.display())))?;
    output::write_tables(out, &reports)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Estimate(args) => estimate(&args, false),
        Command::Attribute(args) => estimate(&args, true),
        Command::Synth { family, rho, dx, dy, coupled, n, seed, out } => {
            let family = match family {
                Family::Gaussian => SyntheticFamily::CorrelatedGaussian,
                Family::Uniform => SyntheticFamily::IndependentUniform,
                Family::Identity => SyntheticFamily::DeterministicMap,
            };
            synth(SyntheticSpec { family, dx, dy, coupled, rho, n, seed }, &out)
        }
        Command::Validate { seeds, rows, seed, k, epochs, rho, workers, inject_fault } => {
            validate(seeds, rows, seed, k, epochs, rho, workers, inject_fault)
        }
        Command::Report { inputs, out } => report(&inputs, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

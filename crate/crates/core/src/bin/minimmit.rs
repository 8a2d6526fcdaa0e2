use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use minimmit::batch::{compare, run_seeds};
use minimmit::checker::{check_all, Report};
use minimmit::config::{ConfigError, Horizon, ScenarioConfig};
use minimmit::metrics::{MetricsOptions, MetricsReport, DEFAULT_WARMUP_VIEWS};
use minimmit::trace::Trace;
use minimmit::types::Progression;
use serde::Serialize;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "minimmit",
    version,
    about = "Simulate, check and measure Minimmit runs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario for one seed or a batch of seeds.
    Run(RunArgs),
    /// Compare 2f+1 and n-f view progression over the same seeds.
    Compare(CompareArgs),
    /// Check an existing trace file.
    Check(CheckArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    Mini,
    Large,
}

impl From<Variant> for Progression {
    fn from(v: Variant) -> Self {
        match v {
            Variant::Mini => Progression::Mini,
            Variant::Large => Progression::Large,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed; first seed of a batch.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of consecutive seeds to run.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    #[arg(long, value_enum)]
    variant: Option<Variant>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Run the trace checker and write verdicts.json.
    #[arg(long)]
    check: bool,
    #[arg(long)]
    gst: Option<f64>,
    /// `<N>v` for a view count or `<N>ms` for a duration.
    #[arg(long)]
    horizon: Option<Horizon>,
    #[arg(long, default_value_t = DEFAULT_WARMUP_VIEWS)]
    warmup: u64,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 100)]
    seeds: u64,
    /// First seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_WARMUP_VIEWS)]
    warmup: u64,
    /// Writes comparison.json here when given.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    trace: PathBuf,
    /// Writes verdicts.json here when given.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct RunSummary<'a> {
    name: &'a str,
    seed: u64,
    progression: Progression,
    n: u32,
    f: u32,
    events: usize,
    end_ms: f64,
    ended_by: minimmit::trace::EndReason,
    #[serde(skip_serializing_if = "Option::is_none")]
    all_pass: Option<bool>,
    metrics: &'a MetricsReport,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(file), value)?;
    Ok(())
}

fn write_outputs(
    dir: &Path,
    trace: &Trace,
    report: Option<&Report>,
    metrics: &MetricsReport,
) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    trace.write_jsonl(BufWriter::new(File::create(dir.join("trace.jsonl"))?))?;
    if let Some(report) = report {
        write_json(&dir.join("verdicts.json"), report)?;
    }
    metrics.write_csv(File::create(dir.join("metrics.csv"))?)?;
    let h = &trace.header;
    write_json(
        &dir.join("summary.json"),
        &RunSummary {
            name: &h.name,
            seed: h.seed,
            progression: h.progression,
            n: h.n,
            f: h.f,
            events: trace.events.len(),
            end_ms: h.end.as_ms(),
            ended_by: h.ended_by,
            all_pass: report.map(|r| r.all_pass),
            metrics,
        },
    )
}

fn print_report(report: &Report) {
    for v in &report.verdicts {
        match v.witness {
            Some(w) => println!("  {:<16} {} at event {w}: {}", v.check, v.status, v.detail),
            None => println!("  {:<16} {}: {}", v.check, v.status, v.detail),
        }
    }
}

/// Outcome of one seed: (all checks pass, finalized anything).
fn run_command(args: RunArgs) -> Result<bool> {
    let mut cfg = ScenarioConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(v) = args.variant {
        cfg.progression = v.into();
    }
    if let Some(gst) = args.gst {
        cfg.gst_ms = gst;
    }
    if let Some(h) = args.horizon {
        cfg.horizon = h;
    }
    let scenario = cfg.validate()?;
    let opts = MetricsOptions {
        warmup_views: args.warmup,
    };
    let first = scenario.seed;
    let batch = args.seeds > 1;
    let results = run_seeds(
        &scenario,
        first..first + args.seeds.max(1),
        |seed, trace| {
            let report = args.check.then(|| check_all(&trace));
            let metrics = MetricsReport::compute(&trace, opts);
            let dir = if batch {
                args.out.join(format!("seed-{seed}"))
            } else {
                args.out.clone()
            };
            let finalized = trace
                .events
                .iter()
                .any(|e| matches!(e.kind, minimmit::trace::EventKind::Finalize { .. }));
            let written = write_outputs(&dir, &trace, report.as_ref(), &metrics);
            (seed, report, metrics, finalized, written)
        },
    );

    let mut ok = true;
    for (seed, report, metrics, finalized, written) in results {
        written?;
        println!(
            "seed {seed} [{}]: {}",
            scenario.params.progression,
            metrics.summary_line()
        );
        if !finalized {
            eprintln!(
                "warning: seed {seed}: nothing finalized before the horizon; liveness inconclusive"
            );
        }
        if let Some(report) = report {
            print_report(&report);
            ok &= report.all_pass;
        }
    }
    Ok(ok)
}

fn compare_command(args: CompareArgs) -> Result<bool> {
    let cfg = ScenarioConfig::load(&args.config)?;
    let opts = MetricsOptions {
        warmup_views: args.warmup,
    };
    let c = compare(&cfg, args.seed..args.seed + args.seeds, opts)?;
    let fmt = |s: &Option<minimmit::metrics::Summary>| match s {
        Some(s) => format!(
            "{:.2}ms (σ={:.2}ms, p50={:.2}ms, p99={:.2}ms)",
            s.mean, s.stddev, s.p50, s.p99
        ),
        None => "n/a".into(),
    };
    println!("seeds: {}", c.seeds);
    println!("mini  view latency {}", fmt(&c.mini.view_latency));
    println!("large view latency {}", fmt(&c.large.view_latency));
    println!("mini  finalization {}", fmt(&c.mini.finalization_latency));
    println!("large finalization {}", fmt(&c.large.finalization_latency));
    match c.view_latency_reduction_pct {
        Some(r) => println!("view latency reduction: {r:.1}%"),
        None => println!("view latency reduction: n/a"),
    }
    if let Some(dir) = args.out {
        fs::create_dir_all(&dir)?;
        write_json(&dir.join("comparison.json"), &c)?;
    }
    Ok(true)
}

fn check_command(args: CheckArgs) -> Result<bool> {
    let file =
        File::open(&args.trace).with_context(|| format!("opening {}", args.trace.display()))?;
    let trace = Trace::read_jsonl(std::io::BufReader::new(file))?;
    let report = check_all(&trace);
    print_report(&report);
    if let Some(dir) = args.out {
        fs::create_dir_all(&dir)?;
        write_json(&dir.join("verdicts.json"), &report)?;
    }
    Ok(report.all_pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run_command(a),
        Command::Compare(a) => compare_command(a),
        Command::Check(a) => check_command(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: at least one check failed");
            ExitCode::from(1)
        }
        Err(e) => {
            match e.downcast_ref::<ConfigError>() {
                Some(c) => eprintln!("config error: {c}"),
                None => eprintln!("error: {e:#}"),
            }
            ExitCode::from(2)
        }
    }
}

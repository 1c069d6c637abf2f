use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use coalkit_core::{
    integrate, parse_length_spec, simulate, total_progeny_pmf, write_summary_csv,
    write_trajectory_csv, BGWSpec, CompoundPoissonSpec, Error, PmfVector, Result, SimOptions,
    StopRule,
};
use coalkit_cli::{run_experiment, ExperimentConfig};

#[derive(Parser)]
#[command(name = "coalkit", version, about = "Coalescent simulation and exact-law toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one coalescent trajectory and export its observables.
    Simulate(SimulateArgs),
    /// Tabulate tuple-length statistics of one event stream.
    TupleStats(TupleStatsArgs),
    /// Tabulate the exact total-progeny pmf.
    BgwPmf(BgwPmfArgs),
    /// Integrate the coagulation equations.
    Coag(CoagArgs),
    /// Run a Monte Carlo experiment and write its report.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    n: usize,
    /// Length-law spec: dirac:<d> | log:<a> | powerlaw:<alpha>[:<kmax>] | table:<path>.
    #[arg(long, default_value = "dirac:2")]
    p: String,
    /// Fixed time horizon (exclusive with --until-coalescence).
    #[arg(long, conflicts_with = "until_coalescence")]
    horizon: Option<f64>,
    /// Run until one block remains (capped at 10 n log n / m*).
    #[arg(long)]
    until_coalescence: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Keep trivial (all-equal) tuples in the event stream.
    #[arg(long)]
    keep_trivial: bool,
    /// Observables CSV destination (`-` for stdout).
    #[arg(long, default_value = "-")]
    out: String,
    /// Optional event-log CSV destination.
    #[arg(long)]
    events_out: Option<PathBuf>,
}

#[derive(Args)]
struct TupleStatsArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value = "dirac:2")]
    p: String,
    #[arg(long)]
    horizon: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "-")]
    out: String,
}

#[derive(Args)]
struct BgwPmfArgs {
    /// Number of ancestors.
    #[arg(long, default_value_t = 1)]
    u: u32,
    /// Compound Poisson rate.
    #[arg(long)]
    lambda: f64,
    /// Jump-law spec: dirac:<k> | sizebiased:<length spec>.
    #[arg(long)]
    jump: String,
    #[arg(long, default_value_t = 200)]
    kmax: usize,
    #[arg(long, default_value = "-")]
    out: String,
}

#[derive(Args)]
struct CoagArgs {
    #[arg(long, default_value = "dirac:2")]
    p: String,
    #[arg(long)]
    t_end: f64,
    #[arg(long, default_value_t = 300)]
    kmax: usize,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    /// Record every `stride`-th step.
    #[arg(long, default_value_t = 10)]
    stride: usize,
    /// Trajectory CSV destination.
    #[arg(long, default_value = "-")]
    out: String,
    /// Optional moment-summary CSV destination.
    #[arg(long)]
    summary_out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// threshold | blocksize | hydro | phase.
    name: String,
    /// Population size(s); repeat the flag for an n-sweep.
    #[arg(long, required = true)]
    n: Vec<usize>,
    #[arg(long, default_value = "dirac:2")]
    p: String,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    /// Threshold offset in t = (n/m*)(log n + a).
    #[arg(long)]
    a: Option<f64>,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = 30)]
    kmax: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    regime: Option<String>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value = "json")]
    format: String,
    #[arg(long, default_value = "-")]
    out: String,
}

fn resolve_seed(flag: Option<u64>) -> u64 {
    flag.or_else(|| {
        std::env::var("COALKIT_SEED")
            .ok()
            .and_then(|s| s.parse().ok())
    })
    .unwrap_or(0)
}

fn open_out(path: &str) -> Result<Box<dyn Write>> {
    if path == "-" {
        Ok(Box::new(BufWriter::new(std::io::stdout())))
    } else {
        Ok(Box::new(BufWriter::new(File::create(path)?)))
    }
}

fn provenance(w: &mut dyn Write, seed: Option<u64>, config: &str) -> Result<()> {
    write!(w, "# version={}", env!("CARGO_PKG_VERSION"))?;
    if let Some(s) = seed {
        write!(w, " seed={s}")?;
    }
    writeln!(w, " config={config}")?;
    Ok(())
}

fn parse_jump_spec(spec: &str) -> Result<PmfVector> {
    let bad = |why: &str| Error::BadSpec(spec.to_string(), why.to_string());
    match spec.split_once(':') {
        Some(("dirac", k)) => {
            let k: usize = k.parse().map_err(|_| bad("dirac needs an integer"))?;
            Ok(PmfVector::dirac(k))
        }
        Some(("sizebiased", rest)) => parse_length_spec(rest)?.size_biased(),
        _ => Err(bad("expected dirac:<k> or sizebiased:<length spec>")),
    }
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let p = parse_length_spec(&args.p)?;
    let seed = resolve_seed(args.seed);
    let stop = if args.until_coalescence {
        StopRule::UntilCoalescence { cap: None }
    } else {
        let h = args
            .horizon
            .ok_or_else(|| Error::Domain("need --horizon or --until-coalescence".into()))?;
        StopRule::Horizon(h)
    };
    let opts = SimOptions {
        skip_trivial: !args.keep_trivial,
        record_events: args.events_out.is_some(),
        record_series: true,
        ..Default::default()
    };
    let out = simulate(args.n, &p, stop, seed, &opts)?;
    let mut w = open_out(&args.out)?;
    provenance(
        &mut w,
        Some(seed),
        &format!("simulate n={} p={}", args.n, args.p),
    )?;
    if let Some(tc) = out.obs.t_coal {
        writeln!(w, "# t_coal={tc}")?;
    }
    if let Some(ts) = out.obs.t_singleton {
        writeln!(w, "# t_singleton={ts}")?;
    }
    out.obs.write_csv(&mut w)?;
    w.flush()?;
    if let Some(path) = &args.events_out {
        let mut ew = BufWriter::new(File::create(path)?);
        provenance(
            &mut ew,
            Some(seed),
            &format!("simulate n={} p={}", args.n, args.p),
        )?;
        out.log.write_csv(&mut ew)?;
        ew.flush()?;
    }
    Ok(())
}

fn cmd_tuple_stats(args: &TupleStatsArgs) -> Result<()> {
    let p = parse_length_spec(&args.p)?;
    let seed = resolve_seed(args.seed);
    let opts = SimOptions {
        record_events: true,
        ..Default::default()
    };
    let out = simulate(args.n, &p, StopRule::Horizon(args.horizon), seed, &opts)?;
    let mut by_len: std::collections::BTreeMap<usize, (u64, u64)> = Default::default();
    for ev in &out.log.events {
        let slot = by_len.entry(ev.tuple.len()).or_default();
        slot.0 += 1;
        slot.1 += ev.is_nontrivial() as u64;
    }
    let mut w = open_out(&args.out)?;
    provenance(
        &mut w,
        Some(seed),
        &format!("tuple-stats n={} p={} horizon={}", args.n, args.p, args.horizon),
    )?;
    writeln!(w, "length,count,nontrivial_count")?;
    for (len, (count, nontrivial)) in by_len {
        writeln!(w, "{len},{count},{nontrivial}")?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_bgw_pmf(args: &BgwPmfArgs) -> Result<()> {
    let jump = parse_jump_spec(&args.jump)?;
    let spec = BGWSpec::new(args.u, CompoundPoissonSpec::new(args.lambda, jump)?)?;
    let pmf = total_progeny_pmf(&spec, args.kmax)?;
    let mut w = open_out(&args.out)?;
    provenance(
        &mut w,
        None,
        &format!("bgw-pmf u={} lambda={} jump={}", args.u, args.lambda, args.jump),
    )?;
    pmf.write_csv(&mut w, args.lambda, &args.jump)?;
    w.flush()?;
    Ok(())
}

fn cmd_coag(args: &CoagArgs) -> Result<()> {
    let p = parse_length_spec(&args.p)?;
    let traj = integrate(&p, args.t_end, args.kmax, args.dt, args.stride)?;
    let config = format!(
        "coag p={} t_end={} kmax={} dt={}",
        args.p, args.t_end, args.kmax, args.dt
    );
    let mut w = open_out(&args.out)?;
    provenance(&mut w, None, &config)?;
    write_trajectory_csv(&traj, &mut w)?;
    w.flush()?;
    if let Some(path) = &args.summary_out {
        let mut sw = BufWriter::new(File::create(path)?);
        provenance(&mut sw, None, &config)?;
        write_summary_csv(&traj, &mut sw)?;
        sw.flush()?;
    }
    Ok(())
}

fn cmd_experiment(args: &ExperimentArgs) -> Result<()> {
    let cfg = ExperimentConfig {
        experiment: args.name.clone(),
        n: args.n.clone(),
        dist: args.p.clone(),
        t: args.t,
        theta: args.theta,
        a: args.a,
        reps: args.reps,
        k_max: args.kmax,
        seed: resolve_seed(args.seed),
        regime: args.regime.clone(),
        threads: args.threads,
    };
    let report = run_experiment(&cfg)?;
    let mut w = open_out(&args.out)?;
    match args.format.as_str() {
        "json" => report.write_json(&mut w)?,
        "csv" => report.write_csv(&mut w)?,
        other => {
            return Err(Error::Domain(format!(
                "unknown format `{other}`; use csv|json"
            )))
        }
    }
    w.flush()?;
    Ok(())
}

/// Config-shaped errors exit 2; runtime failures exit 1.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Domain(_) | Error::InvalidDistribution(_) | Error::BadSpec(_, _) => 2,
        Error::Unstable(_) | Error::NoConvergence(_) | Error::Io(_) => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::TupleStats(args) => cmd_tuple_stats(args),
        Command::BgwPmf(args) => cmd_bgw_pmf(args),
        Command::Coag(args) => cmd_coag(args),
        Command::Experiment(args) => cmd_experiment(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mwauction::model::{validate_instance, Instance, TypeVector, DEFAULT_ENUMERATION_CAP};
use mwauction::runtime::{execute_keyed, trace_line};
use mwauction::synthesis::{
    apply_scaling_fix, binary_search_revenue, synthesize, wrap_private_budgets, Mechanism, RoundLog, SearchStep,
    Synthesis, SynthesisConfig,
};
use mwauction::verify::{brute_force_opt, verify_mechanism, VerificationReport, VerifyMode};
use serde_json::json;

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Lib(#[from] mwauction::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
    #[error("no mechanism reaches target {target} (infeasibility declared {at})")]
    Infeasible { target: f64, at: String },
    #[error("{0} hard ex-post violations")]
    HardViolations(usize),
    #[error("verification failed: {0}")]
    Failed(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use mwauction::Error as E;
        match self {
            CliError::Lib(E::CapExceeded { .. }) => 5,
            CliError::Lib(E::SettingMismatch { .. }) => 6,
            CliError::Lib(
                E::InvalidInstance(_)
                | E::InvalidConfig(_)
                | E::Unsupported(_)
                | E::MalformedDocument(_)
                | E::VersionMismatch { .. }
                | E::InvalidTypes(_)
                | E::DimensionMismatch(_),
            )
            | CliError::Usage(_) => 2,
            CliError::Infeasible { .. } => 3,
            CliError::HardViolations(_) => 4,
            CliError::Lib(_) | CliError::Io { .. } | CliError::Failed(_) => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Synthesize, verify and run approximately revenue-optimal BIC auctions.
#[derive(Parser)]
#[command(name = "mwauction", version)]
struct Cli {
    /// Worker threads for the parallel scenario solves (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a mechanism, by revenue search or at a fixed target.
    Synthesize(SynthArgs),
    /// Check a mechanism: ex-post feasibility, BIC, revenue.
    Verify(VerifyArgs),
    /// Exact optimum of a tiny instance by linear programming over all actions.
    Bruteforce(BruteArgs),
    /// Run a mechanism on reported types and print JSON-lines traces.
    Execute(ExecuteArgs),
    /// Time search and verification on an instance.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SynthOpts {
    #[arg(long)]
    instance: PathBuf,
    /// Additive BIC and revenue slack [default: 0.15 L].
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// Scenario samples per round.
    #[arg(long)]
    samples: Option<u64>,
    /// Round cap.
    #[arg(long)]
    rounds: Option<usize>,
    /// Use the whole prior every round instead of sampling.
    #[arg(long)]
    exact: bool,
    /// JSON file with further synthesis settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    opts: SynthOpts,
    /// Synthesize at this target instead of searching.
    #[arg(long)]
    target_revenue: Option<f64>,
    /// Mechanism file to write.
    #[arg(long)]
    out: PathBuf,
    /// Round log CSV [default: next to --out, extension .log.csv].
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Exact,
    Mc,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    mechanism: PathBuf,
    /// Must match the instance embedded in the mechanism.
    #[arg(long)]
    instance: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "exact")]
    mode: Mode,
    /// Monte Carlo draws (at least 1000).
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also compare revenue against the brute-force optimum.
    #[arg(long)]
    bruteforce: bool,
    /// Report path stem; writes `<out>.json` and `<out>.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BruteArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Optimal action distribution per report vector, as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExecuteArgs {
    #[arg(long)]
    mechanism: PathBuf,
    /// Run against this instance; its setting must match the mechanism's.
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Reported types, one label or index per buyer, comma separated.
    /// Repeatable; defaults to every type vector in the prior's support.
    #[arg(long = "types")]
    types: Vec<String>,
    /// Executions per type vector.
    #[arg(long, default_value_t = 1)]
    repeat: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the traces here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    opts: SynthOpts,
    /// Repetitions, with seeds `seed..seed + runs`.
    #[arg(long, default_value_t = 1)]
    runs: u64,
    /// Report path stem; writes `<out>.json` and `<out>.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

fn load_instance(path: &Path) -> Result<Instance> {
    let inst = Instance::from_json(&read(path)?)?;
    let problems = validate_instance(&inst);
    if !problems.is_empty() {
        return Err(mwauction::Error::InvalidInstance(problems).into());
    }
    Ok(inst)
}

fn load_mechanism(path: &Path) -> Result<Mechanism> {
    Ok(Mechanism::from_json(&read(path)?)?)
}

fn with_suffix(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(ext);
    PathBuf::from(s)
}

fn config(opts: &SynthOpts, inst: &Instance) -> Result<SynthesisConfig> {
    let mut cfg = match &opts.config {
        Some(p) => serde_json::from_str(&read(p)?)
            .map_err(|e| mwauction::Error::InvalidConfig(format!("{}: {e}", p.display())))?,
        None => SynthesisConfig::with_epsilon(0.15 * inst.scale),
    };
    if let Some(e) = opts.epsilon {
        cfg.epsilon = e;
    }
    cfg.delta = opts.delta.or(cfg.delta);
    cfg.samples = opts.samples.or(cfg.samples);
    cfg.rounds = opts.rounds.or(cfg.rounds);
    cfg.exact |= opts.exact;
    cfg.seed = opts.seed;
    Ok(cfg)
}

fn log_csv(log: &[RoundLog]) -> String {
    let mut out = String::from("round,max_violation,c_value,mean_violation\n");
    for r in log {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.round, r.max_violation, r.c_value, r.mean_violation
        ));
    }
    out
}

fn cmd_synthesize(a: &SynthArgs) -> Result<()> {
    let inst = load_instance(&a.opts.instance)?;
    let cfg = config(&a.opts, &inst)?;
    let (mech, log, steps): (Mechanism, Vec<RoundLog>, Vec<SearchStep>) = match a.target_revenue {
        None => {
            let r = binary_search_revenue(&inst, &cfg)?;
            (r.mechanism, r.log, r.steps)
        }
        Some(target) => match synthesize(&inst, &cfg, target)? {
            Synthesis::Feasible { mechanism, log } => {
                let params = cfg.resolve(&inst)?;
                let mut mech = *mechanism;
                if inst.has_private_budgets() {
                    mech = wrap_private_budgets(mech, params.giveaway)?;
                }
                if inst.inequality_mode {
                    mech = apply_scaling_fix(mech, None)?;
                }
                (mech, log, Vec::new())
            }
            Synthesis::InfeasibleAt { target, round, log } => {
                let log_path = a.log.clone().unwrap_or_else(|| a.out.with_extension("log.csv"));
                write(&log_path, &log_csv(&log))?;
                let at = round.map_or("after the round cap".into(), |r| format!("at round {r}"));
                return Err(CliError::Infeasible { target, at });
            }
        },
    };
    write(&a.out, &mech.to_json())?;
    let log_path = a.log.clone().unwrap_or_else(|| a.out.with_extension("log.csv"));
    write(&log_path, &log_csv(&log))?;
    let summary = json!({
        "mechanism": a.out,
        "log": log_path,
        "target_revenue": mech.target_revenue,
        "snapshots": mech.num_snapshots(),
        "epsilon": mech.params.epsilon,
        "delta": mech.params.delta,
        "samples": mech.params.samples,
        "search": steps,
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&summary).expect("summary serializes")
    );
    Ok(())
}

fn write_report(rep: &VerificationReport, out: Option<&Path>) -> Result<()> {
    match out {
        Some(stem) => {
            write(&with_suffix(stem, ".json"), &rep.to_json())?;
            write(&with_suffix(stem, ".csv"), &rep.to_csv())?;
        }
        None => println!("{}", rep.to_json()),
    }
    Ok(())
}

fn check_instance(mech: &Mechanism, path: Option<&Path>) -> Result<()> {
    if let Some(p) = path {
        let inst = load_instance(p)?;
        mwauction::runtime::check_setting(mech, inst.setting)?;
        if inst != mech.instance {
            return Err(CliError::Usage(format!(
                "{} differs from the instance the mechanism was built for",
                p.display()
            )));
        }
    }
    Ok(())
}

fn cmd_verify(a: &VerifyArgs) -> Result<()> {
    let mech = load_mechanism(&a.mechanism)?;
    check_instance(&mech, a.instance.as_deref())?;
    let mode = match a.mode {
        Mode::Exact => VerifyMode::Exact,
        Mode::Mc if a.samples < 1000 => {
            return Err(CliError::Usage(format!(
                "--samples {} below the minimum of 1000",
                a.samples
            )))
        }
        Mode::Mc => VerifyMode::MonteCarlo {
            samples: a.samples,
            seed: a.seed,
        },
    };
    let opt = if a.bruteforce {
        Some(brute_force_opt(&mech.instance)?.opt)
    } else {
        None
    };
    let rep = verify_mechanism(&mech, mode, opt)?;
    write_report(&rep, a.out.as_deref())?;
    eprintln!("{}", if rep.pass { "PASS" } else { "FAIL" });
    if rep.hard_violations() > 0 {
        return Err(CliError::HardViolations(rep.hard_violations()));
    }
    if !rep.pass {
        return Err(CliError::Failed(format!(
            "BIC {} against epsilon {}, objective {}",
            rep.max_bic_violation, rep.epsilon, rep.objective
        )));
    }
    Ok(())
}

fn cmd_bruteforce(a: &BruteArgs) -> Result<()> {
    let inst = load_instance(&a.instance)?;
    let bf = brute_force_opt(&inst)?;
    println!("{}", bf.opt);
    if let Some(out) = &a.out {
        write(out, &serde_json::to_string_pretty(&bf).expect("plan serializes"))?;
    }
    Ok(())
}

fn cmd_execute(a: &ExecuteArgs) -> Result<()> {
    let mech = load_mechanism(&a.mechanism)?;
    let inst = match &a.instance {
        Some(p) => {
            let inst = load_instance(p)?;
            mwauction::runtime::check_setting(&mech, inst.setting)?;
            inst
        }
        None => mech.instance.clone(),
    };
    let vectors: Vec<TypeVector> = if a.types.is_empty() {
        inst.prior
            .enumerate(&inst.type_counts(), DEFAULT_ENUMERATION_CAP)?
            .into_iter()
            .map(|(t, _)| t)
            .collect()
    } else {
        a.types
            .iter()
            .map(|s| inst.parse_types(s))
            .collect::<mwauction::Result<_>>()?
    };
    let mut out = String::new();
    let mut id = 0;
    for t in &vectors {
        for _ in 0..a.repeat {
            let tr = execute_keyed(&mech, t, a.seed, id)?;
            id += 1;
            out.push_str(&trace_line(&tr));
            out.push('\n');
        }
    }
    match &a.out {
        Some(p) => write(p, &out),
        None => {
            print!("{out}");
            Ok(())
        }
    }
}

fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let inst = load_instance(&a.opts.instance)?;
    let opt = if inst.inequality_mode {
        None
    } else {
        Some(brute_force_opt(&inst)?.opt)
    };
    let mut rows = Vec::new();
    for run in 0..a.runs {
        let mut cfg = config(&a.opts, &inst)?;
        cfg.seed = a.opts.seed + run;
        let t0 = Instant::now();
        let found = binary_search_revenue(&inst, &cfg)?;
        let synth_secs = t0.elapsed().as_secs_f64();
        let t1 = Instant::now();
        let rep = verify_mechanism(&found.mechanism, VerifyMode::Exact, opt)?;
        let verify_secs = t1.elapsed().as_secs_f64();
        rows.push(json!({
            "seed": cfg.seed,
            "synthesis_seconds": synth_secs,
            "verify_seconds": verify_secs,
            "probes": found.steps.len(),
            "rounds": found.steps.iter().map(|s| s.rounds).sum::<usize>(),
            "snapshots": found.mechanism.num_snapshots(),
            "target_revenue": found.revenue,
            "objective": rep.objective,
            "brute_force_opt": opt,
            "max_bic_violation": rep.max_bic_violation,
            "epsilon": rep.epsilon,
            "hard_violations": rep.hard_violations(),
            "pass": rep.pass,
        }));
    }
    let keys = [
        "seed",
        "synthesis_seconds",
        "verify_seconds",
        "probes",
        "rounds",
        "snapshots",
        "target_revenue",
        "objective",
        "brute_force_opt",
        "max_bic_violation",
        "epsilon",
        "hard_violations",
        "pass",
    ];
    let mut csv = keys.join(",") + "\n";
    for r in &rows {
        let cells: Vec<String> = keys.iter().map(|k| r[k].to_string()).collect();
        csv.push_str(&cells.join(","));
        csv.push('\n');
    }
    match &a.out {
        Some(stem) => {
            write(
                &with_suffix(stem, ".json"),
                &serde_json::to_string_pretty(&rows).expect("rows serialize"),
            )?;
            write(&with_suffix(stem, ".csv"), &csv)?;
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    match &cli.command {
        Command::Synthesize(a) => cmd_synthesize(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Bruteforce(a) => cmd_bruteforce(a),
        Command::Execute(a) => cmd_execute(a),
        Command::Bench(a) => cmd_bench(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

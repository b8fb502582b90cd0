//! Reproducible experiment runner.
//!
//! Every command validates its configuration (exit code 1 on rejection),
//! runs the corresponding library pipeline (exit code 2 on runtime
//! failure), and emits a versioned record as canonical JSON — identical
//! inputs give byte-identical records. All randomness flows from the
//! `--seed` flag; environment variables are never consulted. Wall-clock
//! timing goes to stderr so records stay deterministic.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use affinv::arith::Prime;
use affinv::construct::{construct, majority_set, sample_signs, RetryPolicy, Strategy};
use affinv::coupling::{bound_sweep, coupling_exact, coupling_mc};
use affinv::defect::defect_profile;
use affinv::family::{derive_params, Family, Overrides};
use affinv::indicator::IndicatorSet;
use affinv::oracle::{best_symmetric_set, SearchSpace, SizePolicy};
use affinv::spectral::certificate;

use affinv_cli::{canon, plots};

#[derive(Parser)]
#[command(
    name = "affinv",
    version,
    about = "Construct, measure, and certify near-invariant subsets of prime fields"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Derive the window and box parameters for (p, K)
    Params(ParamsArgs),
    /// Build the affine family and scan its reduction for collisions
    Family(FamilyArgs),
    /// Construct an accepted majority set, retrying seeds as needed
    Construct(ConstructArgs),
    /// Measure the defect grid of a stored set
    Measure(MeasureArgs),
    /// Assemble the spectral certificate of a stored set
    Certificate(CertificateArgs),
    /// Coupling probabilities: exact point values, Monte Carlo, or a sweep
    Coupling(CouplingArgs),
    /// Exhaustive toy-scale search for the best near-invariant set
    Oracle(OracleArgs),
    /// Construct and measure across a list of primes and several seeds
    Sweep(SweepArgs),
}

#[derive(Args)]
struct ParamsArgs {
    #[arg(long)]
    p: u64,
    #[arg(long = "K")]
    k: u64,
    /// Replace the derived window radius T
    #[arg(long = "override-T")]
    override_t: Option<u64>,
    /// Replace the derived scale L
    #[arg(long = "override-L")]
    override_l: Option<f64>,
    /// Write the record here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FamilyArgs {
    #[arg(long)]
    p: u64,
    #[arg(long = "K")]
    k: u64,
    #[arg(long = "override-T")]
    override_t: Option<u64>,
    #[arg(long = "override-L")]
    override_l: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum CliStrategy {
    Naive,
    Windowed,
    Both,
}

impl CliStrategy {
    fn name(self) -> &'static str {
        match self {
            CliStrategy::Naive => "naive",
            CliStrategy::Windowed => "windowed",
            CliStrategy::Both => "both",
        }
    }
}

#[derive(Args)]
struct ConstructArgs {
    #[arg(long)]
    p: u64,
    #[arg(long = "K")]
    k: u64,
    /// Base seed; retries advance from it deterministically
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "override-T")]
    override_t: Option<u64>,
    #[arg(long = "override-L")]
    override_l: Option<f64>,
    /// Give up after this many sign samples
    #[arg(long = "max-attempts", default_value_t = 8192)]
    max_attempts: u32,
    /// Accept densities within 1/2 ± this window
    #[arg(long = "density-window", default_value_t = 0.05)]
    density_window: f64,
    /// Reject families whose reduction collides instead of proceeding
    #[arg(long = "strict-collisions")]
    strict_collisions: bool,
    /// Evaluation engine; `both` cross-checks the accepted seed
    #[arg(long, value_enum, default_value_t = CliStrategy::Windowed)]
    strategy: CliStrategy,
    /// Save the accepted set as a bitset blob
    #[arg(long = "set-out")]
    set_out: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MeasureArgs {
    /// Bitset blob of the set to measure
    #[arg(long)]
    set: PathBuf,
    #[arg(long = "K")]
    k: u64,
    /// Also write the defect grid as CSV
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CertificateArgs {
    /// Bitset blob of the set to certify
    #[arg(long)]
    set: PathBuf,
    #[arg(long = "K")]
    k: u64,
    /// Also write the per-prime diagnostics as CSV
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Write gnuplot data files into this directory
    #[arg(long = "plot-dir")]
    plot_dir: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CouplingArgs {
    /// Vote count (odd) for a point evaluation
    #[arg(long)]
    n: Option<u64>,
    /// Symmetric-difference size (even) for a point evaluation
    #[arg(long)]
    d: Option<u64>,
    /// Add a Monte Carlo estimate with this many trials
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run the exact sweep over odd n up to this bound instead
    #[arg(long = "n-max")]
    n_max: Option<u64>,
    /// Write sweep rows as CSV
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long = "plot-dir")]
    plot_dir: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    p: u64,
    #[arg(long = "K")]
    k: u64,
    /// Require exactly this cardinality (default: balanced ⌊p/2⌋ or ⌈p/2⌉)
    #[arg(long)]
    size: Option<u64>,
    /// Allow any cardinality
    #[arg(long = "any-size")]
    any_size: bool,
    /// Search all sets, not only symmetric ones
    #[arg(long = "all-sets")]
    all_sets: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Comma-separated primes, e.g. 10007,100003,1000003
    #[arg(long = "p-list")]
    p_list: String,
    #[arg(long = "K")]
    k: u64,
    /// Number of constructions per prime
    #[arg(long, default_value_t = 5)]
    seeds: u32,
    /// Base seed offset; entry i uses seed + i·2³² so retry ranges of
    /// different entries never overlap
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "max-attempts", default_value_t = 8192)]
    max_attempts: u32,
    #[arg(long = "density-window", default_value_t = 0.05)]
    density_window: f64,
    /// One CSV row per (p, seed, a, b) grid cell
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long = "plot-dir")]
    plot_dir: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum CliError {
    Config(String),
    Runtime(String),
}

impl From<affinv::Error> for CliError {
    fn from(e: affinv::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                std::process::exit(0);
            }
            eprint!("{e}");
            std::process::exit(1);
        }
    };
    let start = Instant::now();
    let code = match run(cli.command) {
        Ok(()) => 0,
        Err(CliError::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            1
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("runtime error: {msg}");
            2
        }
    };
    eprintln!("wall time: {:.3}s", start.elapsed().as_secs_f64());
    std::process::exit(code);
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Params(args) => run_params(args),
        Command::Family(args) => run_family(args),
        Command::Construct(args) => run_construct(args),
        Command::Measure(args) => run_measure(args),
        Command::Certificate(args) => run_certificate(args),
        Command::Coupling(args) => run_coupling(args),
        Command::Oracle(args) => run_oracle(args),
        Command::Sweep(args) => run_sweep(args),
    }
}

// ---- validation helpers ----

fn parse_prime(p: u64) -> Result<Prime, CliError> {
    Prime::new(p).map_err(|e| CliError::Config(e.to_string()))
}

fn check_k(k: u64, p: u64) -> Result<(), CliError> {
    if k == 0 || k >= p {
        return Err(CliError::Config(format!(
            "K = {k} must lie in 1..p = {p}"
        )));
    }
    Ok(())
}

fn ensure_parent_writable(path: &Path) -> Result<(), CliError> {
    let parent = match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => dir.to_path_buf(),
        _ => PathBuf::from("."),
    };
    if !parent.is_dir() {
        return Err(CliError::Config(format!(
            "output directory {} does not exist",
            parent.display()
        )));
    }
    Ok(())
}

fn ensure_input_file(path: &Path) -> Result<(), CliError> {
    if !path.is_file() {
        return Err(CliError::Config(format!(
            "input file {} does not exist",
            path.display()
        )));
    }
    Ok(())
}

fn overrides(t: Option<u64>, l: Option<f64>) -> Overrides {
    Overrides { l, t }
}

fn to_value<T: serde::Serialize>(value: &T) -> Result<Value, CliError> {
    serde_json::to_value(value).map_err(|e| CliError::Runtime(e.to_string()))
}

// ---- record assembly ----

fn finish(
    command: &str,
    params: Value,
    outputs: Value,
    out: Option<&Path>,
    plot_dir: Option<&Path>,
) -> Result<(), CliError> {
    let record = json!({
        "schema_version": 1,
        "command": command,
        "params": params,
        "outputs": outputs,
        "provenance": {"tool_version": env!("CARGO_PKG_VERSION")},
    });
    let text = canon::to_canonical_string(&record);
    match out {
        Some(path) => {
            fs::write(path, &text).map_err(|e| CliError::Runtime(e.to_string()))?;
        }
        None => print!("{text}"),
    }
    if let Some(dir) = plot_dir {
        let files =
            plots::emit(&record, dir).map_err(|e| CliError::Runtime(e.to_string()))?;
        for name in files {
            eprintln!("plot data: {}", dir.join(name).display());
        }
    }
    Ok(())
}

fn write_csv_with<F>(path: &Path, write: F) -> Result<(), CliError>
where
    F: FnOnce(&mut Vec<u8>) -> affinv::Result<()>,
{
    let mut buffer = Vec::new();
    write(&mut buffer)?;
    fs::write(path, buffer).map_err(|e| CliError::Runtime(e.to_string()))
}

// ---- commands ----

fn run_params(args: ParamsArgs) -> Result<(), CliError> {
    let prime = parse_prime(args.p)?;
    check_k(args.k, args.p)?;
    if let Some(out) = &args.out {
        ensure_parent_writable(out)?;
    }
    let params = derive_params(prime, args.k, overrides(args.override_t, args.override_l))?;
    finish(
        "params",
        json!({
            "p": args.p,
            "k": args.k,
            "override_t": args.override_t,
            "override_l": args.override_l,
        }),
        to_value(&params)?,
        args.out.as_deref(),
        None,
    )
}

fn run_family(args: FamilyArgs) -> Result<(), CliError> {
    let prime = parse_prime(args.p)?;
    check_k(args.k, args.p)?;
    if let Some(out) = &args.out {
        ensure_parent_writable(out)?;
    }
    let params = derive_params(prime, args.k, overrides(args.override_t, args.override_l))?;
    let family = Family::new(&params)?;
    let report = family.check_reduction(None)?;
    finish(
        "family",
        json!({
            "p": args.p,
            "k": args.k,
            "override_t": args.override_t,
            "override_l": args.override_l,
        }),
        json!({
            "params": to_value(&params)?,
            "collisions": to_value(&report)?,
        }),
        args.out.as_deref(),
        None,
    )
}

fn run_construct(args: ConstructArgs) -> Result<(), CliError> {
    let prime = parse_prime(args.p)?;
    check_k(args.k, args.p)?;
    if args.density_window < 0.0 {
        return Err(CliError::Config(format!(
            "density window {} must be nonnegative",
            args.density_window
        )));
    }
    for path in [args.out.as_deref(), args.set_out.as_deref()].into_iter().flatten() {
        ensure_parent_writable(path)?;
    }

    let params = derive_params(prime, args.k, overrides(args.override_t, args.override_l))?;
    let family = Family::new(&params)?;
    let policy = RetryPolicy {
        max_attempts: args.max_attempts,
        density_window: args.density_window,
        strict_collisions: args.strict_collisions,
    };
    let result = construct(&family, args.seed, &policy)?;

    // The retry loop always evaluates with the windowed engine; when a
    // slower engine is requested, re-evaluate the accepted seed with it
    // and insist on bit-identical output.
    let cross_checked = if args.strategy != CliStrategy::Windowed {
        let signs = sample_signs(prime, result.seed);
        let again = majority_set(&family, &signs, Strategy::Naive)?;
        if &again != result.set() {
            return Err(CliError::Runtime(
                "naive and windowed evaluations disagree on the accepted seed".to_string(),
            ));
        }
        true
    } else {
        false
    };

    if let Some(path) = &args.set_out {
        result.set().save(path)?;
    }

    finish(
        "construct",
        json!({
            "p": args.p,
            "k": args.k,
            "seed": args.seed,
            "override_t": args.override_t,
            "override_l": args.override_l,
            "max_attempts": args.max_attempts,
            "density_window": args.density_window,
            "strict_collisions": args.strict_collisions,
            "strategy": args.strategy.name(),
        }),
        json!({
            "construction": to_value(&result)?,
            "strategy": args.strategy.name(),
            "cross_checked": cross_checked,
            "set_out": args.set_out.as_ref().map(|p| p.display().to_string()),
        }),
        args.out.as_deref(),
        None,
    )
}

fn run_measure(args: MeasureArgs) -> Result<(), CliError> {
    ensure_input_file(&args.set)?;
    for path in [args.out.as_deref(), args.csv.as_deref()].into_iter().flatten() {
        ensure_parent_writable(path)?;
    }
    let set = IndicatorSet::load(&args.set)?;
    check_k(args.k, set.modulus().get())?;
    let report = defect_profile(&set, args.k)?;
    if let Some(csv) = &args.csv {
        write_csv_with(csv, |buf| report.write_csv(buf))?;
    }
    finish(
        "measure",
        json!({
            "set": args.set.display().to_string(),
            "k": args.k,
        }),
        to_value(&report)?,
        args.out.as_deref(),
        None,
    )
}

fn run_certificate(args: CertificateArgs) -> Result<(), CliError> {
    ensure_input_file(&args.set)?;
    for path in [args.out.as_deref(), args.csv.as_deref()].into_iter().flatten() {
        ensure_parent_writable(path)?;
    }
    let set = IndicatorSet::load(&args.set)?;
    check_k(args.k, set.modulus().get())?;
    let report = certificate(&set, args.k)?;
    if let Some(csv) = &args.csv {
        write_csv_with(csv, |buf| report.write_csv(buf))?;
    }
    finish(
        "certificate",
        json!({
            "set": args.set.display().to_string(),
            "k": args.k,
        }),
        to_value(&report)?,
        args.out.as_deref(),
        args.plot_dir.as_deref(),
    )
}

fn run_coupling(args: CouplingArgs) -> Result<(), CliError> {
    for path in [args.out.as_deref(), args.csv.as_deref()].into_iter().flatten() {
        ensure_parent_writable(path)?;
    }
    if let Some(n_max) = args.n_max {
        if n_max < 3 {
            return Err(CliError::Config(format!(
                "sweep bound {n_max} must be at least 3"
            )));
        }
        let table = bound_sweep(n_max)?;
        if let Some(csv) = &args.csv {
            write_csv_with(csv, |buf| table.write_csv(buf))?;
        }
        return finish(
            "coupling",
            json!({"n_max": n_max}),
            json!({"sweep": to_value(&table)?}),
            args.out.as_deref(),
            args.plot_dir.as_deref(),
        );
    }

    let (Some(n), Some(d)) = (args.n, args.d) else {
        return Err(CliError::Config(
            "provide --n and --d for a point evaluation, or --n-max for a sweep".to_string(),
        ));
    };
    let exact = coupling_exact(n, d).map_err(|e| match e {
        affinv::Error::BadParity { .. } => CliError::Config(e.to_string()),
        other => CliError::Runtime(other.to_string()),
    })?;
    let mc = match args.trials {
        Some(trials) => Some(to_value(&coupling_mc(n, d, trials, args.seed)?)?),
        None => None,
    };
    finish(
        "coupling",
        json!({"n": n, "d": d, "trials": args.trials, "seed": args.seed}),
        json!({"n": n, "d": d, "exact": exact, "monte_carlo": mc}),
        args.out.as_deref(),
        args.plot_dir.as_deref(),
    )
}

fn run_oracle(args: OracleArgs) -> Result<(), CliError> {
    let prime = parse_prime(args.p)?;
    if args.size.is_some() && args.any_size {
        return Err(CliError::Config(
            "--size and --any-size are mutually exclusive".to_string(),
        ));
    }
    if let Some(out) = &args.out {
        ensure_parent_writable(out)?;
    }
    let policy = match (args.size, args.any_size) {
        (Some(size), _) => SizePolicy::Exact(size),
        (None, true) => SizePolicy::Any,
        (None, false) => SizePolicy::Balanced,
    };
    let space = if args.all_sets {
        SearchSpace::All
    } else {
        SearchSpace::Symmetric
    };
    let outcome = best_symmetric_set(prime, args.k, policy, space)?;
    finish(
        "oracle",
        json!({
            "p": args.p,
            "k": args.k,
            "size": args.size,
            "any_size": args.any_size,
            "all_sets": args.all_sets,
        }),
        to_value(&outcome)?,
        args.out.as_deref(),
        None,
    )
}

fn run_sweep(args: SweepArgs) -> Result<(), CliError> {
    let mut primes = Vec::new();
    for token in args.p_list.split(',') {
        let token = token.trim();
        if token.is_empty() {
            continue;
        }
        let p: u64 = token
            .parse()
            .map_err(|_| CliError::Config(format!("bad prime in --p-list: {token:?}")))?;
        primes.push(parse_prime(p)?);
    }
    if primes.is_empty() {
        return Err(CliError::Config("--p-list names no primes".to_string()));
    }
    for prime in &primes {
        check_k(args.k, prime.get())?;
    }
    for path in [args.out.as_deref(), args.csv.as_deref()].into_iter().flatten() {
        ensure_parent_writable(path)?;
    }

    let policy = RetryPolicy {
        max_attempts: args.max_attempts,
        density_window: args.density_window,
        strict_collisions: false,
    };
    let mut csv = Vec::new();
    csv.extend_from_slice(b"p,seed,a,b,count,defect\n");
    let mut runs = Vec::new();
    for prime in &primes {
        let params = derive_params(*prime, args.k, Overrides::default())?;
        let family = Family::new(&params)?;
        for i in 0..args.seeds {
            let base = args.seed.wrapping_add((i as u64) << 32);
            let result = construct(&family, base, &policy)?;
            let profile = defect_profile(result.set(), args.k)?;
            for entry in &profile.grid {
                let line = format!(
                    "{},{},{},{},{},{}\n",
                    prime.get(),
                    base,
                    entry.a,
                    entry.b,
                    entry.count,
                    canon::format_float(entry.defect)
                );
                csv.extend_from_slice(line.as_bytes());
            }
            runs.push(json!({
                "p": prime.get(),
                "seed": base,
                "accepted_seed": result.seed,
                "attempts": result.attempts,
                "cardinality": result.cardinality,
                "density": result.density,
                "max_defect": profile.max_defect,
                "max_at": [profile.max_at.0, profile.max_at.1],
            }));
            eprintln!(
                "p={} seed={} accepted after {} attempts (density {:.4})",
                prime.get(),
                base,
                result.attempts,
                result.density
            );
        }
    }
    if let Some(path) = &args.csv {
        fs::write(path, &csv).map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    finish(
        "sweep",
        json!({
            "p_list": primes.iter().map(|p| p.get()).collect::<Vec<_>>(),
            "k": args.k,
            "seeds": args.seeds,
            "seed": args.seed,
            "max_attempts": args.max_attempts,
            "density_window": args.density_window,
        }),
        json!({"runs": runs}),
        args.out.as_deref(),
        args.plot_dir.as_deref(),
    )
}

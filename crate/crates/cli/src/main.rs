use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use doa_core::array_model::electrical_to_physical;
use doa_core::audit::{audit_report, AuditOptions};
use doa_core::bench::{builtin_scenario, builtin_scenarios, run_sweep, to_csv, SweepSpec};
use doa_core::{estimate, synthesize, EstimateReport, EstimatorOptions, Method, Scenario, Snapshot, Status};

mod plot;

#[derive(Parser)]
#[command(name = "doa", version, about = "Gridless single-snapshot DOA estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate DOAs from a snapshot file.
    Estimate(EstimateArgs),
    /// Run a Monte Carlo sweep and write CSV.
    Bench(BenchArgs),
    /// Synthesize a snapshot.
    Synth(SynthArgs),
    /// Re-verify the optimality certificate of an l1 estimate.
    Audit(AuditArgs),
}

#[derive(Args)]
struct EstimateArgs {
    /// Snapshot JSON; `-` reads standard input.
    #[arg(long, default_value = "-")]
    input: String,
    /// Report JSON; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "classo")]
    method: Method,
    #[arg(long, default_value_t = 1)]
    n: usize,
    /// Equilevel contraction (classo_h only; default 0.8).
    #[arg(long)]
    mu: Option<f64>,
    /// Grid points (sps only; default 1024).
    #[arg(long)]
    grid_size: Option<usize>,
    #[arg(long)]
    report_lambda_factor: Option<f64>,
    /// Print a summary in physical degrees on standard error.
    #[arg(long)]
    degrees_physical: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// Builtin scenario name (fig1, fig2, fig3).
    #[arg(long, conflicts_with = "spec")]
    scenario: Option<String>,
    /// Sweep spec JSON file.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// CSV output; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// SVG plot of MSE (dB) against the sweep axis.
    #[arg(long)]
    plot: Option<PathBuf>,
    /// Fill the wall time column (makes the CSV machine dependent).
    #[arg(long)]
    timing: bool,
    /// Comma-separated estimator override.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 15)]
    m: usize,
    /// Electrical angles in radians, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    doas: Vec<f64>,
    /// Complex amplitude `re,im` per source; repeat the flag. Defaults to 1.
    #[arg(long = "amp", allow_hyphen_values = true)]
    amps: Vec<String>,
    /// SNR in dB relative to the first source; noiseless when omitted.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "noise_std")]
    snr: Option<f64>,
    #[arg(long)]
    noise_std: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AuditArgs {
    /// Estimate report JSON.
    #[arg(long)]
    report: PathBuf,
    /// Snapshot JSON the report was computed from.
    #[arg(long)]
    input: String,
}

/// Snapshot on disk, optionally carrying the scenario that generated it.
#[derive(Serialize, Deserialize)]
struct SnapshotFile {
    #[serde(flatten)]
    snapshot: Snapshot,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scenario: Option<Scenario>,
}

fn read_input(path: &str) -> Result<String> {
    if path == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s)?;
        Ok(s)
    } else {
        std::fs::read_to_string(path).with_context(|| format!("reading {path}"))
    }
}

fn read_snapshot(path: &str) -> Result<Snapshot> {
    let text = read_input(path)?;
    let file: SnapshotFile =
        serde_json::from_str(&text).with_context(|| format!("parsing snapshot {path}"))?;
    file.snapshot.validate()?;
    Ok(file.snapshot)
}

/// Writes through a temporary file in the target directory and renames it
/// into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, bytes),
        None => {
            std::io::stdout().write_all(bytes)?;
            Ok(())
        }
    }
}

fn parse_complex(s: &str) -> Result<Complex64> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [re] => Ok(Complex64::new(re.parse()?, 0.0)),
        [re, im] => Ok(Complex64::new(re.parse()?, im.parse()?)),
        _ => bail!("amplitude '{s}' is not of the form re,im"),
    }
}

fn cmd_estimate(args: EstimateArgs) -> Result<ExitCode> {
    if args.mu.is_some() && args.method != Method::ClassoH {
        bail!("--mu only applies to classo_h");
    }
    if args.grid_size.is_some() && args.method != Method::Sps {
        bail!("--grid-size only applies to sps");
    }
    let x = read_snapshot(&args.input)?;
    let model = doa_core::SteeringModel::new(x.m)?;
    let mut opts = EstimatorOptions::with_order(args.n);
    if let Some(mu) = args.mu {
        opts.mu = mu;
    }
    if let Some(g) = args.grid_size {
        opts.grid_size = g;
    }
    if let Some(f) = args.report_lambda_factor {
        opts.report_lambda_factor = f;
    }
    let report = estimate(args.method, &model, &x, &opts)?;
    if args.degrees_physical {
        let deg: Vec<String> = report
            .doas
            .iter()
            .map(|&phi| format!("{:.4}", electrical_to_physical(phi).to_degrees()))
            .collect();
        eprintln!("{} [{:?}] physical degrees: [{}]", report.method, report.status, deg.join(", "));
    }
    let mut json = serde_json::to_vec_pretty(&report)?;
    json.push(b'\n');
    emit(args.out.as_deref(), &json)?;
    Ok(match report.status {
        Status::Converged => ExitCode::SUCCESS,
        Status::Undefined => ExitCode::from(2),
        Status::Failed => ExitCode::from(1),
    })
}

fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var("DOA_THREADS") {
        Ok(v) if !v.trim().is_empty() => {
            let n: usize = v.trim().parse().context("DOA_THREADS must be a positive integer")?;
            if n == 0 {
                bail!("DOA_THREADS must be a positive integer");
            }
            Ok(Some(n))
        }
        _ => Ok(None),
    }
}

fn cmd_bench(args: BenchArgs) -> Result<ExitCode> {
    let mut spec: SweepSpec = match (&args.scenario, &args.spec) {
        (Some(name), _) => builtin_scenario(name).with_context(|| {
            let names: Vec<String> = builtin_scenarios().into_iter().map(|s| s.name).collect();
            format!("unknown scenario '{name}' (available: {})", names.join(", "))
        })?,
        (None, Some(path)) => {
            let text = read_input(&path.to_string_lossy())?;
            serde_json::from_str(&text).context("parsing sweep spec")?
        }
        (None, None) => bail!("one of --scenario or --spec is required"),
    };
    if let Some(t) = args.trials {
        spec.trials = t;
    }
    if let Some(s) = args.seed {
        spec.master_seed = s;
    }
    if let Some(ms) = args.methods {
        spec.estimators = ms;
    }
    let rows = match threads_from_env()? {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()?
            .install(|| run_sweep(&spec))?,
        None => run_sweep(&spec)?,
    };
    let csv = to_csv(spec.axis, &rows, args.timing);
    if let Some(p) = &args.plot {
        write_atomic(p, plot::render_svg(&spec, &rows).as_bytes())?;
    }
    emit(args.out.as_deref(), csv.as_bytes())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_synth(args: SynthArgs) -> Result<ExitCode> {
    let amplitudes = if args.amps.is_empty() {
        vec![Complex64::new(1.0, 0.0); args.doas.len()]
    } else {
        args.amps.iter().map(|s| parse_complex(s)).collect::<Result<Vec<_>>>()?
    };
    let mut scenario = Scenario {
        m: args.m,
        doas: args.doas,
        amplitudes,
        noise_std: args.noise_std.unwrap_or(0.0),
        seed: args.seed,
    };
    if let Some(snr) = args.snr {
        let reference = scenario
            .amplitudes
            .first()
            .copied()
            .context("--snr needs at least one source")?;
        scenario.noise_std = Scenario::noise_std_for_snr(reference, snr);
    }
    let snapshot = synthesize(&scenario)?;
    let file = SnapshotFile {
        snapshot,
        scenario: Some(scenario),
    };
    let mut json = serde_json::to_vec_pretty(&file)?;
    json.push(b'\n');
    emit(args.out.as_deref(), &json)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_audit(args: AuditArgs) -> Result<ExitCode> {
    let text = std::fs::read_to_string(&args.report)
        .with_context(|| format!("reading {}", args.report.display()))?;
    let report: EstimateReport = serde_json::from_str(&text).context("parsing estimate report")?;
    let x = read_snapshot(&args.input)?;
    let model = doa_core::SteeringModel::new(x.m)?;
    let audit = audit_report(&model, &x, &report, &AuditOptions::default())?;
    println!("max_spectrum_excess {:e}", audit.max_spectrum_excess);
    println!("max_support_residual {:e}", audit.max_support_residual);
    println!("{}", if audit.passed { "PASS" } else { "FAIL" });
    Ok(if audit.passed { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Audit(a) => cmd_audit(a),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

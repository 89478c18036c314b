use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use orthoedit_core::bench::{self, BenchSpec};
use orthoedit_core::sweep::{parse_range, run_sweep, SweepParam, SWEEP_CSV_COLUMNS};
use orthoedit_core::trace::{
    gen_planted_trace, read_trace, replay_with, write_ground_truth, write_trace, PlantSpec,
};
use orthoedit_core::verify::{run_suite, Property, Suite};
use orthoedit_core::{EditConfig, Error, ReportFormat, ReportWriter, RunSummary};

const EXIT_PROPERTY_FAILURE: u8 = 1;
const EXIT_INVALID_INPUT: u8 = 2;
const EXIT_DIMENSION_MISMATCH: u8 = 3;

#[derive(Parser)]
#[command(name = "orthoedit", version, about = "Subspace-gated hidden-state editing toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a planted synthetic trace and its ground-truth sidecar.
    Gen {
        /// Plant spec (flat key = value file).
        #[arg(long)]
        spec: PathBuf,
        /// Trace output path; the sidecar goes to `<out>.gt`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay a trace through the editor and write per-token records.
    Run {
        #[arg(long)]
        trace: PathBuf,
        /// Edit config; defaults to the llava7b preset.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Report path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// csv or json-lines.
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// Run randomized property suites against the oracle.
    Verify {
        /// props, oracle or all.
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Corrupt every trial of the named property.
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
    /// Time the edit path and subspace estimation across state widths.
    Bench {
        /// Comma-separated, ascending.
        #[arg(long, value_delimiter = ',', default_value = "1024,2048,4096")]
        dims: Vec<usize>,
        #[arg(long, default_value_t = 8)]
        r: usize,
        #[arg(long, default_value_t = 5)]
        q: usize,
        /// States per timed batch.
        #[arg(long, default_value_t = 64)]
        tokens: usize,
        #[arg(long, default_value_t = 576)]
        n_v: usize,
        #[arg(long, default_value_t = 512)]
        n_t: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// csv or json-lines.
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// Replay a trace across a range of one hyperparameter.
    Sweep {
        /// r, q or kappa.
        #[arg(long)]
        param: String,
        /// `a:b`, `a:b:step`, `a,b,c` or a single value.
        #[arg(long)]
        range: String,
        #[arg(long)]
        trace: PathBuf,
        /// Base config; defaults to the llava7b preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Accept values outside the documented sweep bounds.
        #[arg(long)]
        allow_out_of_range: bool,
    },
}

/// Exit code and message.
struct Failure(u8, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_dimension_mismatch() {
            EXIT_DIMENSION_MISMATCH
        } else {
            EXIT_INVALID_INPUT
        };
        let msg = match &e {
            Error::Trace(t) => format!("{} (code {}): {t}", t.name(), t.code()),
            other => other.to_string(),
        };
        Failure(code, msg)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure(EXIT_INVALID_INPUT, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(EXIT_INVALID_INPUT, msg.into())
}

type CmdResult = Result<(), Failure>;

fn output(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn load_config(path: Option<&Path>) -> Result<EditConfig, Failure> {
    Ok(match path {
        Some(p) => EditConfig::from_path(p)?,
        None => EditConfig::llava7b(),
    })
}

fn cmd_gen(spec: &Path, out: &Path) -> CmdResult {
    let spec = PlantSpec::from_path(spec)?;
    let (trace, gt) = gen_planted_trace(&spec)?;
    let mut sidecar = out.as_os_str().to_owned();
    sidecar.push(".gt");
    write_trace(out, &trace).map_err(Error::from)?;
    write_ground_truth(&sidecar, &gt).map_err(Error::from)?;
    print!("{}", spec.to_toml_string());
    eprintln!(
        "wrote {} ({} bytes) and {}",
        out.display(),
        trace.header().file_len(),
        Path::new(&sidecar).display()
    );
    Ok(())
}

fn cmd_run(trace: &Path, config: Option<&Path>, out: Option<&Path>, format: &str) -> CmdResult {
    let format: ReportFormat = format.parse()?;
    let cfg = load_config(config)?;
    let trace = read_trace(trace).map_err(Error::from)?;
    let mut writer = ReportWriter::new(output(out)?, format)?;
    let mut records = Vec::with_capacity(trace.generated_count());
    replay_with(&trace, &cfg, |step| {
        writer.write(&step.record)?;
        records.push(step.record);
        Ok(())
    })?;
    writer.into_inner().flush()?;
    let summary = RunSummary::from_records(&records);
    eprintln!(
        "{}",
        serde_json::to_string(&summary).expect("summary serializes")
    );
    Ok(())
}

fn cmd_verify(suite: &str, trials: usize, seed: u64, fault: Option<&str>) -> CmdResult {
    let suite: Suite = suite.parse()?;
    if trials == 0 {
        return Err(invalid("--trials must be >= 1"));
    }
    let fault = fault.map(str::parse::<Property>).transpose()?;
    let reports = run_suite(suite, trials, seed, fault);
    let mut stdout = io::stdout().lock();
    for rep in &reports {
        writeln!(stdout, "{rep}")?;
    }
    let failed: Vec<&str> = reports
        .iter()
        .filter(|r| !r.passed())
        .map(|r| r.property.name())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure(
            EXIT_PROPERTY_FAILURE,
            format!("failed: {}", failed.join(", ")),
        ))
    }
}

fn cmd_bench(dims: &[usize], spec: BenchSpec, out: Option<&Path>, format: &str) -> CmdResult {
    let format: ReportFormat = format.parse()?;
    let rows = bench::run_scaling(dims, &spec)?;
    let mut w = output(out)?;
    match format {
        ReportFormat::Csv => {
            writeln!(w, "d,projection_micros,estimation_millis,projection_growth,flop_fraction")?;
            for r in &rows {
                let growth = r.projection_growth.map(|g| g.to_string()).unwrap_or_default();
                writeln!(
                    w,
                    "{},{},{},{growth},{}",
                    r.d, r.projection_micros, r.estimation_millis, r.flop_fraction
                )?;
            }
        }
        ReportFormat::JsonLines => {
            for r in &rows {
                writeln!(w, "{}", serde_json::to_string(r).expect("row serializes"))?;
            }
        }
    }
    w.flush()?;
    if rows.len() >= 2 {
        eprintln!(
            "log-log exponents: edit path {:.2}, estimation {:.2}",
            bench::projection_exponent(&rows),
            bench::estimation_exponent(&rows)
        );
    }
    Ok(())
}

fn cmd_sweep(
    param: &str,
    range: &str,
    trace: &Path,
    config: Option<&Path>,
    out: Option<&Path>,
    allow_out_of_range: bool,
) -> CmdResult {
    let param: SweepParam = param.parse()?;
    let values = parse_range(param, range, allow_out_of_range)?;
    let base = load_config(config)?;
    let trace = read_trace(trace).map_err(Error::from)?;
    let rows = run_sweep(&trace, &base, param, &values)?;
    let mut w = output(out)?;
    writeln!(w, "{}", SWEEP_CSV_COLUMNS.join(","))?;
    for row in &rows {
        writeln!(w, "{}", row.csv_line())?;
    }
    w.flush()?;
    Ok(())
}

fn dispatch(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Gen { spec, out } => cmd_gen(&spec, &out),
        Command::Run {
            trace,
            config,
            out,
            format,
        } => cmd_run(&trace, config.as_deref(), out.as_deref(), &format),
        Command::Verify {
            suite,
            trials,
            seed,
            inject_fault,
        } => cmd_verify(&suite, trials, seed, inject_fault.as_deref()),
        Command::Bench {
            dims,
            r,
            q,
            tokens,
            n_v,
            n_t,
            seed,
            out,
            format,
        } => {
            let spec = BenchSpec {
                r,
                q,
                n_v,
                n_t,
                tokens,
                seed,
                ..BenchSpec::default()
            };
            cmd_bench(&dims, spec, out.as_deref(), &format)
        }
        Command::Sweep {
            param,
            range,
            trace,
            config,
            out,
            allow_out_of_range,
        } => cmd_sweep(
            &param,
            &range,
            &trace,
            config.as_deref(),
            out.as_deref(),
            allow_out_of_range,
        ),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

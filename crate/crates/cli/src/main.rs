use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand, ValueEnum};
use dide_core::io::{write_resolvent, write_roots, write_trace};
use dide_core::spectral::DEFAULT_TOL;
use dide_core::{
    cross_validate, find_roots, load_spec, solve_direct_oracle, solve_mild, verify, CharacteristicFunction, Error,
    Rect, ResolventFamily, SystemSpec,
};

const VERIFY_BUDGET: Duration = Duration::from_secs(180);
const VERIFY_GAP: f64 = 1e-3;

#[derive(Parser)]
#[command(name = "dide", version, about = "Delay integro-differential systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the system and write the trace `t,x[..],y[..]` as CSV.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        step: f64,
        #[arg(long)]
        horizon: f64,
        #[arg(long, value_enum, default_value_t = MethodArg::Mild)]
        method: MethodArg,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Locate characteristic roots in a rectangle and write `re,im,abs_det,newton_iters`.
    Spectrum {
        #[arg(long)]
        spec: PathBuf,
        /// `re_min,re_max,im_min,im_max`
        #[arg(long, allow_hyphen_values = true)]
        region: String,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[arg(long, default_value_t = 32)]
        grid: usize,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate the resolvent family `R(t)` on `[0, T]`.
    Resolvent {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        step: f64,
        #[arg(long)]
        horizon: f64,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the acceptance criteria and property suites; optionally cross-check spec files.
    Verify {
        #[arg(long)]
        spec: Vec<PathBuf>,
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
        #[arg(long, default_value_t = 2.0)]
        horizon: f64,
    },
    /// Summarize a spec.
    Info {
        #[arg(long)]
        spec: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Mild,
    Direct,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
}

enum Failure {
    Usage(String),
    Spec(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Spec(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Failure::Usage(_) => "usage",
            Failure::Spec(_) => "spec",
            Failure::Numerical(_) => "numerical",
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Spec(m) | Failure::Numerical(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::SpecInvalid { .. } | Error::Json(_) | Error::InvalidMeasure(_) | Error::InsufficientHistory(_) => {
                Failure::Spec(msg)
            }
            Error::InvalidArgument(_) | Error::GridMismatch(_) => Failure::Usage(msg),
            _ => Failure::Numerical(msg),
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

fn spec_at(path: &Path) -> std::result::Result<SystemSpec, Failure> {
    load_spec(path).map_err(|e| match e {
        Error::Io(io) => Failure::Spec(format!("{}: {io}", path.display())),
        other => other.into(),
    })
}

fn positive(name: &str, v: f64) -> Outcome {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("--{name} must be positive, got {v}")))
    }
}

fn sink(out: &Option<PathBuf>) -> std::result::Result<Box<dyn Write>, Failure> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Simulate {
            spec,
            step,
            horizon,
            method,
            format: Format::Csv,
            out,
        } => {
            positive("step", step)?;
            positive("horizon", horizon)?;
            let spec = spec_at(&spec)?;
            let report = match method {
                MethodArg::Mild => solve_mild(&spec, step, horizon)?,
                MethodArg::Direct => solve_direct_oracle(&spec, step, horizon)?,
            };
            write_trace(&report, sink(&out)?)?;
        }
        Command::Spectrum {
            spec,
            region,
            tol,
            grid,
            format: Format::Csv,
            out,
        } => {
            let rect: Rect = region.parse().map_err(|e: Error| Failure::Usage(e.to_string()))?;
            let spec = spec_at(&spec)?;
            let cf = CharacteristicFunction::from_spec(&spec)?;
            let report = find_roots(&cf, rect, grid, tol)?;
            write_roots(&report, sink(&out)?)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            if !report.is_certified() {
                return Err(Failure::Numerical(format!(
                    "root count not certified: {}",
                    report.failures.join("; ")
                )));
            }
        }
        Command::Resolvent {
            spec,
            step,
            horizon,
            format: Format::Csv,
            out,
        } => {
            positive("step", step)?;
            positive("horizon", horizon)?;
            let spec = spec_at(&spec)?;
            let family = ResolventFamily::compute(&spec.state, &spec.kernel, step, horizon)?;
            write_resolvent(&family, sink(&out)?)?;
        }
        Command::Verify { spec, step, horizon } => verify_all(&spec, step, horizon)?,
        Command::Info { spec } => info(&spec_at(&spec)?)?,
    }
    Ok(())
}

fn verify_all(specs: &[PathBuf], step: f64, horizon: f64) -> Outcome {
    positive("step", step)?;
    positive("horizon", horizon)?;
    let start = Instant::now();
    let mut failed = 0;
    for check in verify::run_all() {
        failed += usize::from(!check.passed);
        row(
            check.id,
            check.passed,
            check.name,
            &check.detail,
            check.elapsed.as_secs_f64(),
        );
    }
    for path in specs {
        let t0 = Instant::now();
        let (passed, detail) = match spec_at(path).and_then(|s| Ok(cross_validate(&s, step, horizon)?)) {
            Ok(gap) => (gap <= VERIFY_GAP, format!("mild vs direct gap {gap:.2e}")),
            Err(f) => (false, f.message().to_string()),
        };
        failed += usize::from(!passed);
        row(
            "spec",
            passed,
            &path.display().to_string(),
            &detail,
            t0.elapsed().as_secs_f64(),
        );
    }
    let total = start.elapsed();
    row(
        "12",
        failed == 0 && total <= VERIFY_BUDGET,
        "end-to-end verification",
        &format!("{failed} failures, budget {}s", VERIFY_BUDGET.as_secs()),
        total.as_secs_f64(),
    );
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure::Numerical(format!("{failed} checks failed")))
    }
}

fn row(id: &str, passed: bool, name: &str, detail: &str, secs: f64) {
    println!(
        "{id:>4}  {}  {name:<38} {secs:>7.2}s  {detail}",
        if passed { "PASS" } else { "FAIL" }
    );
}

fn info(spec: &SystemSpec) -> Outcome {
    let r = spec.horizon();
    println!("state dimension d = {}", spec.state_dim);
    println!("input dimension m = {}", spec.input_dim);
    println!("output dimension q = {}", spec.output_dim);
    println!("delay horizon r = {r}");
    let measures = [
        ("L", Some(&spec.delay)),
        ("K", spec.input_delay.as_ref()),
        ("C", spec.output_state.as_ref()),
        ("D", spec.output_input.as_ref()),
    ];
    for (name, mu) in measures {
        match mu {
            None => println!("{name}: absent"),
            Some(mu) => {
                let atoms: Vec<String> = mu.atoms().iter().map(|a| a.theta.to_string()).collect();
                let pieces: Vec<String> = mu.density().iter().map(|p| format!("[{}, {}]", p.lo, p.hi)).collect();
                println!(
                    "{name}: {}x{}, atoms at [{}], density on {}, total variation {}",
                    mu.out_dim(),
                    mu.in_dim(),
                    atoms.join(", "),
                    if pieces.is_empty() {
                        "none".to_string()
                    } else {
                        pieces.join(" ")
                    },
                    mu.total_variation(r)?
                );
            }
        }
    }
    let cf = CharacteristicFunction::from_spec(spec)?;
    if cf.kernel_poles().is_empty() {
        println!("kernel: {} terms, no poles", spec.kernel.terms().len());
    } else {
        let poles: Vec<String> = cf
            .kernel_poles()
            .iter()
            .map(|(p, order)| format!("{p} (order {order})"))
            .collect();
        println!(
            "kernel: {} terms, poles {}",
            spec.kernel.terms().len(),
            poles.join(", ")
        );
    }
    println!("input: {}", if spec.input.is_some() { "given" } else { "zero" });
    println!("forcing: {}", if spec.forcing.is_some() { "given" } else { "zero" });
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error kind=usage message={}", quote(first));
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error kind={} message={}", f.kind(), quote(f.message()));
            ExitCode::from(f.code())
        }
    }
}

/// Single-line, double-quoted, with quotes and control characters escaped.
fn quote(s: &str) -> String {
    format!("{:?}", s.replace('\n', " "))
}

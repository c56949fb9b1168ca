//! `rd`: run the built-in degree checks, compute single operator degrees and
//! summarize reports.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use relatedness::certify::{operator_degree, CertifyOptions};
use relatedness::degree::DomainSpec;
use relatedness::operators::{build, OperatorName, OperatorParams};
use relatedness::problems::{builtin, catalog, load_problem, run, ProblemSpec, RunOptions, Suite};
use relatedness::report::{self, Format};

#[derive(Parser)]
#[command(name = "rd", version, about = "Degree checks for fixed-point representations of boundary value problems")]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true, env = "RD_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    All,
    Duality,
    Signs,
    Operators,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Suite {
        match s {
            SuiteArg::All => Suite::All,
            SuiteArg::Duality => Suite::Duality,
            SuiteArg::Signs => Suite::Signs,
            SuiteArg::Operators => Suite::Operators,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
    Svg,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Format {
        match f {
            FormatArg::Json => Format::Json,
            FormatArg::Csv => Format::Csv,
            FormatArg::Svg => Format::Svg,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// List the built-in problems.
    List,
    /// Run a suite on a built-in problem or a problem file.
    Run {
        /// Built-in id (P1..P7) or path to a problem JSON file.
        problem: String,
        #[arg(long, value_enum, default_value = "all")]
        suite: SuiteArg,
        /// Grid intervals (default: the problem's own grid).
        #[arg(long)]
        grid: Option<usize>,
        /// Single eta for the sign suite (default: the problem's list, usually 1 and -1).
        #[arg(long, allow_hyphen_values = true)]
        eta: Option<f64>,
        /// Sampling seed, decimal or 0x-prefixed hex.
        #[arg(long, default_value = "0x4B52", value_parser = parse_seed)]
        seed: u64,
        /// Directory for `<id>.json`; without it the report goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Degree of I - K for one catalog operator.
    Degree {
        problem: String,
        /// Operator name, e.g. K, K2, Keta, Kdir2, Kdelay.
        #[arg(long)]
        operator: String,
        /// `box:LO..HI[,LO..HI...]`, `ball:R` or a JSON domain
        /// (default: the problem's U2 box for finite operators, U1 ball otherwise).
        #[arg(long, allow_hyphen_values = true)]
        domain: Option<String>,
        /// Required by Keta.
        #[arg(long, allow_hyphen_values = true)]
        eta: Option<f64>,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long, default_value = "0x4B52", value_parser = parse_seed)]
        seed: u64,
    },
    /// Summarize the run reports in a directory into `summary.<format>`.
    Report {
        dir: PathBuf,
        #[arg(long, value_enum, default_value = "json")]
        format: FormatArg,
    },
}

fn parse_seed(s: &str) -> Result<u64, String> {
    let parsed = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => s.parse(),
    };
    parsed.map_err(|e| format!("invalid seed `{s}`: {e}"))
}

fn resolve(problem: &str) -> Result<ProblemSpec> {
    if let Some(spec) = builtin(problem) {
        return Ok(spec);
    }
    let path = Path::new(problem);
    if path.exists() {
        return Ok(load_problem(path)?);
    }
    Err(anyhow!("`{problem}` is neither a built-in problem nor a readable file (see `rd list`)"))
}

fn list() {
    println!("{:<4} {:<14} {:>3}  description", "id", "kind", "dim");
    for p in catalog() {
        println!("{:<4} {:<14} {:>3}  {}", p.id, p.kind.to_string(), p.dim, p.description);
    }
}

fn run_cmd(problem: &str, suite: Suite, options: RunOptions, out: Option<&Path>) -> Result<bool> {
    let spec = resolve(problem)?;
    let report = run(&spec, suite, &options)?;
    for d in &report.duality {
        eprintln!(
            "{:<4} {:<28} left {:>3}  right {:>3}  factor {:>2}  {}",
            report.problem,
            d.pair,
            d.left.degree,
            d.right.degree,
            d.factor,
            if d.verdict() { "ok" } else { "FAILED" }
        );
    }
    match out {
        Some(dir) => {
            let path = report::write_run(&report, dir)?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{}", report::to_json(&report)?),
    }
    for line in report.diagnostics() {
        eprintln!("diagnostic: {line}");
    }
    Ok(report.verdict)
}

fn degree_cmd(
    problem: &str,
    operator: &str,
    domain: Option<&str>,
    eta: Option<f64>,
    grid: Option<usize>,
    seed: u64,
) -> Result<bool> {
    let mut spec = resolve(problem)?;
    if let Some(m) = grid {
        spec.grid = m;
    }
    let setup = spec.setup()?;
    let name: OperatorName = operator.parse()?;
    let params = OperatorParams { eta, ..Default::default() };
    let h = build(name, setup.problem.clone(), params)?;
    let domain = domain.map(str::parse::<DomainSpec>).transpose()?;
    let result = operator_degree(&setup, &h, domain, &CertifyOptions::with_seed(seed))?;
    print!("{}", report::to_json(&result)?);
    Ok(result.certified)
}

fn report_cmd(dir: &Path, format: Format) -> Result<bool> {
    let reports = report::load_reports(dir)?;
    if reports.is_empty() {
        return Err(anyhow!("no run reports in {}", dir.display()));
    }
    let path = report::emit(&reports, format, dir)?;
    println!("{}", path.display());
    Ok(reports.iter().all(|r| r.verdict))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: RD_THREADS: {e}");
            return ExitCode::from(2);
        }
    }
    let outcome = match &cli.command {
        Command::List => {
            list();
            Ok(true)
        }
        Command::Run { problem, suite, grid, eta, seed, out } => {
            let options = RunOptions { grid: *grid, eta: *eta, seed: *seed };
            run_cmd(problem, (*suite).into(), options, out.as_deref())
        }
        Command::Degree { problem, operator, domain, eta, grid, seed } => {
            degree_cmd(problem, operator, domain.as_deref(), *eta, *grid, *seed).context("degree")
        }
        Command::Report { dir, format } => report_cmd(dir, (*format).into()),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

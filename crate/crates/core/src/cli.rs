//! Command-line front end: `solve`, `compare` and `sweep`.
//!
//! Exit codes: 0 success, 1 usage or parse error, 2 solver error, 3 output
//! I/O error, 4 reference solver did not converge.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path as FsPath, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::Error;
use crate::metrics::{build_report, pearson_r, AssignmentReport};
use crate::oracle::{frank_wolfe_solve, relative_gap, OracleResult};
use crate::solver::{solve, Solution, SolverConfig};
use crate::tntp::{self, ParsedInstance, ReportFormat};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_UNCONVERGED: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "kpsa", version, about = "k-paths subtracting-adding traffic assignment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one instance and write flows and a quality report
    Solve {
        /// Number of paths per OD pair
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Solve, then compare against a Frank-Wolfe reference equilibrium
    Compare {
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Solve for each k in a list and tabulate E, r and CPU time
    Sweep {
        /// Comma-separated list of k values, e.g. 2,3,4
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        k: Vec<usize>,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// TNTP network file
    #[arg(long)]
    net: PathBuf,
    /// TNTP trips file
    #[arg(long)]
    trips: PathBuf,
    /// Override alpha_n, as n=value (repeatable)
    #[arg(long = "alpha", value_parser = parse_alpha)]
    alphas: Vec<(usize, f64)>,
    /// Override N_n, as n=value (repeatable)
    #[arg(long = "iters", value_parser = parse_iters)]
    iters: Vec<(usize, usize)>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
    /// Also write per-OD (average, shortest) times
    #[arg(long)]
    scatter: bool,
    /// Also write the deviation histogram as CSV
    #[arg(long)]
    histogram: bool,
    /// Also run the Frank-Wolfe reference solver
    #[arg(long)]
    oracle: bool,
    /// Relative gap the reference solver must reach
    #[arg(long, default_value_t = 1e-4)]
    gap_tol: f64,
    /// Iteration cap for the reference solver
    #[arg(long, default_value_t = 100_000)]
    max_iter: usize,
    /// Worker threads, 0 for one per core
    #[arg(long, env = "KPSA_THREADS", default_value_t = 0)]
    threads: usize,
}

fn parse_pair<T: std::str::FromStr>(s: &str) -> Result<(usize, T), String> {
    let (n, value) = s.split_once('=').ok_or_else(|| format!("expected n=value, got {s:?}"))?;
    let n: usize = n.trim().parse().map_err(|_| format!("bad n in {s:?}"))?;
    if n < 2 {
        return Err(format!("n must be at least 2 in {s:?}"));
    }
    let value = value.trim().parse().map_err(|_| format!("bad value in {s:?}"))?;
    Ok((n, value))
}

fn parse_alpha(s: &str) -> Result<(usize, f64), String> {
    parse_pair(s)
}

fn parse_iters(s: &str) -> Result<(usize, usize), String> {
    parse_pair(s)
}

/// A failure carrying the process exit code it maps to.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Parse { .. } | Error::Config(_) => EXIT_USAGE,
            Error::Io(_) | Error::Json(_) => EXIT_IO,
            _ => EXIT_SOLVER,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn io_failure(path: &FsPath, e: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_IO,
        message: format!("{}: {e}", path.display()),
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let threads = match &cli.command {
        Command::Solve { run, .. } | Command::Compare { run, .. } | Command::Sweep { run, .. } => run.threads,
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return EXIT_SOLVER;
        }
    };
    let result = pool.install(|| {
        let mut stdout = std::io::stdout().lock();
        match &cli.command {
        Command::Solve { k, run } => cmd_solve(*k, run, &mut stdout),
        Command::Compare { k, run } => cmd_compare(*k, run, &mut stdout),
        Command::Sweep { k, run } => cmd_sweep(k, run, &mut stdout),
        }
    });
    match result {
        Ok(code) => code,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            failure.code
        }
    }
}

fn config_for(k: usize, run: &RunArgs) -> Result<SolverConfig, Failure> {
    let mut config = SolverConfig::new(k);
    for &(n, alpha) in &run.alphas {
        config.set_alpha(n, alpha);
    }
    for &(n, iterations) in &run.iters {
        config.set_iterations(n, iterations);
    }
    config.validate()?;
    Ok(config)
}

struct Run {
    instance: ParsedInstance,
    solution: Solution,
    report: AssignmentReport,
}

fn load(run: &RunArgs) -> Result<ParsedInstance, Failure> {
    Ok(ParsedInstance::load(&run.net, &run.trips)?)
}

fn solve_instance(instance: ParsedInstance, k: usize, run: &RunArgs) -> Result<Run, Failure> {
    let config = config_for(k, run)?;
    let solution = solve(&instance.network, &instance.demand, &config)?;
    let report = build_report(&instance.network, &solution, &instance.name)?;
    Ok(Run {
        instance,
        solution,
        report,
    })
}

fn create(path: &FsPath) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| io_failure(path, e))
}

fn write_outputs(result: &Run, run: &RunArgs) -> Result<(), Failure> {
    fs::create_dir_all(&run.out).map_err(|e| io_failure(&run.out, e))?;
    let stem = format!("{}_k{}", result.instance.name, result.solution.k);
    let path = run.out.join(format!("{stem}_flows.txt"));
    tntp::write_flows(&result.instance.network, &result.solution.link_state, create(&path)?)
        .map_err(|e| io_failure(&path, e))?;

    let (format, ext) = match run.format {
        FormatArg::Json => (ReportFormat::Json, "json"),
        FormatArg::Csv => (ReportFormat::Csv, "csv"),
    };
    let path = run.out.join(format!("{stem}_report.{ext}"));
    tntp::write_report(&result.report, format, create(&path)?).map_err(|e| io_failure(&path, e))?;

    if run.scatter {
        let path = run.out.join(format!("{stem}_scatter.csv"));
        tntp::write_scatter(&result.report.od_metrics, create(&path)?).map_err(|e| io_failure(&path, e))?;
    }
    if run.histogram {
        let path = run.out.join(format!("{stem}_histogram.csv"));
        tntp::write_histogram(&result.report, create(&path)?).map_err(|e| io_failure(&path, e))?;
    }
    Ok(())
}

/// `instance k E% r cpu_ms`
pub fn summary_line(report: &AssignmentReport) -> String {
    let r = report
        .pearson_r
        .map(|r| format!("{r:.6}"))
        .unwrap_or_else(|| "n/a".to_string());
    format!(
        "{} {} {:.6} {} {:.3}",
        report.instance, report.k, report.e_percent, r, report.cpu_ms
    )
}

fn out_err(e: std::io::Error) -> Failure {
    Failure {
        code: EXIT_IO,
        message: format!("stdout: {e}"),
    }
}

fn cmd_solve(k: usize, run: &RunArgs, out: &mut impl Write) -> Result<i32, Failure> {
    let instance = load(run)?;
    let result = solve_instance(instance, k, run)?;
    write_outputs(&result, run)?;
    writeln!(out, "{}", summary_line(&result.report)).map_err(out_err)?;
    if run.oracle {
        return print_comparison(&result, run, out);
    }
    Ok(EXIT_OK)
}

fn cmd_compare(k: usize, run: &RunArgs, out: &mut impl Write) -> Result<i32, Failure> {
    let instance = load(run)?;
    let result = solve_instance(instance, k, run)?;
    write_outputs(&result, run)?;
    writeln!(out, "{}", summary_line(&result.report)).map_err(out_err)?;
    print_comparison(&result, run, out)
}

/// Agreement between a k-PSA solution and the reference equilibrium.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub link_flow_r: Option<f64>,
    /// k-PSA total system time over the reference's.
    pub tstt_ratio: f64,
    pub kpsa_relative_gap: f64,
    pub oracle: OracleResult,
}

pub fn compare_with_oracle(
    instance: &ParsedInstance,
    solution: &Solution,
    gap_tol: f64,
    max_iter: usize,
) -> crate::error::Result<Comparison> {
    let oracle = frank_wolfe_solve(&instance.network, &instance.demand, gap_tol, max_iter)?;
    let link_flow_r = pearson_r(&solution.link_state.flow, &oracle.link_flows).ok();
    let tstt = solution.link_state.total_system_time();
    let kpsa_relative_gap = relative_gap(&instance.network, &instance.demand, &solution.link_state.flow)?;
    Ok(Comparison {
        link_flow_r,
        tstt_ratio: tstt / oracle.total_system_time,
        kpsa_relative_gap,
        oracle,
    })
}

fn print_comparison(result: &Run, run: &RunArgs, out: &mut impl Write) -> Result<i32, Failure> {
    let cmp = compare_with_oracle(&result.instance, &result.solution, run.gap_tol, run.max_iter)?;
    let r = cmp
        .link_flow_r
        .map(|r| format!("{r:.6}"))
        .unwrap_or_else(|| "n/a".to_string());
    let lines = [
        format!("link_flow_pearson_r {r}"),
        format!("tstt_ratio {:.6}", cmp.tstt_ratio),
        format!("kpsa_E_percent {:.6}", result.report.e_percent),
        format!("kpsa_relative_gap {:.6e}", cmp.kpsa_relative_gap),
        format!("oracle_relative_gap {:.6e}", cmp.oracle.relative_gap),
        format!("oracle_iterations {}", cmp.oracle.iterations),
    ];
    for line in lines {
        writeln!(out, "{line}").map_err(out_err)?;
    }
    if !cmp.oracle.converged {
        eprintln!(
            "error: reference solver stopped at gap {:.3e} after {} iterations (target {:.1e})",
            cmp.oracle.relative_gap, cmp.oracle.iterations, run.gap_tol
        );
        return Ok(EXIT_UNCONVERGED);
    }
    Ok(EXIT_OK)
}

fn cmd_sweep(ks: &[usize], run: &RunArgs, out: &mut impl Write) -> Result<i32, Failure> {
    if ks.is_empty() {
        return Err(Failure {
            code: EXIT_USAGE,
            message: "sweep needs at least one k".into(),
        });
    }
    for &k in ks {
        config_for(k, run)?;
    }
    let instance = load(run)?;
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let result = solve_instance(instance.clone(), k, run)?;
        write_outputs(&result, run)?;
        writeln!(out, "{}", summary_line(&result.report)).map_err(out_err)?;
        rows.push(result.report);
    }
    let path = run.out.join(format!("{}_sweep.csv", instance.name));
    let mut table = create(&path)?;
    write_sweep_table(&rows, &mut table).map_err(|e| io_failure(&path, e))?;
    table.flush().map_err(|e| io_failure(&path, e))?;
    Ok(EXIT_OK)
}

fn write_sweep_table(rows: &[AssignmentReport], sink: &mut impl Write) -> std::io::Result<()> {
    writeln!(sink, "k,E_percent,pearson_r,cpu_ms")?;
    for report in rows {
        let r = report.pearson_r.map(|r| r.to_string()).unwrap_or_else(|| "n/a".into());
        writeln!(sink, "{},{},{},{}", report.k, report.e_percent, r, report.cpu_ms)?;
    }
    Ok(())
}

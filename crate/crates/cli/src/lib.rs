//! Command implementations behind the `ggrqr` binary. Every command writes its
//! report to a caller-supplied writer so the output can be tested directly.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ggrqr_core::counting::{audit, Audit, AuditAlgorithm};
use ggrqr_core::matcore::{metrics, read_matrix, write_matrix, MatrixFormat};
use ggrqr_core::tilepar::{cost_model_run, parallel_ggr, partition, TileGrid, DEFAULT_GAMMA};
use ggrqr_core::{factorize, Algorithm, DenseMatrix, Error, FactorizeOptions, Metrics, OpCounter};

pub const DEFAULT_SEED: u64 = 42;

/// Model clock: seconds charged per counted multiply/divide.
const MODEL_SECONDS_PER_OP: f64 = 1e-9;

/// Gate multiplier for the residual and orthogonality checks (`c·n·ε`).
const GATE_FACTOR: f64 = 50.0;
const LOWER_GATE: f64 = 1e-12;

pub mod exit {
    pub const OK: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const PARSE: i32 = 2;
    pub const SHAPE: i32 = 3;
    pub const VERIFY_FAILED: i32 = 4;
}

#[derive(Debug, Parser)]
#[command(name = "ggrqr", version, about = "Givens and Householder QR: factorize, verify, count, benchmark")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Factorize a matrix file and write R (and optionally Q).
    Factorize(FactorizeArgs),
    /// Check a factorization against the accuracy gates.
    Verify(VerifyArgs),
    /// Timing and accuracy sweep over sizes and algorithms.
    Bench(BenchArgs),
    /// Compare instrumented multiply counts with the closed forms.
    Opcount(OpcountArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Mm,
    Csv,
}

impl From<FormatArg> for MatrixFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Mm => MatrixFormat::MatrixMarket,
            FormatArg::Csv => MatrixFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum Clock {
    /// Deterministic: time is derived from the operation count.
    #[default]
    Model,
    /// Measured wall-clock time.
    Wall,
}

#[derive(Debug, Args)]
pub struct FactorizeArgs {
    pub input: PathBuf,
    #[arg(long, default_value = "ggr", value_parser = parse_algorithm)]
    pub algo: Algorithm,
    /// Also write Q.
    #[arg(long)]
    pub q: bool,
    #[arg(long)]
    pub panel: Option<usize>,
    /// Input and output format; guessed from the extension when absent.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Where to write R. Defaults to `<input stem>.R.<ext>` beside the input.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    pub input: PathBuf,
    #[arg(long, default_value = "ggr", value_parser = parse_algorithm)]
    pub algo: Algorithm,
    #[arg(long)]
    pub panel: Option<usize>,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Check this R instead of the computed one.
    #[arg(long)]
    pub r: Option<PathBuf>,
    /// Check this Q instead of the computed one.
    #[arg(long = "q-file")]
    pub q_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [16usize, 32, 64])]
    pub size: Vec<usize>,
    /// Algorithms to run; all of them when absent.
    #[arg(long, value_delimiter = ',', value_parser = parse_algorithm)]
    pub algo: Vec<Algorithm>,
    #[arg(long)]
    pub panel: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub repeat: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Clock::Model)]
    pub clock: Clock,
    /// Tile-parallel GGR sweep instead of the algorithm sweep.
    #[arg(long)]
    pub parallel: bool,
    #[arg(long, default_value_t = 2)]
    pub grid: usize,
    /// Tile edge; `n / grid` when absent.
    #[arg(long)]
    pub block: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    pub gamma: f64,
}

#[derive(Debug, Args)]
pub struct OpcountArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [String::from("gr"), String::from("cgr"), String::from("ggr")])]
    pub algo: Vec<String>,
    #[arg(long, value_delimiter = ',', default_values_t = [16u64])]
    pub size: Vec<u64>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Exit status for a library error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Parse { .. } | Error::NonFinite { .. } => exit::PARSE,
        Error::UnsupportedShape { .. } | Error::DimensionMismatch { .. } | Error::InvalidPanel { .. } => exit::SHAPE,
        _ => exit::FAILURE,
    }
}

/// Runs one parsed command. `out` receives the report, `diag` the side notes.
pub fn run(cli: &Cli, out: &mut dyn Write, diag: &mut dyn Write) -> Result<i32, Error> {
    match &cli.command {
        Command::Factorize(args) => cmd_factorize(args, out),
        Command::Verify(args) => cmd_verify(args, out),
        Command::Bench(args) if args.parallel => emit(args.csv.as_deref(), out, &bench_parallel_csv(args)?),
        Command::Bench(args) => emit(args.csv.as_deref(), out, &bench_csv(args)?),
        Command::Opcount(args) => cmd_opcount(args, out, diag),
    }
}

fn emit(path: Option<&Path>, out: &mut dyn Write, text: &str) -> Result<i32, Error> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(exit::OK)
}

fn input_format(path: &Path, flag: Option<FormatArg>) -> MatrixFormat {
    flag.map(Into::into).unwrap_or_else(|| MatrixFormat::from_path(path))
}

fn options(panel: Option<usize>) -> FactorizeOptions {
    FactorizeOptions {
        accumulate_q: true,
        panel,
    }
}

fn sibling(input: &Path, tag: &str, format: MatrixFormat) -> PathBuf {
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("matrix");
    input.with_file_name(format!("{stem}.{tag}.{}", format.extension()))
}

fn metrics_line(m: &Metrics) -> String {
    format!(
        "residual={:.3e} orthogonality={:.3e} lower_max={:.3e}",
        m.reconstruction_residual, m.orthogonality_defect, m.max_lower_triangle
    )
}

pub fn cmd_factorize(args: &FactorizeArgs, out: &mut dyn Write) -> Result<i32, Error> {
    let format = input_format(&args.input, args.format);
    let a = read_matrix(&args.input, format)?;
    let res = factorize(args.algo, &a, options(args.panel), None)?;
    let q = res.q.as_ref().expect("Q requested");
    let r_path = args.out.clone().unwrap_or_else(|| sibling(&args.input, "R", format));
    write_matrix(&res.r, &r_path, format)?;
    if args.q {
        write_matrix(q, &sibling(&args.input, "Q", format), format)?;
    }
    writeln!(out, "{}", metrics_line(&metrics(&a, q, &res.r)?))?;
    Ok(exit::OK)
}

/// Accuracy gates for an `m×n` input with Frobenius norm `norm_a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gates {
    pub residual: f64,
    pub orthogonality: f64,
    pub lower: f64,
}

impl Gates {
    pub fn for_input(a: &DenseMatrix) -> Self {
        let n = a.rows().max(1) as f64;
        Self {
            residual: GATE_FACTOR * n * f64::EPSILON,
            orthogonality: GATE_FACTOR * n * f64::EPSILON,
            lower: LOWER_GATE * a.frobenius_norm(),
        }
    }

    /// Names of the gates `m` violates.
    pub fn failures(&self, m: &Metrics) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !within(m.reconstruction_residual, self.residual) {
            out.push("residual");
        }
        if !within(m.orthogonality_defect, self.orthogonality) {
            out.push("orthogonality");
        }
        if !within(m.max_lower_triangle, self.lower) {
            out.push("lower_triangle");
        }
        out
    }
}

/// False for NaN as well as for values above the gate.
fn within(x: f64, gate: f64) -> bool {
    x <= gate
}

pub fn cmd_verify(args: &VerifyArgs, out: &mut dyn Write) -> Result<i32, Error> {
    let format = input_format(&args.input, args.format);
    let a = read_matrix(&args.input, format)?;
    let res = factorize(args.algo, &a, options(args.panel), None)?;
    let load = |p: &Path| read_matrix(p, input_format(p, args.format));
    let r = match &args.r {
        Some(p) => load(p)?,
        None => res.r,
    };
    let q = match &args.q_file {
        Some(p) => load(p)?,
        None => res.q.expect("Q requested"),
    };
    let m = metrics(&a, &q, &r)?;
    let failed = Gates::for_input(&a).failures(&m);
    if failed.is_empty() {
        writeln!(out, "PASS {}", metrics_line(&m))?;
        Ok(exit::OK)
    } else {
        writeln!(out, "FAIL {} failed={}", metrics_line(&m), failed.join(","))?;
        Ok(exit::VERIFY_FAILED)
    }
}

/// One row of the algorithm sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub algorithm: Algorithm,
    pub n: usize,
    pub panel: Option<usize>,
    pub seconds: f64,
    pub muldiv: u64,
    pub residual: f64,
    pub orthogonality: f64,
}

pub const BENCH_HEADER: &str = "algorithm,n,panel,seconds,muldiv,residual,orthogonality";
pub const PARALLEL_HEADER: &str = "n,k,block,gamma,serial_units,parallel_units,speedup,wall_seconds";
pub const OPCOUNT_HEADER: &str = "algorithm,n,mul,add,div,sqrt,muldiv,formula,ratio";

impl BenchRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.6e},{},{:.6e},{:.6e}",
            self.algorithm,
            self.n,
            self.panel.map(|p| p.to_string()).unwrap_or_default(),
            self.seconds,
            self.muldiv,
            self.residual,
            self.orthogonality
        )
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let mid = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[mid]
    } else {
        0.5 * (xs[mid - 1] + xs[mid])
    }
}

fn check_sweep(sizes: &[usize], repeat: usize) -> Result<(), Error> {
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(Error::InvalidArgument("sizes must be positive".into()));
    }
    if repeat == 0 {
        return Err(Error::InvalidArgument("repeat must be at least 1".into()));
    }
    Ok(())
}

/// Runs the sweep and returns one record per `(algorithm, n)`. The matrix for
/// size `n` is seeded with `seed + n`.
pub fn bench_records(args: &BenchArgs) -> Result<Vec<BenchRecord>, Error> {
    check_sweep(&args.size, args.repeat)?;
    let algorithms = if args.algo.is_empty() {
        Algorithm::ALL.to_vec()
    } else {
        args.algo.clone()
    };
    let mut records = Vec::new();
    for &alg in &algorithms {
        for &n in &args.size {
            let a = DenseMatrix::random_uniform(n, n, args.seed.wrapping_add(n as u64));
            let panel = alg.is_blocked().then(|| args.panel.unwrap_or(ggrqr_core::factorization::DEFAULT_PANEL).min(n));
            let opts = options(panel);
            let mut counter = OpCounter::default();
            let res = factorize(alg, &a, opts, Some(&mut counter))?;
            let m = metrics(&a, res.q.as_ref().expect("Q requested"), &res.r)?;
            let seconds = match args.clock {
                Clock::Model => {
                    let ops = res.counts.muldiv() + res.q_counts.muldiv();
                    (ops.max(1)) as f64 * MODEL_SECONDS_PER_OP
                }
                Clock::Wall => {
                    let mut times = Vec::with_capacity(args.repeat);
                    for _ in 0..args.repeat {
                        let start = Instant::now();
                        factorize(alg, &a, opts, None)?;
                        times.push(start.elapsed().as_secs_f64().max(f64::MIN_POSITIVE));
                    }
                    median(times)
                }
            };
            records.push(BenchRecord {
                algorithm: alg,
                n,
                panel,
                seconds,
                muldiv: counter.muldiv(),
                residual: m.reconstruction_residual,
                orthogonality: m.orthogonality_defect,
            });
        }
    }
    Ok(records)
}

pub fn bench_csv(args: &BenchArgs) -> Result<String, Error> {
    let mut text = String::from(BENCH_HEADER);
    text.push('\n');
    for rec in bench_records(args)? {
        text.push_str(&rec.csv_row());
        text.push('\n');
    }
    Ok(text)
}

fn grid_for(n: usize, args: &BenchArgs) -> Result<TileGrid, Error> {
    match args.block {
        Some(b) => partition(n, args.grid, b),
        None => TileGrid::with_default_block(n, args.grid),
    }
}

pub fn bench_parallel_csv(args: &BenchArgs) -> Result<String, Error> {
    check_sweep(&args.size, args.repeat)?;
    let mut text = String::from(PARALLEL_HEADER);
    text.push('\n');
    for &n in &args.size {
        let grid = grid_for(n, args)?;
        let report = cost_model_run(n, grid.k, grid.block, args.gamma)?;
        let wall = match args.clock {
            Clock::Model => report.parallel_units as f64 * MODEL_SECONDS_PER_OP,
            Clock::Wall => {
                let a = DenseMatrix::random_uniform(n, n, args.seed.wrapping_add(n as u64));
                let mut times = Vec::with_capacity(args.repeat);
                for _ in 0..args.repeat {
                    times.push(parallel_ggr(&a, &grid)?.elapsed);
                }
                median(times)
            }
        };
        let _ = writeln!(
            text,
            "{},{},{},{},{},{},{:.6},{:.6e}",
            n, grid.k, grid.block, args.gamma, report.serial_units, report.parallel_units, report.speedup, wall
        );
    }
    Ok(text)
}

pub fn opcount_audits(args: &OpcountArgs) -> Result<Vec<Audit>, Error> {
    let mut out = Vec::new();
    for name in &args.algo {
        let alg: AuditAlgorithm = name.parse()?;
        for &n in &args.size {
            out.push(audit(alg, n, args.seed.wrapping_add(n))?);
        }
    }
    Ok(out)
}

pub fn opcount_csv(audits: &[Audit]) -> String {
    let mut text = String::from(OPCOUNT_HEADER);
    text.push('\n');
    for a in audits {
        let c = &a.measured;
        let _ = writeln!(
            text,
            "{},{},{},{},{},{},{},{},{:.6}",
            a.algorithm,
            a.n,
            c.mul,
            c.add,
            c.div,
            c.sqrt,
            c.muldiv(),
            a.formula,
            a.ratio
        );
    }
    text
}

pub fn cmd_opcount(args: &OpcountArgs, out: &mut dyn Write, diag: &mut dyn Write) -> Result<i32, Error> {
    let audits = opcount_audits(args)?;
    emit(args.csv.as_deref(), out, &opcount_csv(&audits))?;
    for a in &audits {
        writeln!(
            diag,
            "{} n={} exact_match={} within_tolerance={}",
            a.algorithm, a.n, a.exact_match, a.within_tolerance
        )?;
    }
    Ok(exit::OK)
}

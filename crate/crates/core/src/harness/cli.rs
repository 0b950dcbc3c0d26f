//! Command-line front end.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use super::{
    performance_profile, run_quadratic_sweep, run_rosenbrock_table, write_rosenbrock_csv,
    CostMatrix, ExperimentGrid, HarnessError, QUADRATIC_CAP, ROSENBROCK_EPSILONS,
};
use crate::gbb::{self, SolverConfig, SolverError, StopRule};
use crate::oracle::{homogeneous_residual_min, stls_minimizer};
use crate::quadratic::{generate_instance, solve_bb, InitialStep, QuadraticInstance, SpectrumSetting};
use crate::stepcore::{
    alpha_convex, alpha_family, alpha_family_prime, bb1, bb2, next_steplength, tau_from_gamma,
    ConvexWeight, FamilyParameter, PolicyKind, StepPair, SteplengthPolicy,
};
use crate::trace::RunTrace;

/// Overrides the directory that relative `--out` paths resolve against.
pub const OUT_DIR_ENV: &str = "BBFAMILY_OUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "bbfamily", version, about = "Barzilai-Borwein steplength family and experiments")]
pub struct Cli {
    /// Base random seed.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Write the main output here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// bb1 | bb2 | gamma:<v> | gammaPrime:<v> | tau:<v> | atc:<m>
    #[arg(long, global = true)]
    pub policy: Option<PolicyKind>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate steplength formulas on one (s, y) pair.
    Steps(StepsArgs),
    /// Solve one random quadratic and print its trace.
    Quad(QuadArgs),
    /// Iteration counts on the planar Rosenbrock function.
    Rosenbrock(RosenbrockArgs),
    /// Sweep a grid of quadratic problems.
    Bench(BenchArgs),
    /// Performance profile of a cost table.
    Profile(ProfileArgs),
}

#[derive(Debug, Args)]
pub struct StepsArgs {
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub s: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub y: Vec<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    /// Cross-check family members against the brute-force oracle.
    #[arg(long)]
    pub verify: bool,
}

#[derive(Debug, Args)]
pub struct QuadArgs {
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub setting: u8,
    #[arg(long, default_value_t = 1e4)]
    pub kappa: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub eps: f64,
    #[arg(long, default_value_t = QUADRATIC_CAP)]
    pub max_iter: usize,
    /// Fixed first steplength; `1/||g_0||_inf` when absent.
    #[arg(long)]
    pub alpha0: Option<f64>,
    /// Run the nonmonotone line-search solver.
    #[arg(long)]
    pub line_search: bool,
    /// Save the generated instance as JSON.
    #[arg(long, conflicts_with = "load_instance")]
    pub save_instance: Option<PathBuf>,
    /// Use a saved instance instead of generating one.
    #[arg(long)]
    pub load_instance: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RosenbrockArgs {
    #[arg(long, value_delimiter = ',', default_values_t = ROSENBROCK_EPSILONS)]
    pub eps: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [1u8])]
    pub settings: Vec<u8>,
    #[arg(long, value_delimiter = ',', default_values_t = [1e4])]
    pub kappas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [1e-6])]
    pub epsilons: Vec<f64>,
    /// Number of seeds, counted up from `--seed`.
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    /// Policies to compare; `--policy` adds one more.
    #[arg(long, value_delimiter = ',', default_values_t = default_bench_policies())]
    pub policies: Vec<PolicyKind>,
    #[arg(long, default_value_t = QUADRATIC_CAP)]
    pub max_iter: usize,
    #[arg(long)]
    pub line_search: bool,
    /// Full grid: n = 1000, settings 1-7, kappa 1e4..1e6, epsilon 1e-6..1e-12.
    #[arg(long)]
    pub full_grid: bool,
    /// Also write per-group averages (CSV) here.
    #[arg(long)]
    pub averages: Option<PathBuf>,
    /// Also write the problem-by-policy cost table here.
    #[arg(long)]
    pub costs: Option<PathBuf>,
}

fn default_bench_policies() -> Vec<PolicyKind> {
    ExperimentGrid::desk_scale().policies
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    /// Wide CSV: `problem,<solver>,...`; `fail`, `--` or empty mark failures.
    #[arg(long)]
    pub costs: PathBuf,
}

/// Malformed input (exit 1) versus a failed computation (exit 2).
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Failure(_) => EXIT_FAILURE,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Failure(m) => m,
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Failure(e.to_string())
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::InvalidGrid(_) | HarnessError::Quadratic(_) => CliError::Usage(e.to_string()),
            HarnessError::Profile(super::ProfileError::Parse(_) | super::ProfileError::Ragged { .. }) => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Failure(e.to_string()),
        }
    }
}

fn usage(e: impl ToString) -> CliError {
    CliError::Usage(e.to_string())
}

fn resolve(path: &Path) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if path.is_relative() && !dir.is_empty() => PathBuf::from(dir).join(path),
        _ => path.to_path_buf(),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    let path = resolve(path);
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Failure(format!("{}: {e}", path.display())))
}

/// Parses `argv`, runs the command and returns the exit status. Diagnostics go
/// to `stderr`; `stdout` receives the output unless `--out` is given.
pub fn run_cli<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{e}");
                    return EXIT_OK;
                }
                _ => EXIT_USAGE,
            };
            let text = e.to_string();
            let line = text.lines().next().unwrap_or("invalid arguments");
            let _ = writeln!(stderr, "{line}");
            return code;
        }
    };
    match execute(&cli, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message());
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    let mut file;
    let out: &mut dyn Write = match &cli.out {
        Some(path) => {
            file = create(path)?;
            &mut file
        }
        None => stdout,
    };
    match &cli.command {
        Command::Steps(a) => steps(cli, a, out),
        Command::Quad(a) => quad(cli, a, out),
        Command::Rosenbrock(a) => rosenbrock(cli, a, out),
        Command::Bench(a) => bench(cli, a, out),
        Command::Profile(a) => profile(cli, a, out),
    }?;
    out.flush()?;
    Ok(())
}

fn steps(cli: &Cli, a: &StepsArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let pair = StepPair::new(a.s.clone(), a.y.clone()).map_err(usage)?;
    let mut rows: Vec<(String, f64, Option<f64>)> = Vec::new();
    let verify = |kind: &PolicyKind, value: f64| -> Result<Option<f64>, CliError> {
        if !a.verify {
            return Ok(None);
        }
        let tol = 1e-12 * value.abs().max(1.0);
        let reference = match *kind {
            PolicyKind::FamilyGamma { gamma } => stls_minimizer(&pair, gamma, tol),
            PolicyKind::FamilyGammaPrime { gamma } => {
                let swapped = StepPair::new(pair.y().to_vec(), pair.s().to_vec()).map_err(usage)?;
                stls_minimizer(&swapped, gamma, 1e-12).map(|beta| 1.0 / beta)
            }
            _ => return Ok(None),
        };
        reference.map(Some).map_err(|e| CliError::Failure(e.to_string()))
    };

    if let Some(kind) = cli.policy {
        let (alpha, _) = next_steplength(&SteplengthPolicy::new(kind), &pair).map_err(usage)?;
        rows.push((kind.to_string(), alpha, verify(&kind, alpha)?));
    } else {
        rows.push(("bb1".into(), bb1(&pair).map_err(usage)?, None));
        rows.push(("bb2".into(), bb2(&pair).map_err(usage)?, None));
        if let Some(g) = a.gamma {
            let p = FamilyParameter::new(g).map_err(usage)?;
            let alpha = alpha_family(&pair, p).map_err(usage)?;
            let kind = PolicyKind::FamilyGamma { gamma: p };
            rows.push((kind.to_string(), alpha, verify(&kind, alpha)?));
            let alpha = alpha_family_prime(&pair, p).map_err(usage)?;
            let kind = PolicyKind::FamilyGammaPrime { gamma: p };
            rows.push((kind.to_string(), alpha, verify(&kind, alpha)?));
            let tau = tau_from_gamma(&pair, p).map_err(usage)?;
            rows.push((format!("tau_of_gamma:{g}"), tau.tau(), None));
        }
        if let Some(t) = a.tau {
            let w = ConvexWeight::new(t).map_err(usage)?;
            rows.push((format!("tau:{t}"), alpha_convex(&pair, w).map_err(usage)?, None));
        }
    }
    let homogeneous = if a.verify && rows.iter().any(|r| r.0 == "gamma:1") {
        Some(homogeneous_residual_min(&pair).map_err(|e| CliError::Failure(e.to_string()))?)
    } else {
        None
    };

    match cli.format {
        Format::Csv => {
            if a.verify {
                writeln!(out, "formula,value,oracle,abs_diff")?;
            } else {
                writeln!(out, "formula,value")?;
            }
            for (name, value, oracle) in &rows {
                if a.verify {
                    let (o, d) = oracle.map_or((String::new(), String::new()), |o| {
                        (format!("{o:.7}"), format!("{:.3e}", (o - value).abs()))
                    });
                    writeln!(out, "{name},{value:.7},{o},{d}")?;
                } else {
                    writeln!(out, "{name},{value:.7}")?;
                }
            }
            if let Some(h) = homogeneous {
                writeln!(out, "homogeneous_residual,{h:.7},,")?;
            }
        }
        Format::Json => {
            let items: Vec<_> = rows
                .iter()
                .map(|(name, value, oracle)| {
                    json!({ "formula": name, "value": value, "oracle": oracle })
                })
                .collect();
            let doc = json!({ "steps": items, "homogeneous_residual": homogeneous });
            writeln!(out, "{}", serde_json::to_string_pretty(&doc).expect("json"))?;
        }
    }
    Ok(())
}

fn quad(cli: &Cli, a: &QuadArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let inst = match &a.load_instance {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| usage(format!("{}: {e}", path.display())))?;
            QuadraticInstance::from_json(&text).map_err(usage)?
        }
        None => {
            let setting = SpectrumSetting::new(a.setting, a.kappa).map_err(usage)?;
            generate_instance(a.n, setting, cli.seed).map_err(usage)?
        }
    };
    if let Some(path) = &a.save_instance {
        let mut w = create(path)?;
        w.write_all(inst.to_json().as_bytes())?;
        w.flush()?;
    }
    let policy = cli.policy.unwrap_or(PolicyKind::Bb1);
    let alpha0 = a.alpha0.map_or(InitialStep::InverseGradientInf, InitialStep::Fixed);
    let x0 = vec![1.0; inst.dim()];
    let trace = if a.line_search {
        let config = SolverConfig::default()
            .with_stop(StopRule::RelativeGradient { epsilon: a.eps })
            .with_max_iter(a.max_iter)
            .with_alpha0(alpha0);
        match gbb::run(&inst, &x0, &config, policy) {
            Ok(t) => t,
            Err(SolverError::LineSearchStall { trace, .. }) => {
                write_trace(cli.format, &trace, out)?;
                return Err(CliError::Failure("line search stalled".into()));
            }
            Err(e @ SolverError::InvalidConfig(_)) => return Err(usage(e)),
            Err(e) => return Err(CliError::Failure(e.to_string())),
        }
    } else {
        solve_bb(&inst, policy, a.eps, a.max_iter, &x0, alpha0).map_err(usage)?
    };
    write_trace(cli.format, &trace, out)
}

fn write_trace(format: Format, trace: &RunTrace, out: &mut dyn Write) -> Result<(), CliError> {
    match format {
        Format::Csv => trace.write_csv(out)?,
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(trace).expect("json"))?,
    }
    Ok(())
}

fn rosenbrock(cli: &Cli, a: &RosenbrockArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if a.eps.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(usage("--eps values must be positive"));
    }
    let cells = run_rosenbrock_table(&a.eps)?;
    match cli.format {
        Format::Csv => write_rosenbrock_csv(&cells, out)?,
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&cells).expect("json"))?,
    }
    Ok(())
}

fn bench(cli: &Cli, a: &BenchArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut policies = a.policies.clone();
    if let Some(p) = cli.policy {
        if !policies.contains(&p) {
            policies.push(p);
        }
    }
    let mut grid = ExperimentGrid {
        n: a.n,
        settings: a.settings.clone(),
        kappas: a.kappas.clone(),
        epsilons: a.epsilons.clone(),
        seeds: (cli.seed..cli.seed + a.seeds).collect(),
        policies,
        max_iter: a.max_iter,
        alpha0: InitialStep::InverseGradientInf,
        line_search: a.line_search,
    };
    if a.full_grid {
        grid.n = 1000;
        grid.settings = (1..=7).collect();
        grid.kappas = vec![1e4, 1e5, 1e6];
        grid.epsilons = vec![1e-6, 1e-9, 1e-12];
    }
    let result = run_quadratic_sweep(&grid)?;
    match cli.format {
        Format::Csv => result.write_cells_csv(&mut *out)?,
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&result).expect("json"))?,
    }
    if let Some(path) = &a.averages {
        let mut w = create(path)?;
        result.write_averages_csv(&mut w)?;
        w.flush()?;
    }
    if let Some(path) = &a.costs {
        let mut w = create(path)?;
        result
            .cost_matrix()
            .write_csv(&mut w)
            .map_err(|e| CliError::Failure(e.to_string()))?;
    }
    Ok(())
}

fn profile(cli: &Cli, a: &ProfileArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let file = File::open(&a.costs).map_err(|e| usage(format!("{}: {e}", a.costs.display())))?;
    let matrix = CostMatrix::read_csv(BufReader::new(file)).map_err(usage)?;
    let table = performance_profile(&matrix).map_err(HarnessError::from)?;
    match cli.format {
        Format::Csv => table.write_csv(out)?,
        Format::Json => {
            let points: Vec<_> = table
                .points()
                .into_iter()
                .map(|(s, t, r)| json!({ "solver": s, "theta": t, "rho": r }))
                .collect();
            let solve: Vec<_> = (0..table.solvers.len())
                .map(|s| json!({ "solver": table.solvers[s], "solve_fraction": table.solve_fraction(s) }))
                .collect();
            let doc = json!({ "problems": table.problems, "points": points, "solved": solve });
            writeln!(out, "{}", serde_json::to_string_pretty(&doc).expect("json"))?;
        }
    }
    Ok(())
}

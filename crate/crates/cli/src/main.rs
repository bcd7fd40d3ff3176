//! Batch frontend over the solver library: configuration checks, single
//! solves, vanishing-absorption continuations, refinement studies against
//! the layered reference solution, and diagnostic tables.
//!
//! Every command leaves a `manifest.txt` in the output directory recording
//! the tool version, the command, the resolved parameters, and a SHA-256
//! hash of the configuration and of every file written.  Nothing in the
//! outputs depends on wall-clock time or machine identity, so re-running a
//! command with the same inputs reproduces every byte.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid configuration or
//! parameters, 3 unsupported request (no reference solution, unsupported
//! norm order, too few grid points for the requested modes), 4 numerical
//! failure (grazing order, singular or degenerate systems, mesh quality).

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};
use num_complex::Complex64;
use sha2::{Digest, Sha256};

use nim_grating::analysis::{
    adn_sweep, coercivity_check, worst_case_k, write_adn_table, write_coercivity_table, AdnGrid,
    CoercivityReport,
};
use nim_grating::assembly::Discretization;
use nim_grating::config::{parse_config, render_config, RunConfig};
use nim_grating::dtn::{rayleigh_coefficients, write_mode_table};
use nim_grating::solver::{
    convergence_study, laps_continuation, run_solve, write_continuation_table,
    write_convergence_table, write_field_table, write_report_table, SolveReport,
};
use nim_grating::Error;

#[derive(Parser)]
#[command(
    name = "nim-grating",
    version,
    about = "Quasi-periodic transmission solver for negative-index gratings over a mirror plane"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a configuration and report every violation.
    Validate(ValidateArgs),
    /// Solve one configuration; export report, field, and mode tables.
    Solve(SolveArgs),
    /// Continuation of solves toward the vanishing-absorption limit.
    Laps(LapsArgs),
    /// Mesh-refinement error study against the layered reference solution.
    Convergence(ConvergenceArgs),
    /// Diagnostic tables: boundary-symbol margins or the contrast condition.
    Check(CheckArgs),
}

#[derive(Args)]
struct ValidateArgs {
    /// Configuration file.
    config: PathBuf,
    /// Output directory for the manifest.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    /// Configuration file.
    config: PathBuf,
    /// Mesh override as `nx,ny1,ny2`.
    #[arg(long, value_parser = parse_mesh)]
    mesh: Option<(usize, usize, usize)>,
    /// Retained diffraction orders `-N..=N` (default: automatic).
    #[arg(long)]
    modes: Option<usize>,
    /// Absorption override.
    #[arg(long)]
    sigma: Option<f64>,
    /// Output directory for tables and the manifest.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct LapsArgs {
    /// Configuration file.
    config: PathBuf,
    /// Starting absorption; halved at every step.
    #[arg(long, default_value_t = 1.0)]
    sigma0: f64,
    /// Number of damped steps before the undamped limit solve.
    #[arg(long, default_value_t = 13)]
    steps: usize,
    /// Mesh override as `nx,ny1,ny2`.
    #[arg(long, value_parser = parse_mesh)]
    mesh: Option<(usize, usize, usize)>,
    /// Retained diffraction orders `-N..=N` (default: automatic).
    #[arg(long)]
    modes: Option<usize>,
    /// Output directory for tables and the manifest.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct ConvergenceArgs {
    /// Configuration file (flat interface profile required).
    config: PathBuf,
    /// Number of mesh levels; level zero uses the configured mesh and each
    /// further level doubles it.
    #[arg(long, default_value_t = 4)]
    levels: usize,
    /// Base mesh override as `nx,ny1,ny2`.
    #[arg(long, value_parser = parse_mesh)]
    mesh: Option<(usize, usize, usize)>,
    /// Retained diffraction orders `-N..=N` (default: automatic).
    #[arg(long)]
    modes: Option<usize>,
    /// Output directory for tables and the manifest.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
#[command(group(ArgGroup::new("diagnostic").required(true).args(["adn", "coercivity"])))]
struct CheckArgs {
    /// Configuration file.
    config: PathBuf,
    /// Boundary-symbol independence margins over an interface sample grid.
    #[arg(long)]
    adn: bool,
    /// Contrast condition of the solved field per absorption value.
    #[arg(long)]
    coercivity: bool,
    /// Interface samples per period (symbol check).
    #[arg(long, default_value_t = 32)]
    x1_samples: usize,
    /// Tangential frequencies, comma-separated (symbol check).
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        default_values_t = [-2.0, -1.0, 1.0, 2.0]
    )]
    xi1: Vec<f64>,
    /// Absorption values, comma-separated (default: 1,0.1,0.01 for the
    /// symbol check, the configured absorption for the contrast check).
    #[arg(long, value_delimiter = ',')]
    sigma_grid: Option<Vec<f64>>,
    /// Also maximize the energy quotient over all discrete traces
    /// (contrast check only).
    #[arg(long)]
    worst_case: bool,
    /// Mesh override as `nx,ny1,ny2`.
    #[arg(long, value_parser = parse_mesh)]
    mesh: Option<(usize, usize, usize)>,
    /// Retained diffraction orders `-N..=N` (default: automatic).
    #[arg(long)]
    modes: Option<usize>,
    /// Output directory for tables and the manifest.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn parse_mesh(raw: &str) -> Result<(usize, usize, usize), String> {
    let parts: Vec<&str> = raw.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected nx,ny1,ny2 — got '{raw}'"));
    }
    let parse = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| format!("'{}' is not a non-negative integer", s.trim()))
    };
    Ok((parse(parts[0])?, parse(parts[1])?, parse(parts[2])?))
}

enum Failure {
    Io { context: String, source: std::io::Error },
    Core(Error),
    /// Message already printed by the command; carries only the exit code.
    Reported(u8),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Io { .. } => 1,
            Failure::Reported(code) => *code,
            Failure::Core(err) => match err {
                Error::ConfigParse { .. }
                | Error::InvalidConfig(_)
                | Error::InvalidParameter(_) => 2,
                Error::OracleUnavailable(_)
                | Error::UnsupportedSobolevOrder(_)
                | Error::TruncationMismatch { .. } => 3,
                _ => 4,
            },
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Io { context, source } => write!(f, "{context}: {source}"),
            Failure::Core(err) => write!(f, "{err}"),
            Failure::Reported(_) => write!(f, "see messages above"),
        }
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        Failure::Core(err)
    }
}

fn io_context(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> Failure {
    let context = context.into();
    move |source| Failure::Io { context, source }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate(args) => cmd_validate(args),
        Command::Solve(args) => cmd_solve(args),
        Command::Laps(args) => cmd_laps(args),
        Command::Convergence(args) => cmd_convergence(args),
        Command::Check(args) => cmd_check(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            if !matches!(failure, Failure::Reported(_)) {
                eprintln!("error: {failure}");
            }
            ExitCode::from(failure.code())
        }
    }
}

/// Accumulates the run description and one hash per written file, then
/// renders them as `manifest.txt` in the output directory.
struct Manifest {
    command: &'static str,
    config_path: String,
    config_sha256: String,
    out_dir: String,
    params: Vec<(String, String)>,
    files: Vec<(String, String)>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

impl Manifest {
    fn new(command: &'static str, config: &Path, config_text: &str, out: &Path) -> Manifest {
        Manifest {
            command,
            config_path: config.display().to_string(),
            config_sha256: sha256_hex(config_text.as_bytes()),
            out_dir: out.display().to_string(),
            params: Vec::new(),
            files: Vec::new(),
        }
    }

    fn param(&mut self, key: &str, value: impl fmt::Display) {
        self.params.push((key.to_string(), value.to_string()));
    }

    /// Writes one output file and records its hash.
    fn emit(&mut self, out: &Path, name: &str, bytes: &[u8]) -> Result<(), Failure> {
        let path = out.join(name);
        fs::write(&path, bytes).map_err(io_context(format!("writing {}", path.display())))?;
        self.files.push((name.to_string(), sha256_hex(bytes)));
        Ok(())
    }

    fn write(mut self, out: &Path) -> Result<(), Failure> {
        self.files.sort();
        let mut text = String::new();
        text.push_str(&format!(
            "tool = nim-grating {}\n",
            env!("CARGO_PKG_VERSION")
        ));
        text.push_str(&format!("command = {}\n", self.command));
        text.push_str(&format!("config = {}\n", self.config_path));
        text.push_str(&format!("config_sha256 = {}\n", self.config_sha256));
        text.push_str(&format!("out = {}\n", self.out_dir));
        for (key, value) in &self.params {
            text.push_str(&format!("param {key} = {value}\n"));
        }
        for (name, hash) in &self.files {
            text.push_str(&format!("file {name} sha256 = {hash}\n"));
        }
        let path = out.join("manifest.txt");
        fs::write(&path, text).map_err(io_context(format!("writing {}", path.display())))?;
        println!("wrote {}", path.display());
        Ok(())
    }
}

fn load_config(path: &Path) -> Result<(String, RunConfig), Failure> {
    let text = fs::read_to_string(path)
        .map_err(io_context(format!("reading {}", path.display())))?;
    let run = parse_config(&text)?;
    Ok((text, run))
}

fn prepare_out(out: &Path) -> Result<(), Failure> {
    fs::create_dir_all(out).map_err(io_context(format!("creating {}", out.display())))
}

fn apply_overrides(
    run: &mut RunConfig,
    mesh: Option<(usize, usize, usize)>,
    modes: Option<usize>,
) {
    if let Some((nx, ny1, ny2)) = mesh {
        run.numerics.nx = nx;
        run.numerics.ny1 = ny1;
        run.numerics.ny2 = ny2;
    }
    if let Some(n) = modes {
        run.numerics.modes = Some(n);
    }
}

fn mesh_params(manifest: &mut Manifest, run: &RunConfig) {
    manifest.param("nx", run.numerics.nx);
    manifest.param("ny1", run.numerics.ny1);
    manifest.param("ny2", run.numerics.ny2);
    manifest.param(
        "modes",
        run.numerics
            .modes
            .map(|m| m.to_string())
            .unwrap_or_else(|| "auto".to_string()),
    );
}

fn cmd_validate(args: ValidateArgs) -> Result<(), Failure> {
    let (text, run) = load_config(&args.config)?;
    let violations = run.problem.validate();
    if !violations.is_empty() {
        for violation in &violations {
            println!("{violation}");
        }
        eprintln!(
            "error: {} violation(s) in {}",
            violations.len(),
            args.config.display()
        );
        return Err(Failure::Reported(2));
    }
    println!("configuration valid: {}", args.config.display());
    prepare_out(&args.out)?;
    let mut manifest = Manifest::new("validate", &args.config, &text, &args.out);
    mesh_params(&mut manifest, &run);
    manifest.param("sigma", run.problem.sigma);
    manifest.write(&args.out)
}

fn cmd_solve(args: SolveArgs) -> Result<(), Failure> {
    let (text, mut run) = load_config(&args.config)?;
    apply_overrides(&mut run, args.mesh, args.modes);
    if let Some(sigma) = args.sigma {
        run.problem.sigma = sigma;
    }
    let solved = run_solve(&run)?;
    let report = &solved.report;

    prepare_out(&args.out)?;
    let mut manifest = Manifest::new("solve", &args.config, &text, &args.out);
    mesh_params(&mut manifest, &run);
    manifest.param("sigma", run.problem.sigma);
    manifest.param("resolved_truncation", report.truncation);
    manifest.param("n_unknowns", report.n_unknowns);

    manifest.emit(&args.out, "resolved.cfg", render_config(&run).as_bytes())?;

    let mut buf = Vec::new();
    write_report_table(&mut buf, &[report]).map_err(io_context("rendering report table"))?;
    manifest.emit(&args.out, "report.csv", &buf)?;

    buf.clear();
    write_field_table(&mut buf, &solved.mesh, &solved.field)
        .map_err(io_context("rendering field table"))?;
    manifest.emit(&args.out, "field.csv", &buf)?;

    buf.clear();
    let scalars = run.problem.derive_scalars()?;
    let mut outgoing = rayleigh_coefficients(&solved.modes, solved.field.trace_top())?;
    outgoing[solved.modes.index_of(0)] -=
        Complex64::from_polar(1.0, -scalars.beta * run.problem.h1);
    write_mode_table(&mut buf, &solved.modes, &outgoing, &report.efficiencies)
        .map_err(io_context("rendering mode table"))?;
    manifest.emit(&args.out, "modes.csv", &buf)?;

    println!("unknowns = {}", report.n_unknowns);
    println!("truncation = {}", report.truncation);
    println!("h1_norm = {}", report.h1_norm);
    println!("stability_ratio = {}", report.stability_ratio);
    println!("efficiency_sum = {}", report.efficiency_sum);
    println!("absorbed_fraction = {}", report.absorbed_fraction);
    println!("energy_defect = {}", report.energy_defect);
    println!("energy_residual = {}", report.energy_residual);
    manifest.write(&args.out)
}

fn cmd_laps(args: LapsArgs) -> Result<(), Failure> {
    let (text, mut run) = load_config(&args.config)?;
    apply_overrides(&mut run, args.mesh, args.modes);
    let laps = laps_continuation(&run, args.sigma0, args.steps)?;
    for (sigma, message) in &laps.failures {
        println!("failed sigma = {sigma}: {message}");
    }

    prepare_out(&args.out)?;
    let mut manifest = Manifest::new("laps", &args.config, &text, &args.out);
    mesh_params(&mut manifest, &run);
    manifest.param("sigma0", args.sigma0);
    manifest.param("steps", args.steps);

    let mut buf = Vec::new();
    write_continuation_table(&mut buf, &laps)
        .map_err(io_context("rendering continuation table"))?;
    manifest.emit(&args.out, "continuation.csv", &buf)?;

    let mut reports: Vec<&SolveReport> = laps.steps.iter().map(|s| &s.report).collect();
    if let Some(limit) = &laps.sigma0 {
        reports.push(&limit.report);
    }
    buf.clear();
    write_report_table(&mut buf, &reports).map_err(io_context("rendering report table"))?;
    manifest.emit(&args.out, "reports.csv", &buf)?;

    let Some(limit) = &laps.sigma0 else {
        eprintln!("error: the undamped limit solve failed; see the failure lines above");
        return Err(Failure::Reported(4));
    };
    println!("damped solves = {}", laps.steps.len());
    println!("limit_l2_norm = {}", limit.report.l2_norm);
    if let Some(gap) = laps.limit_gap {
        println!("final_limit_gap = {gap}");
    }
    if let Some(rate) = laps.fitted_rate {
        println!("fitted_rate = {rate}");
    }
    manifest.write(&args.out)
}

fn cmd_convergence(args: ConvergenceArgs) -> Result<(), Failure> {
    let (text, mut run) = load_config(&args.config)?;
    apply_overrides(&mut run, args.mesh, args.modes);
    let study = convergence_study(&run, args.levels)?;

    prepare_out(&args.out)?;
    let mut manifest = Manifest::new("convergence", &args.config, &text, &args.out);
    mesh_params(&mut manifest, &run);
    manifest.param("levels", args.levels);

    let mut buf = Vec::new();
    write_convergence_table(&mut buf, &study)
        .map_err(io_context("rendering convergence table"))?;
    manifest.emit(&args.out, "convergence.csv", &buf)?;

    for row in &study.rows {
        println!(
            "level {} nx = {} l2_error = {}",
            row.level, row.nx, row.l2_error
        );
    }
    if let Some(rate) = study.fitted_rate {
        println!("fitted_rate = {rate}");
    }
    manifest.write(&args.out)
}

fn cmd_check(args: CheckArgs) -> Result<(), Failure> {
    let (text, mut run) = load_config(&args.config)?;
    apply_overrides(&mut run, args.mesh, args.modes);
    let violations = run.problem.validate();
    if !violations.is_empty() {
        return Err(Failure::Core(Error::InvalidConfig(violations)));
    }
    prepare_out(&args.out)?;
    let mut manifest = Manifest::new("check", &args.config, &text, &args.out);

    if args.adn {
        let grid = AdnGrid {
            x1_samples: args.x1_samples,
            xi1_values: args.xi1.clone(),
            sigma_values: args.sigma_grid.unwrap_or_else(|| vec![1.0, 0.1, 0.01]),
        };
        manifest.param("diagnostic", "adn");
        manifest.param("x1_samples", grid.x1_samples);
        manifest.param("xi1", join_floats(&grid.xi1_values));
        manifest.param("sigma_grid", join_floats(&grid.sigma_values));
        let samples = adn_sweep(&run.problem, &grid)?;
        let mut buf = Vec::new();
        write_adn_table(&mut buf, &samples).map_err(io_context("rendering symbol table"))?;
        manifest.emit(&args.out, "adn.csv", &buf)?;
        let min_margin = samples
            .iter()
            .map(|s| s.independence_margin)
            .fold(f64::INFINITY, f64::min);
        println!("samples = {}", samples.len());
        println!("min_margin = {min_margin}");
    } else {
        let sigmas = args
            .sigma_grid
            .unwrap_or_else(|| vec![run.problem.sigma]);
        manifest.param("diagnostic", "coercivity");
        mesh_params(&mut manifest, &run);
        manifest.param("sigma_grid", join_floats(&sigmas));
        let mut rows: Vec<(f64, CoercivityReport)> = Vec::with_capacity(sigmas.len());
        let mut worst: Option<f64> = None;
        for &sigma in &sigmas {
            let damped = RunConfig {
                problem: run.problem.with_sigma(sigma),
                numerics: run.numerics.clone(),
            };
            let solved = run_solve(&damped)?;
            let disc = Discretization::new(&solved.mesh, &damped.problem, &solved.modes)?;
            let report = coercivity_check(&disc, &solved.field)?;
            if args.worst_case && worst.is_none() {
                worst = Some(worst_case_k(&disc)?);
            }
            let met = report
                .condition_met
                .map(|b| b.to_string())
                .unwrap_or_else(|| "undefined".to_string());
            println!(
                "sigma = {sigma}: k = {}, condition_met = {met}",
                report
                    .k
                    .map(|k| k.to_string())
                    .unwrap_or_else(|| "undefined".to_string())
            );
            rows.push((sigma, report));
        }
        let mut buf = Vec::new();
        write_coercivity_table(&mut buf, &rows)
            .map_err(io_context("rendering contrast table"))?;
        manifest.emit(&args.out, "coercivity.csv", &buf)?;
        if let Some(k_worst) = worst {
            println!("worst_case_k = {k_worst}");
            manifest.emit(&args.out, "worst_case.csv", format!("k_worst\n{k_worst}\n").as_bytes())?;
        }
    }
    manifest.write(&args.out)
}

fn join_floats(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

//! Command-line front end.
//!
//! Every subcommand reads a JSON problem configuration, resolves it against
//! the shared defaults (`--n 1024`, `--dt 1e-3`, `--seed 42`), computes its
//! artifacts fully in memory, and only then writes them: a usage or
//! validation error can never leave partial outputs behind.  Primary data
//! goes to stdout and to files under the output directory (default
//! `runs/<command>/`), always accompanied by a `manifest.json` provenance
//! record; progress and timing go to stderr.  Outputs contain no timestamps
//! and no nondeterministic content, so rerunning a command with the same
//! arguments and seed reproduces every primary output byte for byte.
//! `FRACLOG_THREADS` bounds the worker threads of the stochastic commands.

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::core::{validate_problem, Field, ProblemSpec, Profile, RawConfig};
use crate::elliptic::{solve_logistic, solve_obstacle_elliptic};
use crate::fracop::{assemble_operator, DiscreteOperator};
use crate::harness::{commuting_limits, run_p_limit, run_t_limit, PLimitMode, TLimitMode};
use crate::parabolic::{evolve_logistic, evolve_obstacle, ObstacleMode, Trajectory};
use crate::report::{
    experiment_csv, field_csv, to_json, trajectory_csv, write_text, RunManifest,
};
use crate::spectral::{eigen_cutoff_experiment, indicator_schedule, principal_eigen};
use crate::stable_mc::{exit_time_functional, survival_eigenvalue, McEstimate};
use crate::{Error, Result};

/// Horizon used by the evolution commands.
const EVOLVE_HORIZON: f64 = 20.0;
/// Barrier levels of the cut-off ladder.
const CUTOFF_LEVELS: [f64; 5] = [0.0, 10.0, 100.0, 1_000.0, 10_000.0];
/// Steepness ladder of the steep-limit experiment.
const P_LADDER: [f64; 6] = [2.0, 4.0, 8.0, 16.0, 32.0, 64.0];
/// Sample times of the large-time experiment.
const T_LADDER: [f64; 5] = [1.0, 2.0, 5.0, 10.0, 20.0];
/// Steepest exponent of the commutation check.
const COMMUTE_P_MAX: f64 = 64.0;
/// Horizon of the commutation check.
const COMMUTE_T_MAX: f64 = 20.0;
/// Path count of the stochastic cross-check.
const MC_PATHS: usize = 100_000;
/// Fit window of the stochastic decay-rate estimate.
const MC_WINDOW: (f64, f64) = (1.0, 3.0);

#[derive(Debug, Parser)]
#[command(
    name = "fraclog",
    version,
    about = "Numerical laboratory for a nonlocal logistic equation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Path to the JSON problem configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Number of interior grid nodes.
    #[arg(long, default_value_t = 1024)]
    pub n: usize,
    /// Time step for evolutions and path simulation.
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    /// Seed for the stochastic commands.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Output directory (default: runs/<command>/).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PLimitModeArg {
    /// Steady states against the steady obstacle solution.
    Elliptic,
    /// Evolutions against the obstacle evolution at matched times.
    Parabolic,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TLimitModeArg {
    /// Finite-steepness dynamics against its steady state.
    Logistic,
    /// Obstacle dynamics against the steady equilibrium.
    Obstacle,
}

#[derive(Debug, Clone, Args)]
pub struct PLimitArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Which family of objects to compare.
    #[arg(long, value_enum, default_value_t = PLimitModeArg::Elliptic)]
    pub mode: PLimitModeArg,
}

#[derive(Debug, Clone, Args)]
pub struct TLimitArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Which dynamics to follow.
    #[arg(long, value_enum, default_value_t = TLimitModeArg::Logistic)]
    pub mode: TLimitModeArg,
}

#[derive(Debug, Clone, Args)]
pub struct EvolveObstacleArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Either "complementarity" or "penalization:<strength>".
    #[arg(long, default_value = "complementarity")]
    pub mode: String,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and validate a configuration, echoing the resolved problem.
    Validate(CommonArgs),
    /// Principal eigenpair of the operator on the configured domain.
    Eigen(CommonArgs),
    /// Cut-off ladder: principal rates under growing exterior barriers.
    Cutoff(CommonArgs),
    /// Steady state of the finite-steepness equation.
    SolveElliptic(CommonArgs),
    /// Steady equilibrium of the obstacle problem.
    SolveObstacle(CommonArgs),
    /// Evolve the finite-steepness dynamics from the configured datum.
    Evolve(CommonArgs),
    /// Evolve the obstacle dynamics from the configured datum.
    EvolveObstacle(EvolveObstacleArgs),
    /// Stochastic cross-check of the Green function and the principal rate.
    McCheck(CommonArgs),
    /// Distances to the steep-limit object along a steepness ladder.
    PLimit(PLimitArgs),
    /// Distances to the large-time limit along a time ladder.
    TLimit(TLimitArgs),
    /// Run both limits in both orders and compare the terminal fields.
    Commute(CommonArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Validate(_) => "validate",
            Command::Eigen(_) => "eigen",
            Command::Cutoff(_) => "cutoff",
            Command::SolveElliptic(_) => "solve-elliptic",
            Command::SolveObstacle(_) => "solve-obstacle",
            Command::Evolve(_) => "evolve",
            Command::EvolveObstacle(_) => "evolve-obstacle",
            Command::McCheck(_) => "mc-check",
            Command::PLimit(_) => "p-limit",
            Command::TLimit(_) => "t-limit",
            Command::Commute(_) => "commute",
        }
    }

    fn common(&self) -> &CommonArgs {
        match self {
            Command::Validate(c)
            | Command::Eigen(c)
            | Command::Cutoff(c)
            | Command::SolveElliptic(c)
            | Command::SolveObstacle(c)
            | Command::Evolve(c)
            | Command::McCheck(c)
            | Command::Commute(c) => c,
            Command::EvolveObstacle(a) => &a.common,
            Command::PLimit(a) => &a.common,
            Command::TLimit(a) => &a.common,
        }
    }
}

/// Fully computed artifacts of one command, ready to be written.
struct Prepared {
    stdout: String,
    files: Vec<(String, String)>,
}

fn load_problem(path: &std::path::Path) -> Result<ProblemSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("could not read {}: {e}", path.display())))?;
    let raw: RawConfig = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("could not parse {}: {e}", path.display())))?;
    validate_problem(&raw)
}

fn operator_for(problem: &ProblemSpec, n: usize) -> Result<DiscreteOperator> {
    let grid = problem.grid(n)?;
    assemble_operator(&grid, problem.alpha)
}

fn parse_obstacle_mode(s: &str) -> Result<ObstacleMode> {
    if s == "complementarity" {
        return Ok(ObstacleMode::Complementarity);
    }
    if let Some(rest) = s.strip_prefix("penalization:") {
        let strength: f64 = rest.parse().map_err(|_| {
            Error::Parameter(format!("penalty strength '{rest}' is not a number"))
        })?;
        return Ok(ObstacleMode::Penalization(strength));
    }
    Err(Error::Parameter(format!(
        "mode must be 'complementarity' or 'penalization:<strength>'; got '{s}'"
    )))
}

#[derive(Serialize)]
struct EvolveSummary {
    final_time: f64,
    final_sup: f64,
    final_energy: f64,
    all_bounds_held: bool,
    max_comp_residual: Option<f64>,
}

fn evolve_summary(traj: &Trajectory) -> EvolveSummary {
    let last = traj.steps.last();
    EvolveSummary {
        final_time: traj.final_time(),
        final_sup: traj.final_field().sup_norm(),
        final_energy: last.map(|s| s.energy).unwrap_or(0.0),
        all_bounds_held: traj.steps.iter().all(|s| s.bounds_ok),
        max_comp_residual: traj
            .steps
            .iter()
            .filter_map(|s| s.comp_residual)
            .fold(None, |acc, r| Some(acc.map_or(r, |a: f64| a.max(r)))),
    }
}

fn evolve_files(op: &DiscreteOperator, traj: &Trajectory) -> Result<Vec<(String, String)>> {
    Ok(vec![
        ("trajectory.csv".into(), trajectory_csv(traj)),
        ("final.csv".into(), field_csv(op.grid(), traj.final_field())),
    ])
}

#[derive(Serialize)]
struct McCheckSummary {
    exit: McEstimate,
    /// Grid Green-function value at the start point.
    exit_reference: f64,
    exit_gap: f64,
    survival: McEstimate,
    /// Spectral principal rate at the same resolution.
    survival_reference: f64,
    survival_relative_gap: f64,
}

fn prepare(command: &Command, problem: &ProblemSpec) -> Result<Prepared> {
    let common = command.common();
    let (n, dt, seed) = (common.n, common.dt, common.seed);
    match command {
        Command::Validate(_) => {
            let doc = to_json(problem)?;
            Ok(Prepared {
                stdout: doc.clone(),
                files: vec![("problem.json".into(), doc)],
            })
        }
        Command::Eigen(_) => {
            let op = operator_for(problem, n)?;
            let pair = principal_eigen(&op, &Field::zeros(n))?;
            let row = format!(
                "n,alpha,lambda,residual,iterations\n{},{},{},{},{}\n",
                n,
                crate::report::format_float(problem.alpha),
                crate::report::format_float(pair.lambda),
                crate::report::format_float(pair.residual),
                pair.iterations
            );
            Ok(Prepared {
                stdout: row.clone(),
                files: vec![
                    ("eigen.csv".into(), row),
                    ("eigenvector.csv".into(), field_csv(op.grid(), &pair.psi)),
                ],
            })
        }
        Command::Cutoff(_) => {
            let op = operator_for(problem, n)?;
            let schedule = indicator_schedule(problem, op.grid(), &CUTOFF_LEVELS)?;
            let report = eigen_cutoff_experiment(problem, &op, &schedule, &Field::zeros(n))?;
            let mut csv = String::from("k,lambda_k,gap,iterations\n");
            for row in &report.rows {
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    crate::report::format_float(row.k),
                    crate::report::format_float(row.lambda_k),
                    crate::report::format_float(row.gap),
                    row.iterations
                ));
            }
            Ok(Prepared {
                stdout: csv.clone(),
                files: vec![("cutoff.csv".into(), csv), ("report.json".into(), to_json(&report)?)],
            })
        }
        Command::SolveElliptic(_) => {
            let op = operator_for(problem, n)?;
            let report =
                solve_logistic(problem, &op, problem.growth_a, f64::from(problem.exponent_p))?;
            let doc = to_json(&report)?;
            Ok(Prepared {
                stdout: doc.clone(),
                files: vec![
                    ("solution.csv".into(), field_csv(op.grid(), &report.u)),
                    ("report.json".into(), doc),
                ],
            })
        }
        Command::SolveObstacle(_) => {
            let op = operator_for(problem, n)?;
            let report = solve_obstacle_elliptic(problem, &op, problem.growth_a)?;
            let doc = to_json(&report)?;
            Ok(Prepared {
                stdout: doc.clone(),
                files: vec![
                    ("solution.csv".into(), field_csv(op.grid(), &report.u)),
                    ("multiplier.csv".into(), field_csv(op.grid(), &report.mu)),
                    ("report.json".into(), doc),
                ],
            })
        }
        Command::Evolve(_) => {
            let op = operator_for(problem, n)?;
            let phi = problem.phi_field(op.grid());
            let traj = evolve_logistic(
                problem,
                &op,
                problem.growth_a,
                f64::from(problem.exponent_p),
                &phi,
                EVOLVE_HORIZON,
                dt,
            )?;
            let mut files = evolve_files(&op, &traj)?;
            let summary = to_json(&evolve_summary(&traj))?;
            files.push(("summary.json".into(), summary.clone()));
            Ok(Prepared { stdout: summary, files })
        }
        Command::EvolveObstacle(args) => {
            let mode = parse_obstacle_mode(&args.mode)?;
            let op = operator_for(problem, n)?;
            let phi = problem.phi_field(op.grid());
            let traj =
                evolve_obstacle(problem, &op, problem.growth_a, &phi, EVOLVE_HORIZON, dt, mode)?;
            let mut files = evolve_files(&op, &traj)?;
            let summary = to_json(&evolve_summary(&traj))?;
            files.push(("summary.json".into(), summary.clone()));
            Ok(Prepared { stdout: summary, files })
        }
        Command::McCheck(_) => {
            let op = operator_for(problem, n)?;
            let one = Profile::Constant { value: 1.0 };
            let exit = exit_time_functional(problem, 0.0, &one, MC_PATHS, dt, seed)?;
            let torsion = op.green_solve(&Field::new(vec![1.0; n]))?;
            let exit_reference = op.grid().interpolate(torsion.as_slice(), 0.0);
            let survival = survival_eigenvalue(problem, 0.0, MC_WINDOW, MC_PATHS, dt, seed)?;
            let survival_reference = principal_eigen(&op, &Field::zeros(n))?.lambda;
            let summary = McCheckSummary {
                exit_gap: (exit.mean - exit_reference).abs(),
                survival_relative_gap: (survival.mean - survival_reference).abs()
                    / survival_reference,
                exit,
                exit_reference,
                survival,
                survival_reference,
            };
            let doc = to_json(&summary)?;
            Ok(Prepared {
                stdout: doc.clone(),
                files: vec![("mc_check.json".into(), doc)],
            })
        }
        Command::PLimit(args) => {
            let mode = match args.mode {
                PLimitModeArg::Elliptic => PLimitMode::Elliptic,
                PLimitModeArg::Parabolic => PLimitMode::Parabolic,
            };
            let report = run_p_limit(problem, mode, &P_LADDER, n, Some(dt))?;
            let csv = experiment_csv(&report);
            Ok(Prepared {
                stdout: csv.clone(),
                files: vec![
                    ("p_limit.csv".into(), csv),
                    ("report.json".into(), to_json(&report)?),
                ],
            })
        }
        Command::TLimit(args) => {
            let mode = match args.mode {
                TLimitModeArg::Logistic => {
                    TLimitMode::Logistic { p: f64::from(problem.exponent_p) }
                }
                TLimitModeArg::Obstacle => TLimitMode::Obstacle,
            };
            let report = run_t_limit(problem, mode, &T_LADDER, n, dt)?;
            let csv = experiment_csv(&report);
            Ok(Prepared {
                stdout: csv.clone(),
                files: vec![
                    ("t_limit.csv".into(), csv),
                    ("report.json".into(), to_json(&report)?),
                ],
            })
        }
        Command::Commute(_) => {
            let report = commuting_limits(problem, COMMUTE_P_MAX, COMMUTE_T_MAX, n, dt)?;
            #[derive(Serialize)]
            struct CommuteSummary {
                p_max: f64,
                t_max: f64,
                lambda_full: f64,
                lambda_refuge: f64,
                sup_distance: f64,
                energy_distance: f64,
            }
            let summary = to_json(&CommuteSummary {
                p_max: report.p_max,
                t_max: report.t_max,
                lambda_full: report.lambda_full,
                lambda_refuge: report.lambda_refuge,
                sup_distance: report.sup_distance,
                energy_distance: report.energy_distance,
            })?;
            let grid = problem.grid(n)?;
            Ok(Prepared {
                stdout: summary.clone(),
                files: vec![
                    ("steep_first.csv".into(), field_csv(&grid, &report.steep_first)),
                    (
                        "large_time_first.csv".into(),
                        field_csv(&grid, &report.large_time_first),
                    ),
                    ("report.json".into(), to_json(&report)?),
                    ("summary.json".into(), summary),
                ],
            })
        }
    }
}

/// Execute a parsed invocation: compute everything, then write files and
/// stdout.  Returns the error for the caller to map to an exit code.
pub fn run(cli: &Cli) -> Result<()> {
    let started = Instant::now();
    let command = &cli.command;
    let name = command.name();
    let common = command.common();
    let problem = load_problem(&common.config)?;
    let prepared = prepare(command, &problem)?;

    let out_dir = common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(name));
    let mut outputs: Vec<String> = prepared.files.iter().map(|(f, _)| f.clone()).collect();
    outputs.push("manifest.json".into());
    let manifest =
        RunManifest::new(name, &problem, common.n, common.dt, common.seed, outputs);
    for (file, content) in &prepared.files {
        write_text(&out_dir.join(file), content)?;
    }
    write_text(&out_dir.join("manifest.json"), &to_json(&manifest)?)?;
    print!("{}", prepared.stdout);
    eprintln!(
        "{name}: wrote {} file(s) to {} in {:.1}s",
        prepared.files.len() + 1,
        out_dir.display(),
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use sipop::certificate::{certify, inner_instance};
use sipop::conic::sdpa::export_sdpa;
use sipop::conic::Backend;
use sipop::driver::{run_algorithm, AlgorithmParams, OuterSpec};
use sipop::hierarchy::{build_relaxation, HierarchySettings};
use sipop::joint_marginal::{approximate_phi, build_jm, l1_gap};
use sipop::problem::{describe_oracle, oracle_solve, parse_problem, OracleResolution, SipProblem};

/// Semi-infinite polynomial optimization with joint+marginal relaxations.
#[derive(Parser)]
#[command(name = "sipop", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct SolverArgs {
    /// Conic solver backend.
    #[arg(long, env = "SIPOP_SOLVER", default_value = "embedded")]
    solver: String,
    /// Relative singular value threshold for numerical rank.
    #[arg(long, default_value_t = 1e-6)]
    rank_tol: f64,
    /// Seed for the random combinations used in extraction.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SolverArgs {
    fn settings(&self) -> Result<HierarchySettings> {
        Ok(HierarchySettings {
            backend: Backend::from_name(&self.solver)?,
            rank_tol: self.rank_tol,
            seed: self.seed,
            ..HierarchySettings::default()
        })
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Stage {
    /// Joint+marginal relaxation of order `d`.
    Jm,
    /// Outer relaxation at a given `eps`.
    Outer,
    /// Inner relaxation at a given `x`.
    Inner,
}

#[derive(Subcommand)]
enum Command {
    /// Run the eps-adjustment algorithm; exits 0 only on a certified point.
    Solve {
        problem: PathBuf,
        /// Joint+marginal relaxation order.
        #[arg(long, default_value_t = 1)]
        d: usize,
        /// Inner relaxation order (default: smallest admissible plus one).
        #[arg(long)]
        ell: Option<usize>,
        /// Outer relaxation order (default: smallest admissible plus one).
        #[arg(long)]
        t: Option<usize>,
        /// Iteration cap.
        #[arg(long, default_value_t = 12)]
        kmax: usize,
        /// Acceptance band for the inner value.
        #[arg(long, default_value_t = 0.1)]
        eps0: f64,
        /// Write the JSON report here instead of stdout.
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Compute the polynomial upper approximation of the inner max-function.
    Phi {
        problem: PathBuf,
        #[arg(long, default_value_t = 1)]
        d: usize,
        /// Midpoint nodes per axis for the gap estimate against the grid oracle.
        #[arg(long, default_value_t = 101)]
        points: usize,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Bound the inner max-function at a point; exits 0 only if the bound is <= 0.
    Certify {
        problem: PathBuf,
        /// Comma-separated point in original coordinates.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        x: Vec<f64>,
        #[arg(long)]
        ell: Option<usize>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Brute-force grid solution for instances with n, p <= 2.
    Oracle {
        problem: PathBuf,
        #[arg(long, default_value_t = 201)]
        x_points: usize,
        #[arg(long, default_value_t = 201)]
        y_points: usize,
        /// Print a JSON report instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Write one of the relaxations as an SDPA sparse file.
    ExportSdpa {
        problem: PathBuf,
        #[arg(long, value_enum, default_value = "jm")]
        stage: Stage,
        #[arg(long, default_value_t = 1)]
        d: usize,
        /// Relaxation order for the outer or inner stage.
        #[arg(long)]
        order: Option<usize>,
        /// `eps` for the outer stage.
        #[arg(long, default_value_t = 1.0)]
        eps: f64,
        /// Point for the inner stage, in original coordinates.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x: Vec<f64>,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

fn load(path: &Path) -> Result<SipProblem> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_problem(&text).with_context(|| format!("parsing {}", path.display()))
}

fn emit(text: &str, output: Option<&Path>) -> Result<()> {
    match output {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            match writeln!(out, "{text}") {
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
                r => r.context("writing to stdout"),
            }
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Solve {
            problem,
            d,
            ell,
            t,
            kmax,
            eps0,
            output,
            solver,
        } => {
            let prob = load(&problem)?;
            let params = AlgorithmParams {
                d,
                ell,
                t,
                kmax,
                eps0,
                settings: solver.settings()?,
                ..AlgorithmParams::default()
            };
            let report = run_algorithm(&prob, &params)?;
            emit(&serde_json::to_string_pretty(&report)?, output.as_deref())?;
            eprintln!(
                "{}: {:?}, f = {:?}, x = {:?}",
                report.name, report.status, report.f_value, report.x
            );
            Ok(if report.certified { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::Phi {
            problem,
            d,
            points,
            solver,
        } => {
            let (prob, map) = load(&problem)?.prepare()?;
            let phi = approximate_phi(&prob.g, &prob.y_constraints, prob.n, prob.p, d, &solver.settings()?)?;
            let gap = match oracle_solve(&prob, OracleResolution::default()) {
                Ok(o) => Some(l1_gap(&phi, |x| o.phi(x), points)),
                Err(e) => {
                    log::info!("no oracle comparison: {e}");
                    None
                }
            };
            let report = json!({
                "d": phi.d,
                "phi": phi.phi.to_string(),
                "rho_star": phi.rho_star,
                "rho_primal": phi.rho_primal,
                "certificate_residual": phi.certificate.residual(&phi.phi, &prob.g),
                "certificate_min_eigenvalue": phi.certificate.min_eigenvalue(),
                "l1_gap_vs_grid": gap,
                "map": map,
            });
            emit(&serde_json::to_string_pretty(&report)?, None)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Certify { problem, x, ell, solver } => {
            let (prob, map) = load(&problem)?.prepare()?;
            if x.len() != prob.n {
                bail!("expected a point with {} coordinates, got {}", prob.n, x.len());
            }
            let u = map.to_unit(&x);
            let c = certify(&u, &prob.g, &prob.y_constraints, ell, prob.y_ball_radius, &solver.settings()?)?;
            let report = json!({
                "x": x,
                "order": c.order,
                "rho": c.rho,
                "certified_nonpositive": c.certified_nonpositive,
                "maximizers": c.maximizers,
                "rank": c.rank,
            });
            emit(&serde_json::to_string_pretty(&report)?, None)?;
            Ok(if c.certified_nonpositive { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::Oracle {
            problem,
            x_points,
            y_points,
            json,
        } => {
            let prob = load(&problem)?;
            let o = oracle_solve(&prob, OracleResolution { x_points, y_points })?;
            if json {
                emit(&serde_json::to_string_pretty(&o.report(&prob.name))?, None)?;
            } else {
                emit(describe_oracle(&o).trim_end(), None)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::ExportSdpa {
            problem,
            stage,
            d,
            order,
            eps,
            x,
            output,
        } => {
            let (prob, map) = load(&problem)?.prepare()?;
            let name = if prob.name.is_empty() { "sip".to_string() } else { prob.name.clone() };
            let program = match stage {
                Stage::Jm => build_jm(&prob.g, &prob.y_constraints, prob.n, prob.p, d)?
                    .program()
                    .clone()
                    .with_name(name, format!("joint-marginal d={d}")),
                Stage::Outer => {
                    let phi = approximate_phi(&prob.g, &prob.y_constraints, prob.n, prob.p, d, &HierarchySettings::default())?;
                    let spec = OuterSpec {
                        f: prob.f.clone(),
                        p_list: prob.x_constraints.clone(),
                        phi: phi.phi,
                        d,
                        eps,
                        t: order,
                    };
                    let inst = spec.instance()?;
                    let t = order.unwrap_or(spec.t0().max(inst.minimal_order()) + 1);
                    build_relaxation(&inst, t)?.with_name(name, format!("outer d={d} eps={eps} t={t}"))
                }
                Stage::Inner => {
                    if x.len() != prob.n {
                        bail!("--x needs {} coordinates", prob.n);
                    }
                    let u = map.to_unit(&x);
                    let inst = inner_instance(&u, &prob.g, &prob.y_constraints, prob.y_ball_radius)?;
                    let l = order.unwrap_or(inst.minimal_order() + 1);
                    build_relaxation(&inst, l)?.with_name(name, format!("inner l={l} x={x:?}"))
                }
            };
            emit(&export_sdpa(&program), output.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

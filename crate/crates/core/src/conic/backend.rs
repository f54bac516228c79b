use std::path::PathBuf;
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};

use log::debug;

use super::sdpa::{export_sdpa, import_sdpa, read_csdp_solution};
use super::{solve, verify, ConicProgram, ConicSolution, SolveStatus, SolverSettings};
use crate::error::{Error, Result};

/// Environment variable selecting the backend (`embedded` or `sdpa-file`).
pub const SOLVER_ENV: &str = "SIPOP_SOLVER";
/// Command line of an external CSDP-compatible solver, invoked as
/// `<cmd> <problem.dat-s> <solution>`.
pub const SDPA_COMMAND_ENV: &str = "SIPOP_SDPA_CMD";

static FILE_COUNTER: AtomicUsize = AtomicUsize::new(0);

/// Solves through an SDPA file on disk. With a command the file is handed to
/// that solver and its CSDP-format solution is read back; without one the
/// file is re-imported and solved by the embedded solver, which exercises the
/// full text path.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SdpaFileBackend {
    pub command: Option<String>,
    pub workdir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum Backend {
    #[default]
    Embedded,
    SdpaFile(SdpaFileBackend),
}

impl Backend {
    pub fn from_name(name: &str) -> Result<Self> {
        match name.trim() {
            "embedded" => Ok(Backend::Embedded),
            "sdpa-file" => Ok(Backend::SdpaFile(SdpaFileBackend {
                command: std::env::var(SDPA_COMMAND_ENV).ok().filter(|c| !c.trim().is_empty()),
                workdir: None,
            })),
            other => Err(Error::InvalidInput(format!(
                "unknown solver backend '{other}' (expected 'embedded' or 'sdpa-file')"
            ))),
        }
    }

    /// Backend named by `SIPOP_SOLVER`, defaulting to the embedded solver.
    pub fn from_env() -> Result<Self> {
        match std::env::var(SOLVER_ENV) {
            Ok(v) if !v.trim().is_empty() => Self::from_name(&v),
            _ => Ok(Backend::Embedded),
        }
    }

    pub fn solve(&self, prog: &ConicProgram, settings: &SolverSettings) -> Result<ConicSolution> {
        match self {
            Backend::Embedded => solve(prog, settings),
            Backend::SdpaFile(b) => b.solve(prog, settings),
        }
    }
}

impl SdpaFileBackend {
    pub fn solve(&self, prog: &ConicProgram, settings: &SolverSettings) -> Result<ConicSolution> {
        prog.validate()?;
        let prog = prog.canonical();
        let dir = self.workdir.clone().unwrap_or_else(std::env::temp_dir);
        let stem = format!(
            "sipop-{}-{}",
            std::process::id(),
            FILE_COUNTER.fetch_add(1, Ordering::Relaxed)
        );
        let input = dir.join(format!("{stem}.dat-s"));
        let output = dir.join(format!("{stem}.sol"));
        std::fs::write(&input, export_sdpa(&prog))?;
        let result = self.run(&prog, &input, &output, settings);
        let _ = std::fs::remove_file(&input);
        let _ = std::fs::remove_file(&output);
        result
    }

    fn run(
        &self,
        prog: &ConicProgram,
        input: &PathBuf,
        output: &PathBuf,
        settings: &SolverSettings,
    ) -> Result<ConicSolution> {
        let Some(command) = &self.command else {
            let text = std::fs::read_to_string(input)?;
            let reread = import_sdpa(&text)?;
            return solve(&reread, settings);
        };
        let mut parts = command.split_whitespace();
        let program = parts
            .next()
            .ok_or_else(|| Error::External("empty solver command".into()))?;
        debug!("running {command} on {}", input.display());
        let status = Command::new(program)
            .args(parts)
            .arg(input)
            .arg(output)
            .output()
            .map_err(|e| Error::External(format!("cannot run '{command}': {e}")))?
            .status;
        // CSDP exit codes: 1 primal infeasible, 2 dual infeasible, 4 iteration limit
        match status.code() {
            Some(1) => return Ok(ConicSolution::with_status(prog, SolveStatus::Infeasible)),
            Some(2) => return Ok(ConicSolution::with_status(prog, SolveStatus::Unbounded)),
            Some(4) => return Ok(ConicSolution::with_status(prog, SolveStatus::MaxIterations)),
            _ => {}
        }
        let text = std::fs::read_to_string(output)
            .map_err(|e| Error::External(format!("'{command}' produced no solution ({status}): {e}")))?;
        let mut sol = read_csdp_solution(&text, prog)?;
        if !verify(prog, &sol, settings).passed {
            sol.status = SolveStatus::NumericalFailure;
        }
        Ok(sol)
    }
}

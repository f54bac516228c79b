//! Dense block semidefinite programs in standard primal form
//!
//! ```txt
//!     minimize    <C, X>
//!     subject to  <A_k, X> = b_k,   k = 1..m
//!                 X = diag(X_1, ..., X_B),  X_i PSD
//! ```
//!
//! with dual `maximize b'y  s.t.  S = C - sum_k y_k A_k  PSD`. Every data
//! matrix is symmetric and stored by its upper triangle, following the SDPA
//! convention: an entry `(i, j, v)` with `i < j` sets both `A[i][j]` and
//! `A[j][i]` to `v`.

mod backend;
mod ipm;
pub mod sdpa;
mod verify;

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use backend::{Backend, SdpaFileBackend};
pub use ipm::solve;
pub use verify::{verify, Verification};

/// One upper-triangular coordinate of a symmetric block matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub block: usize,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

/// Linear functional `X -> <A, X>` for a symmetric block matrix `A`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearFunctional {
    entries: Vec<Entry>,
}

impl LinearFunctional {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `value` to coordinate `(row, col)`; the pair is reordered so that
    /// `row <= col`.
    pub fn add(&mut self, block: usize, row: usize, col: usize, value: f64) {
        let (row, col) = if row <= col { (row, col) } else { (col, row) };
        if let Some(e) = self
            .entries
            .iter_mut()
            .find(|e| e.block == block && e.row == row && e.col == col)
        {
            e.value += value;
        } else {
            self.entries.push(Entry {
                block,
                row,
                col,
                value,
            });
        }
    }

    /// Adds `value * X[row][col]` to the functional, accounting for the
    /// symmetric doubling of off-diagonal coordinates.
    pub fn add_element(&mut self, block: usize, row: usize, col: usize, value: f64) {
        let v = if row == col { value } else { 0.5 * value };
        self.add(block, row, col, v);
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries sorted by `(block, row, col)` with exact zeros dropped.
    pub fn canonical(&self) -> Self {
        let mut entries: Vec<Entry> = self.entries.iter().copied().filter(|e| e.value != 0.0).collect();
        entries.sort_by_key(|e| (e.block, e.row, e.col));
        Self { entries }
    }

    pub fn apply(&self, blocks: &[DMatrix<f64>]) -> f64 {
        self.entries
            .iter()
            .map(|e| {
                let x = blocks[e.block][(e.row, e.col)];
                if e.row == e.col {
                    e.value * x
                } else {
                    2.0 * e.value * x
                }
            })
            .sum()
    }

    /// Dense symmetric blocks of `A`.
    pub fn to_dense(&self, sizes: &[usize]) -> Vec<DMatrix<f64>> {
        let mut out: Vec<DMatrix<f64>> = sizes.iter().map(|&n| DMatrix::zeros(n, n)).collect();
        self.accumulate_into(&mut out, 1.0);
        out
    }

    /// `out += scale * A`.
    pub fn accumulate_into(&self, out: &mut [DMatrix<f64>], scale: f64) {
        for e in &self.entries {
            out[e.block][(e.row, e.col)] += scale * e.value;
            if e.row != e.col {
                out[e.block][(e.col, e.row)] += scale * e.value;
            }
        }
    }
}

/// A constraint `<A, X> = rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Equality {
    pub functional: LinearFunctional,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicProgram {
    pub name: String,
    /// Free-form provenance label carried into reports and SDPA comments.
    pub tag: String,
    block_sizes: Vec<usize>,
    objective: LinearFunctional,
    equalities: Vec<Equality>,
}

impl ConicProgram {
    pub fn new(block_sizes: Vec<usize>) -> Self {
        Self {
            name: String::new(),
            tag: String::new(),
            block_sizes,
            objective: LinearFunctional::new(),
            equalities: Vec::new(),
        }
    }

    pub fn with_name(mut self, name: impl Into<String>, tag: impl Into<String>) -> Self {
        self.name = name.into();
        self.tag = tag.into();
        self
    }

    pub fn block_sizes(&self) -> &[usize] {
        &self.block_sizes
    }

    pub fn objective(&self) -> &LinearFunctional {
        &self.objective
    }

    pub fn objective_mut(&mut self) -> &mut LinearFunctional {
        &mut self.objective
    }

    pub fn set_objective(&mut self, objective: LinearFunctional) {
        self.objective = objective;
    }

    pub fn equalities(&self) -> &[Equality] {
        &self.equalities
    }

    pub fn num_equalities(&self) -> usize {
        self.equalities.len()
    }

    /// Appends an equality and returns its index (the position of its dual
    /// multiplier in `ConicSolution::y`).
    pub fn add_equality(&mut self, functional: LinearFunctional, rhs: f64) -> usize {
        self.equalities.push(Equality { functional, rhs });
        self.equalities.len() - 1
    }

    /// Total number of rows over all blocks.
    pub fn order(&self) -> usize {
        self.block_sizes.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_sizes.is_empty() {
            return Err(Error::InvalidInput("program has no PSD blocks".into()));
        }
        if let Some(b) = self.block_sizes.iter().position(|&n| n == 0) {
            return Err(Error::InvalidInput(format!("block {b} has size 0")));
        }
        let check = |f: &LinearFunctional, what: &str| -> Result<()> {
            for e in f.entries() {
                let ok = e.block < self.block_sizes.len()
                    && e.row <= e.col
                    && e.col < self.block_sizes[e.block]
                    && e.value.is_finite();
                if !ok {
                    return Err(Error::InvalidInput(format!("{what}: invalid entry {e:?}")));
                }
            }
            Ok(())
        };
        check(&self.objective, "objective")?;
        for (k, eq) in self.equalities.iter().enumerate() {
            check(&eq.functional, &format!("equality {k}"))?;
            if !eq.rhs.is_finite() {
                return Err(Error::InvalidInput(format!("equality {k}: non-finite right-hand side")));
            }
        }
        Ok(())
    }

    /// Same program with all functionals in canonical entry order.
    pub fn canonical(&self) -> Self {
        Self {
            name: self.name.clone(),
            tag: self.tag.clone(),
            block_sizes: self.block_sizes.clone(),
            objective: self.objective.canonical(),
            equalities: self
                .equalities
                .iter()
                .map(|e| Equality {
                    functional: e.functional.canonical(),
                    rhs: e.rhs,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIterations,
    NumericalFailure,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::MaxIterations => "max-iterations",
            SolveStatus::NumericalFailure => "numerical-failure",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Bound on relative primal/dual residuals and on negative eigenvalues.
    pub feasibility_tol: f64,
    /// Bound on `|pobj - dobj| / max(1, |pobj|, |dobj|)`.
    pub gap_tol: f64,
    pub max_iterations: usize,
    /// Threshold for the normalized Farkas certificates.
    pub infeasibility_tol: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-8,
            gap_tol: 1e-8,
            max_iterations: 200,
            infeasibility_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub x: Vec<DMatrix<f64>>,
    /// One multiplier per equality, in program order.
    pub y: Vec<f64>,
    pub s: Vec<DMatrix<f64>>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub iterations: usize,
}

impl ConicSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    /// Empty iterate carrying only a status.
    pub(crate) fn with_status(prog: &ConicProgram, status: SolveStatus) -> Self {
        let zeros = || prog.block_sizes().iter().map(|&n| DMatrix::zeros(n, n)).collect();
        Self {
            status,
            x: zeros(),
            y: vec![0.0; prog.num_equalities()],
            s: zeros(),
            primal_objective: f64::NAN,
            dual_objective: f64::NAN,
            iterations: 0,
        }
    }
}

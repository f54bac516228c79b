use nalgebra::DMatrix;

use super::{ConicProgram, ConicSolution, SolverSettings};

/// Independent recomputation of the optimality conditions of a solution.
#[derive(Debug, Clone, PartialEq)]
pub struct Verification {
    pub passed: bool,
    /// `||b - A(X)|| / (1 + ||b||)`.
    pub primal_residual: f64,
    /// `||C - A^T y - S||_F / (1 + ||C||_F)`.
    pub dual_residual: f64,
    /// Relative duality gap.
    pub gap: f64,
    /// Smallest eigenvalue of `X` relative to `max(1, lambda_max(X))`.
    pub min_eig_x: f64,
    /// Smallest eigenvalue of `S` relative to `max(1, lambda_max(S))`.
    pub min_eig_s: f64,
}

/// Slack factor applied to the solver tolerances when re-checking.
const SLACK: f64 = 10.0;

fn relative_min_eig(blocks: &[DMatrix<f64>]) -> f64 {
    blocks
        .iter()
        .map(|b| {
            let sym = (b + b.transpose()) * 0.5;
            let ev = sym.symmetric_eigenvalues();
            ev.min() / 1f64.max(ev.max())
        })
        .fold(f64::INFINITY, f64::min)
}

pub fn verify(prog: &ConicProgram, sol: &ConicSolution, settings: &SolverSettings) -> Verification {
    let sizes = prog.block_sizes();
    let shape_ok = sol.x.len() == sizes.len()
        && sol.s.len() == sizes.len()
        && sol.y.len() == prog.num_equalities()
        && sol.x.iter().zip(sizes).all(|(m, &n)| m.nrows() == n && m.ncols() == n)
        && sol.s.iter().zip(sizes).all(|(m, &n)| m.nrows() == n && m.ncols() == n);
    if !shape_ok {
        return Verification {
            passed: false,
            primal_residual: f64::INFINITY,
            dual_residual: f64::INFINITY,
            gap: f64::INFINITY,
            min_eig_x: f64::NEG_INFINITY,
            min_eig_s: f64::NEG_INFINITY,
        };
    }

    let mut rp2 = 0.0;
    let mut b2 = 0.0;
    for eq in prog.equalities() {
        let r = eq.rhs - eq.functional.apply(&sol.x);
        rp2 += r * r;
        b2 += eq.rhs * eq.rhs;
    }
    let primal_residual = rp2.sqrt() / (1.0 + b2.sqrt());

    let c = prog.objective().to_dense(sizes);
    let mut rd = c.clone();
    for (eq, &y) in prog.equalities().iter().zip(&sol.y) {
        eq.functional.accumulate_into(&mut rd, -y);
    }
    let cnorm = c.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt();
    let rd_norm = rd
        .iter()
        .zip(&sol.s)
        .map(|(r, s)| (r - s).norm_squared())
        .sum::<f64>()
        .sqrt();
    let dual_residual = rd_norm / (1.0 + cnorm);

    let pobj = prog.objective().apply(&sol.x);
    let dobj: f64 = prog.equalities().iter().zip(&sol.y).map(|(e, y)| e.rhs * y).sum();
    let gap = (pobj - dobj).abs() / 1f64.max(pobj.abs()).max(dobj.abs());

    let min_eig_x = relative_min_eig(&sol.x);
    let min_eig_s = relative_min_eig(&sol.s);

    let ftol = SLACK * settings.feasibility_tol;
    let passed = primal_residual.is_finite()
        && dual_residual.is_finite()
        && primal_residual <= ftol
        && dual_residual <= ftol
        && gap <= SLACK * settings.gap_tol
        && min_eig_x >= -ftol
        && min_eig_s >= -ftol;
    Verification {
        passed,
        primal_residual,
        dual_residual,
        gap,
        min_eig_x,
        min_eig_s,
    }
}

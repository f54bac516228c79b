//! Upper bounds `rho_l(x) >= Phi(x) = max { g(x, y) : h_j(x, y) >= 0 }` for a
//! fixed `x`, computed by the moment hierarchy in `y`.

use log::debug;
use serde::{Deserialize, Serialize};

use crate::conic::SolveStatus;
use crate::error::{Error, Result};
use crate::hierarchy::{extract_minimizers, rank_check, solve_order, HierarchySettings, PopInstance};
use crate::poly::Polynomial;

/// Constant constraints below this value make `Y_x` empty.
const CONSTANT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateResult {
    pub x: Vec<f64>,
    pub order: usize,
    /// `rho_l(x)`, an upper bound on `Phi(x)` when the solve is optimal.
    pub rho: f64,
    /// `rho <= 0`, hence `Phi(x) <= 0`.
    pub certified_nonpositive: bool,
    /// Inner maximizers, when the rank test passed and they verified.
    pub maximizers: Option<Vec<Vec<f64>>>,
    pub rank: Option<usize>,
    pub status: SolveStatus,
}

/// Inner problem at `x`: objective `-g(x, .)` (a minimization) and the
/// non-constant constraints `h_j(x, .)`. Optionally bounded by a ball.
pub fn inner_instance(x: &[f64], g: &Polynomial, h: &[Polynomial], y_ball_radius: Option<f64>) -> Result<PopInstance> {
    let gx = g.substitute_x(x)?;
    let mut constraints = Vec::with_capacity(h.len() + 1);
    for hj in h {
        let hx = hj.substitute_x(x)?;
        if hx.degree() == 0 {
            let c = hx.coeff(&crate::poly::Exponent::zero(hx.dim()));
            if c < -CONSTANT_TOL {
                return Err(Error::InnerInfeasible { x: x.to_vec() });
            }
            continue;
        }
        constraints.push(hx);
    }
    let inst = PopInstance::new(-&gx, constraints)?;
    Ok(match y_ball_radius {
        Some(r) => inst.with_ball(r * r),
        None => inst,
    })
}

/// Smallest admissible inner order: `max(ceil(deg_y h_j / 2), ceil(deg_y g / 2), 1)`.
pub fn minimal_inner_order(x: &[f64], g: &Polynomial, h: &[Polynomial], y_ball_radius: Option<f64>) -> Result<usize> {
    Ok(inner_instance(x, g, h, y_ball_radius)?.minimal_order())
}

/// Computes `rho_order(x)`; `order = None` uses the smallest admissible
/// order plus one.
pub fn certify(
    x: &[f64],
    g: &Polynomial,
    h: &[Polynomial],
    order: Option<usize>,
    y_ball_radius: Option<f64>,
    settings: &HierarchySettings,
) -> Result<CertificateResult> {
    let inst = inner_instance(x, g, h, y_ball_radius)?;
    let order = order.unwrap_or(inst.minimal_order() + 1);
    let res = solve_order(&inst, order, settings)?;
    match res.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => return Err(Error::InnerInfeasible { x: x.to_vec() }),
        other => return Err(Error::Solver(other)),
    }
    let rho = -res.value;
    let mut maximizers = None;
    let rank = rank_check(&res, inst.rank_shift(), settings.rank_tol);
    if let Some(r) = rank {
        let ex = extract_minimizers(&inst, &res, r, settings);
        if ex.certified {
            maximizers = Some(ex.points);
        }
    }
    debug!("certificate at {x:?}: rho_{order} = {rho:.9}, rank {rank:?}");
    Ok(CertificateResult {
        x: x.to_vec(),
        order,
        rho,
        certified_nonpositive: rho <= 0.0,
        maximizers,
        rank,
        status: res.status,
    })
}

/// Half-degree of `p` in the variables after the first `n`.
pub fn half_degree_in_y(p: &Polynomial, n: usize) -> usize {
    p.degree_in(n..p.dim()).div_ceil(2)
}

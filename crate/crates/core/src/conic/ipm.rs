//! Infeasible-start primal-dual path-following method.
//!
//! Search directions use the HKM scaling (`dX = (R_c - X dS) S^{-1}`, then
//! symmetrized) with a Mehrotra predictor-corrector step. The Schur complement
//! `M_kl = tr(A_k X A_l S^{-1})` is assembled from the sparse constraint
//! entries block by block. Consistency of the equality system is settled
//! before iterating: contradictory rows yield `Infeasible` immediately and
//! consistent redundant rows are dropped (their multiplier is reported as 0).

use std::collections::HashMap;

use log::{debug, trace};
use nalgebra::{DMatrix, DVector};

use super::{verify, ConicProgram, ConicSolution, SolveStatus, SolverSettings};
use crate::error::Result;

const STEP_FRACTION: f64 = 0.95;
const DEPENDENCY_TOL: f64 = 1e-10;
const STALL_LIMIT: usize = 8;
/// Equality residual of a search direction, relative to `1 + |b|`, above
/// which the direction is projected back onto `A(dX) = r_p`. The projection
/// is dropped when it would halve the primal step: near a low-rank optimum it
/// pushes `dX` out of the range of the nearly singular `X`.
const PROJECTION_TOL: f64 = 1e-10;
const BACKTRACK_LIMIT: usize = 30;
const BACKTRACK_FACTOR: f64 = 0.7;
/// Centering steps taken after convergence. Near the optimum the moment
/// error of an off-center iterate is of order `sqrt(mu)`, against `mu` on the
/// central path.
const POLISH_STEPS: usize = 3;

type BlockEntries = Vec<(usize, usize, f64)>;

struct Constraint {
    // (block, full symmetric entries of that block)
    parts: Vec<(usize, BlockEntries)>,
}

struct Data {
    sizes: Vec<usize>,
    c: Vec<DMatrix<f64>>,
    cons: Vec<Constraint>,
    b: DVector<f64>,
    // per block: (constraint index, position in cons[k].parts)
    touching: Vec<Vec<(usize, usize)>>,
    // Cholesky factor of the Gram matrix <A_k, A_l> (rows are independent
    // after presolve)
    gram: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
}

impl Data {
    fn from_program(prog: &ConicProgram, rows: &[usize]) -> Self {
        let sizes = prog.block_sizes().to_vec();
        let c = prog.objective().to_dense(&sizes);
        let mut cons = Vec::with_capacity(rows.len());
        let mut b = DVector::zeros(rows.len());
        for (r, &k) in rows.iter().enumerate() {
            let eq = &prog.equalities()[k];
            b[r] = eq.rhs;
            let mut by_block: Vec<(usize, BlockEntries)> = Vec::new();
            for e in eq.functional.entries() {
                let slot = match by_block.iter().position(|(blk, _)| *blk == e.block) {
                    Some(p) => p,
                    None => {
                        by_block.push((e.block, Vec::new()));
                        by_block.len() - 1
                    }
                };
                let list = &mut by_block[slot].1;
                list.push((e.row, e.col, e.value));
                if e.row != e.col {
                    list.push((e.col, e.row, e.value));
                }
            }
            cons.push(Constraint { parts: by_block });
        }
        let mut touching = vec![Vec::new(); sizes.len()];
        for (k, con) in cons.iter().enumerate() {
            for (p, (blk, _)) in con.parts.iter().enumerate() {
                touching[*blk].push((k, p));
            }
        }
        let mut data = Self {
            sizes,
            c,
            cons,
            b,
            touching,
            gram: None,
        };
        data.gram = data.gram_matrix().cholesky();
        data
    }

    fn gram_matrix(&self) -> DMatrix<f64> {
        let m = self.m();
        let mut positions: HashMap<(usize, usize, usize), Vec<(usize, f64)>> = HashMap::new();
        for (k, con) in self.cons.iter().enumerate() {
            for (blk, ents) in &con.parts {
                for &(i, j, v) in ents {
                    positions.entry((*blk, i, j)).or_default().push((k, v));
                }
            }
        }
        let mut gram = DMatrix::zeros(m, m);
        for list in positions.values() {
            for &(k, v) in list {
                for &(l, w) in list {
                    gram[(k, l)] += v * w;
                }
            }
        }
        gram
    }

    /// Minimal-norm correction making `A(dx) = target`.
    fn project(&self, dx: &mut [DMatrix<f64>], target: &DVector<f64>, threshold: f64) {
        let Some(gram) = &self.gram else {
            return;
        };
        let resid = target - self.apply(dx);
        if resid.norm() <= threshold {
            return;
        }
        let w = gram.solve(&resid);
        let fix = self.adjoint(&w);
        for (d, f) in dx.iter_mut().zip(fix) {
            *d += f;
        }
    }

    fn m(&self) -> usize {
        self.cons.len()
    }

    /// `A(G)_k = tr(A_k G)`; only the symmetric part of `G` matters.
    fn apply(&self, g: &[DMatrix<f64>]) -> DVector<f64> {
        DVector::from_iterator(
            self.m(),
            self.cons.iter().map(|con| {
                con.parts
                    .iter()
                    .map(|(blk, ents)| ents.iter().map(|&(i, j, v)| v * g[*blk][(i, j)]).sum::<f64>())
                    .sum::<f64>()
            }),
        )
    }

    /// `sum_k y_k A_k`.
    fn adjoint(&self, y: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let mut out: Vec<DMatrix<f64>> = self.sizes.iter().map(|&n| DMatrix::zeros(n, n)).collect();
        for (k, con) in self.cons.iter().enumerate() {
            if y[k] == 0.0 {
                continue;
            }
            for (blk, ents) in &con.parts {
                for &(i, j, v) in ents {
                    out[*blk][(i, j)] += y[k] * v;
                }
            }
        }
        out
    }

    fn schur(&self, x: &[DMatrix<f64>], sinv: &[DMatrix<f64>]) -> DMatrix<f64> {
        let m = self.m();
        let mut out = DMatrix::zeros(m, m);
        for (blk, list) in self.touching.iter().enumerate() {
            let (xb, sb) = (&x[blk], &sinv[blk]);
            for (a, &(k, pk)) in list.iter().enumerate() {
                let ek = &self.cons[k].parts[pk].1;
                for &(l, pl) in &list[a..] {
                    let el = &self.cons[l].parts[pl].1;
                    let mut acc = 0.0;
                    for &(i, j, v) in ek {
                        for &(p, q, w) in el {
                            acc += v * w * xb[(j, p)] * sb[(q, i)];
                        }
                    }
                    out[(k, l)] += acc;
                }
            }
        }
        for k in 0..m {
            for l in 0..k {
                out[(k, l)] = out[(l, k)];
            }
        }
        out
    }
}

enum Presolve {
    Rows(Vec<usize>),
    Inconsistent(usize),
}

/// Detects linearly dependent equalities through a sequential Cholesky
/// factorization of the Gram matrix `<A_k, A_l>`.
fn presolve(prog: &ConicProgram) -> Presolve {
    let m = prog.num_equalities();
    let mut positions: HashMap<(usize, usize, usize), Vec<(usize, f64)>> = HashMap::new();
    for (k, eq) in prog.equalities().iter().enumerate() {
        for e in eq.functional.entries() {
            // trace inner product weight: off-diagonal coordinates appear twice
            let w = if e.row == e.col { 1.0 } else { 2.0_f64.sqrt() };
            positions.entry((e.block, e.row, e.col)).or_default().push((k, w * e.value));
        }
    }
    let mut gram = DMatrix::<f64>::zeros(m, m);
    for list in positions.values() {
        for &(k, v) in list {
            for &(l, w) in list {
                gram[(k, l)] += v * w;
            }
        }
    }
    let rhs: Vec<f64> = prog.equalities().iter().map(|e| e.rhs).collect();

    let mut kept: Vec<usize> = Vec::new();
    // rows of the lower-triangular factor over `kept`
    let mut lrows: Vec<Vec<f64>> = Vec::new();
    for k in 0..m {
        let g: Vec<f64> = kept.iter().map(|&i| gram[(i, k)]).collect();
        let mut l = vec![0.0; kept.len()];
        for i in 0..kept.len() {
            let s: f64 = (0..i).map(|j| lrows[i][j] * l[j]).sum();
            l[i] = (g[i] - s) / lrows[i][i];
        }
        let d = gram[(k, k)] - l.iter().map(|v| v * v).sum::<f64>();
        if gram[(k, k)] > 0.0 && d > DEPENDENCY_TOL * gram[(k, k)] {
            let mut row = l;
            row.push(d.sqrt());
            lrows.push(row);
            kept.push(k);
            continue;
        }
        // a_k = sum_i c_i a_{kept_i} with L^T c = l
        let mut c = vec![0.0; kept.len()];
        for i in (0..kept.len()).rev() {
            let s: f64 = (i + 1..kept.len()).map(|j| lrows[j][i] * c[j]).sum();
            c[i] = (l[i] - s) / lrows[i][i];
        }
        let implied: f64 = c.iter().zip(&kept).map(|(ci, &i)| ci * rhs[i]).sum();
        let scale = 1.0 + rhs[k].abs() + c.iter().zip(&kept).map(|(ci, &i)| (ci * rhs[i]).abs()).sum::<f64>();
        if (rhs[k] - implied).abs() > 1e-9 * scale {
            return Presolve::Inconsistent(k);
        }
        debug!("equality {k} is redundant; dropped");
    }
    Presolve::Rows(kept)
}

fn inner(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn frob(a: &[DMatrix<f64>]) -> f64 {
    a.iter().map(|x| x.norm_squared()).sum::<f64>().sqrt()
}

fn sym(mut a: DMatrix<f64>) -> DMatrix<f64> {
    symmetrize(&mut a);
    a
}

fn symmetrize(a: &mut DMatrix<f64>) {
    let t = a.transpose();
    *a += t;
    *a *= 0.5;
}

/// Largest `alpha` keeping `X + alpha dX` PSD, from the lower Cholesky factor of `X`.
fn max_step(l: &DMatrix<f64>, dx: &DMatrix<f64>) -> f64 {
    let Some(t) = l.solve_lower_triangular(dx) else {
        return 0.0;
    };
    let Some(w) = l.solve_lower_triangular(&t.transpose()) else {
        return 0.0;
    };
    let mut w = w;
    symmetrize(&mut w);
    let lmin = w.symmetric_eigenvalues().min();
    if !lmin.is_finite() {
        0.0
    } else if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

fn max_eigenvalue(blocks: &[DMatrix<f64>]) -> f64 {
    blocks
        .iter()
        .map(|b| b.clone().symmetric_eigenvalues().max())
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Clone)]
struct Iterate {
    x: Vec<DMatrix<f64>>,
    y: DVector<f64>,
    s: Vec<DMatrix<f64>>,
}

struct Outcome {
    status: SolveStatus,
    it: Iterate,
    iterations: usize,
}

fn initial_point(data: &Data) -> Iterate {
    let mut x = Vec::with_capacity(data.sizes.len());
    let mut s = Vec::with_capacity(data.sizes.len());
    for (blk, &n) in data.sizes.iter().enumerate() {
        let nf = n as f64;
        let mut xi: f64 = 10.0_f64.max(nf.sqrt());
        let mut eta: f64 = 10.0_f64.max(nf.sqrt()).max(data.c[blk].norm());
        for &(k, p) in &data.touching[blk] {
            let anorm = data.cons[k].parts[p].1.iter().map(|e| e.2 * e.2).sum::<f64>().sqrt();
            xi = xi.max(nf * (1.0 + data.b[k].abs()) / (1.0 + anorm));
            eta = eta.max(anorm);
        }
        x.push(DMatrix::identity(n, n) * xi);
        s.push(DMatrix::identity(n, n) * eta);
    }
    Iterate {
        x,
        y: DVector::zeros(data.m()),
        s,
    }
}

struct Direction {
    dx: Vec<DMatrix<f64>>,
    dy: DVector<f64>,
    ds: Vec<DMatrix<f64>>,
}

fn run(data: &Data, settings: &SolverSettings) -> Outcome {
    let nblocks = data.sizes.len();
    let n_total: usize = data.sizes.iter().sum();
    let bnorm = data.b.norm();
    let cnorm = frob(&data.c);
    let mut it = initial_point(data);
    let mut stalled = 0usize;
    // converged iterate and number of centering steps still to take
    let mut polish: Option<(Iterate, usize)> = None;

    for iter in 0..settings.max_iterations {
        let ax = data.apply(&it.x);
        let rp = &data.b - &ax;
        let aty = data.adjoint(&it.y);
        let rd: Vec<DMatrix<f64>> = (0..nblocks).map(|i| &data.c[i] - &aty[i] - &it.s[i]).collect();
        let pobj = inner(&data.c, &it.x);
        let dobj = data.b.dot(&it.y);
        let pinf = rp.norm() / (1.0 + bnorm);
        let dinf = frob(&rd) / (1.0 + cnorm);
        let gap = (pobj - dobj).abs() / 1f64.max(pobj.abs()).max(dobj.abs());
        trace!("iter {iter}: pobj {pobj:.10e} dobj {dobj:.10e} pinf {pinf:.2e} dinf {dinf:.2e} gap {gap:.2e}");

        let converged = pinf <= settings.feasibility_tol && dinf <= settings.feasibility_tol && gap <= settings.gap_tol;
        polish = match (polish.take(), converged) {
            (None, true) if POLISH_STEPS > 0 => Some((it.clone(), POLISH_STEPS)),
            (None, true) => None,
            (Some((_, 0)), true) => {
                return Outcome {
                    status: SolveStatus::Optimal,
                    it,
                    iterations: iter,
                }
            }
            (Some((_, left)), true) => Some((it.clone(), left)),
            (Some((saved, _)), false) => {
                return Outcome {
                    status: SolveStatus::Optimal,
                    it: saved,
                    iterations: iter,
                }
            }
            (None, false) => None,
        };
        if let Some((_, left)) = polish.as_mut() {
            *left -= 1;
        }
        let centering = polish.is_some();
        if converged && !centering {
            return Outcome {
                status: SolveStatus::Optimal,
                it,
                iterations: iter,
            };
        }
        if dobj > 0.0 && max_eigenvalue(&aty) <= settings.infeasibility_tol * dobj {
            debug!("primal infeasibility certificate at iteration {iter}");
            return Outcome {
                status: SolveStatus::Infeasible,
                it,
                iterations: iter,
            };
        }
        if pobj < 0.0 && ax.norm() <= settings.infeasibility_tol * (-pobj) && dinf > settings.feasibility_tol {
            debug!("dual infeasibility certificate at iteration {iter}");
            return Outcome {
                status: SolveStatus::Unbounded,
                it,
                iterations: iter,
            };
        }

        let mut lx = Vec::with_capacity(nblocks);
        let mut ls = Vec::with_capacity(nblocks);
        let mut sinv = Vec::with_capacity(nblocks);
        for i in 0..nblocks {
            let (Some(cx), Some(cs)) = (it.x[i].clone().cholesky(), it.s[i].clone().cholesky()) else {
                return Outcome {
                    status: SolveStatus::NumericalFailure,
                    it,
                    iterations: iter,
                };
            };
            sinv.push(cs.inverse());
            lx.push(cx.l());
            ls.push(cs.l());
        }
        let mu = inner(&it.x, &it.s) / n_total as f64;

        let schur = data.schur(&it.x, &sinv);
        let Some(factor) = factor_schur(schur.clone()) else {
            return Outcome {
                status: SolveStatus::NumericalFailure,
                it,
                iterations: iter,
            };
        };

        let xrs: Vec<DMatrix<f64>> = (0..nblocks).map(|i| &it.x[i] * &rd[i] * &sinv[i]).collect();
        let a_xrs = data.apply(&xrs);

        let direction = |h: Vec<DMatrix<f64>>| -> Direction {
            let rhs = &rp - data.apply(&h) + &a_xrs;
            let mut dy = factor.solve(&rhs);
            // one step of iterative refinement
            let resid = &rhs - &schur * &dy;
            dy += factor.solve(&resid);
            let atdy = data.adjoint(&dy);
            let ds: Vec<DMatrix<f64>> = (0..nblocks).map(|i| &rd[i] - &atdy[i]).collect();
            let dx: Vec<DMatrix<f64>> = (0..nblocks)
                .map(|i| {
                    let mut d = &h[i] - &it.x[i] * &ds[i] * &sinv[i];
                    symmetrize(&mut d);
                    d
                })
                .collect();
            let mut projected = dx.clone();
            data.project(&mut projected, &rp, PROJECTION_TOL * (1.0 + bnorm));
            let primal_step =
                |d: &[DMatrix<f64>]| (0..nblocks).map(|i| max_step(&lx[i], &d[i])).fold(f64::INFINITY, f64::min);
            let dx = if primal_step(&projected).min(1.0) >= 0.5 * primal_step(&dx).min(1.0) {
                projected
            } else {
                dx
            };
            Direction { dx, dy, ds }
        };
        let steps = |d: &Direction| -> (f64, f64) {
            let ap = (0..nblocks).map(|i| max_step(&lx[i], &d.dx[i])).fold(f64::INFINITY, f64::min);
            let ad = (0..nblocks).map(|i| max_step(&ls[i], &d.ds[i])).fold(f64::INFINITY, f64::min);
            (ap, ad)
        };

        // predictor
        let pred = direction(it.x.iter().map(|x| -x).collect());
        let (ap, ad) = steps(&pred);
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let xs_next: f64 = (0..nblocks)
            .map(|i| (&it.x[i] + &pred.dx[i] * ap).dot(&(&it.s[i] + &pred.ds[i] * ad)))
            .sum();
        let ratio = (xs_next / (mu * n_total as f64)).clamp(0.0, 1.0);
        let sigma = ratio.powi(3).max(if pinf > 1e-2 || dinf > 1e-2 { 0.1 * ratio } else { 0.0 });

        // corrector, or a pure centering step while polishing
        let h: Vec<DMatrix<f64>> = if centering {
            (0..nblocks).map(|i| &sinv[i] * mu - &it.x[i]).collect()
        } else {
            (0..nblocks)
                .map(|i| &sinv[i] * (sigma * mu) - &it.x[i] - &pred.dx[i] * &pred.ds[i] * &sinv[i])
                .collect()
        };
        let corr = direction(h);
        let (ap, ad) = steps(&corr);
        let gamma = STEP_FRACTION;
        let ap = (gamma * ap).min(1.0);
        let ad = (gamma * ad).min(1.0);
        if !(ap.is_finite() && ad.is_finite()) || corr.dy.iter().any(|v| !v.is_finite()) {
            return Outcome {
                status: SolveStatus::NumericalFailure,
                it,
                iterations: iter,
            };
        }
        if ap < 1e-10 && ad < 1e-10 {
            stalled += 1;
            if stalled >= STALL_LIMIT {
                debug!("stalled at iteration {iter}");
                return Outcome {
                    status: SolveStatus::NumericalFailure,
                    it,
                    iterations: iter,
                };
            }
        } else {
            stalled = 0;
        }

        // the eigenvalue-based step can still leave a numerically singular
        // iterate when X or S is badly conditioned; shrink until both factor
        let (mut ap, mut ad) = (ap, ad);
        let mut next = None;
        for _ in 0..BACKTRACK_LIMIT {
            let x: Vec<DMatrix<f64>> = (0..nblocks).map(|i| sym(&it.x[i] + &corr.dx[i] * ap)).collect();
            let s: Vec<DMatrix<f64>> = (0..nblocks).map(|i| sym(&it.s[i] + &corr.ds[i] * ad)).collect();
            let x_ok = x.iter().all(|m| m.clone().cholesky().is_some());
            let s_ok = s.iter().all(|m| m.clone().cholesky().is_some());
            if x_ok && s_ok {
                next = Some((x, s));
                break;
            }
            if !x_ok {
                ap *= BACKTRACK_FACTOR;
            }
            if !s_ok {
                ad *= BACKTRACK_FACTOR;
            }
        }
        let Some((x, s)) = next else {
            return Outcome {
                status: SolveStatus::NumericalFailure,
                it,
                iterations: iter,
            };
        };
        it.x = x;
        it.s = s;
        it.y += &corr.dy * ad;
    }
    Outcome {
        status: SolveStatus::MaxIterations,
        it,
        iterations: settings.max_iterations,
    }
}

enum SchurFactor {
    Cholesky(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl SchurFactor {
    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        match self {
            SchurFactor::Cholesky(c) => c.solve(rhs),
            SchurFactor::Lu(lu) => lu.solve(rhs).unwrap_or_else(|| DVector::from_element(rhs.len(), f64::NAN)),
        }
    }
}

fn factor_schur(m: DMatrix<f64>) -> Option<SchurFactor> {
    if m.nrows() == 0 {
        return m.cholesky().map(SchurFactor::Cholesky);
    }
    let scale = m.diagonal().amax().max(f64::MIN_POSITIVE);
    if let Some(c) = m.clone().cholesky() {
        return Some(SchurFactor::Cholesky(c));
    }
    for reg in [1e-14, 1e-12, 1e-10] {
        let mut r = m.clone();
        for i in 0..r.nrows() {
            r[(i, i)] += reg * scale;
        }
        if let Some(c) = r.cholesky() {
            return Some(SchurFactor::Cholesky(c));
        }
    }
    let lu = m.lu();
    if lu.is_invertible() {
        Some(SchurFactor::Lu(lu))
    } else {
        None
    }
}

/// Solves `prog`; malformed programs are rejected, every other outcome is
/// reported through `ConicSolution::status`. A reported `Optimal` has passed
/// [`verify`].
pub fn solve(prog: &ConicProgram, settings: &SolverSettings) -> Result<ConicSolution> {
    prog.validate()?;
    let rows = match presolve(prog) {
        Presolve::Rows(rows) => rows,
        Presolve::Inconsistent(k) => {
            debug!("equality {k} contradicts earlier equalities");
            return Ok(ConicSolution::with_status(prog, SolveStatus::Infeasible));
        }
    };
    let data = Data::from_program(prog, &rows);
    let out = run(&data, settings);

    let mut y = vec![0.0; prog.num_equalities()];
    for (r, &k) in rows.iter().enumerate() {
        y[k] = out.it.y[r];
    }
    let mut sol = ConicSolution {
        status: out.status,
        primal_objective: prog.objective().apply(&out.it.x),
        dual_objective: prog.equalities().iter().zip(&y).map(|(e, v)| e.rhs * v).sum(),
        x: out.it.x,
        y,
        s: out.it.s,
        iterations: out.iterations,
    };
    if sol.status == SolveStatus::Optimal {
        let check = verify(prog, &sol, settings);
        if !check.passed {
            debug!("post-solve verification failed: {check:?}");
            sol.status = SolveStatus::NumericalFailure;
        }
    }
    debug!(
        "{}: {} after {} iterations (pobj {:.9e}, dobj {:.9e})",
        prog.name, sol.status, sol.iterations, sol.primal_objective, sol.dual_objective
    );
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::LinearFunctional;

    fn unit(block: usize, i: usize, j: usize) -> LinearFunctional {
        let mut f = LinearFunctional::new();
        f.add_element(block, i, j, 1.0);
        f
    }

    #[test]
    fn min_x_squared_moment_form() {
        // minimize z2 s.t. [[1, z1], [z1, z2]] PSD
        let mut p = ConicProgram::new(vec![2]);
        p.set_objective(unit(0, 1, 1));
        p.add_equality(unit(0, 0, 0), 1.0);
        let sol = solve(&p, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!(sol.primal_objective.abs() < 1e-7, "{}", sol.primal_objective);
    }

    #[test]
    fn trivial_normalization() {
        let mut p = ConicProgram::new(vec![1]);
        p.add_equality(unit(0, 0, 0), 1.0);
        let sol = solve(&p, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x[0][(0, 0)] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn contradictory_equalities() {
        let mut p = ConicProgram::new(vec![1]);
        p.add_equality(unit(0, 0, 0), 1.0);
        p.add_equality(unit(0, 0, 0), 2.0);
        let sol = solve(&p, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn redundant_equalities_are_tolerated() {
        let mut p = ConicProgram::new(vec![2]);
        p.set_objective(unit(0, 1, 1));
        p.add_equality(unit(0, 0, 0), 1.0);
        let mut twice = LinearFunctional::new();
        twice.add_element(0, 0, 0, 2.0);
        p.add_equality(twice, 2.0);
        let sol = solve(&p, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_eq!(sol.y.len(), 2);
        assert_eq!(sol.y[1], 0.0);
    }

    #[test]
    fn psd_infeasible_program() {
        // X11 = -1 with X PSD
        let mut p = ConicProgram::new(vec![2]);
        p.set_objective(unit(0, 0, 1));
        p.add_equality(unit(0, 0, 0), -1.0);
        let sol = solve(&p, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn unbounded_program() {
        // minimize -X22 with X11 = 1
        let mut p = ConicProgram::new(vec![2]);
        let mut c = LinearFunctional::new();
        c.add_element(0, 1, 1, -1.0);
        p.set_objective(c);
        p.add_equality(unit(0, 0, 0), 1.0);
        let sol = solve(&p, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Unbounded);
    }

    #[test]
    fn deterministic() {
        let mut p = ConicProgram::new(vec![3, 1]);
        let mut c = LinearFunctional::new();
        c.add(0, 0, 1, 0.7);
        c.add(0, 2, 2, 1.0);
        c.add(1, 0, 0, 0.3);
        p.set_objective(c);
        p.add_equality(unit(0, 0, 0), 1.0);
        p.add_equality(unit(0, 1, 1), 1.0);
        let mut f = unit(0, 1, 2);
        f.add(1, 0, 0, 1.0);
        p.add_equality(f, 0.2);
        let a = solve(&p, &SolverSettings::default()).unwrap();
        let b = solve(&p, &SolverSettings::default()).unwrap();
        assert_eq!(a.status, SolveStatus::Optimal);
        assert_eq!(a.status, b.status);
        assert!((a.primal_objective - b.primal_objective).abs() <= 1e-10);
        assert!((a.dual_objective - b.dual_objective).abs() <= 1e-10);
    }
}

//! Moment hierarchy for `min h(x) s.t. q_j(x) >= 0`, the flat-extension rank
//! test, and minimizer extraction.

use log::debug;
use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conic::{Backend, ConicProgram, SolveStatus, SolverSettings};
use crate::error::{Error, Result};
use crate::moments::MomentSequence;
use crate::poly::{Exponent, MonomialBasis, Polynomial};
use crate::relaxation::{half_degree, MomentRelaxation};

#[derive(Debug, Clone)]
pub struct HierarchySettings {
    pub solver: SolverSettings,
    pub backend: Backend,
    /// Relative singular value threshold defining numerical rank.
    pub rank_tol: f64,
    pub seed: u64,
    /// Number of random combinations tried before declaring extraction
    /// degenerate.
    pub extraction_attempts: usize,
    /// Allowed violation `q_j(x) >= -feasibility_tol` for certified points.
    pub feasibility_tol: f64,
    /// Allowed `|h(x) - rho|` for certified points.
    pub objective_tol: f64,
}

impl Default for HierarchySettings {
    fn default() -> Self {
        Self {
            solver: SolverSettings::default(),
            backend: Backend::Embedded,
            rank_tol: 1e-6,
            seed: 0,
            extraction_attempts: 4,
            feasibility_tol: 1e-6,
            objective_tol: 1e-5,
        }
    }
}

/// Polynomial optimization problem over a basic semi-algebraic set.
#[derive(Debug, Clone, PartialEq)]
pub struct PopInstance {
    objective: Polynomial,
    constraints: Vec<Polynomial>,
}

impl PopInstance {
    pub fn new(objective: Polynomial, constraints: Vec<Polynomial>) -> Result<Self> {
        for (j, q) in constraints.iter().enumerate() {
            if q.dim() != objective.dim() {
                return Err(Error::DimensionMismatch {
                    expected: objective.dim(),
                    found: q.dim(),
                });
            }
            if q.is_zero() {
                return Err(Error::InvalidInput(format!("constraint {j} is the zero polynomial")));
            }
        }
        Ok(Self { objective, constraints })
    }

    /// Appends the redundant constraint `radius_sq - |x|^2 >= 0`.
    pub fn with_ball(mut self, radius_sq: f64) -> Self {
        let n = self.dim();
        let mut ball = Polynomial::constant(n, radius_sq);
        for i in 0..n {
            let e = Exponent::unit(n, i);
            ball.add_term(&e + &e, -1.0);
        }
        self.constraints.push(ball);
        self
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    pub fn objective(&self) -> &Polynomial {
        &self.objective
    }

    pub fn constraints(&self) -> &[Polynomial] {
        &self.constraints
    }

    /// `v_j = ceil(deg q_j / 2)`.
    pub fn half_degrees(&self) -> Vec<usize> {
        self.constraints.iter().map(half_degree).collect()
    }

    /// `v = max_j v_j`.
    pub fn max_half_degree(&self) -> usize {
        self.half_degrees().into_iter().max().unwrap_or(0)
    }

    /// Shift used by the rank test, `max(v, 1)`.
    pub fn rank_shift(&self) -> usize {
        self.max_half_degree().max(1)
    }

    pub fn minimal_order(&self) -> usize {
        self.max_half_degree().max(half_degree(&self.objective)).max(1)
    }

    /// Largest violation `max(0, -min_j q_j(x))`.
    pub fn violation(&self, x: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|q| -q.eval_unchecked(x))
            .fold(0.0, f64::max)
    }
}

/// Assembles the order-`order` relaxation together with its moment layout.
pub fn relaxation(inst: &PopInstance, order: usize) -> Result<MomentRelaxation> {
    let minimal = inst.minimal_order();
    if order < minimal {
        let constraint = inst.half_degrees().iter().position(|&v| v > order);
        return Err(Error::OrderTooSmall {
            order,
            minimal,
            constraint,
        });
    }
    let localizers: Vec<(Polynomial, usize)> = inst
        .constraints
        .iter()
        .map(|q| (q.clone(), order - half_degree(q)))
        .collect();
    let pins = [(Exponent::zero(inst.dim()), 1.0)];
    MomentRelaxation::build(inst.dim(), order, &inst.objective, &localizers, &pins)
}

/// The semidefinite program of the order-`order` relaxation: one block for
/// `M_order(z)`, one per constraint for `M_{order - v_j}(q_j z)`, the
/// normalization `z_0 = 1` first among the equalities.
///
/// On `OrderTooSmall` the offending constraint index is 0-based.
pub fn build_relaxation(inst: &PopInstance, order: usize) -> Result<ConicProgram> {
    Ok(relaxation(inst, order)?.program)
}

#[derive(Debug, Clone)]
pub struct RelaxationResult {
    pub order: usize,
    /// `rho_order = L_z*(h)`.
    pub value: f64,
    /// Dual objective (a certified lower bound when the solve is optimal).
    pub dual_value: f64,
    pub moments: MomentSequence,
    pub status: SolveStatus,
    /// Numerical ranks of `M_k(z*)` for `k = 0..=order`.
    pub rank_profile: Vec<usize>,
    pub iterations: usize,
}

impl RelaxationResult {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// Number of singular values above `tol * sigma_max`.
pub fn numerical_rank(m: &DMatrix<f64>, tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().singular_values();
    let max = sv.max();
    if max <= 0.0 || !max.is_finite() {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * max).count()
}

fn rank_of(z: &MomentSequence, k: usize, tol: f64) -> usize {
    z.moment_matrix(k).map(|m| numerical_rank(&m, tol)).unwrap_or(0)
}

pub fn solve_order(inst: &PopInstance, order: usize, settings: &HierarchySettings) -> Result<RelaxationResult> {
    let relax = relaxation(inst, order)?;
    let sol = settings.backend.solve(&relax.program, &settings.solver)?;
    let moments = relax.moments_from(&sol.x);
    let rank_profile = if sol.is_optimal() {
        (0..=order).map(|k| rank_of(&moments, k, settings.rank_tol)).collect()
    } else {
        Vec::new()
    };
    debug!(
        "order {order}: status {}, value {:.9}, ranks {:?}",
        sol.status, sol.primal_objective, rank_profile
    );
    Ok(RelaxationResult {
        order,
        value: sol.primal_objective,
        dual_value: sol.dual_objective,
        moments,
        status: sol.status,
        rank_profile,
        iterations: sol.iterations,
    })
}

/// Common rank `r` of `M_order(z*)` and `M_{order - v}(z*)`, if they agree.
pub fn rank_check(res: &RelaxationResult, v: usize, tol: f64) -> Option<usize> {
    if !res.is_optimal() || v > res.order {
        return None;
    }
    let top = rank_of(&res.moments, res.order, tol);
    let low = rank_of(&res.moments, res.order - v, tol);
    (top == low && top > 0).then_some(top)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResidual {
    /// `max(0, -min_j q_j(x))`.
    pub violation: f64,
    pub objective: f64,
    /// `|h(x) - rho|`.
    pub objective_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub certified: bool,
    pub rank: usize,
    pub points: Vec<Vec<f64>>,
    pub residuals: Vec<PointResidual>,
    /// Largest relative commutator norm among multiplication matrices.
    pub commutation_error: f64,
    pub diagnostics: Option<String>,
}

impl ExtractionResult {
    fn failed(rank: usize, message: String) -> Self {
        Self {
            certified: false,
            rank,
            points: Vec::new(),
            residuals: Vec::new(),
            commutation_error: f64::NAN,
            diagnostics: Some(message),
        }
    }
}

const PIVOT_TOL: f64 = 1e-6;
const COMMUTATION_TOL: f64 = 1e-6;

/// Column echelon form of `V` (`s x r`): returns `W` with `W[pivot_j] = e_j`
/// and the pivot rows, scanned in graded order.
fn column_echelon(v: &DMatrix<f64>) -> Option<(DMatrix<f64>, Vec<usize>)> {
    let (s, r) = v.shape();
    let mut a = v.transpose(); // r x s, row reduce
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let mut pivots = Vec::with_capacity(r);
    let mut row = 0;
    for col in 0..s {
        if row == r {
            break;
        }
        let (best, val) = (row..r)
            .map(|i| (i, a[(i, col)].abs()))
            .fold((row, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if val <= PIVOT_TOL * scale {
            continue;
        }
        a.swap_rows(row, best);
        let p = a[(row, col)];
        for k in 0..s {
            a[(row, k)] /= p;
        }
        for i in 0..r {
            if i != row {
                let f = a[(i, col)];
                if f != 0.0 {
                    for k in 0..s {
                        a[(i, k)] -= f * a[(row, k)];
                    }
                }
            }
        }
        pivots.push(col);
        row += 1;
    }
    (pivots.len() == r).then(|| (a.transpose(), pivots))
}

fn attempt_points(ns: &[DMatrix<f64>], seed: u64) -> Option<Vec<Vec<f64>>> {
    let r = ns[0].nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<f64> = ns.iter().map(|_| 0.1 + rng.random::<f64>()).collect();
    let total: f64 = weights.iter().sum();
    let mut comb = DMatrix::zeros(r, r);
    for (w, n) in weights.iter().zip(ns) {
        comb += n * (*w / total);
    }
    let (q, t) = Schur::try_new(comb, f64::EPSILON, 10_000)?.unpack();
    // a complex pair shows up as a nonzero subdiagonal entry
    let tscale = t.amax().max(1.0);
    for k in 1..r {
        if t[(k, k - 1)].abs() > 1e-8 * tscale {
            return None;
        }
    }
    Some(
        (0..r)
            .map(|k| {
                let qk: DVector<f64> = q.column(k).into_owned();
                ns.iter().map(|n| qk.dot(&(n * &qk))).collect()
            })
            .collect(),
    )
}

/// Extracts `r` minimizers from the moment matrix of `res` and verifies them
/// against `inst`. `certified` reflects the a-posteriori checks only.
pub fn extract_minimizers(
    inst: &PopInstance,
    res: &RelaxationResult,
    r: usize,
    settings: &HierarchySettings,
) -> ExtractionResult {
    if !res.is_optimal() || r == 0 {
        return ExtractionResult::failed(r, format!("relaxation status {}", res.status));
    }
    let n = inst.dim();
    let order = res.order;
    let Ok(m) = res.moments.moment_matrix(order) else {
        return ExtractionResult::failed(r, "moment matrix unavailable".into());
    };
    let basis = MonomialBasis::new(n, order);
    let eig = SymmetricEigen::new(m);
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    if r > idx.len() || eig.eigenvalues[idx[r - 1]] <= 0.0 {
        return ExtractionResult::failed(r, "moment matrix has fewer than r positive eigenvalues".into());
    }
    let mut v = DMatrix::zeros(basis.len(), r);
    for (c, &k) in idx.iter().take(r).enumerate() {
        let sq = eig.eigenvalues[k].sqrt();
        v.set_column(c, &(eig.eigenvectors.column(k) * sq));
    }

    let Some((w, pivots)) = column_echelon(&v) else {
        return ExtractionResult::failed(r, "column echelon form found fewer than r pivots".into());
    };
    let mut ns = Vec::with_capacity(n);
    for i in 0..n {
        let mut ni = DMatrix::zeros(r, r);
        for (j, &p) in pivots.iter().enumerate() {
            let shifted = basis.get(p) + &Exponent::unit(n, i);
            let Some(row) = basis.index_of(&shifted) else {
                return ExtractionResult::failed(
                    r,
                    format!("pivot monomial {:?} times x_{i} exceeds order {order}", basis.get(p)),
                );
            };
            ni.set_row(j, &w.row(row));
        }
        ns.push(ni);
    }

    let mut commutation_error: f64 = 0.0;
    for a in 0..n {
        for b in a + 1..n {
            let c = &ns[a] * &ns[b] - &ns[b] * &ns[a];
            let scale = 1.0 + ns[a].norm() * ns[b].norm();
            commutation_error = commutation_error.max(c.norm() / scale);
        }
    }
    if commutation_error > COMMUTATION_TOL {
        let mut out = ExtractionResult::failed(r, format!("multiplication matrices do not commute ({commutation_error:.2e})"));
        out.commutation_error = commutation_error;
        return out;
    }

    let mut best: Option<ExtractionResult> = None;
    for attempt in 0..settings.extraction_attempts.max(1) {
        let Some(points) = attempt_points(&ns, settings.seed.wrapping_add(attempt as u64)) else {
            continue;
        };
        let residuals: Vec<PointResidual> = points
            .iter()
            .map(|x| {
                let objective = inst.objective.eval_unchecked(x);
                PointResidual {
                    violation: inst.violation(x),
                    objective,
                    objective_gap: (objective - res.value).abs(),
                }
            })
            .collect();
        let certified = residuals
            .iter()
            .all(|p| p.violation <= settings.feasibility_tol && p.objective_gap <= settings.objective_tol);
        let result = ExtractionResult {
            certified,
            rank: r,
            points,
            residuals,
            commutation_error,
            diagnostics: (!certified).then(|| "extracted points failed verification".to_string()),
        };
        if certified {
            return result;
        }
        best.get_or_insert(result);
    }
    best.unwrap_or_else(|| {
        let mut out = ExtractionResult::failed(r, "Schur form of the random combination is not triangular".into());
        out.commutation_error = commutation_error;
        out
    })
}

/// Outcome of solving successive orders until the rank test certifies.
#[derive(Debug, Clone)]
pub struct HierarchyRun {
    pub results: Vec<RelaxationResult>,
    pub extraction: Option<ExtractionResult>,
}

impl HierarchyRun {
    pub fn last(&self) -> Option<&RelaxationResult> {
        self.results.last()
    }
}

/// Solves orders `first..=last`, stopping at the first order whose rank
/// test passes and whose extracted points verify.
pub fn solve_hierarchy(
    inst: &PopInstance,
    first: usize,
    last: usize,
    settings: &HierarchySettings,
) -> Result<HierarchyRun> {
    let mut results = Vec::new();
    let mut extraction = None;
    for order in first.max(inst.minimal_order())..=last {
        let res = solve_order(inst, order, settings)?;
        let done = if let Some(r) = rank_check(&res, inst.rank_shift(), settings.rank_tol) {
            let ex = extract_minimizers(inst, &res, r, settings);
            let certified = ex.certified;
            extraction = Some(ex);
            certified
        } else {
            false
        };
        let optimal = res.is_optimal();
        results.push(res);
        if done || !optimal {
            break;
        }
    }
    Ok(HierarchyRun { results, extraction })
}

//! The outer problem `min { f(x) : x in X, Phi_d(x) <= eps }` and the
//! eps-adjustment loop that certifies its solutions against the true
//! semi-infinite constraint.

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::certificate::certify;
use crate::conic::SolveStatus;
use crate::error::{Error, Result};
use crate::hierarchy::{extract_minimizers, rank_check, solve_order, HierarchySettings, PopInstance};
use crate::joint_marginal::{approximate_phi, PhiApprox};
use crate::poly::Polynomial;
use crate::problem::{AffineMap, SipProblem};
use crate::relaxation::half_degree;

/// Data of the outer relaxation at a fixed `eps`.
#[derive(Debug, Clone)]
pub struct OuterSpec {
    pub f: Polynomial,
    pub p_list: Vec<Polynomial>,
    /// `Phi_d` in `x`.
    pub phi: Polynomial,
    pub d: usize,
    pub eps: f64,
    /// Relaxation order; `None` picks the smallest admissible order plus one.
    pub t: Option<usize>,
}

impl OuterSpec {
    /// `t_0 = max(d, max_s t_s)` with `t_s = ceil(deg p_s / 2)`.
    pub fn t0(&self) -> usize {
        self.p_list.iter().map(half_degree).max().unwrap_or(0).max(self.d)
    }

    /// `f` subject to `p_s >= 0`, `eps - Phi_d >= 0` and `n - |x|^2 >= 0`.
    pub fn instance(&self) -> Result<PopInstance> {
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidInput(format!("eps must be finite and nonnegative, got {}", self.eps)));
        }
        let n = self.f.dim();
        let mut cons = self.p_list.clone();
        cons.push(&Polynomial::constant(n, self.eps) - &self.phi);
        Ok(PopInstance::new(self.f.clone(), cons)?.with_ball(n as f64))
    }

    fn default_order(&self, inst: &PopInstance) -> usize {
        self.t0().max(inst.minimal_order()) + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateSource {
    /// Extracted from a flat moment matrix and verified.
    Extracted,
    /// Degree-one moments clamped to `[-1, 1]^n`.
    Fallback,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OuterResult {
    pub eps: f64,
    pub order: usize,
    pub status: SolveStatus,
    /// `f^eps_{dt}`, when the relaxation solved.
    pub value: Option<f64>,
    pub candidate: Option<Vec<f64>>,
    pub source: Option<CandidateSource>,
    pub rank: Option<usize>,
}

/// Solves the outer relaxation. Infeasibility is reported through `status`;
/// other solver failures are errors. If extraction fails at the first order
/// it is retried once at the next order, up to `t_max`.
pub fn solve_outer(spec: &OuterSpec, t_max: Option<usize>, settings: &HierarchySettings) -> Result<OuterResult> {
    let inst = spec.instance()?;
    let t0 = spec.t0();
    let first = spec.t.unwrap_or_else(|| spec.default_order(&inst));
    if first < t0 {
        return Err(Error::OrderTooSmall {
            order: first,
            minimal: t0,
            constraint: None,
        });
    }
    let last = t_max.unwrap_or(first + 1).max(first).min(first + 1);

    let mut fallback = None;
    for t in first..=last {
        let res = solve_order(&inst, t, settings)?;
        match res.status {
            SolveStatus::Optimal => {}
            SolveStatus::Infeasible => {
                return Ok(OuterResult {
                    eps: spec.eps,
                    order: t,
                    status: res.status,
                    value: None,
                    candidate: None,
                    source: None,
                    rank: None,
                })
            }
            other => return Err(Error::Solver(other)),
        }
        let rank = rank_check(&res, t0, settings.rank_tol);
        if let Some(r) = rank {
            let ex = extract_minimizers(&inst, &res, r, settings);
            if ex.certified {
                let best = ex
                    .points
                    .into_iter()
                    .min_by(|a, b| spec.phi.eval_unchecked(a).total_cmp(&spec.phi.eval_unchecked(b)))
                    .expect("certified extraction has points");
                return Ok(OuterResult {
                    eps: spec.eps,
                    order: t,
                    status: res.status,
                    value: Some(res.value),
                    candidate: Some(best),
                    source: Some(CandidateSource::Extracted),
                    rank,
                });
            }
        }
        fallback = Some((t, res, rank));
    }
    let (t, res, rank) = fallback.expect("at least one order solved");
    let n = inst.dim();
    let x: Vec<f64> = (0..n)
        .map(|i| res.moments.values()[1 + i].clamp(-1.0, 1.0))
        .collect();
    Ok(OuterResult {
        eps: spec.eps,
        order: t,
        status: res.status,
        value: Some(res.value),
        candidate: Some(x),
        source: Some(CandidateSource::Fallback),
        rank,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlgorithmParams {
    /// Joint+marginal order `d`.
    pub d: usize,
    /// Inner relaxation order; `None` uses the smallest admissible plus one.
    pub ell: Option<usize>,
    /// Outer relaxation order; `None` picks it per iteration.
    pub t: Option<usize>,
    /// Highest outer order tried when extraction fails.
    pub t_max: Option<usize>,
    /// Iteration cap `k*`.
    pub kmax: usize,
    /// Acceptance band `[-eps0, 0]` for the inner value.
    pub eps0: f64,
    #[serde(skip)]
    pub settings: HierarchySettings,
}

impl Default for AlgorithmParams {
    fn default() -> Self {
        Self {
            d: 1,
            ell: None,
            t: None,
            t_max: None,
            kmax: 12,
            eps0: 0.1,
            settings: HierarchySettings::default(),
        }
    }
}

/// What happened to the candidate of one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    /// `-eps0 <= rho <= 0`: stop.
    Accept,
    /// `rho < -eps0`: double `eps`.
    Double,
    /// `rho > 0`: halve `eps`.
    Halve,
    /// Outer relaxation infeasible: double `eps`.
    OuterInfeasible,
    /// The inner relaxation could not be solved; handled as `rho > 0`.
    CertificateFailed,
    /// The candidate violates `p_s >= 0`; handled as `rho > 0`.
    OutsideX,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub eps: f64,
    pub outer: OuterResult,
    /// Candidate in original coordinates.
    pub candidate: Option<Vec<f64>>,
    pub f_value: Option<f64>,
    pub phi_d_value: Option<f64>,
    /// `rho_l(x_k)`; `-inf` when `Y_x` is empty.
    pub rho: Option<f64>,
    pub branch: Branch,
    /// `eps(k + 1)`; `None` on the last iteration.
    pub next_eps: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    /// Stopped inside the acceptance band.
    Accepted,
    /// `k*` reached on a deeply feasible iterate, which is returned.
    LastIterate,
    /// `k*` reached; the best certified incumbent is returned.
    Incumbent,
    /// No certified point was found; the best uncertified point is returned.
    NoCertificate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhiSummary {
    pub d: usize,
    pub rho_star: f64,
    pub rho_primal: f64,
    pub certificate_residual: f64,
    pub certificate_min_eigenvalue: f64,
    /// `Phi_d` in rescaled coordinates.
    pub polynomial: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlgorithmReport {
    pub name: String,
    pub status: RunStatus,
    pub certified: bool,
    /// `x*_d` in original coordinates.
    pub x: Option<Vec<f64>>,
    pub f_value: Option<f64>,
    pub rho: Option<f64>,
    pub final_eps: f64,
    pub iterations: usize,
    pub params: AlgorithmParams,
    pub map: AffineMap,
    pub phi: PhiSummary,
    pub trace: Vec<IterationRecord>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone)]
struct Point {
    x: Vec<f64>,
    f: f64,
    rho: f64,
}

/// Runs the eps-adjustment loop on `problem` (lifted and rescaled first).
pub fn run_algorithm(problem: &SipProblem, params: &AlgorithmParams) -> Result<AlgorithmReport> {
    let (prob, map) = problem.prepare()?;
    let settings = &params.settings;
    let phi = approximate_phi(&prob.g, &prob.y_constraints, prob.n, prob.p, params.d, settings)?;
    info!(
        "Phi_{}: rho* = {:.6}, certificate residual {:.2e}",
        phi.d,
        phi.rho_star,
        phi.certificate.residual(&phi.phi, &prob.g)
    );
    run_with_phi(problem, &prob, &map, &phi, params)
}

fn summarize(phi: &PhiApprox, g: &Polynomial) -> PhiSummary {
    PhiSummary {
        d: phi.d,
        rho_star: phi.rho_star,
        rho_primal: phi.rho_primal,
        certificate_residual: phi.certificate.residual(&phi.phi, g),
        certificate_min_eigenvalue: phi.certificate.min_eigenvalue(),
        polynomial: phi.phi.to_string(),
    }
}

/// The loop proper, with `Phi_d` supplied by the caller. `prob` is the
/// prepared problem and `map` its coordinate change.
pub fn run_with_phi(
    original: &SipProblem,
    prob: &SipProblem,
    map: &AffineMap,
    phi: &PhiApprox,
    params: &AlgorithmParams,
) -> Result<AlgorithmReport> {
    if params.kmax == 0 {
        return Err(Error::InvalidInput("k* must be at least 1".into()));
    }
    if params.eps0.is_nan() || params.eps0 <= 0.0 {
        return Err(Error::InvalidInput("eps0 must be positive".into()));
    }
    let settings = &params.settings;
    let mut eps = 1.0;
    let mut incumbent: Option<Point> = None;
    let mut best_uncertified: Option<Point> = None;
    let mut trace = Vec::new();
    let mut finish: Option<(RunStatus, Option<Point>)> = None;

    for k in 1..=params.kmax {
        let last = k == params.kmax;
        let spec = OuterSpec {
            f: prob.f.clone(),
            p_list: prob.x_constraints.clone(),
            phi: phi.phi.clone(),
            d: phi.d,
            eps,
            t: params.t,
        };
        let outer = solve_outer(&spec, params.t_max, settings)?;
        let mut record = IterationRecord {
            k,
            eps,
            outer: outer.clone(),
            candidate: None,
            f_value: None,
            phi_d_value: None,
            rho: None,
            branch: Branch::OuterInfeasible,
            next_eps: None,
        };

        let Some(xk) = outer.candidate.clone() else {
            info!("k = {k}: outer relaxation infeasible at eps = {eps}");
            if last {
                finish = Some(terminal(&incumbent, &best_uncertified));
            } else {
                eps *= 2.0;
                record.next_eps = Some(eps);
            }
            trace.push(record);
            if finish.is_some() {
                break;
            }
            continue;
        };

        let fk = prob.f.eval_unchecked(&xk);
        record.candidate = Some(map.to_original(&xk));
        record.f_value = Some(fk);
        record.phi_d_value = Some(phi.eval(&xk));

        let rho = if prob.x_violation(&xk) > settings.feasibility_tol {
            record.branch = Branch::OutsideX;
            None
        } else {
            match certify(&xk, &prob.g, &prob.y_constraints, params.ell, prob.y_ball_radius, settings) {
                Ok(c) => Some(c.rho),
                Err(Error::InnerInfeasible { .. }) => Some(f64::NEG_INFINITY),
                Err(e) => {
                    warn!("k = {k}: inner relaxation failed at {xk:?}: {e}");
                    record.branch = Branch::CertificateFailed;
                    None
                }
            }
        };
        record.rho = rho;
        let point = Point {
            x: xk.clone(),
            f: fk,
            rho: rho.unwrap_or(f64::INFINITY),
        };
        info!("k = {k}: eps = {eps}, x = {xk:?}, f = {fk:.6}, rho = {rho:?}");

        match rho {
            Some(r) if (-params.eps0..=0.0).contains(&r) => {
                record.branch = Branch::Accept;
                finish = Some((RunStatus::Accepted, Some(point)));
            }
            Some(r) if r < -params.eps0 => {
                record.branch = Branch::Double;
                if incumbent.as_ref().is_none_or(|b| b.f > fk) {
                    incumbent = Some(point.clone());
                }
                if last {
                    finish = Some((RunStatus::LastIterate, Some(point)));
                } else {
                    eps *= 2.0;
                    record.next_eps = Some(eps);
                }
            }
            _ => {
                if rho.is_some() {
                    record.branch = Branch::Halve;
                }
                if best_uncertified.as_ref().is_none_or(|b| point.rho <= b.rho) {
                    best_uncertified = Some(point);
                }
                if last {
                    finish = Some(terminal(&incumbent, &best_uncertified));
                } else {
                    eps /= 2.0;
                    record.next_eps = Some(eps);
                }
            }
        }
        trace.push(record);
        if finish.is_some() {
            break;
        }
    }

    let (status, point) = finish.expect("loop ends with a terminal state");
    let certified = status != RunStatus::NoCertificate;
    let mut notes = vec!["Convergence guarantees assume X is the closure of an open set; this is not checked.".to_string()];
    if !certified {
        notes.push("No iterate was certified feasible; the reported point has the smallest inner bound seen.".into());
    }
    Ok(AlgorithmReport {
        name: original.name.clone(),
        status,
        certified,
        x: point.as_ref().map(|p| map.to_original(&p.x)),
        f_value: point.as_ref().map(|p| p.f),
        rho: point.as_ref().map(|p| p.rho).filter(|r| *r < f64::INFINITY),
        final_eps: eps,
        iterations: trace.len(),
        params: params.clone(),
        map: map.clone(),
        phi: summarize(phi, &prob.g),
        trace,
        notes,
    })
}

fn terminal(incumbent: &Option<Point>, best: &Option<Point>) -> (RunStatus, Option<Point>) {
    match incumbent {
        Some(p) => (RunStatus::Incumbent, Some(p.clone())),
        None => (RunStatus::NoCertificate, best.clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(dim: usize, terms: &[(f64, &[u32])]) -> Polynomial {
        Polynomial::from_terms(dim, terms.iter().map(|(c, e)| (*c, e.to_vec()))).unwrap()
    }

    fn interval() -> Polynomial {
        p(1, &[(1.0, &[0]), (-1.0, &[2])])
    }

    #[test]
    fn outer_affine_at_zero_eps() {
        let spec = OuterSpec {
            f: p(1, &[(1.0, &[1])]),
            p_list: vec![interval()],
            phi: p(1, &[(1.0, &[0]), (-1.0, &[1])]),
            d: 1,
            eps: 0.0,
            t: Some(1),
        };
        let out = solve_outer(&spec, None, &HierarchySettings::default()).unwrap();
        assert!((out.value.unwrap() - 1.0).abs() < 1e-6);
        assert!((out.candidate.unwrap()[0] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn slack_constraint_gives_unconstrained_minimum() {
        let spec = OuterSpec {
            f: p(1, &[(1.0, &[1])]),
            p_list: vec![interval()],
            phi: p(1, &[(1.0, &[0]), (-1.0, &[1])]),
            d: 1,
            eps: 10.0,
            t: None,
        };
        let out = solve_outer(&spec, None, &HierarchySettings::default()).unwrap();
        assert!((out.value.unwrap() + 1.0).abs() < 1e-6);
        assert_eq!(out.source, Some(CandidateSource::Extracted));
        assert!((out.candidate.unwrap()[0] + 1.0).abs() < 1e-5);
    }

    #[test]
    fn infeasible_outer_is_reported() {
        // Phi_d = 2 exceeds eps = 1 everywhere
        let spec = OuterSpec {
            f: p(1, &[(1.0, &[1])]),
            p_list: vec![interval()],
            phi: p(1, &[(2.0, &[0])]),
            d: 1,
            eps: 1.0,
            t: None,
        };
        let out = solve_outer(&spec, None, &HierarchySettings::default()).unwrap();
        assert_eq!(out.status, SolveStatus::Infeasible);
        assert!(out.candidate.is_none());
    }

    #[test]
    fn order_below_t0_rejected() {
        let spec = OuterSpec {
            f: p(1, &[(1.0, &[1])]),
            p_list: vec![interval()],
            phi: p(1, &[(1.0, &[4])]),
            d: 2,
            eps: 1.0,
            t: Some(1),
        };
        assert!(matches!(
            solve_outer(&spec, None, &HierarchySettings::default()),
            Err(Error::OrderTooSmall { minimal: 2, .. })
        ));
    }
}

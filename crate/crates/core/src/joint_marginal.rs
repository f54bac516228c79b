//! Joint+marginal relaxation: moments of a measure on `(x, y)` whose
//! `x`-marginal is the uniform probability on `B = [-1, 1]^n`, maximizing
//! `L_z(g)`. The multipliers of the marginal equalities are the coefficients
//! of a polynomial `Phi_d >= Phi` on `B`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conic::{ConicProgram, ConicSolution, SolveStatus};
use crate::error::{Error, Result};
use crate::hierarchy::HierarchySettings;
use crate::moments::{box_moment, MomentSequence};
use crate::poly::{Exponent, MonomialBasis, Polynomial};
use crate::relaxation::{half_degree, MomentRelaxation};

/// Moments `gamma_a` of the uniform probability measure on `[-1, 1]^n` up to
/// degree `degree`.
#[derive(Debug, Clone)]
pub struct BoxMoments {
    moments: MomentSequence,
}

impl BoxMoments {
    pub fn dim(&self) -> usize {
        self.moments.dim()
    }

    pub fn degree(&self) -> usize {
        self.moments.degree()
    }

    /// `gamma_a`, computed in closed form for any exponent.
    pub fn gamma(&self, e: &Exponent) -> f64 {
        box_moment(e)
    }

    pub fn sequence(&self) -> &MomentSequence {
        &self.moments
    }

    /// `int_B p dmu`.
    pub fn integrate(&self, p: &Polynomial) -> f64 {
        p.terms().map(|(e, c)| c * box_moment(e)).sum()
    }
}

pub fn box_moments(n: usize, degree: usize) -> BoxMoments {
    BoxMoments {
        moments: MomentSequence::uniform_box(n, degree),
    }
}

/// Multiplier attached to a Gram block of the certificate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MultiplierKind {
    /// The free SOS term `sigma_0`.
    Free,
    /// `sigma_j` multiplying `h_j` (0-based index into the constraint list).
    Constraint(usize),
    /// `psi_i` multiplying `theta_i = 1 - x_i^2`.
    Box(usize),
}

#[derive(Debug, Clone)]
pub struct GramBlock {
    pub kind: MultiplierKind,
    pub multiplier: Polynomial,
    /// The SOS polynomial is `v^T G v` with `v` the monomials of degree at
    /// most `order` in `(x, y)`.
    pub order: usize,
    pub gram: DMatrix<f64>,
}

impl GramBlock {
    pub fn sos(&self) -> Polynomial {
        let basis = MonomialBasis::new(self.multiplier.dim(), self.order);
        let mut out = Polynomial::zero(self.multiplier.dim());
        for a in 0..basis.len() {
            for b in 0..basis.len() {
                out.add_term(basis.get(a) + basis.get(b), self.gram[(a, b)]);
            }
        }
        out
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.gram.clone().symmetric_eigenvalues().min()
    }
}

/// `q(x) - g(x, y) = sum_j sigma_j h_j + sum_i psi_i theta_i` with Gram
/// matrices read from the dual slack.
#[derive(Debug, Clone)]
pub struct SosCertificate {
    pub blocks: Vec<GramBlock>,
}

impl SosCertificate {
    /// `sum_k multiplier_k * sos_k`.
    pub fn reconstruct(&self, dim: usize) -> Polynomial {
        let mut out = Polynomial::zero(dim);
        for b in &self.blocks {
            out = &out + &(&b.multiplier * &b.sos());
        }
        out
    }

    /// Largest coefficient of `q - g - reconstruct()`, relative to
    /// `max(1, largest coefficient of q and g)`.
    pub fn residual(&self, q: &Polynomial, g: &Polynomial) -> f64 {
        let dim = g.dim();
        let qe = q.embed(dim, 0);
        let diff = &(&qe - g) - &self.reconstruct(dim);
        let scale = 1f64.max(q.max_abs_coeff()).max(g.max_abs_coeff());
        diff.max_abs_coeff() / scale
    }

    /// Smallest eigenvalue over all Gram blocks.
    pub fn min_eigenvalue(&self) -> f64 {
        self.blocks
            .iter()
            .map(GramBlock::min_eigenvalue)
            .fold(f64::INFINITY, f64::min)
    }
}

/// The joint+marginal program with its layout.
#[derive(Debug, Clone)]
pub struct JointMarginal {
    n: usize,
    p: usize,
    d: usize,
    g: Polynomial,
    h: Vec<Polynomial>,
    marginal: Vec<Exponent>,
    relaxation: MomentRelaxation,
    kinds: Vec<(MultiplierKind, Polynomial)>,
}

pub fn minimal_jm_order(g: &Polynomial, h: &[Polynomial]) -> usize {
    h.iter().map(half_degree).max().unwrap_or(0).max(half_degree(g)).max(1)
}

fn theta(n: usize, p: usize, i: usize) -> Polynomial {
    let mut t = Polynomial::constant(n + p, 1.0);
    let e = Exponent::unit(n + p, i);
    t.add_term(&e + &e, -1.0);
    t
}

/// Builds the order-`d` joint+marginal program. Variables are ordered `x`
/// first, then `y`. The first equalities pin `L_z(x^a) = gamma_a` for `a` in
/// the graded order of `N^n_{2d}`.
pub fn build_jm(g: &Polynomial, h: &[Polynomial], n: usize, p: usize, d: usize) -> Result<JointMarginal> {
    let dim = n + p;
    for q in std::iter::once(g).chain(h) {
        if q.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: q.dim(),
            });
        }
    }
    let minimal = minimal_jm_order(g, h);
    if d < minimal {
        let constraint = h.iter().position(|q| half_degree(q) > d);
        return Err(Error::OrderTooSmall {
            order: d,
            minimal,
            constraint,
        });
    }

    let mut kinds = vec![(MultiplierKind::Free, Polynomial::constant(dim, 1.0))];
    let mut localizers = Vec::with_capacity(h.len() + n);
    for (j, hj) in h.iter().enumerate() {
        localizers.push((hj.clone(), d - half_degree(hj)));
        kinds.push((MultiplierKind::Constraint(j), hj.clone()));
    }
    for i in 0..n {
        let t = theta(n, p, i);
        localizers.push((t.clone(), d - 1));
        kinds.push((MultiplierKind::Box(i), t));
    }

    let marginal: Vec<Exponent> = MonomialBasis::new(n, 2 * d).monomials().to_vec();
    let pins: Vec<(Exponent, f64)> = marginal
        .iter()
        .map(|a| {
            let mut powers = a.powers().to_vec();
            powers.resize(dim, 0);
            (Exponent::new(powers), box_moment(a))
        })
        .collect();
    let objective = -g;
    let relaxation = MomentRelaxation::build(dim, d, &objective, &localizers, &pins)?;
    Ok(JointMarginal {
        n,
        p,
        d,
        g: g.clone(),
        h: h.to_vec(),
        marginal,
        relaxation,
        kinds,
    })
}

impl JointMarginal {
    pub fn program(&self) -> &ConicProgram {
        &self.relaxation.program
    }

    pub fn relaxation(&self) -> &MomentRelaxation {
        &self.relaxation
    }

    pub fn order(&self) -> usize {
        self.d
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n, self.p)
    }

    pub fn objective(&self) -> &Polynomial {
        &self.g
    }

    pub fn constraints(&self) -> &[Polynomial] {
        &self.h
    }

    /// Exponents of the marginal equalities, in program order.
    pub fn marginal_exponents(&self) -> &[Exponent] {
        &self.marginal
    }

    /// Solves the program and recovers `Phi_d`.
    pub fn solve(&self, settings: &HierarchySettings) -> Result<PhiApprox> {
        let sol = settings.backend.solve(self.program(), &settings.solver)?;
        recover_phi(self, &sol)
    }
}

/// Polynomial upper approximation `Phi_d` of `Phi` on `B`.
#[derive(Debug, Clone)]
pub struct PhiApprox {
    pub d: usize,
    /// `Phi_d` as a polynomial in `x`.
    pub phi: Polynomial,
    /// `rho*_d = int_B Phi_d dmu`.
    pub rho_star: f64,
    /// `rho_d = max L_z(g)` from the primal solution.
    pub rho_primal: f64,
    pub certificate: SosCertificate,
}

impl PhiApprox {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.phi.eval_unchecked(x)
    }

    pub fn dim(&self) -> usize {
        self.phi.dim()
    }

    /// `int_B Phi_d dmu` recomputed from the coefficients.
    pub fn integral(&self) -> f64 {
        self.phi.terms().map(|(e, c)| c * box_moment(e)).sum()
    }
}

/// Reads `Phi_d` from the multipliers of the marginal equalities. The
/// program minimizes `-L_z(g)`, so the coefficient of `x^a` is the negated
/// multiplier of equality `a`.
pub fn recover_phi(jm: &JointMarginal, sol: &ConicSolution) -> Result<PhiApprox> {
    if sol.status != SolveStatus::Optimal {
        return Err(Error::Solver(sol.status));
    }
    if sol.y.len() != jm.program().num_equalities() {
        return Err(Error::DimensionMismatch {
            expected: jm.program().num_equalities(),
            found: sol.y.len(),
        });
    }
    let mut phi = Polynomial::zero(jm.n);
    for (a, &y) in jm.marginal.iter().zip(&sol.y) {
        phi.add_term(a.clone(), -y);
    }
    let rho_star = phi.terms().map(|(e, c)| c * box_moment(e)).sum();

    let slack = jm.relaxation.dual_slack(sol);
    let blocks = jm
        .kinds
        .iter()
        .zip(slack)
        .enumerate()
        .map(|(b, ((kind, mult), gram))| {
            let order = if b == 0 {
                jm.d
            } else {
                jm.relaxation.localizers()[b - 1].structure.order()
            };
            GramBlock {
                kind: *kind,
                multiplier: mult.clone(),
                order,
                gram,
            }
        })
        .collect();

    Ok(PhiApprox {
        d: jm.d,
        phi,
        rho_star,
        rho_primal: -sol.primal_objective,
        certificate: SosCertificate { blocks },
    })
}

/// Solves the order-`d` relaxation for `(g, h)` and returns `Phi_d`.
pub fn approximate_phi(
    g: &Polynomial,
    h: &[Polynomial],
    n: usize,
    p: usize,
    d: usize,
    settings: &HierarchySettings,
) -> Result<PhiApprox> {
    build_jm(g, h, n, p, d)?.solve(settings)
}

/// Points of the tensor midpoint rule with `m` nodes per axis on `[-1, 1]^n`.
pub fn midpoint_grid(n: usize, m: usize) -> Vec<Vec<f64>> {
    let nodes: Vec<f64> = (0..m).map(|k| -1.0 + (2 * k + 1) as f64 / m as f64).collect();
    let mut out = vec![Vec::with_capacity(n)];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|pt| {
                nodes.iter().map(move |&v| {
                    let mut q = pt.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    out
}

/// Midpoint-rule estimate of `int_B (Phi_d - Phi) dmu` with `m` nodes per
/// axis. Nodes where the oracle has no value (empty `Y_x`) are skipped.
pub fn l1_gap(phi: &PhiApprox, oracle: impl Fn(&[f64]) -> Option<f64> + Sync, m: usize) -> f64 {
    let grid = midpoint_grid(phi.dim(), m);
    let (sum, count) = grid
        .par_iter()
        .filter_map(|x| oracle(x).map(|v| phi.eval(x) - v))
        .map(|v| (v, 1usize))
        .reduce(|| (0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(dim: usize, terms: &[(f64, &[u32])]) -> Polynomial {
        Polynomial::from_terms(dim, terms.iter().map(|(c, e)| (*c, e.to_vec()))).unwrap()
    }

    #[test]
    fn box_moment_values() {
        let b = box_moments(2, 4);
        assert_eq!(b.gamma(&Exponent::from([0, 0])), 1.0);
        assert_eq!(b.gamma(&Exponent::from([1, 0])), 0.0);
        assert!((b.gamma(&Exponent::from([2, 0])) - 1.0 / 3.0).abs() < 1e-15);
        assert!((b.gamma(&Exponent::from([2, 2])) - 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn layout_counts() {
        let g = p(2, &[(1.0, &[1, 0])]);
        let h = p(2, &[(1.0, &[0, 1]), (-1.0, &[0, 2])]);
        let jm = build_jm(&g, &[h], 1, 1, 1).unwrap();
        assert_eq!(jm.relaxation().num_moments(), 6);
        assert_eq!(jm.marginal_exponents().len(), 3);
        // moment block, h block, theta block at order 0
        assert_eq!(jm.program().block_sizes(), &[3, 1, 1]);
        let first = &jm.program().equalities()[0];
        assert_eq!(first.rhs, 1.0);
        let e = first.functional.entries();
        assert_eq!((e.len(), e[0].row, e[0].col), (1, 0, 0));
    }

    #[test]
    fn order_too_small() {
        let g = p(2, &[(1.0, &[0, 4])]);
        assert!(matches!(
            build_jm(&g, &[], 1, 1, 1),
            Err(Error::OrderTooSmall { minimal: 2, .. })
        ));
    }

    #[test]
    fn affine_instance() {
        // g = x, h = y (1 - y): Phi(x) = x
        let g = p(2, &[(1.0, &[1, 0])]);
        let h = p(2, &[(1.0, &[0, 1]), (-1.0, &[0, 2])]);
        let phi = approximate_phi(&g, std::slice::from_ref(&h), 1, 1, 1, &HierarchySettings::default()).unwrap();
        assert!(phi.rho_star.abs() < 1e-7, "{}", phi.rho_star);
        assert!(phi.rho_star >= phi.rho_primal - 1e-7);
        assert!((phi.integral() - phi.rho_star).abs() < 1e-12);
        for k in 0..100 {
            let x = -1.0 + 2.0 * k as f64 / 99.0;
            assert!(phi.eval(&[x]) >= x - 1e-6);
        }
        assert!(phi.certificate.residual(&phi.phi, &g) < 1e-9);
        assert!(phi.certificate.min_eigenvalue() > -1e-7);
    }

    #[test]
    fn absolute_value_instance() {
        // g = x y, h = 1 - y^2: Phi(x) = |x|
        let g = p(2, &[(1.0, &[1, 1])]);
        let h = p(2, &[(1.0, &[0, 0]), (-1.0, &[0, 2])]);
        let s = HierarchySettings::default();
        let phi1 = approximate_phi(&g, std::slice::from_ref(&h), 1, 1, 1, &s).unwrap();
        let phi2 = approximate_phi(&g, &[h], 1, 1, 2, &s).unwrap();
        for phi in [&phi1, &phi2] {
            assert!(phi.eval(&[1.0]) >= 1.0 - 1e-6);
            assert!(phi.eval(&[-1.0]) >= 1.0 - 1e-6);
            assert!(phi.eval(&[0.0]) >= -1e-6);
            assert!(phi.rho_star >= phi.rho_primal - 1e-7);
        }
        assert!(phi2.rho_star <= phi1.rho_star + 1e-7);
        let abs = |x: &[f64]| Some(x[0].abs());
        let g1 = l1_gap(&phi1, abs, 101);
        let g2 = l1_gap(&phi2, abs, 101);
        assert!(g1 >= -1e-6 && g2 >= -1e-6);
        assert!(g2 <= g1 + 1e-7, "{g2} > {g1}");
    }

    #[test]
    fn exact_case_gap_vanishes() {
        let g = p(2, &[(1.0, &[1, 0])]);
        let h = p(2, &[(1.0, &[0, 1]), (-1.0, &[0, 2])]);
        let phi = approximate_phi(&g, &[h], 1, 1, 1, &HierarchySettings::default()).unwrap();
        let gap = l1_gap(&phi, |x: &[f64]| Some(x[0]), 101);
        assert!(gap.abs() < 1e-6, "{gap}");
    }
}

//! Semi-infinite problem instances
//! `min { f(x) : p_s(x) >= 0, g(x, y) <= 0 for all y with h_j(x, y) >= 0 }`:
//! JSON format, validation, box rescaling, lifting of `min[0, a - b]` terms,
//! and a brute-force grid oracle for small instances.
//!
//! File polynomials are lists of terms `{"coeff": c, "powers": [..]}`. Powers
//! of `f` and `X_constraints` run over the `x` block; powers of `g` and
//! `Y_constraints` run over `x` followed by `y`. When `lift_min` declares
//! `L` pairs `(a_k, b_k)` (polynomials in the first `n` variables), the `x`
//! block has `n + L` entries: slot `n + k` stands for `min[0, a_k - b_k]`.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::{Exponent, Polynomial};

/// Tolerance used by the oracle for `h_j >= 0` and `p_s >= 0`.
const GRID_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TermDoc {
    coeff: f64,
    powers: Vec<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolyDoc {
    terms: Vec<TermDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LiftDoc {
    a: PolyDoc,
    b: PolyDoc,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemDoc {
    #[serde(default)]
    name: String,
    n: usize,
    p: usize,
    f: PolyDoc,
    #[serde(rename = "X_constraints", default)]
    x_constraints: Vec<PolyDoc>,
    g: PolyDoc,
    #[serde(rename = "Y_constraints")]
    y_constraints: Vec<PolyDoc>,
    #[serde(rename = "box", default, skip_serializing_if = "Option::is_none")]
    bounds: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    lift_min: Vec<LiftDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    y_box: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    y_ball_radius: Option<f64>,
}

/// A validated instance.
#[derive(Debug, Clone, PartialEq)]
pub struct SipProblem {
    pub name: String,
    /// Number of original `x` variables (excluding lifted slots).
    pub n: usize,
    pub p: usize,
    pub f: Polynomial,
    pub x_constraints: Vec<Polynomial>,
    pub g: Polynomial,
    pub y_constraints: Vec<Polynomial>,
    /// Box containing `X`, one interval per `x` variable (lifted slots
    /// included). Used to rescale onto `[-1, 1]^n`.
    pub bounds: Option<Vec<(f64, f64)>>,
    /// Pairs `(a_k, b_k)` in the first `n` variables.
    pub lift_min: Vec<(Polynomial, Polynomial)>,
    /// Box for `y`, used by the grid oracle.
    pub y_box: Option<Vec<(f64, f64)>>,
    /// Radius of a ball added to `Y_x` by the inner relaxation.
    pub y_ball_radius: Option<f64>,
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.into(),
        message: message.into(),
    }
}

fn poly_from_doc(doc: &PolyDoc, dim: usize, path: &str) -> Result<Polynomial> {
    let mut p = Polynomial::zero(dim);
    for (i, t) in doc.terms.iter().enumerate() {
        if t.powers.len() != dim {
            return Err(schema(
                format!("{path}.terms[{i}].powers"),
                format!("expected {dim} exponents, found {}", t.powers.len()),
            ));
        }
        if !t.coeff.is_finite() {
            return Err(schema(format!("{path}.terms[{i}].coeff"), "coefficient is not finite"));
        }
        p.add_term(Exponent::new(t.powers.clone()), t.coeff);
    }
    Ok(p)
}

fn poly_to_doc(p: &Polynomial) -> PolyDoc {
    PolyDoc {
        terms: p
            .terms()
            .map(|(e, c)| TermDoc {
                coeff: c,
                powers: e.powers().to_vec(),
            })
            .collect(),
    }
}

fn intervals(v: &[[f64; 2]], expected: usize, path: &str) -> Result<Vec<(f64, f64)>> {
    if v.len() != expected {
        return Err(schema(path, format!("expected {expected} intervals, found {}", v.len())));
    }
    v.iter()
        .enumerate()
        .map(|(i, &[lo, hi])| {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(schema(format!("{path}[{i}]"), format!("degenerate interval [{lo}, {hi}]")));
            }
            Ok((lo, hi))
        })
        .collect()
}

/// Parses and validates a JSON problem.
pub fn parse_problem(text: &str) -> Result<SipProblem> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: ProblemDoc = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        schema(path, e.into_inner().to_string())
    })?;
    from_doc(&doc)
}

fn from_doc(doc: &ProblemDoc) -> Result<SipProblem> {
    if doc.n == 0 {
        return Err(schema("n", "at least one x variable is required"));
    }
    if doc.p == 0 {
        return Err(schema("p", "at least one y variable is required"));
    }
    if doc.y_constraints.is_empty() {
        return Err(schema("Y_constraints", "Y_x must be described by at least one constraint"));
    }
    let lifts = doc.lift_min.len();
    let nx = doc.n + lifts;
    let nxy = nx + doc.p;

    let f = poly_from_doc(&doc.f, nx, "f")?;
    let x_constraints = doc
        .x_constraints
        .iter()
        .enumerate()
        .map(|(s, q)| poly_from_doc(q, nx, &format!("X_constraints[{s}]")))
        .collect::<Result<Vec<_>>>()?;
    let g = poly_from_doc(&doc.g, nxy, "g")?;
    let y_constraints = doc
        .y_constraints
        .iter()
        .enumerate()
        .map(|(j, q)| poly_from_doc(q, nxy, &format!("Y_constraints[{j}]")))
        .collect::<Result<Vec<_>>>()?;
    for (j, h) in y_constraints.iter().enumerate() {
        if h.is_zero() {
            return Err(schema(format!("Y_constraints[{j}]"), "zero polynomial"));
        }
    }
    let lift_min = doc
        .lift_min
        .iter()
        .enumerate()
        .map(|(k, l)| {
            Ok((
                poly_from_doc(&l.a, doc.n, &format!("lift_min[{k}].a"))?,
                poly_from_doc(&l.b, doc.n, &format!("lift_min[{k}].b"))?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let bounds = doc.bounds.as_deref().map(|b| intervals(b, nx, "box")).transpose()?;
    let y_box = doc.y_box.as_deref().map(|b| intervals(b, doc.p, "y_box")).transpose()?;
    if let Some(r) = doc.y_ball_radius {
        if !(r.is_finite() && r > 0.0) {
            return Err(schema("y_ball_radius", "must be positive and finite"));
        }
    }
    Ok(SipProblem {
        name: doc.name.clone(),
        n: doc.n,
        p: doc.p,
        f,
        x_constraints,
        g,
        y_constraints,
        bounds,
        lift_min,
        y_box,
        y_ball_radius: doc.y_ball_radius,
    })
}

impl SipProblem {
    /// Builds and validates an instance with no lifted terms.
    pub fn new(
        name: impl Into<String>,
        f: Polynomial,
        x_constraints: Vec<Polynomial>,
        g: Polynomial,
        y_constraints: Vec<Polynomial>,
    ) -> Result<Self> {
        let n = f.dim();
        if g.dim() <= n {
            return Err(Error::InvalidInput("g must depend on at least one y variable slot".into()));
        }
        let prob = Self {
            name: name.into(),
            n,
            p: g.dim() - n,
            f,
            x_constraints,
            g,
            y_constraints,
            bounds: None,
            lift_min: Vec::new(),
            y_box: None,
            y_ball_radius: None,
        };
        from_doc(&prob.to_doc())
    }

    /// Number of `x` variables, lifted slots included.
    pub fn nx(&self) -> usize {
        self.n + self.lift_min.len()
    }

    fn to_doc(&self) -> ProblemDoc {
        let iv = |v: &[(f64, f64)]| v.iter().map(|&(a, b)| [a, b]).collect();
        ProblemDoc {
            name: self.name.clone(),
            n: self.n,
            p: self.p,
            f: poly_to_doc(&self.f),
            x_constraints: self.x_constraints.iter().map(poly_to_doc).collect(),
            g: poly_to_doc(&self.g),
            y_constraints: self.y_constraints.iter().map(poly_to_doc).collect(),
            bounds: self.bounds.as_deref().map(iv),
            lift_min: self
                .lift_min
                .iter()
                .map(|(a, b)| LiftDoc {
                    a: poly_to_doc(a),
                    b: poly_to_doc(b),
                })
                .collect(),
            y_box: self.y_box.as_deref().map(iv),
            y_ball_radius: self.y_ball_radius,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("problem documents always serialize")
    }

    /// Replaces every lifted slot `m_k` by `(a_k - b_k - u_k) / 2` and adds
    /// the constraints defining `u_k = |a_k - b_k|`.
    pub fn apply_lifts(&self) -> SipProblem {
        if self.lift_min.is_empty() {
            return self.clone();
        }
        let nx = self.nx();
        let images = |dim: usize| -> Vec<Polynomial> {
            (0..dim)
                .map(|i| {
                    if (self.n..nx).contains(&i) {
                        let (a, b) = &self.lift_min[i - self.n];
                        lift_min_expression(a, b).expression.embed(nx, 0).with_var_moved(self.n, i).embed(dim, 0)
                    } else {
                        Polynomial::var(dim, i)
                    }
                })
                .collect()
        };
        let sub = |q: &Polynomial| q.compose(&images(q.dim())).expect("images match dimension");
        let mut x_constraints: Vec<Polynomial> = self.x_constraints.iter().map(sub).collect();
        for (k, (a, b)) in self.lift_min.iter().enumerate() {
            for c in lift_min_expression(a, b).constraints {
                x_constraints.push(c.embed(nx, 0).with_var_moved(self.n, self.n + k));
            }
        }
        SipProblem {
            name: self.name.clone(),
            n: nx,
            p: self.p,
            f: sub(&self.f),
            x_constraints,
            g: sub(&self.g),
            y_constraints: self.y_constraints.iter().map(sub).collect(),
            bounds: self.bounds.clone(),
            lift_min: Vec::new(),
            y_box: self.y_box.clone(),
            y_ball_radius: self.y_ball_radius,
        }
    }

    /// Lifts, then rescales onto `[-1, 1]^n` when a box is declared.
    pub fn prepare(&self) -> Result<(SipProblem, AffineMap)> {
        let lifted = self.apply_lifts();
        match lifted.bounds.clone() {
            Some(b) => rescale_to_box(&lifted, &b),
            None => {
                let map = AffineMap::identity(lifted.n);
                Ok((lifted, map))
            }
        }
    }

    /// `max(0, -min_s p_s(x))`.
    pub fn x_violation(&self, x: &[f64]) -> f64 {
        self.x_constraints
            .iter()
            .map(|q| -q.eval_unchecked(x))
            .fold(0.0, f64::max)
    }
}

impl Polynomial {
    /// Swaps variables `from` and `to`.
    fn with_var_moved(&self, from: usize, to: usize) -> Polynomial {
        if from == to {
            return self.clone();
        }
        let mut out = Polynomial::zero(self.dim());
        for (e, c) in self.terms() {
            let mut p = e.powers().to_vec();
            p.swap(from, to);
            out.add_term(Exponent::new(p), c);
        }
        out
    }
}

/// Coordinates `x_i = center_i + radius_i * u_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub center: Vec<f64>,
    pub radius: Vec<f64>,
}

impl AffineMap {
    pub fn identity(n: usize) -> Self {
        Self {
            center: vec![0.0; n],
            radius: vec![1.0; n],
        }
    }

    pub fn to_original(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.center.iter().zip(&self.radius))
            .map(|(u, (c, r))| c + r * u)
            .collect()
    }

    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.center.iter().zip(&self.radius))
            .map(|(x, (c, r))| (x - c) / r)
            .collect()
    }
}

/// Substitutes `x_i = c_i + r_i u_i` so that the box becomes `[-1, 1]^n`.
/// The problem must not carry unapplied lifts.
pub fn rescale_to_box(prob: &SipProblem, bounds: &[(f64, f64)]) -> Result<(SipProblem, AffineMap)> {
    if !prob.lift_min.is_empty() {
        return Err(Error::InvalidInput("apply lifts before rescaling".into()));
    }
    if bounds.len() != prob.n {
        return Err(Error::DimensionMismatch {
            expected: prob.n,
            found: bounds.len(),
        });
    }
    for (i, &(lo, hi)) in bounds.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidInput(format!("degenerate interval [{lo}, {hi}] for x{}", i + 1)));
        }
    }
    let map = AffineMap {
        center: bounds.iter().map(|(a, b)| 0.5 * (a + b)).collect(),
        radius: bounds.iter().map(|(a, b)| 0.5 * (b - a)).collect(),
    };
    let sub = |q: &Polynomial| q.affine_substitute(&map.center, &map.radius);
    let out = SipProblem {
        name: prob.name.clone(),
        n: prob.n,
        p: prob.p,
        f: sub(&prob.f),
        x_constraints: prob.x_constraints.iter().map(sub).collect(),
        g: sub(&prob.g),
        y_constraints: prob.y_constraints.iter().map(sub).collect(),
        bounds: Some(vec![(-1.0, 1.0); prob.n]),
        lift_min: Vec::new(),
        y_box: prob.y_box.clone(),
        y_ball_radius: prob.y_ball_radius,
    };
    Ok((out, map))
}

/// `min[0, a - b]` as a polynomial in one extra variable `u` (last slot).
#[derive(Debug, Clone)]
pub struct LiftedMin {
    /// `(a - b - u) / 2`.
    pub expression: Polynomial,
    /// `u^2 - (a - b)^2 >= 0`, `(a - b)^2 - u^2 >= 0`, `u >= 0`.
    pub constraints: Vec<Polynomial>,
}

pub fn lift_min_expression(a: &Polynomial, b: &Polynomial) -> LiftedMin {
    let n = a.dim();
    let diff = (a - b).embed(n + 1, 0);
    let u = Polynomial::var(n + 1, n);
    let expression = (&diff - &u).scale(0.5);
    let d2 = &diff * &diff;
    let u2 = &u * &u;
    LiftedMin {
        expression,
        constraints: vec![&u2 - &d2, &d2 - &u2, u],
    }
}

/// The value of the lifted variable solving the lift constraints.
pub fn lift_value(a_minus_b: f64) -> f64 {
    a_minus_b.abs()
}

/// Grid sizes for the brute-force oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleResolution {
    /// Points per `x` axis.
    pub x_points: usize,
    /// Points per `y` axis.
    pub y_points: usize,
}

impl Default for OracleResolution {
    fn default() -> Self {
        Self {
            x_points: 201,
            y_points: 201,
        }
    }
}

/// `m` equispaced points on `[lo, hi]`, endpoints exact.
pub fn linspace(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    match m {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..m)
            .map(|k| {
                if k == m - 1 {
                    hi
                } else {
                    lo + (hi - lo) * k as f64 / (m - 1) as f64
                }
            })
            .collect(),
    }
}

fn tensor_grid(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::with_capacity(axes.len())];
    for axis in axes {
        out = out
            .into_iter()
            .flat_map(|pt| {
                axis.iter().map(move |&v| {
                    let mut q = pt.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    out
}

/// Brute-force `Phi_grid` and `f*_grid` for instances with `n, p <= 2`.
#[derive(Debug, Clone)]
pub struct GridOracle {
    n: usize,
    g: Polynomial,
    h: Vec<Polynomial>,
    y_grid: Vec<Vec<f64>>,
    pub resolution: OracleResolution,
    pub x_grid: Vec<Vec<f64>>,
    /// `Phi_grid` per `x` node; `None` when no `y` node satisfies `h >= 0`.
    pub phi: Vec<Option<f64>>,
    /// Nodes where `Y_x` has no grid point; `Phi` is vacuous there.
    pub empty_inner: Vec<Vec<f64>>,
    /// `max |grad_y g| * sqrt(p) * dy / 2`: bounds how far `Phi_grid` can
    /// sit below `Phi` away from the boundary of `Y_x`.
    pub mesh_modulus: f64,
    pub f_star: Option<f64>,
    pub argmin: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleReport {
    pub name: String,
    pub resolution: OracleResolution,
    pub f_star: Option<f64>,
    pub argmin: Option<Vec<f64>>,
    pub feasible_nodes: usize,
    pub empty_inner_nodes: Vec<Vec<f64>>,
    pub mesh_modulus: f64,
}

impl GridOracle {
    /// `max { g(x, y) : y on the grid, h_j(x, y) >= 0 }`.
    pub fn phi(&self, x: &[f64]) -> Option<f64> {
        let mut z = x.to_vec();
        z.resize(self.n + self.y_grid.first().map_or(0, Vec::len), 0.0);
        let mut best: Option<f64> = None;
        for y in &self.y_grid {
            z[self.n..].copy_from_slice(y);
            if self.h.iter().all(|h| h.eval_unchecked(&z) >= -GRID_TOL) {
                let v = self.g.eval_unchecked(&z);
                best = Some(best.map_or(v, |b| b.max(v)));
            }
        }
        best
    }

    pub fn report(&self, name: &str) -> OracleReport {
        OracleReport {
            name: name.to_string(),
            resolution: self.resolution,
            f_star: self.f_star,
            argmin: self.argmin.clone(),
            feasible_nodes: self.phi.iter().filter(|v| v.is_some_and(|v| v <= GRID_TOL)).count(),
            empty_inner_nodes: self.empty_inner.clone(),
            mesh_modulus: self.mesh_modulus,
        }
    }
}

/// Brute-force oracle on the lifted problem. `x` ranges over the declared
/// box (default `[-1, 1]^n`); `y` over `y_box`, else the `y` ball's bounding
/// box, else `[-1, 1]^p`.
pub fn oracle_solve(prob: &SipProblem, res: OracleResolution) -> Result<GridOracle> {
    let prob = prob.apply_lifts();
    let (n, p) = (prob.n, prob.p);
    if n > 2 || p > 2 {
        return Err(Error::ScaleGuard { n, p });
    }
    if res.x_points < 2 || res.y_points < 2 {
        return Err(Error::InvalidInput("oracle grids need at least two points per axis".into()));
    }
    let x_box = prob.bounds.clone().unwrap_or_else(|| vec![(-1.0, 1.0); n]);
    let y_box = prob.y_box.clone().unwrap_or_else(|| {
        let r = prob.y_ball_radius.unwrap_or(1.0);
        vec![(-r, r); p]
    });
    let x_axes: Vec<Vec<f64>> = x_box.iter().map(|&(a, b)| linspace(a, b, res.x_points)).collect();
    let y_axes: Vec<Vec<f64>> = y_box.iter().map(|&(a, b)| linspace(a, b, res.y_points)).collect();
    let x_grid = tensor_grid(&x_axes);
    let y_grid = tensor_grid(&y_axes);

    let dy = y_box
        .iter()
        .map(|&(a, b)| (b - a) / (res.y_points - 1) as f64)
        .fold(0.0, f64::max);
    let grads: Vec<Polynomial> = (n..n + p).map(|i| prob.g.derivative(i)).collect();

    let mut oracle = GridOracle {
        n,
        g: prob.g.clone(),
        h: prob.y_constraints.clone(),
        y_grid,
        resolution: res,
        x_grid: Vec::new(),
        phi: Vec::new(),
        empty_inner: Vec::new(),
        mesh_modulus: 0.0,
        f_star: None,
        argmin: None,
    };

    let per_x: Vec<(Option<f64>, f64)> = x_grid
        .par_iter()
        .map(|x| {
            let phi = oracle.phi(x);
            let mut z = x.clone();
            z.resize(n + p, 0.0);
            let mut lip: f64 = 0.0;
            for y in &oracle.y_grid {
                z[n..].copy_from_slice(y);
                let norm = grads.iter().map(|d| d.eval_unchecked(&z).powi(2)).sum::<f64>().sqrt();
                lip = lip.max(norm);
            }
            (phi, lip)
        })
        .collect();

    let mut best: Option<(f64, usize)> = None;
    for (k, (x, (phi, lip))) in x_grid.iter().zip(&per_x).enumerate() {
        oracle.mesh_modulus = oracle.mesh_modulus.max(lip * (p as f64).sqrt() * dy / 2.0);
        if phi.is_none() {
            oracle.empty_inner.push(x.clone());
        }
        let feasible = prob.x_violation(x) <= GRID_TOL && phi.is_none_or(|v| v <= GRID_TOL);
        if feasible {
            let fx = prob.f.eval_unchecked(x);
            if best.is_none_or(|(b, _)| fx < b) {
                best = Some((fx, k));
            }
        }
    }
    if !oracle.empty_inner.is_empty() {
        log::warn!("oracle: Y_x has no grid point at {} x nodes", oracle.empty_inner.len());
    }
    oracle.f_star = best.map(|(v, _)| v);
    oracle.argmin = best.map(|(_, k)| x_grid[k].clone());
    oracle.phi = per_x.into_iter().map(|(v, _)| v).collect();
    oracle.x_grid = x_grid;
    Ok(oracle)
}

/// Plain-text summary of an oracle run.
pub fn describe_oracle(o: &GridOracle) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "x nodes: {}, y nodes per x: {}", o.x_grid.len(), o.y_grid.len());
    match (&o.f_star, &o.argmin) {
        (Some(v), Some(x)) => {
            let _ = writeln!(s, "f*_grid = {v:.9} at {x:?}");
        }
        _ => {
            let _ = writeln!(s, "no feasible grid node");
        }
    }
    let _ = writeln!(s, "mesh modulus: {:.3e}", o.mesh_modulus);
    let _ = writeln!(s, "nodes with empty Y_x: {}", o.empty_inner.len());
    s
}

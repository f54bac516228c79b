//! Sparse multivariate polynomials with real coefficients and graded monomial bases.
//!
//! Monomials are ordered graded-lexicographically: total degree first, then
//! lexicographically with `x_1` as the most significant variable, so the
//! degree-one block of a two-variable basis reads `x_1, x_2`.

use std::cmp::Ordering;
use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficients below this magnitude are dropped during normalization.
pub const ZERO_THRESHOLD: f64 = 1e-300;

/// Exponent tuple `alpha` of a monomial `x^alpha`.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Exponent(Vec<u32>);

impl Exponent {
    pub fn new(powers: Vec<u32>) -> Self {
        Self(powers)
    }

    pub fn zero(dim: usize) -> Self {
        Self(vec![0; dim])
    }

    /// The unit exponent `e_i`.
    pub fn unit(dim: usize, i: usize) -> Self {
        let mut p = vec![0; dim];
        p[i] = 1;
        Self(p)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> usize {
        self.0.iter().map(|&a| a as usize).sum()
    }

    pub fn powers(&self) -> &[u32] {
        &self.0
    }

    /// Value of `x^alpha` at `point`; assumes matching length.
    pub fn eval(&self, point: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(point)
            .filter(|(&a, _)| a > 0)
            .map(|(&a, &x)| x.powi(a as i32))
            .product()
    }

    /// Degree restricted to the variables in `range`.
    pub fn degree_in(&self, range: std::ops::Range<usize>) -> usize {
        self.0[range].iter().map(|&a| a as usize).sum()
    }
}

impl Add for &Exponent {
    type Output = Exponent;

    fn add(self, rhs: &Exponent) -> Exponent {
        debug_assert_eq!(self.dim(), rhs.dim());
        Exponent(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Ord for Exponent {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| {
                for (a, b) in self.0.iter().zip(&other.0) {
                    match b.cmp(a) {
                        Ordering::Equal => continue,
                        ord => return ord,
                    }
                }
                Ordering::Equal
            })
            .then_with(|| self.0.len().cmp(&other.0.len()))
    }
}

impl PartialOrd for Exponent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl From<Vec<u32>> for Exponent {
    fn from(v: Vec<u32>) -> Self {
        Self(v)
    }
}

impl<const N: usize> From<[u32; N]> for Exponent {
    fn from(v: [u32; N]) -> Self {
        Self(v.to_vec())
    }
}

/// Sparse polynomial `sum_alpha c_alpha x^alpha` in `dim` variables.
#[derive(Clone, PartialEq)]
pub struct Polynomial {
    dim: usize,
    terms: BTreeMap<Exponent, f64>,
}

impl Polynomial {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self::monomial(Exponent::zero(dim), c)
    }

    /// The coordinate polynomial `x_i`.
    pub fn var(dim: usize, i: usize) -> Self {
        Self::monomial(Exponent::unit(dim, i), 1.0)
    }

    pub fn monomial(exp: Exponent, coeff: f64) -> Self {
        let dim = exp.dim();
        let mut p = Self::zero(dim);
        p.add_term(exp, coeff);
        p
    }

    /// Builds a polynomial from `(coefficient, powers)` pairs; repeated
    /// exponents are summed.
    pub fn from_terms<I, E>(dim: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, E)>,
        E: Into<Exponent>,
    {
        let mut p = Self::zero(dim);
        for (c, e) in terms {
            let e = e.into();
            if e.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: e.dim(),
                });
            }
            p.add_term(e, c);
        }
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// Terms in graded order.
    pub fn terms(&self) -> impl Iterator<Item = (&Exponent, f64)> {
        self.terms.iter().map(|(e, &c)| (e, c))
    }

    pub fn coeff(&self, exp: &Exponent) -> f64 {
        self.terms.get(exp).copied().unwrap_or(0.0)
    }

    /// Total degree; the zero polynomial has degree 0.
    pub fn degree(&self) -> usize {
        self.terms.keys().map(Exponent::degree).max().unwrap_or(0)
    }

    /// Degree in the variables of `range` only.
    pub fn degree_in(&self, range: std::ops::Range<usize>) -> usize {
        self.terms
            .keys()
            .map(|e| e.degree_in(range.clone()))
            .max()
            .unwrap_or(0)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Adds `coeff * x^exp` in place, dropping the term if it cancels.
    pub fn add_term(&mut self, exp: Exponent, coeff: f64) {
        debug_assert_eq!(exp.dim(), self.dim);
        match self.terms.entry(exp) {
            Entry::Vacant(v) => {
                if coeff.abs() >= ZERO_THRESHOLD {
                    v.insert(coeff);
                }
            }
            Entry::Occupied(mut o) => {
                let c = *o.get() + coeff;
                if c.abs() < ZERO_THRESHOLD {
                    o.remove();
                } else {
                    *o.get_mut() = c;
                }
            }
        }
    }

    pub fn eval(&self, point: &[f64]) -> Result<f64> {
        if point.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: point.len(),
            });
        }
        Ok(self.eval_unchecked(point))
    }

    /// Evaluation without the length check. Panics in debug builds on mismatch.
    pub fn eval_unchecked(&self, point: &[f64]) -> f64 {
        debug_assert_eq!(point.len(), self.dim);
        self.terms.iter().map(|(e, c)| c * e.eval(point)).sum()
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = Self::zero(self.dim);
        for (e, c) in self.terms() {
            out.add_term(e.clone(), c * s);
        }
        out
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        let mut out = self.clone();
        for (e, c) in other.terms() {
            out.add_term(e.clone(), c);
        }
        Ok(out)
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.try_add(&other.scale(-1.0))
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        let mut out = Self::zero(self.dim);
        for (a, ca) in self.terms() {
            for (b, cb) in other.terms() {
                out.add_term(a + b, ca * cb);
            }
        }
        Ok(out)
    }

    pub fn powi(&self, k: u32) -> Self {
        let mut out = Self::constant(self.dim, 1.0);
        for _ in 0..k {
            out = &out * self;
        }
        out
    }

    /// Partial derivative with respect to variable `i`.
    pub fn derivative(&self, i: usize) -> Self {
        let mut out = Self::zero(self.dim);
        for (e, c) in self.terms() {
            let k = e.powers()[i];
            if k > 0 {
                let mut powers = e.powers().to_vec();
                powers[i] -= 1;
                out.add_term(Exponent::new(powers), c * k as f64);
            }
        }
        out
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        Ok(())
    }

    /// Fixes the first `x0.len()` variables at `x0`, returning a polynomial in
    /// the remaining variables.
    pub fn substitute_x(&self, x0: &[f64]) -> Result<Self> {
        let n = x0.len();
        if n > self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: n,
            });
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("substitution point is not finite".into()));
        }
        let mut out = Self::zero(self.dim - n);
        for (e, c) in self.terms() {
            let (xs, ys) = e.powers().split_at(n);
            let factor: f64 = xs
                .iter()
                .zip(x0)
                .map(|(&a, &x)| x.powi(a as i32))
                .product();
            out.add_term(Exponent::new(ys.to_vec()), c * factor);
        }
        Ok(out)
    }

    /// Re-expresses the polynomial in a `new_dim`-variable space, placing
    /// variable `i` at position `offset + i`.
    pub fn embed(&self, new_dim: usize, offset: usize) -> Self {
        assert!(offset + self.dim <= new_dim);
        let mut out = Self::zero(new_dim);
        for (e, c) in self.terms() {
            let mut p = vec![0; new_dim];
            p[offset..offset + self.dim].copy_from_slice(e.powers());
            out.add_term(Exponent::new(p), c);
        }
        out
    }

    /// Substitutes `x_i = shift[i] + scale[i] * u_i` for the leading
    /// `shift.len()` variables; the trailing variables are untouched.
    pub fn affine_substitute(&self, shift: &[f64], scale: &[f64]) -> Self {
        assert_eq!(shift.len(), scale.len());
        assert!(shift.len() <= self.dim);
        let images: Vec<Polynomial> = (0..shift.len())
            .map(|i| {
                let mut p = Self::constant(self.dim, shift[i]);
                p.add_term(Exponent::unit(self.dim, i), scale[i]);
                p
            })
            .collect();
        let mut out = Self::zero(self.dim);
        for (e, c) in self.terms() {
            let mut term = {
                let mut rest = vec![0; self.dim];
                rest[shift.len()..].copy_from_slice(&e.powers()[shift.len()..]);
                Self::monomial(Exponent::new(rest), c)
            };
            for (i, img) in images.iter().enumerate() {
                let a = e.powers()[i];
                if a > 0 {
                    term = &term * &img.powi(a);
                }
            }
            for (te, tc) in term.terms() {
                out.add_term(te.clone(), tc);
            }
        }
        out
    }

    /// Composes with polynomial images: variable `i` becomes `images[i]`.
    pub fn compose(&self, images: &[Polynomial]) -> Result<Self> {
        if images.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: images.len(),
            });
        }
        let target = images.first().map(Polynomial::dim).unwrap_or(0);
        if images.iter().any(|p| p.dim() != target) {
            return Err(Error::InvalidInput("composition images differ in dimension".into()));
        }
        let mut out = Self::zero(target);
        for (e, c) in self.terms() {
            let mut term = Self::constant(target, c);
            for (img, &a) in images.iter().zip(e.powers()) {
                if a > 0 {
                    term = &term * &img.powi(a);
                }
            }
            out = &out + &term;
        }
        Ok(out)
    }
}

impl fmt::Debug for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Polynomial[{}](", self.dim)?;
        for (i, (e, c)) in self.terms().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{c}*{e:?}")?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        for (i, (e, c)) in self.terms().enumerate() {
            if i > 0 {
                write!(f, " {} ", if c < 0.0 { '-' } else { '+' })?;
            } else if c < 0.0 {
                write!(f, "-")?;
            }
            let mono: Vec<String> = e
                .powers()
                .iter()
                .enumerate()
                .filter(|(_, &a)| a > 0)
                .map(|(v, &a)| {
                    if a == 1 {
                        format!("x{}", v + 1)
                    } else {
                        format!("x{}^{a}", v + 1)
                    }
                })
                .collect();
            if mono.is_empty() {
                write!(f, "{}", c.abs())?;
            } else if (c.abs() - 1.0).abs() < f64::EPSILON {
                write!(f, "{}", mono.join("*"))?;
            } else {
                write!(f, "{}*{}", c.abs(), mono.join("*"))?;
            }
        }
        Ok(())
    }
}

// Operator sugar for equal-dimension operands; panics on mismatch.

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        self.try_add(rhs).expect("polynomial dimension mismatch")
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        self.try_sub(rhs).expect("polynomial dimension mismatch")
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        self.try_mul(rhs).expect("polynomial dimension mismatch")
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

/// All exponents of total degree at most `degree` in `dim` variables, in
/// graded order, with an inverse index.
#[derive(Debug, Clone)]
pub struct MonomialBasis {
    dim: usize,
    degree: usize,
    monomials: Vec<Exponent>,
    index: HashMap<Exponent, usize>,
}

impl MonomialBasis {
    pub fn new(dim: usize, degree: usize) -> Self {
        let mut monomials = Vec::with_capacity(binomial(dim + degree, dim));
        for d in 0..=degree {
            let mut buf = vec![0u32; dim];
            push_compositions(&mut monomials, &mut buf, 0, d as u32);
        }
        let index = monomials
            .iter()
            .enumerate()
            .map(|(i, e)| (e.clone(), i))
            .collect();
        Self {
            dim,
            degree,
            monomials,
            index,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn monomials(&self) -> &[Exponent] {
        &self.monomials
    }

    pub fn get(&self, i: usize) -> &Exponent {
        &self.monomials[i]
    }

    pub fn index_of(&self, e: &Exponent) -> Option<usize> {
        self.index.get(e).copied()
    }

    /// Number of monomials of degree at most `d` (a prefix of the list).
    pub fn prefix_len(&self, d: usize) -> usize {
        binomial(self.dim + d.min(self.degree), self.dim)
    }

    /// Vector of monomial values at `point`.
    pub fn eval(&self, point: &[f64]) -> Vec<f64> {
        self.monomials.iter().map(|e| e.eval(point)).collect()
    }
}

/// Convenience wrapper for [`MonomialBasis::new`].
pub fn monomial_basis(dim: usize, degree: usize) -> MonomialBasis {
    MonomialBasis::new(dim, degree)
}

// Compositions of `remaining` into buf[pos..], largest leading part first.
fn push_compositions(out: &mut Vec<Exponent>, buf: &mut [u32], pos: usize, remaining: u32) {
    if pos + 1 == buf.len() {
        buf[pos] = remaining;
        out.push(Exponent::new(buf.to_vec()));
        buf[pos] = 0;
        return;
    }
    if buf.is_empty() {
        return;
    }
    for a in (0..=remaining).rev() {
        buf[pos] = a;
        push_compositions(out, buf, pos + 1, remaining - a);
    }
    buf[pos] = 0;
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn poly(dim: usize, terms: &[(f64, &[u32])]) -> Polynomial {
        Polynomial::from_terms(dim, terms.iter().map(|(c, e)| (*c, e.to_vec()))).unwrap()
    }

    #[test]
    fn basis_small_cases() {
        let b = monomial_basis(1, 1);
        assert_eq!(b.monomials(), &[Exponent::from([0]), Exponent::from([1])]);
        assert_eq!(monomial_basis(2, 2).len(), 6);
        let b = monomial_basis(3, 0);
        assert_eq!(b.monomials(), &[Exponent::from([0, 0, 0])]);
    }

    #[test]
    fn basis_is_graded_lex() {
        let b = monomial_basis(2, 2);
        let expect: Vec<Exponent> = [[0, 0], [1, 0], [0, 1], [2, 0], [1, 1], [0, 2]]
            .into_iter()
            .map(Exponent::from)
            .collect();
        assert_eq!(b.monomials(), expect.as_slice());
        for w in b.monomials().windows(2) {
            assert!(w[0] < w[1]);
        }
    }

    #[test]
    fn basis_size_law() {
        for n in 1..=5 {
            for d in 0..=6 {
                let b = monomial_basis(n, d);
                assert_eq!(b.len(), binomial(n + d, n), "n={n} d={d}");
                for (i, e) in b.monomials().iter().enumerate() {
                    assert_eq!(b.index_of(e), Some(i));
                }
                assert_eq!(b.monomials(), monomial_basis(n, d).monomials());
            }
        }
    }

    #[test]
    fn eval_examples() {
        let theta = poly(1, &[(1.0, &[0]), (-1.0, &[2])]);
        assert_eq!(theta.eval(&[1.0]).unwrap(), 0.0);
        let p = poly(2, &[(1.0, &[1, 1]), (1.0, &[0, 2])]);
        assert_eq!(p.eval(&[2.0, 3.0]).unwrap(), 15.0);
        assert_eq!(Polynomial::zero(3).eval(&[0.1, 0.2, 0.3]).unwrap(), 0.0);
        assert!(matches!(
            p.eval(&[1.0]),
            Err(Error::DimensionMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn derivative_example() {
        // d/dx (x y + y^2) = y
        let p = poly(2, &[(1.0, &[1, 1]), (1.0, &[0, 2])]);
        assert_eq!(p.derivative(0), poly(2, &[(1.0, &[0, 1])]));
        assert_eq!(p.derivative(1), poly(2, &[(1.0, &[1, 0]), (2.0, &[0, 1])]));
    }

    #[test]
    fn arithmetic_examples() {
        let x = Polynomial::var(1, 0);
        assert!((&x + &(-&x)).is_zero());
        let one = Polynomial::constant(1, 1.0);
        let prod = &(&one - &x) * &(&one + &x);
        assert_eq!(prod, poly(1, &[(1.0, &[0]), (-1.0, &[2])]));
        let x2 = poly(1, &[(1.0, &[2])]);
        assert_eq!(x2.scale(3.0), poly(1, &[(3.0, &[2])]));
        assert!(x.try_add(&Polynomial::var(2, 0)).is_err());
        assert!(x.try_mul(&Polynomial::var(2, 0)).is_err());
    }

    #[test]
    fn substitute_examples() {
        let g = poly(2, &[(1.0, &[1, 0]), (-1.0, &[0, 2])]);
        assert_eq!(g.substitute_x(&[0.5]).unwrap(), poly(1, &[(0.5, &[0]), (-1.0, &[2])]));
        let h = poly(2, &[(1.0, &[1, 1])]);
        assert!(h.substitute_x(&[0.0]).unwrap().is_zero());
        let g = poly(2, &[(1.0, &[1, 1]), (-0.5, &[0, 0])]);
        assert_eq!(g.substitute_x(&[1.0]).unwrap(), poly(1, &[(-0.5, &[0]), (1.0, &[1])]));
        assert!(g.substitute_x(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn affine_substitution_maps_endpoints() {
        // f(x) = x^2 on [0, 2] with x = 1 + u
        let f = poly(1, &[(1.0, &[2])]);
        let r = f.affine_substitute(&[1.0], &[1.0]);
        assert_eq!(r, poly(1, &[(1.0, &[0]), (2.0, &[1]), (1.0, &[2])]));
        assert_eq!(r.eval(&[-1.0]).unwrap(), 0.0);
    }

    #[test]
    fn compose_matches_eval() {
        let p = poly(2, &[(2.0, &[2, 1]), (-1.0, &[0, 1]), (0.5, &[0, 0])]);
        let imgs = vec![
            poly(1, &[(1.0, &[1]), (0.5, &[0])]),
            poly(1, &[(3.0, &[2])]),
        ];
        let c = p.compose(&imgs).unwrap();
        let t = 0.7;
        let direct = p.eval(&[t + 0.5, 3.0 * t * t]).unwrap();
        assert!((c.eval(&[t]).unwrap() - direct).abs() < 1e-12);
    }

    fn arb_poly(dim: usize) -> impl Strategy<Value = Polynomial> {
        prop::collection::vec(
            (-2.0f64..2.0, prop::collection::vec(0u32..3, dim)),
            0..6,
        )
        .prop_map(move |terms| Polynomial::from_terms(dim, terms).unwrap())
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    proptest! {
        #[test]
        fn eval_is_a_ring_homomorphism(
            p in arb_poly(3),
            q in arb_poly(3),
            v in prop::collection::vec(-1.5f64..1.5, 3),
        ) {
            let pv = p.eval(&v).unwrap();
            let qv = q.eval(&v).unwrap();
            prop_assert!(rel_close((&p + &q).eval(&v).unwrap(), pv + qv, 1e-12));
            prop_assert!(rel_close((&p * &q).eval(&v).unwrap(), pv * qv, 1e-12));
        }

        #[test]
        fn substitute_then_eval_is_joint_eval(
            p in arb_poly(3),
            x0 in -1.5f64..1.5,
            y in prop::collection::vec(-1.5f64..1.5, 2),
        ) {
            let joint = p.eval(&[x0, y[0], y[1]]).unwrap();
            let sub = p.substitute_x(&[x0]).unwrap().eval(&y).unwrap();
            prop_assert!(rel_close(joint, sub, 1e-12));
        }
    }
}

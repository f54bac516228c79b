//! Moment sequences, the Riesz functional, and moment/localizing matrices.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::poly::{Exponent, MonomialBasis, Polynomial};

/// Real sequence `z_alpha` for every `alpha` of degree at most `degree`.
#[derive(Debug, Clone)]
pub struct MomentSequence {
    basis: Arc<MonomialBasis>,
    values: Vec<f64>,
}

impl MomentSequence {
    /// Wraps values listed in the graded order of `MonomialBasis::new(dim, degree)`.
    pub fn from_values(dim: usize, degree: usize, values: Vec<f64>) -> Result<Self> {
        let basis = Arc::new(MonomialBasis::new(dim, degree));
        if values.len() != basis.len() {
            return Err(Error::DimensionMismatch {
                expected: basis.len(),
                found: values.len(),
            });
        }
        Ok(Self { basis, values })
    }

    pub fn from_fn(dim: usize, degree: usize, f: impl FnMut(&Exponent) -> f64) -> Self {
        let basis = Arc::new(MonomialBasis::new(dim, degree));
        let values = basis.monomials().iter().map(f).collect();
        Self { basis, values }
    }

    /// Moments of the Dirac measure at `point`.
    pub fn dirac(point: &[f64], degree: usize) -> Self {
        Self::from_fn(point.len(), degree, |e| e.eval(point))
    }

    /// Moments of the uniform probability measure on `[-1, 1]^dim`.
    pub fn uniform_box(dim: usize, degree: usize) -> Self {
        Self::from_fn(dim, degree, box_moment)
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn degree(&self) -> usize {
        self.basis.degree()
    }

    pub fn basis(&self) -> &MonomialBasis {
        &self.basis
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, e: &Exponent) -> Option<f64> {
        self.basis.index_of(e).map(|i| self.values[i])
    }

    /// `L_z(p) = sum_alpha p_alpha z_alpha`.
    pub fn riesz(&self, p: &Polynomial) -> Result<f64> {
        if p.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: p.dim(),
            });
        }
        let mut acc = 0.0;
        for (e, c) in p.terms() {
            let z = self.get(e).ok_or(Error::DegreeOverflow {
                needed: e.degree(),
                available: self.degree(),
            })?;
            acc += c * z;
        }
        Ok(acc)
    }

    /// Moment matrix `M_d(z)` in the graded basis of order `d`.
    pub fn moment_matrix(&self, d: usize) -> Result<DMatrix<f64>> {
        self.localizing_matrix(&Polynomial::constant(self.dim(), 1.0), d)
    }

    /// Localizing matrix `M_d(g z)` with entries `sum_gamma g_gamma z_{alpha+beta+gamma}`.
    pub fn localizing_matrix(&self, g: &Polynomial, d: usize) -> Result<DMatrix<f64>> {
        if g.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: g.dim(),
            });
        }
        let needed = 2 * d + g.degree();
        if needed > self.degree() {
            return Err(Error::DegreeOverflow {
                needed,
                available: self.degree(),
            });
        }
        let rows = MonomialBasis::new(self.dim(), d);
        let s = rows.len();
        let mut m = DMatrix::zeros(s, s);
        for i in 0..s {
            for j in i..s {
                let ab = rows.get(i) + rows.get(j);
                let mut v = 0.0;
                for (gamma, c) in g.terms() {
                    v += c * self.values[self.basis.index_of(&(&ab + gamma)).unwrap()];
                }
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Ok(m)
    }
}

/// `int_{[-1,1]^n} x^alpha dmu` for the uniform probability measure.
pub fn box_moment(e: &Exponent) -> f64 {
    e.powers()
        .iter()
        .map(|&a| if a % 2 == 0 { 1.0 / (a as f64 + 1.0) } else { 0.0 })
        .product()
}

/// Symbolic description of `M_d(g z)`: for each upper-triangular entry the
/// `(coefficient, exponent)` pairs it sums over.
#[derive(Debug, Clone)]
pub struct LocalizerStructure {
    generator: Polynomial,
    order: usize,
    rows: Arc<MonomialBasis>,
    // row-major upper triangle, i <= j
    entries: Vec<Vec<(f64, Exponent)>>,
}

impl LocalizerStructure {
    pub fn new(g: &Polynomial, order: usize) -> Self {
        let rows = Arc::new(MonomialBasis::new(g.dim(), order));
        let s = rows.len();
        let mut entries = Vec::with_capacity(s * (s + 1) / 2);
        for i in 0..s {
            for j in i..s {
                let ab = rows.get(i) + rows.get(j);
                entries.push(g.terms().map(|(gamma, c)| (c, &ab + gamma)).collect());
            }
        }
        Self {
            generator: g.clone(),
            order,
            rows,
            entries,
        }
    }

    pub fn generator(&self) -> &Polynomial {
        &self.generator
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Side length `s(d)`.
    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &MonomialBasis {
        &self.rows
    }

    /// Highest moment degree referenced.
    pub fn moment_degree(&self) -> usize {
        2 * self.order + self.generator.degree()
    }

    pub fn entry(&self, i: usize, j: usize) -> &[(f64, Exponent)] {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        let s = self.size();
        // offset of row i in the packed upper triangle
        let off = i * s - i * i.saturating_sub(1) / 2;
        &self.entries[off + (j - i)]
    }

    /// Upper-triangular entries in row-major order.
    pub fn upper_entries(&self) -> impl Iterator<Item = (usize, usize, &[(f64, Exponent)])> {
        let s = self.size();
        let mut k = 0;
        (0..s).flat_map(move |i| (i..s).map(move |j| (i, j))).map(move |(i, j)| {
            let e = &self.entries[k];
            k += 1;
            (i, j, e.as_slice())
        })
    }

    /// Evaluates the structure on a concrete sequence.
    pub fn apply(&self, z: &MomentSequence) -> Result<DMatrix<f64>> {
        if z.dim() != self.generator.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.generator.dim(),
                found: z.dim(),
            });
        }
        if self.moment_degree() > z.degree() {
            return Err(Error::DegreeOverflow {
                needed: self.moment_degree(),
                available: z.degree(),
            });
        }
        let s = self.size();
        let mut m = DMatrix::zeros(s, s);
        for (i, j, terms) in self.upper_entries() {
            let v: f64 = terms
                .iter()
                .map(|(c, e)| c * z.get(e).expect("degree checked"))
                .sum();
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
        Ok(m)
    }
}

type CacheKey = (usize, usize, Vec<(Vec<u32>, u64)>);

/// Thread-safe memo of localizer structures keyed by `(g, n, d)`.
#[derive(Default)]
pub struct LocalizerCache {
    map: Mutex<HashMap<CacheKey, Arc<LocalizerStructure>>>,
}

impl LocalizerCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Process-wide cache shared by the relaxation builders.
    pub fn global() -> &'static LocalizerCache {
        static CACHE: OnceLock<LocalizerCache> = OnceLock::new();
        CACHE.get_or_init(LocalizerCache::new)
    }

    pub fn get(&self, g: &Polynomial, order: usize) -> Arc<LocalizerStructure> {
        let key = (
            g.dim(),
            order,
            g.terms()
                .map(|(e, c)| (e.powers().to_vec(), c.to_bits()))
                .collect(),
        );
        let mut map = self.map.lock().expect("cache poisoned");
        map.entry(key)
            .or_insert_with(|| Arc::new(LocalizerStructure::new(g, order)))
            .clone()
    }

    pub fn len(&self) -> usize {
        self.map.lock().expect("cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

//! Shared encoding of moment relaxations as block semidefinite programs.
//!
//! Block 0 holds the moment matrix `M_d(z)`; every further block is a
//! localizing matrix `M_k(g z)`. The moment `z_a` is represented by one
//! canonical coordinate of block 0 (the first upper-triangular position, in
//! row-major order, whose row and column monomials sum to `a`). Equalities are
//! laid out as: caller-supplied pins `z_a = value` in the given order, then
//! ties forcing the remaining coordinates of block 0 onto their canonical
//! representative, then ties defining each localizer coordinate as a linear
//! combination of canonical coordinates.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::conic::{ConicProgram, ConicSolution, LinearFunctional};
use crate::error::{Error, Result};
use crate::moments::{LocalizerCache, LocalizerStructure, MomentSequence};
use crate::poly::{Exponent, MonomialBasis, Polynomial};

/// A localizing block `M_order(generator z)`.
#[derive(Debug, Clone)]
pub struct LocalizerBlock {
    pub structure: Arc<LocalizerStructure>,
    /// Index of the PSD block in the program.
    pub block: usize,
}

#[derive(Debug, Clone)]
pub struct MomentRelaxation {
    dim: usize,
    order: usize,
    moments: Arc<MonomialBasis>,
    canonical: Vec<(usize, usize)>,
    localizers: Vec<LocalizerBlock>,
    num_pins: usize,
    pub program: ConicProgram,
}

impl MomentRelaxation {
    /// Builds the program minimizing `L_z(objective)`.
    ///
    /// `localizers` lists `(g, k)` pairs for the blocks `M_k(g z)`; each must
    /// satisfy `2k + deg g <= 2 order`. `pins` fixes individual moments.
    pub fn build(
        dim: usize,
        order: usize,
        objective: &Polynomial,
        localizers: &[(Polynomial, usize)],
        pins: &[(Exponent, f64)],
    ) -> Result<Self> {
        let moments = Arc::new(MonomialBasis::new(dim, 2 * order));
        let rows = MonomialBasis::new(dim, order);
        let check_dim = |p: &Polynomial| -> Result<()> {
            if p.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.dim(),
                });
            }
            Ok(())
        };
        check_dim(objective)?;
        if objective.degree() > 2 * order {
            return Err(Error::DegreeOverflow {
                needed: objective.degree(),
                available: 2 * order,
            });
        }

        let s = rows.len();
        let mut canonical = vec![(usize::MAX, usize::MAX); moments.len()];
        let mut ties: Vec<(usize, usize, usize)> = Vec::new();
        for i in 0..s {
            for j in i..s {
                let a = rows.get(i) + rows.get(j);
                let k = moments.index_of(&a).expect("moment degree within 2*order");
                if canonical[k].0 == usize::MAX {
                    canonical[k] = (i, j);
                } else {
                    ties.push((i, j, k));
                }
            }
        }

        let cache = LocalizerCache::global();
        let mut blocks = vec![s];
        let mut locs = Vec::with_capacity(localizers.len());
        for (g, k) in localizers {
            check_dim(g)?;
            let structure = cache.get(g, *k);
            if structure.moment_degree() > 2 * order {
                return Err(Error::DegreeOverflow {
                    needed: structure.moment_degree(),
                    available: 2 * order,
                });
            }
            blocks.push(structure.size());
            locs.push(LocalizerBlock {
                structure,
                block: blocks.len() - 1,
            });
        }

        let mut program = ConicProgram::new(blocks);
        let var = |e: &Exponent| -> Result<(usize, usize)> {
            moments
                .index_of(e)
                .map(|k| canonical[k])
                .ok_or(Error::DegreeOverflow {
                    needed: e.degree(),
                    available: 2 * order,
                })
        };

        let mut obj = LinearFunctional::new();
        for (e, c) in objective.terms() {
            let (i, j) = var(e)?;
            obj.add_element(0, i, j, c);
        }
        program.set_objective(obj);

        for (e, value) in pins {
            if e.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: e.dim(),
                });
            }
            let (i, j) = var(e)?;
            let mut f = LinearFunctional::new();
            f.add_element(0, i, j, 1.0);
            program.add_equality(f, *value);
        }

        for &(i, j, k) in &ties {
            let (ci, cj) = canonical[k];
            let mut f = LinearFunctional::new();
            f.add_element(0, i, j, 1.0);
            f.add_element(0, ci, cj, -1.0);
            program.add_equality(f, 0.0);
        }

        for loc in &locs {
            for (a, b, terms) in loc.structure.upper_entries() {
                let mut f = LinearFunctional::new();
                f.add_element(loc.block, a, b, 1.0);
                for (c, e) in terms {
                    let (i, j) = var(e)?;
                    f.add_element(0, i, j, -c);
                }
                program.add_equality(f, 0.0);
            }
        }

        Ok(Self {
            dim,
            order,
            moments,
            canonical,
            localizers: locs,
            num_pins: pins.len(),
            program,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Order `d` of the moment matrix block.
    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of scalar moment variables, `binomial(n + 2d, n)`.
    pub fn num_moments(&self) -> usize {
        self.moments.len()
    }

    pub fn moment_basis(&self) -> &MonomialBasis {
        &self.moments
    }

    pub fn localizers(&self) -> &[LocalizerBlock] {
        &self.localizers
    }

    /// Number of leading pin equalities.
    pub fn num_pins(&self) -> usize {
        self.num_pins
    }

    /// Moment vector read from the canonical coordinates of block 0.
    pub fn moments_from(&self, x: &[DMatrix<f64>]) -> MomentSequence {
        let values = self.canonical.iter().map(|&(i, j)| x[0][(i, j)]).collect();
        MomentSequence::from_values(self.dim, 2 * self.order, values).expect("basis sizes agree")
    }

    /// Dual slack `C - sum_k y_k A_k` recomputed from the multipliers alone.
    pub fn dual_slack(&self, sol: &ConicSolution) -> Vec<DMatrix<f64>> {
        let sizes = self.program.block_sizes();
        let mut s = self.program.objective().to_dense(sizes);
        for (eq, &y) in self.program.equalities().iter().zip(&sol.y) {
            eq.functional.accumulate_into(&mut s, -y);
        }
        s
    }
}

/// `ceil(deg p / 2)`.
pub fn half_degree(p: &Polynomial) -> usize {
    p.degree().div_ceil(2)
}

//! Incremental construction of [`ConeProgram`]s.
//!
//! Callers allocate blocks, then set objective entries and accumulate
//! equality rows against (block, local index) coordinates. Complex
//! Hermitian trace functionals enter through [`herm_coeffs`], which maps
//! Tr(Q X) onto the scaled svec coordinates of the real embedded block.

use crate::numkernel::{CMat, RMat, RVec};

use super::cones::{block_dim, svec};
use super::{embed_hermitian, ConeBlock, ConeProgram};

/// Handle to one variable block.
#[derive(Debug, Clone, Copy)]
pub struct VarRef {
    pub block: usize,
    pub offset: usize,
    pub len: usize,
}

/// One equality row under construction.
pub struct Row {
    pub rhs: f64,
    entries: Vec<(usize, f64)>,
}

impl Row {
    pub fn new(rhs: f64) -> Row {
        Row {
            rhs,
            entries: Vec::new(),
        }
    }

    /// Add `coef` at local index `local` of `var`.
    pub fn entry(&mut self, var: &VarRef, local: usize, coef: f64) -> &mut Row {
        assert!(local < var.len, "local index out of block range");
        self.entries.push((var.offset + local, coef));
        self
    }

    /// Add a slice of coefficients covering the whole block.
    pub fn block(&mut self, var: &VarRef, coeffs: &RVec) -> &mut Row {
        assert_eq!(coeffs.len(), var.len, "coefficient length mismatch");
        for (i, &c) in coeffs.iter().enumerate() {
            if c != 0.0 {
                self.entries.push((var.offset + i, c));
            }
        }
        self
    }
}

#[derive(Default)]
pub struct ProgramBuilder {
    blocks: Vec<ConeBlock>,
    dim: usize,
    objective: Vec<(usize, f64)>,
    rows: Vec<Row>,
}

impl ProgramBuilder {
    pub fn new() -> ProgramBuilder {
        ProgramBuilder::default()
    }

    fn push(&mut self, blk: ConeBlock) -> VarRef {
        let len = block_dim(&blk);
        let r = VarRef {
            block: self.blocks.len(),
            offset: self.dim,
            len,
        };
        self.blocks.push(blk);
        self.dim += len;
        r
    }

    pub fn nonneg(&mut self, k: usize) -> VarRef {
        self.push(ConeBlock::NonNeg(k))
    }

    pub fn soc(&mut self, k: usize) -> VarRef {
        assert!(k >= 2, "second-order cone needs dimension >= 2");
        self.push(ConeBlock::Soc(k))
    }

    pub fn psd(&mut self, k: usize) -> VarRef {
        self.push(ConeBlock::Psd(k))
    }

    pub fn zero(&mut self, k: usize) -> VarRef {
        self.push(ConeBlock::Zero(k))
    }

    /// PSD block holding the real embedding of an n x n complex Hermitian
    /// variable.
    pub fn psd_hermitian(&mut self, n: usize) -> VarRef {
        self.push(ConeBlock::Psd(2 * n))
    }

    /// A free scalar, modeled as the difference of two nonnegative ones.
    /// Returns (plus, minus).
    pub fn free_pair(&mut self, k: usize) -> (VarRef, VarRef) {
        (self.nonneg(k), self.nonneg(k))
    }

    pub fn objective(&mut self, var: &VarRef, local: usize, coef: f64) {
        assert!(local < var.len);
        self.objective.push((var.offset + local, coef));
    }

    pub fn objective_block(&mut self, var: &VarRef, coeffs: &RVec) {
        assert_eq!(coeffs.len(), var.len);
        for (i, &c) in coeffs.iter().enumerate() {
            if c != 0.0 {
                self.objective.push((var.offset + i, c));
            }
        }
    }

    pub fn equality(&mut self, row: Row) {
        self.rows.push(row);
    }

    pub fn build(self) -> ConeProgram {
        let n = self.dim;
        let m = self.rows.len();
        let mut c = RVec::zeros(n);
        for (idx, coef) in self.objective {
            c[idx] += coef;
        }
        let mut a = RMat::zeros(m, n);
        let mut b = RVec::zeros(m);
        for (i, row) in self.rows.into_iter().enumerate() {
            b[i] = row.rhs;
            for (idx, coef) in row.entries {
                a[(i, idx)] += coef;
            }
        }
        ConeProgram {
            blocks: self.blocks,
            objective: c,
            a,
            b,
        }
    }
}

/// Coefficients over the embedded PSD block such that
/// `coeffs . svec(X_emb) = Tr(Q X)` when `X_emb = embed(X)`:
/// `svec(embed(Q)) / 2`.
pub fn herm_coeffs(q: &CMat) -> RVec {
    let e = embed_hermitian(q).expect("coefficient matrix must be Hermitian");
    svec(&e).scale(0.5)
}

/// Coefficients for the plain trace Tr(X) of an embedded Hermitian block of
/// complex dimension n.
pub fn herm_trace_coeffs(n: usize) -> RVec {
    herm_coeffs(&CMat::identity(n, n))
}

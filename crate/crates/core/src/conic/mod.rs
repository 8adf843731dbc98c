//! Self-contained dense primal-dual interior-point solver for cone programs
//! over nonnegative, second-order and PSD blocks, in the standard primal
//! form
//!
//! ```text
//!   maximize    c' x
//!   subject to  A x = b,   x in K
//! ```
//!
//! with K a product of ZERO / NONNEG / SOC / PSD blocks. The solver runs a
//! homogeneous self-dual embedding with Nesterov-Todd scaling, so primal or
//! dual infeasibility comes out as a certificate rather than a timeout;
//! callers in this crate treat an infeasible design as a physical outage
//! event, which makes that distinction load-bearing.
//!
//! Complex Hermitian semidefinite blocks enter through the real symmetric
//! embedding of [`embed_hermitian`].

mod cones;
mod program;
mod solver;

pub use cones::{smat, svec, svec_dim};
pub use program::{herm_coeffs, herm_trace_coeffs, ProgramBuilder, Row, VarRef};
pub use solver::solve;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::numkernel::{hermitian_part, is_hermitian, CMat, RMat, RVec, C64, HERMITIAN_TOL};

/// One block of the conic variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeBlock {
    /// Components pinned to zero (dual is free).
    Zero(usize),
    /// Componentwise nonnegative.
    NonNeg(usize),
    /// Second-order cone { (t, u) : t >= ||u|| } of total dimension k.
    Soc(usize),
    /// k x k real symmetric PSD matrix in scaled svec layout.
    Psd(usize),
}

/// A cone program in standard primal form.
#[derive(Debug, Clone)]
pub struct ConeProgram {
    pub blocks: Vec<ConeBlock>,
    /// Objective coefficients (maximized).
    pub objective: RVec,
    /// Equality constraint map, one row per constraint.
    pub a: RMat,
    pub b: RVec,
}

#[derive(Debug, Error)]
pub enum ConicError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not Hermitian")]
    NotHermitian,
}

impl ConeProgram {
    pub fn var_dim(&self) -> usize {
        self.blocks.iter().map(cones::block_dim).sum()
    }

    pub fn validate(&self) -> Result<(), ConicError> {
        let n = self.var_dim();
        if self.objective.len() != n {
            return Err(ConicError::DimensionMismatch(format!(
                "objective has {} entries, variable dimension is {n}",
                self.objective.len()
            )));
        }
        if self.a.ncols() != n {
            return Err(ConicError::DimensionMismatch(format!(
                "constraint map has {} columns, variable dimension is {n}",
                self.a.ncols()
            )));
        }
        if self.a.nrows() != self.b.len() {
            return Err(ConicError::DimensionMismatch(format!(
                "constraint map has {} rows, rhs has {}",
                self.a.nrows(),
                self.b.len()
            )));
        }
        Ok(())
    }

    /// Text dump (dimensions, cones, dense rows) for offline cross-checking.
    pub fn dump_text(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "cone program: {} vars, {} rows, maximize",
            self.var_dim(),
            self.a.nrows()
        );
        let _ = writeln!(s, "blocks: {:?}", self.blocks);
        let _ = writeln!(s, "c: {:?}", self.objective.as_slice());
        for i in 0..self.a.nrows() {
            let row: Vec<f64> = self.a.row(i).iter().cloned().collect();
            let _ = writeln!(s, "row {i}: {:?} = {}", row, self.b[i]);
        }
        s
    }
}

/// Why the solver stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    /// No x in K satisfies Ax = b; `y` carries a Farkas ray with
    /// A'y in K* and b'y < 0.
    PrimalInfeasible,
    /// The objective is unbounded; `x` carries a ray with Ax = 0,
    /// x in K and c'x > 0.
    DualInfeasible,
    MaxIterations,
    NumericalFailure,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct ConeSolution {
    pub status: SolveStatus,
    pub x: RVec,
    pub y: RVec,
    pub z: RVec,
    pub objective: f64,
    pub residuals: Residuals,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-8,
            max_iter: 200,
        }
    }
}

/// Real symmetric embedding [[Re H, -Im H], [Im H, Re H]] of a Hermitian
/// matrix. The embedding is PSD iff H is, its eigenvalues are those of H
/// doubled, and Tr(embed(A) embed(X)) = 2 Re Tr(A X).
pub fn embed_hermitian(h: &CMat) -> Result<RMat, ConicError> {
    if !is_hermitian(h, HERMITIAN_TOL) {
        return Err(ConicError::NotHermitian);
    }
    let h = hermitian_part(h);
    let n = h.nrows();
    let mut e = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let v = h[(i, j)];
            e[(i, j)] = v.re;
            e[(n + i, n + j)] = v.re;
            e[(i, n + j)] = -v.im;
            e[(n + i, j)] = v.im;
        }
    }
    Ok(e)
}

/// Recover a Hermitian matrix from a (possibly perturbed) symmetric 2n x 2n
/// block: (E11 + E22)/2 + i (E21 - E12)/2. Exact inverse of
/// [`embed_hermitian`] on embedded inputs.
pub fn extract_hermitian(e: &RMat) -> Result<CMat, ConicError> {
    let d = e.nrows();
    if !e.is_square() || d % 2 != 0 {
        return Err(ConicError::DimensionMismatch(format!(
            "{}x{} block cannot be an embedded Hermitian matrix",
            e.nrows(),
            e.ncols()
        )));
    }
    let n = d / 2;
    let mut h = CMat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let re = (e[(i, j)] + e[(n + i, n + j)]) / 2.0;
            let im = (e[(n + i, j)] - e[(i, n + j)]) / 2.0;
            h[(i, j)] = C64::new(re, im);
        }
    }
    Ok(hermitian_part(&h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::{cmat_from_rows, hermitian_eig, max_abs};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn embed_identity() {
        let e = embed_hermitian(&CMat::identity(3, 3)).unwrap();
        assert!((e - RMat::identity(6, 6)).norm() == 0.0);
    }

    #[test]
    fn embed_doubles_eigenvalues() {
        let h = cmat_from_rows(2, 2, &[(2.0, 0.0), (0.0, 1.0), (0.0, -1.0), (2.0, 0.0)]);
        let e = embed_hermitian(&h).unwrap();
        let mut ev: Vec<f64> = e.symmetric_eigen().eigenvalues.iter().cloned().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((ev[0] - 1.0).abs() < 1e-12 && (ev[1] - 1.0).abs() < 1e-12);
        assert!((ev[2] - 3.0).abs() < 1e-12 && (ev[3] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn embed_trace_convention() {
        let n = 3;
        let a = CMat::identity(n, n);
        let ea = embed_hermitian(&a).unwrap();
        let tr = (&ea * &ea).trace();
        assert!((tr - 2.0 * n as f64).abs() < 1e-12);
    }

    #[test]
    fn embed_extract_round_trip_and_psd_iff() {
        let mut rng = StdRng::seed_from_u64(21);
        for _ in 0..40 {
            let n = rng.gen_range(1..5);
            let a = CMat::from_fn(n, n, |_, _| {
                C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
            });
            let h = crate::numkernel::hermitian_part(&a);
            let e = embed_hermitian(&h).unwrap();
            let back = extract_hermitian(&e).unwrap();
            assert!(max_abs(&(&back - &h)) == 0.0, "round trip must be exact");
            // PSD iff PSD, checked through smallest eigenvalues.
            let min_c = hermitian_eig(&h, 1e-9).unwrap().values[n - 1];
            let min_r = e
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            assert!((min_c - min_r).abs() < 1e-9 * (1.0 + min_c.abs()));
        }
    }

    #[test]
    fn extract_symmetrizes_noise() {
        let h = cmat_from_rows(2, 2, &[(2.0, 0.0), (0.3, 0.4), (0.3, -0.4), (1.0, 0.0)]);
        let mut e = embed_hermitian(&h).unwrap();
        e[(0, 1)] += 1e-12;
        e[(1, 0)] += 1e-12;
        let back = extract_hermitian(&e).unwrap();
        assert!(is_hermitian(&back, 1e-11));
        assert!(max_abs(&(&back - &h)) < 1e-11);
    }

    #[test]
    fn embed_rejects_non_hermitian() {
        let m = cmat_from_rows(2, 2, &[(1.0, 0.0), (1.0, 0.0), (0.0, 0.0), (1.0, 0.0)]);
        assert!(embed_hermitian(&m).is_err());
    }

    #[test]
    fn dump_contains_rows() {
        let pb = ProgramBuilder::new();
        let mut pb = pb;
        let x = pb.nonneg(1);
        pb.objective(&x, 0, -1.0);
        let mut row = Row::new(1.0);
        row.entry(&x, 0, 1.0);
        pb.equality(row);
        let prog = pb.build();
        let dump = prog.dump_text();
        assert!(dump.contains("1 vars"));
        assert!(dump.contains("row 0"));
    }
}
